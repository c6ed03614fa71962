#pragma once

#include "mtutor/llm/types.hpp"

#include <nlohmann/json.hpp>

namespace mtutor::llm {

// OpenAI-compatible chat-completions JSON. Tool-call arguments travel as a
// JSON-encoded string on the wire and as a structured document in memory.
// Parsing throws ProtocolError on malformed input.

nlohmann::json to_wire(ChatMessage const & m);
ChatMessage message_from_wire(nlohmann::json const & j);

nlohmann::json to_wire(ToolSpec const & t);
ToolSpec tool_spec_from_wire(nlohmann::json const & j);

nlohmann::json to_wire(ChatRequest const & r);
ChatRequest request_from_wire(nlohmann::json const & j);

nlohmann::json to_wire(ChatResponse const & r);
ChatResponse response_from_wire(nlohmann::json const & j);

} // namespace mtutor::llm
