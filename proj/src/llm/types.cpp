#include "mtutor/llm/types.hpp"

#include "mtutor/common/error.hpp"
#include "mtutor/llm/errors.hpp"

namespace mtutor::llm {

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
    }
    return "user";
}

std::optional<Role> role_from_string(std::string_view s)
{
    for (Role r : {Role::system, Role::user, Role::assistant, Role::tool})
        if (to_string(r) == s)
            return r;
    return std::nullopt;
}

std::string_view to_string(FinishReason reason)
{
    switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::tool_calls: return "tool_calls";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
    }
    return "stop";
}

std::optional<FinishReason> finish_reason_from_string(std::string_view s)
{
    for (FinishReason r : {FinishReason::stop, FinishReason::tool_calls, FinishReason::length, FinishReason::error})
        if (to_string(r) == s)
            return r;
    return std::nullopt;
}

ChatMessage ChatMessage::system(std::string content)
{
    return ChatMessage{Role::system, std::move(content), {}, std::nullopt};
}

ChatMessage ChatMessage::user(std::string content)
{
    return ChatMessage{Role::user, std::move(content), {}, std::nullopt};
}

ChatMessage ChatMessage::assistant(std::string content, std::vector<ToolInvocation> calls)
{
    return ChatMessage{Role::assistant, std::move(content), std::move(calls), std::nullopt};
}

ChatMessage ChatMessage::tool(std::string call_id, std::string content)
{
    return ChatMessage{Role::tool, std::move(content), {}, std::move(call_id)};
}

ChatResponse ChatResponse::text(std::string content)
{
    return ChatResponse{ChatMessage::assistant(std::move(content)), FinishReason::stop, {}};
}

ChatResponse ChatResponse::calls(std::vector<ToolInvocation> calls, std::string content)
{
    return ChatResponse{ChatMessage::assistant(std::move(content), std::move(calls)), FinishReason::tool_calls, {}};
}

void validate(ChatMessage const & m)
{
    if (m.role == Role::tool && !m.tool_call_id)
        throw PreconditionError("tool message without tool_call_id");
    if (m.role != Role::tool && m.tool_call_id)
        throw PreconditionError("tool_call_id on a non-tool message");
    if (!m.tool_calls.empty() && m.role != Role::assistant)
        throw PreconditionError("tool_calls on a non-assistant message");
}

void validate(ChatRequest const & r)
{
    if (r.model.empty())
        throw PreconditionError("request has no model");
    if (r.messages.empty())
        throw PreconditionError("request has no messages");
    bool conversational = false;
    for (auto const & m : r.messages) {
        validate(m);
        conversational = conversational || m.role != Role::system;
    }
    if (!conversational)
        throw PreconditionError("request has only system messages");
    if (!(r.temperature >= 0.0 && r.temperature <= 2.0))
        throw PreconditionError("temperature outside [0, 2]");
    if (r.max_tokens <= 0)
        throw PreconditionError("max_tokens must be positive");
}

void validate(ChatResponse const & r)
{
    bool const has_calls = !r.message.tool_calls.empty();
    if ((r.finish_reason == FinishReason::tool_calls) != has_calls)
        throw ProtocolError("finish_reason and tool_calls disagree");
    if (r.message.role != Role::assistant)
        throw ProtocolError("response message is not from the assistant");
}

} // namespace mtutor::llm
