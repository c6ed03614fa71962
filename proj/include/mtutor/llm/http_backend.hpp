#pragma once

#include "mtutor/llm/gateway.hpp"

#include <chrono>
#include <string>

namespace mtutor::llm {

struct HttpBackendConfig
{
    /// Base URL up to and including the API version, e.g.
    /// "https://api.openai.com/v1". `/chat/completions` is appended.
    std::string base_url;
    std::string api_key;
    std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions client.
class HttpBackend final : public Backend
{
public:
    explicit HttpBackend(HttpBackendConfig config);

private:
    ChatResponse do_send(ChatRequest const & request) override;

    HttpBackendConfig config_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;    // prefix + /chat/completions
};

} // namespace mtutor::llm
