#pragma once

#include "mtutor/llm/errors.hpp"
#include "mtutor/llm/types.hpp"

#include <chrono>
#include <functional>
#include <memory>

namespace mtutor::llm {

/// A chat-completion endpoint. Implementations must be reentrant; calls
/// from several threads may interleave.
class Backend
{
public:
    virtual ~Backend() = default;

    [[nodiscard]] ChatResponse send(ChatRequest const & request) { return do_send(request); }

private:
    virtual ChatResponse do_send(ChatRequest const & request) = 0;
};

using BackendHandle = std::shared_ptr<Backend>;

struct RetryPolicy
{
    int max_retries = 2;
    std::chrono::milliseconds base_delay{500};
    /// Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

/// Validate `request`, send it, and validate the response. TransportError
/// is retried with exponential backoff (base, 2*base, ...); ProtocolError
/// and ScriptMiss propagate immediately.
ChatResponse complete(Backend & backend, ChatRequest const & request, RetryPolicy const & retry = {});

inline ChatResponse complete(BackendHandle const & backend, ChatRequest const & request,
                             RetryPolicy const & retry = {})
{
    if (!backend)
        throw PreconditionError("no backend configured");
    return complete(*backend, request, retry);
}

} // namespace mtutor::llm
