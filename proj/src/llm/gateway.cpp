#include "mtutor/llm/gateway.hpp"

#include <thread>

namespace mtutor::llm {

ChatResponse complete(Backend & backend, ChatRequest const & request, RetryPolicy const & retry)
{
    validate(request);
    for (int attempt = 0;; ++attempt) {
        try {
            ChatResponse response = backend.send(request);
            validate(response);
            return response;
        } catch (TransportError const &) {
            if (attempt >= retry.max_retries)
                throw;
            auto const delay = retry.base_delay * (1 << attempt);
            if (retry.sleep)
                retry.sleep(delay);
            else
                std::this_thread::sleep_for(delay);
        }
    }
}

} // namespace mtutor::llm
