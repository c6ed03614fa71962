#include "mtutor/llm/http_backend.hpp"

#include "mtutor/llm/wire.hpp"

#include <httplib.h>

namespace mtutor::llm {

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config))
{
    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/')
        url.pop_back();
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw PreconditionError("endpoint URL needs a scheme: " + config_.base_url);
    auto const path_start = url.find('/', scheme_end + 3);
    origin_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    path_ = (path_start == std::string::npos ? std::string() : url.substr(path_start)) + "/chat/completions";
}

ChatResponse HttpBackend::do_send(ChatRequest const & request)
{
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto result = client.Post(path_, headers, to_wire(request).dump(), "application/json");
    if (!result)
        throw TransportError("request to " + origin_ + path_ + " failed: " + httplib::to_string(result.error()));
    int const status = result->status;
    if (status == 429 || status >= 500)
        throw TransportError("HTTP " + std::to_string(status) + " from " + origin_);
    if (status != 200)
        throw ProtocolError("HTTP " + std::to_string(status) + ": " + result->body.substr(0, 500));

    nlohmann::json body;
    try {
        body = nlohmann::json::parse(result->body);
    } catch (nlohmann::json::parse_error const & e) {
        throw ProtocolError(std::string("response body is not JSON: ") + e.what());
    }
    return response_from_wire(body);
}

} // namespace mtutor::llm
