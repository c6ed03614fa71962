#pragma once

#include "mtutor/platform/service.hpp"

#include <memory>
#include <string>

namespace mtutor::platform {

struct ApiOptions
{
    /// Worker threads; at least two so a second request can observe 409.
    std::size_t threads = 4;
    /// When non-empty every request must carry `Authorization: Bearer <token>`.
    std::string bearer_token;
};

/// JSON over HTTP in front of a Service.
class HttpApi
{
public:
    HttpApi(Service & service, ApiOptions options = {});
    ~HttpApi();
    HttpApi(HttpApi const &) = delete;
    HttpApi & operator=(HttpApi const &) = delete;

    /// Bind without serving yet. Port 0 picks a free port; returns the port.
    int bind(std::string const & host, int port);
    /// Serve until stop(). Blocks.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace mtutor::platform
