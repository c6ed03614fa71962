#include "mtutor/platform/http_api.hpp"

#include <httplib.h>

#include <iostream>

namespace mtutor::platform {

using json = nlohmann::json;

struct HttpApi::Impl
{
    Service & service;
    ApiOptions options;
    httplib::Server server;
};

namespace {

void send_json(httplib::Response & res, int status, json const & body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response & res, int status, std::string const & message)
{
    send_json(res, status, {{"error", message}, {"status", status}});
}

json parse_body(httplib::Request const & req)
{
    if (req.body.empty())
        return json::object();
    try {
        return json::parse(req.body);
    } catch (json::parse_error const & e) {
        throw ApiError(400, std::string("request body is not JSON: ") + e.what());
    }
}

using Handler = std::function<void(httplib::Request const &, httplib::Response &)>;

/// Map the service's exception types onto status codes.
Handler guarded(Handler h)
{
    return [h = std::move(h)](httplib::Request const & req, httplib::Response & res) {
        try {
            h(req, res);
        } catch (ApiError const & e) {
            send_error(res, e.status(), e.what());
        } catch (PreconditionError const & e) {
            send_error(res, 400, e.what());
        } catch (CorruptEvent const & e) {
            std::cerr << "storage fault: " << e.what() << "\n";
            send_error(res, 500, std::string("stored history is damaged: ") + e.what());
        } catch (StorageFull const & e) {
            send_error(res, 507, e.what());
        } catch (std::exception const & e) {
            std::cerr << req.method << " " << req.path << ": " << e.what() << "\n";
            send_error(res, 500, e.what());
        }
    };
}

} // namespace

HttpApi::HttpApi(Service & service, ApiOptions options) : impl_(new Impl{service, std::move(options), {}})
{
    auto & s = impl_->server;
    auto & svc = impl_->service;
    std::size_t const threads = std::max<std::size_t>(2, impl_->options.threads);
    s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    if (!impl_->options.bearer_token.empty()) {
        std::string const expected = "Bearer " + impl_->options.bearer_token;
        s.set_pre_routing_handler([expected](httplib::Request const & req, httplib::Response & res) {
            if (req.get_header_value("Authorization") == expected)
                return httplib::Server::HandlerResponse::Unhandled;
            send_error(res, 401, "missing or wrong bearer token");
            return httplib::Server::HandlerResponse::Handled;
        });
    }

    s.Post("/students", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 201, svc.create_student(parse_body(req)));
    }));
    s.Get(R"(/students/([^/]+)/profile)", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.get_profile(req.matches[1]));
    }));
    s.Post("/sessions", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 201, svc.open_session(parse_body(req)));
    }));
    s.Post(R"(/sessions/([^/]+)/messages)", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.post_message(req.matches[1], parse_body(req)));
    }));
    s.Post(R"(/sessions/([^/]+)/close)", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.close_session(req.matches[1]));
    }));
    s.Post("/courses", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 201, svc.create_course(parse_body(req)));
    }));
    s.Get(R"(/courses/([^/]+))", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.get_course(req.matches[1]));
    }));
    s.Get(R"(/courses/([^/]+)/dot)", guarded([&svc](auto const & req, auto & res) {
        res.status = 200;
        res.set_content(svc.course_dot(req.matches[1]), "text/vnd.graphviz");
    }));
    s.Post(R"(/courses/([^/]+)/nodes/([^/]+)/complete)", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.complete_node(req.matches[1], req.matches[2]));
    }));
    s.Post("/tasks", guarded([&svc](auto const & req, auto & res) {
        bool const educator = req.has_param("view") && req.get_param_value("view") == "educator";
        send_json(res, 200, svc.create_task(parse_body(req), educator));
    }));
    s.Post(R"(/tasks/([^/]+)/grade)", guarded([&svc](auto const & req, auto & res) {
        send_json(res, 200, svc.grade_task(req.matches[1], parse_body(req)));
    }));
    s.Get("/health", [](auto const &, auto & res) { send_json(res, 200, {{"status", "ok"}}); });
}

HttpApi::~HttpApi()
{
    stop();
}

int HttpApi::bind(std::string const & host, int port)
{
    if (port == 0) {
        int const p = impl_->server.bind_to_any_port(host);
        if (p < 0)
            throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port))
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpApi::run()
{
    impl_->server.listen_after_bind();
}

void HttpApi::stop()
{
    if (impl_)
        impl_->server.stop();
}

} // namespace mtutor::platform
