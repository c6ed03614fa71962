#include "doctest.h"

#include "mtutor/llm/gateway.hpp"
#include "mtutor/llm/http_backend.hpp"
#include "mtutor/llm/scripted.hpp"
#include "mtutor/llm/tools.hpp"
#include "mtutor/llm/wire.hpp"

#include <httplib.h>

#include <random>
#include <thread>

using namespace mtutor;
using namespace mtutor::llm;
using nlohmann::json;

namespace {

ChatRequest hi_request()
{
    ChatRequest r;
    r.model = "gpt-4o";
    r.messages = {ChatMessage::user("hi")};
    return r;
}

class FlakyBackend final : public Backend
{
public:
    explicit FlakyBackend(int failures)
        : failures_(failures)
    {
    }
    int calls = 0;

private:
    ChatResponse do_send(ChatRequest const &) override
    {
        ++calls;
        if (calls <= failures_)
            throw TransportError("connection reset");
        return ChatResponse::text("ok");
    }
    int failures_;
};

class ConstantBackend final : public Backend
{
public:
    explicit ConstantBackend(ChatResponse r)
        : r_(std::move(r))
    {
    }
    int calls = 0;

private:
    ChatResponse do_send(ChatRequest const &) override
    {
        ++calls;
        return r_;
    }
    ChatResponse r_;
};

ChatRequest random_request(std::mt19937 & rng)
{
    std::uniform_int_distribution<int> small(0, 4);
    ChatRequest r;
    r.model = "model-" + std::to_string(small(rng));
    r.temperature = small(rng) * 0.5;
    r.max_tokens = 1 + small(rng) * 100;
    r.messages.push_back(ChatMessage::system("be brief " + std::to_string(small(rng))));
    int const n = 1 + small(rng);
    for (int i = 0; i < n; ++i) {
        r.messages.push_back(ChatMessage::user("q" + std::to_string(i) + " \"quoted\"\n"));
        if (small(rng) % 2 == 0) {
            std::string id = "call_" + std::to_string(i);
            r.messages.push_back(ChatMessage::assistant("", {ToolInvocation{id, "solve", {{"equation", "x=1"}, {"k", i}}}}));
            r.messages.push_back(ChatMessage::tool(id, "{\"roots\":[1]}"));
        }
        r.messages.push_back(ChatMessage::assistant("a" + std::to_string(i)));
    }
    if (small(rng) % 2)
        r.tools.push_back(ToolSpec{"solve", "solve an equation",
                                   {{"type", "object"},
                                    {"properties", {{"equation", {{"type", "string"}}}}},
                                    {"required", {"equation"}}}});
    return r;
}

} // namespace

TEST_CASE("scripted replay returns the keyed response")
{
    auto backend = script_backend({{request_key(hi_request()), ChatResponse::text("hello")}});
    auto r = complete(backend, hi_request());
    CHECK(r.message.content == "hello");
    CHECK(r.finish_reason == FinishReason::stop);
}

TEST_CASE("requests without messages are rejected before sending")
{
    ConstantBackend backend(ChatResponse::text("x"));
    ChatRequest r = hi_request();
    r.messages.clear();
    CHECK_THROWS_AS(complete(backend, r), PreconditionError);
    r.messages = {ChatMessage::system("only system")};
    CHECK_THROWS_AS(complete(backend, r), PreconditionError);
    r = hi_request();
    r.temperature = 2.5;
    CHECK_THROWS_AS(complete(backend, r), PreconditionError);
    r = hi_request();
    r.messages.push_back(ChatMessage{Role::tool, "orphan", {}, std::nullopt});
    CHECK_THROWS_AS(complete(backend, r), PreconditionError);
    CHECK(backend.calls == 0);
}

TEST_CASE("a script miss names the unmatched digest")
{
    auto backend = script_backend({});
    ChatRequest r = hi_request();
    try {
        (void)complete(backend, r);
        FAIL("expected ScriptMiss");
    } catch (ScriptMiss const & e) {
        CHECK(e.digest() == request_key(r));
        CHECK(std::string(e.what()).find(request_key(r)) != std::string::npos);
    }
}

TEST_CASE("script entries replay in any order, deterministically")
{
    ChatRequest a = hi_request();
    ChatRequest b = hi_request();
    b.messages = {ChatMessage::user("bye")};
    auto scripted = std::make_shared<ScriptedBackend>(std::vector<ScriptedBackend::Entry>{
        {request_key(a), ChatResponse::text("A")}, {request_key(b), ChatResponse::text("B")}});
    CHECK(complete(*scripted, b).message.content == "B");
    CHECK(complete(*scripted, a).message.content == "A");
    auto const first = to_wire(complete(*scripted, a)).dump();
    auto const second = to_wire(complete(*scripted, a)).dump();
    CHECK(first == second);
    CHECK(scripted->hits(request_key(a)) == 3);
    CHECK(scripted->hits(request_key(b)) == 1);

    CHECK_THROWS_AS(script_backend({{"k", ChatResponse::text("1")}, {"k", ChatResponse::text("2")}}), DuplicateKey);
}

TEST_CASE("request keys ignore whitespace noise and sampling parameters")
{
    ChatRequest a = hi_request();
    ChatRequest b = hi_request();
    b.messages[0].content = "  hi \n";
    b.temperature = 0.1;
    CHECK(request_key(a) == request_key(b));
    b.model = "other";
    CHECK(request_key(a) != request_key(b));
    ChatRequest c = hi_request();
    c.tools.push_back(ToolSpec{"plot", "", json::object()});
    CHECK(request_key(a) != request_key(c));
}

TEST_CASE("scripted hit counting is safe under concurrency")
{
    auto scripted = std::make_shared<ScriptedBackend>(
        std::vector<ScriptedBackend::Entry>{{request_key(hi_request()), ChatResponse::text("hello")}});
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 100; ++i)
                (void)complete(*scripted, hi_request());
        });
    for (auto & t : threads)
        t.join();
    CHECK(scripted->hits(request_key(hi_request())) == 800);
}

TEST_CASE("transport errors are retried twice with exponential backoff")
{
    std::vector<long> slept;
    RetryPolicy policy;
    policy.sleep = [&](std::chrono::milliseconds d) { slept.push_back(d.count()); };

    FlakyBackend recovers(2);
    CHECK(complete(recovers, hi_request(), policy).message.content == "ok");
    CHECK(recovers.calls == 3);
    CHECK(slept == std::vector<long>{500, 1000});

    slept.clear();
    FlakyBackend dead(3);
    CHECK_THROWS_AS(complete(dead, hi_request(), policy), TransportError);
    CHECK(dead.calls == 3);
}

TEST_CASE("protocol violations are not retried")
{
    ChatResponse broken = ChatResponse::text("x");
    broken.finish_reason = FinishReason::tool_calls;
    ConstantBackend backend(broken);
    CHECK_THROWS_AS(complete(backend, hi_request()), ProtocolError);
    CHECK(backend.calls == 1);

    ChatResponse hidden_calls = ChatResponse::calls({ToolInvocation{"c1", "solve", json::object()}});
    hidden_calls.finish_reason = FinishReason::stop;
    ConstantBackend other(hidden_calls);
    CHECK_THROWS_AS(complete(other, hi_request()), ProtocolError);
}

TEST_CASE("wire round trip preserves requests")
{
    std::mt19937 rng(5);
    for (int i = 0; i < 100; ++i) {
        ChatRequest const r = random_request(rng);
        json const wire = to_wire(r);
        CHECK(request_from_wire(json::parse(wire.dump())) == r);
    }
}

TEST_CASE("wire format uses chat-completions field names")
{
    ChatRequest r = random_request(*std::make_unique<std::mt19937>(1));
    r.tools = {ToolSpec{"solve", "d", {{"type", "object"}}}};
    json const j = to_wire(r);
    CHECK(j.at("tools").at(0).at("type") == "function");
    CHECK(j.at("tools").at(0).at("function").at("name") == "solve");

    json const resp = json::parse(R"({
        "choices": [{"index": 0, "finish_reason": "tool_calls",
                     "message": {"role": "assistant", "content": null,
                                 "tool_calls": [{"id": "c1", "type": "function",
                                                 "function": {"name": "solve", "arguments": "{\"equation\":\"x=1\"}"}}]}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}})");
    ChatResponse const parsed = response_from_wire(resp);
    CHECK(parsed.finish_reason == FinishReason::tool_calls);
    REQUIRE(parsed.message.tool_calls.size() == 1);
    CHECK(parsed.message.tool_calls[0].arguments.at("equation") == "x=1");
    CHECK(parsed.usage.prompt_tokens == 12);

    CHECK_THROWS_AS(response_from_wire(json::parse(R"({"choices": []})")), ProtocolError);
    CHECK_THROWS_AS(response_from_wire(json::parse(
                        R"({"choices": [{"finish_reason": "stop", "message": {"role": "assistant",
                            "tool_calls": [{"id": "c", "function": {"name": "f", "arguments": "{oops"}}]}}]})")),
                    ProtocolError);
}

TEST_CASE("http backend speaks the wire format")
{
    httplib::Server server;
    json seen;
    std::string auth;
    server.Post("/v1/chat/completions", [&](httplib::Request const & req, httplib::Response & res) {
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        std::string const last = seen.at("messages").back().at("content");
        if (last == "boom") {
            res.status = 503;
            return;
        }
        if (last == "garbage") {
            res.set_content("not json", "application/json");
            return;
        }
        res.set_content(to_wire(ChatResponse::text("echo: " + last)).dump(), "application/json");
    });
    int const port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackend backend({"http://127.0.0.1:" + std::to_string(port) + "/v1", "secret", std::chrono::seconds(5)});
    RetryPolicy fast;
    fast.sleep = [](std::chrono::milliseconds) {};

    ChatRequest r = hi_request();
    CHECK(complete(backend, r, fast).message.content == "echo: hi");
    CHECK(seen.at("model") == "gpt-4o");
    CHECK(seen.at("messages").at(0).at("role") == "user");
    CHECK(seen.contains("temperature"));
    CHECK(seen.contains("max_tokens"));
    CHECK(auth == "Bearer secret");

    r.messages = {ChatMessage::user("boom")};
    CHECK_THROWS_AS(complete(backend, r, fast), TransportError);
    r.messages = {ChatMessage::user("garbage")};
    CHECK_THROWS_AS(complete(backend, r, fast), ProtocolError);

    server.stop();
    thread.join();

    HttpBackend unreachable({"http://127.0.0.1:" + std::to_string(port) + "/v1", "", std::chrono::seconds(1)});
    CHECK_THROWS_AS(complete(unreachable, hi_request(), fast), TransportError);
}

TEST_CASE("recorded sessions freeze into a scripted backend")
{
    auto live = std::make_shared<RuleBackend>(json::parse(R"([{"reply": "recorded"}])"));
    auto recorder = std::make_shared<RecordingBackend>(live);
    (void)complete(*recorder, hi_request());
    (void)complete(*recorder, hi_request());
    auto entries = recorder->entries();
    CHECK(entries.size() == 1);
    auto replay = load_script(script_document(entries));
    CHECK(complete(replay, hi_request()).message.content == "recorded");
}

TEST_CASE("rule backend picks the first matching rule")
{
    auto backend = load_script(json::parse(R"({"rules": [
        {"when": {"last_role": "tool"}, "reply": "after tool"},
        {"when": {"last_user_contains": "solve", "tools_offered": true},
         "tool_calls": [{"name": "solve", "arguments": {"equation": "2x+3=7"}}]},
        {"when": {"system_contains": "socratic"}, "replies": ["first", "second"]}
    ]})"));
    ChatRequest r;
    r.model = "m";
    r.messages = {ChatMessage::system("Be Socratic."), ChatMessage::user("hello")};
    CHECK(complete(backend, r).message.content == "first");
    r.messages.push_back(ChatMessage::assistant("first"));
    r.messages.push_back(ChatMessage::user("again"));
    CHECK(complete(backend, r).message.content == "second");
    r.messages.push_back(ChatMessage::assistant("second"));
    r.messages.push_back(ChatMessage::user("and again"));
    CHECK(complete(backend, r).message.content == "second");

    r.messages = {ChatMessage::user("please solve this")};
    r.tools = {ToolSpec{"solve", "", json::object()}};
    auto call = complete(backend, r);
    REQUIRE(call.message.tool_calls.size() == 1);
    CHECK(call.message.tool_calls[0].id == "call_1");
    r.messages.push_back(call.message);
    r.messages.push_back(ChatMessage::tool("call_1", "roots: 2"));
    CHECK(complete(backend, r).message.content == "after tool");

    r.messages = {ChatMessage::user("unmatched")};
    r.tools.clear();
    CHECK_THROWS_AS(complete(backend, r), ScriptMiss);
}

TEST_CASE("tool registry validates arguments")
{
    ToolRegistry registry;
    registry.add(ToolSpec{"retrieve", "search the textbook",
                          {{"type", "object"},
                           {"properties", {{"query", {{"type", "string"}}}, {"k", {{"type", "integer"}}}}},
                           {"required", {"query"}}}});
    CHECK_THROWS_AS(registry.add(ToolSpec{"retrieve", "", json::object()}), PreconditionError);
    CHECK_FALSE(registry.check(ToolInvocation{"1", "retrieve", {{"query", "roots"}}}).has_value());
    CHECK(registry.check(ToolInvocation{"1", "retrieve", json::object()}).has_value());
    CHECK(registry.check(ToolInvocation{"1", "retrieve", {{"query", 3}}}).has_value());
    CHECK(registry.check(ToolInvocation{"1", "retrieve", {{"query", "q"}, {"extra", 1}}}).has_value());
    CHECK(registry.check(ToolInvocation{"1", "nope", json::object()}).has_value());
}
