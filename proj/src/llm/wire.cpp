#include "mtutor/llm/wire.hpp"

#include "mtutor/llm/errors.hpp"

namespace mtutor::llm {

using nlohmann::json;

namespace {

json const & require(json const & j, char const * key)
{
    if (!j.is_object() || !j.contains(key))
        throw ProtocolError(std::string("missing field '") + key + "'");
    return j.at(key);
}

std::string string_field(json const & j, char const * key)
{
    json const & v = require(j, key);
    if (!v.is_string())
        throw ProtocolError(std::string("field '") + key + "' is not a string");
    return v.get<std::string>();
}

} // namespace

json to_wire(ChatMessage const & m)
{
    json j = {{"role", to_string(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) {
        json calls = json::array();
        for (auto const & c : m.tool_calls)
            calls.push_back({{"id", c.id},
                             {"type", "function"},
                             {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
        j["tool_calls"] = std::move(calls);
    }
    if (m.tool_call_id)
        j["tool_call_id"] = *m.tool_call_id;
    return j;
}

ChatMessage message_from_wire(json const & j)
{
    ChatMessage m;
    auto role = role_from_string(string_field(j, "role"));
    if (!role)
        throw ProtocolError("unknown role '" + j.at("role").get<std::string>() + "'");
    m.role = *role;
    if (j.contains("content") && j.at("content").is_string())
        m.content = j.at("content").get<std::string>();
    else if (j.contains("content") && !j.at("content").is_null())
        throw ProtocolError("message content is not a string");
    if (j.contains("tool_calls") && !j.at("tool_calls").is_null()) {
        json const & calls = j.at("tool_calls");
        if (!calls.is_array())
            throw ProtocolError("tool_calls is not an array");
        for (auto const & c : calls) {
            json const & fn = require(c, "function");
            ToolInvocation call;
            call.id = string_field(c, "id");
            call.name = string_field(fn, "name");
            json const & args = require(fn, "arguments");
            try {
                call.arguments = args.is_string() ? json::parse(args.get<std::string>()) : args;
            } catch (json::parse_error const & e) {
                throw ProtocolError(std::string("tool call arguments are not JSON: ") + e.what());
            }
            m.tool_calls.push_back(std::move(call));
        }
    }
    if (j.contains("tool_call_id") && !j.at("tool_call_id").is_null())
        m.tool_call_id = string_field(j, "tool_call_id");
    return m;
}

json to_wire(ToolSpec const & t)
{
    return {{"type", "function"},
            {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}};
}

ToolSpec tool_spec_from_wire(json const & j)
{
    json const & fn = require(j, "function");
    ToolSpec t;
    t.name = string_field(fn, "name");
    if (fn.contains("description"))
        t.description = fn.at("description").get<std::string>();
    if (fn.contains("parameters"))
        t.parameters = fn.at("parameters");
    return t;
}

json to_wire(ChatRequest const & r)
{
    json messages = json::array();
    for (auto const & m : r.messages)
        messages.push_back(to_wire(m));
    json j = {{"model", r.model},
              {"messages", std::move(messages)},
              {"temperature", r.temperature},
              {"max_tokens", r.max_tokens}};
    if (!r.tools.empty()) {
        json tools = json::array();
        for (auto const & t : r.tools)
            tools.push_back(to_wire(t));
        j["tools"] = std::move(tools);
    }
    return j;
}

ChatRequest request_from_wire(json const & j)
{
    ChatRequest r;
    try {
        r.model = string_field(j, "model");
        for (auto const & m : require(j, "messages"))
            r.messages.push_back(message_from_wire(m));
        if (j.contains("tools"))
            for (auto const & t : j.at("tools"))
                r.tools.push_back(tool_spec_from_wire(t));
        if (j.contains("temperature"))
            r.temperature = j.at("temperature").get<double>();
        if (j.contains("max_tokens"))
            r.max_tokens = j.at("max_tokens").get<int>();
    } catch (json::exception const & e) {
        throw ProtocolError(std::string("malformed request: ") + e.what());
    }
    return r;
}

json to_wire(ChatResponse const & r)
{
    return {{"object", "chat.completion"},
            {"choices", json::array({{{"index", 0},
                                      {"message", to_wire(r.message)},
                                      {"finish_reason", to_string(r.finish_reason)}}})},
            {"usage",
             {{"prompt_tokens", r.usage.prompt_tokens},
              {"completion_tokens", r.usage.completion_tokens},
              {"total_tokens", r.usage.prompt_tokens + r.usage.completion_tokens}}}};
}

ChatResponse response_from_wire(json const & j)
{
    ChatResponse r;
    try {
        json const & choices = require(j, "choices");
        if (!choices.is_array() || choices.empty())
            throw ProtocolError("response has no choices");
        json const & first = choices.at(0);
        r.message = message_from_wire(require(first, "message"));
        json const & reason = require(first, "finish_reason");
        auto parsed = reason.is_string() ? finish_reason_from_string(reason.get<std::string>()) : std::nullopt;
        if (!parsed)
            throw ProtocolError("unknown finish_reason");
        r.finish_reason = *parsed;
        if (j.contains("usage") && j.at("usage").is_object()) {
            json const & u = j.at("usage");
            r.usage.prompt_tokens = u.value("prompt_tokens", 0);
            r.usage.completion_tokens = u.value("completion_tokens", 0);
        }
    } catch (json::exception const & e) {
        throw ProtocolError(std::string("malformed response: ") + e.what());
    }
    return r;
}

} // namespace mtutor::llm
