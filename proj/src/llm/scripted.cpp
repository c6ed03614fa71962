#include "mtutor/llm/scripted.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"
#include "mtutor/llm/wire.hpp"

#include <fstream>

namespace mtutor::llm {

using nlohmann::json;

std::string request_key(ChatRequest const & request)
{
    std::string canon = "model:" + request.model + "\n";
    for (auto const & m : request.messages) {
        canon += to_string(m.role);
        canon += '\x1f';
        canon += text::normalize_whitespace(m.content);
        for (auto const & call : m.tool_calls) {
            canon += '\x1f';
            canon += call.name;
        }
        canon += '\x1e';
    }
    canon += "\ntools:";
    for (auto const & t : request.tools) {
        canon += t.name;
        canon += ',';
    }
    return sha256_hex(canon);
}

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries)
{
    for (auto & [key, response] : entries) {
        if (!index_.emplace(key, responses_.size()).second)
            throw DuplicateKey(key);
        responses_.push_back(std::move(response));
        hits_.push_back(std::make_unique<std::atomic<std::size_t>>(0));
    }
}

std::size_t ScriptedBackend::hits(std::string const & key) const
{
    auto it = index_.find(key);
    return it == index_.end() ? 0 : hits_[it->second]->load();
}

ChatResponse ScriptedBackend::do_send(ChatRequest const & request)
{
    std::string const key = request_key(request);
    auto it = index_.find(key);
    if (it == index_.end())
        throw ScriptMiss(key);
    hits_[it->second]->fetch_add(1);
    return responses_[it->second];
}

BackendHandle script_backend(std::vector<ScriptedBackend::Entry> entries)
{
    return std::make_shared<ScriptedBackend>(std::move(entries));
}

RecordingBackend::RecordingBackend(BackendHandle inner)
    : inner_(std::move(inner))
{
}

std::vector<ScriptedBackend::Entry> RecordingBackend::entries() const
{
    std::lock_guard lock(mutex_);
    return entries_;
}

ChatResponse RecordingBackend::do_send(ChatRequest const & request)
{
    ChatResponse response = inner_->send(request);
    std::string key = request_key(request);
    std::lock_guard lock(mutex_);
    for (auto const & [k, r] : entries_)
        if (k == key)
            return response;
    entries_.emplace_back(std::move(key), response);
    return response;
}

// ---------------------------------------------------------------------------

RuleBackend::RuleBackend(json rules)
    : rules_(std::move(rules))
{
    if (!rules_.is_array())
        throw PreconditionError("rules must be an array");
}

namespace {

bool rule_matches(json const & when, ChatRequest const & request)
{
    std::string system;
    std::string last_user;
    std::string all_user;
    int user_turns = 0;
    for (auto const & m : request.messages) {
        if (m.role == Role::system)
            system += m.content + "\n";
        if (m.role == Role::user) {
            last_user = m.content;
            all_user += m.content + "\n";
            ++user_turns;
        }
    }
    std::string const last_role(to_string(request.messages.back().role));

    for (auto const & [key, value] : when.items()) {
        if (key == "model" && value.get<std::string>() != request.model)
            return false;
        if (key == "system_contains" && !text::contains_ci(system, value.get<std::string>()))
            return false;
        if (key == "last_user_contains" && !text::contains_ci(last_user, value.get<std::string>()))
            return false;
        if (key == "any_user_contains" && !text::contains_ci(all_user, value.get<std::string>()))
            return false;
        if (key == "last_role" && value.get<std::string>() != last_role)
            return false;
        if (key == "user_turn" && value.get<int>() != user_turns)
            return false;
        if (key == "tools_offered" && value.get<bool>() == request.tools.empty())
            return false;
    }
    return true;
}

} // namespace

ChatResponse RuleBackend::do_send(ChatRequest const & request)
{
    if (request.messages.empty())
        throw ProtocolError("empty request");
    for (auto const & rule : rules_) {
        if (!rule_matches(rule.value("when", json::object()), request))
            continue;
        if (rule.contains("tool_calls")) {
            std::size_t prior = 0;
            for (auto const & m : request.messages)
                prior += m.tool_calls.size();
            std::vector<ToolInvocation> calls;
            for (auto const & c : rule.at("tool_calls")) {
                calls.push_back(ToolInvocation{"call_" + std::to_string(prior + calls.size() + 1),
                                               c.at("name").get<std::string>(),
                                               c.value("arguments", json::object())});
            }
            return ChatResponse::calls(std::move(calls), rule.value("reply", std::string()));
        }
        if (rule.contains("replies")) {
            auto const & replies = rule.at("replies");
            int turns = 0;
            for (auto const & m : request.messages)
                turns += m.role == Role::user ? 1 : 0;
            std::size_t const i = std::min<std::size_t>(static_cast<std::size_t>(std::max(turns, 1)) - 1,
                                                        replies.size() - 1);
            return ChatResponse::text(replies.at(i).get<std::string>());
        }
        return ChatResponse::text(rule.value("reply", std::string()));
    }
    throw ScriptMiss(request_key(request));
}

// ---------------------------------------------------------------------------

namespace {

ChatResponse entry_response(json const & j)
{
    if (j.contains("choices"))
        return response_from_wire(j);
    if (j.contains("tool_calls")) {
        std::vector<ToolInvocation> calls;
        for (auto const & c : j.at("tool_calls"))
            calls.push_back(ToolInvocation{c.at("id").get<std::string>(), c.at("name").get<std::string>(),
                                           c.value("arguments", json::object())});
        return ChatResponse::calls(std::move(calls), j.value("content", std::string()));
    }
    return ChatResponse::text(j.value("content", std::string()));
}

} // namespace

BackendHandle load_script(json const & doc)
{
    if (doc.contains("rules"))
        return std::make_shared<RuleBackend>(doc.at("rules"));
    if (!doc.contains("entries"))
        throw PreconditionError("script document needs 'entries' or 'rules'");
    std::vector<ScriptedBackend::Entry> entries;
    for (auto const & e : doc.at("entries")) {
        std::string key = e.contains("key") ? e.at("key").get<std::string>()
                                            : request_key(request_from_wire(e.at("request")));
        entries.emplace_back(std::move(key), entry_response(e.at("response")));
    }
    return script_backend(std::move(entries));
}

BackendHandle load_script_file(std::filesystem::path const & path)
{
    std::ifstream in(path);
    if (!in)
        throw PreconditionError("cannot open script " + path.string());
    try {
        return load_script(json::parse(in));
    } catch (json::exception const & e) {
        throw PreconditionError("malformed script " + path.string() + ": " + e.what());
    }
}

json script_document(std::vector<ScriptedBackend::Entry> const & entries)
{
    json list = json::array();
    for (auto const & [key, response] : entries)
        list.push_back({{"key", key}, {"response", to_wire(response)}});
    return {{"entries", std::move(list)}};
}

} // namespace mtutor::llm
