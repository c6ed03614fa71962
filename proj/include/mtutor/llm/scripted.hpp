#pragma once

#include "mtutor/llm/gateway.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mtutor::llm {

/// Stable digest of (model, message roles, whitespace-normalized contents,
/// tool names). Temperature and token limits do not participate.
std::string request_key(ChatRequest const & request);

/// Deterministic replay keyed by `request_key`.
class ScriptedBackend final : public Backend
{
public:
    using Entry = std::pair<std::string, ChatResponse>;

    /// Throws DuplicateKey.
    explicit ScriptedBackend(std::vector<Entry> entries);

    /// Number of times the entry for `key` has been replayed.
    [[nodiscard]] std::size_t hits(std::string const & key) const;
    [[nodiscard]] std::size_t size() const { return responses_.size(); }

private:
    ChatResponse do_send(ChatRequest const & request) override;

    std::vector<ChatResponse> responses_;
    std::vector<std::unique_ptr<std::atomic<std::size_t>>> hits_;
    std::unordered_map<std::string, std::size_t> index_;
};

BackendHandle script_backend(std::vector<ScriptedBackend::Entry> entries);

/// Forwards to another backend and records every (key, response) pair, so a
/// session run once against a programmable double can be frozen into a
/// ScriptedBackend.
class RecordingBackend final : public Backend
{
public:
    explicit RecordingBackend(BackendHandle inner);

    /// Recorded entries, first occurrence of each key only, in call order.
    [[nodiscard]] std::vector<ScriptedBackend::Entry> entries() const;

private:
    ChatResponse do_send(ChatRequest const & request) override;

    BackendHandle inner_;
    mutable std::mutex mutex_;
    std::vector<ScriptedBackend::Entry> entries_;
};

/// Hand-authored deterministic responder: the first rule whose conditions
/// all hold produces the response. Conditions (all optional):
///   model, system_contains, last_user_contains, any_user_contains,
///   last_role ("user" | "tool" | "assistant"), user_turn (1-based count of
///   user messages), tools_offered (bool).
/// A rule answers with `reply` (text), `replies` (indexed by user_turn, the
/// last one repeating) or `tool_calls` ([{name, arguments}]).
class RuleBackend final : public Backend
{
public:
    explicit RuleBackend(nlohmann::json rules);

private:
    ChatResponse do_send(ChatRequest const & request) override;

    nlohmann::json rules_;
};

/// Load a script document: `{"entries": [{"key"|"request", "response"}]}`
/// for digest replay or `{"rules": [...]}` for a RuleBackend. Entry
/// responses use the chat-completions wire shape or `{"content": ...}`.
BackendHandle load_script(nlohmann::json const & doc);
BackendHandle load_script_file(std::filesystem::path const & path);

/// Serialize recorded entries in the `entries` script format.
nlohmann::json script_document(std::vector<ScriptedBackend::Entry> const & entries);

} // namespace mtutor::llm
