#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mtutor::llm {

enum class Role
{
    system,
    user,
    assistant,
    tool,
};

std::string_view to_string(Role role);
std::optional<Role> role_from_string(std::string_view s);

struct ToolInvocation
{
    std::string id;
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();

    friend bool operator==(ToolInvocation const &, ToolInvocation const &) = default;
};

struct ChatMessage
{
    Role role = Role::user;
    std::string content;
    std::vector<ToolInvocation> tool_calls;
    std::optional<std::string> tool_call_id;  // required iff role == tool

    static ChatMessage system(std::string content);
    static ChatMessage user(std::string content);
    static ChatMessage assistant(std::string content, std::vector<ToolInvocation> calls = {});
    static ChatMessage tool(std::string call_id, std::string content);

    friend bool operator==(ChatMessage const &, ChatMessage const &) = default;
};

/// A callable tool; `parameters` is a JSON-schema object descriptor.
struct ToolSpec
{
    std::string name;
    std::string description;
    nlohmann::json parameters = nlohmann::json::object();

    friend bool operator==(ToolSpec const &, ToolSpec const &) = default;
};

struct ChatRequest
{
    std::string model;
    std::vector<ChatMessage> messages;
    std::vector<ToolSpec> tools;
    double temperature = 0.7;
    int max_tokens = 1024;

    friend bool operator==(ChatRequest const &, ChatRequest const &) = default;
};

enum class FinishReason
{
    stop,
    tool_calls,
    length,
    error,
};

std::string_view to_string(FinishReason reason);
std::optional<FinishReason> finish_reason_from_string(std::string_view s);

struct Usage
{
    int prompt_tokens = 0;
    int completion_tokens = 0;

    friend bool operator==(Usage const &, Usage const &) = default;
};

struct ChatResponse
{
    ChatMessage message;
    FinishReason finish_reason = FinishReason::stop;
    Usage usage;

    static ChatResponse text(std::string content);
    static ChatResponse calls(std::vector<ToolInvocation> calls, std::string content = {});

    friend bool operator==(ChatResponse const &, ChatResponse const &) = default;
};

/// Throws PreconditionError when a message or request invariant is broken.
void validate(ChatMessage const & m);
void validate(ChatRequest const & r);

/// Throws ProtocolError when finish_reason and tool_calls disagree.
void validate(ChatResponse const & r);

} // namespace mtutor::llm
