#pragma once

#include "mtutor/platform/service.hpp"

#include <filesystem>
#include <optional>

namespace mtutor::platform {

class ConfigError : public Error
{
public:
    using Error::Error;
};

struct ModelRoles
{
    std::string tutor;
    std::string task_creation;
    std::string summarizer;
    /// Course planning; falls back to the tutor model.
    std::string planner;
};

/// Server configuration, read from a JSON document. Relative paths are
/// resolved against the directory of the config file.
struct Config
{
    std::string endpoint;
    std::string api_key_env = "LLM_API_KEY";
    int timeout_seconds = 120;
    ModelRoles models;
    std::filesystem::path data_dir;
    std::size_t parallelism = 4;
    bool live_llm = false;
    bool guard_enforcement = true;
    bool educator_views = false;
    /// Scripted backend document used when live_llm is off.
    std::optional<std::filesystem::path> script;
    /// Defaults to `<data_dir>/kg-index`.
    std::optional<std::filesystem::path> kg_index;
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Name of the environment variable holding the static bearer token.
    /// Empty disables the check.
    std::string bearer_token_env;

    [[nodiscard]] std::filesystem::path index_dir() const { return kg_index ? *kg_index : data_dir / "kg-index"; }
};

/// Throws ConfigError on unknown keys, wrong types or a broken invariant
/// (live_llm off without a script, live_llm on without an endpoint).
Config parse_config(nlohmann::json const & doc, std::filesystem::path const & base_dir);
Config load_config(std::filesystem::path const & path);

struct Backends
{
    llm::BackendHandle tutor;
    llm::BackendHandle task_creation;
    llm::BackendHandle summarizer;
    llm::BackendHandle planner;
};

/// Live HTTP clients (the key read from the configured environment
/// variable) or one scripted backend shared by every role.
Backends make_backends(Config const & config);

/// Backends, models and the knowledge index (if one has been ingested).
ServiceDeps make_service_deps(Config const & config);

} // namespace mtutor::platform
