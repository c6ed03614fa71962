#include "mtutor/platform/config.hpp"

#include "mtutor/llm/http_backend.hpp"
#include "mtutor/llm/scripted.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace mtutor::platform {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void reject_unknown(json const & obj, std::string const & where, std::set<std::string> const & allowed)
{
    for (auto const & [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key " + where + key);
}

json const & section(json const & doc, char const * key)
{
    static json const empty = json::object();
    if (!doc.contains(key))
        return empty;
    if (!doc[key].is_object())
        throw ConfigError(std::string("config key \"") + key + "\" must be an object");
    return doc[key];
}

fs::path resolve(fs::path const & base, std::string const & p)
{
    fs::path const path(p);
    return path.is_absolute() ? path : base / path;
}

template <class T>
T get_or(json const & obj, char const * key, T fallback, std::string const & where)
{
    if (!obj.contains(key))
        return fallback;
    try {
        return obj[key].get<T>();
    } catch (json::exception const &) {
        throw ConfigError("config key " + where + key + " has the wrong type");
    }
}

} // namespace

Config parse_config(json const & doc, fs::path const & base_dir)
{
    if (!doc.is_object())
        throw ConfigError("config must be an object");
    reject_unknown(doc, "", {"llm", "models", "data_dir", "parallelism", "flags", "script", "kg_index", "listen", "auth"});

    Config c;
    json const & llm = section(doc, "llm");
    reject_unknown(llm, "llm.", {"endpoint", "api_key_env", "timeout_seconds"});
    c.endpoint = get_or<std::string>(llm, "endpoint", "", "llm.");
    c.api_key_env = get_or<std::string>(llm, "api_key_env", c.api_key_env, "llm.");
    c.timeout_seconds = get_or<int>(llm, "timeout_seconds", c.timeout_seconds, "llm.");

    json const & models = section(doc, "models");
    reject_unknown(models, "models.", {"tutor", "task_creation", "summarizer", "planner"});
    c.models.tutor = get_or<std::string>(models, "tutor", "", "models.");
    c.models.task_creation = get_or<std::string>(models, "task_creation", c.models.tutor, "models.");
    c.models.summarizer = get_or<std::string>(models, "summarizer", c.models.tutor, "models.");
    c.models.planner = get_or<std::string>(models, "planner", c.models.tutor, "models.");
    if (c.models.tutor.empty())
        throw ConfigError("models.tutor is required");

    std::string const data_dir = get_or<std::string>(doc, "data_dir", "", "");
    if (data_dir.empty())
        throw ConfigError("data_dir is required");
    c.data_dir = resolve(base_dir, data_dir);
    auto const parallelism = get_or<long>(doc, "parallelism", 4, "");
    if (parallelism < 1)
        throw ConfigError("parallelism must be at least 1");
    c.parallelism = static_cast<std::size_t>(parallelism);

    json const & flags = section(doc, "flags");
    reject_unknown(flags, "flags.", {"live_llm", "guard_enforcement", "educator_views"});
    c.live_llm = get_or<bool>(flags, "live_llm", c.live_llm, "flags.");
    c.guard_enforcement = get_or<bool>(flags, "guard_enforcement", c.guard_enforcement, "flags.");
    c.educator_views = get_or<bool>(flags, "educator_views", c.educator_views, "flags.");

    if (auto s = get_or<std::string>(doc, "script", "", ""); !s.empty())
        c.script = resolve(base_dir, s);
    if (auto s = get_or<std::string>(doc, "kg_index", "", ""); !s.empty())
        c.kg_index = resolve(base_dir, s);

    json const & listen = section(doc, "listen");
    reject_unknown(listen, "listen.", {"host", "port"});
    c.host = get_or<std::string>(listen, "host", c.host, "listen.");
    c.port = get_or<int>(listen, "port", c.port, "listen.");
    if (c.port < 0 || c.port > 65535)
        throw ConfigError("listen.port out of range");

    json const & auth = section(doc, "auth");
    reject_unknown(auth, "auth.", {"bearer_token_env"});
    c.bearer_token_env = get_or<std::string>(auth, "bearer_token_env", "", "auth.");

    if (!c.live_llm && !c.script)
        throw ConfigError("flags.live_llm is false but no script is configured");
    if (c.live_llm && c.endpoint.empty())
        throw ConfigError("flags.live_llm is true but llm.endpoint is empty");
    return c;
}

Config load_config(fs::path const & path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (json::parse_error const & e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, fs::absolute(path).parent_path());
}

Backends make_backends(Config const & config)
{
    if (!config.live_llm) {
        if (!config.script || !fs::exists(*config.script))
            throw ConfigError("script " + (config.script ? config.script->string() : std::string("(none)"))
                              + " does not exist");
        auto const b = llm::load_script_file(*config.script);
        return {b, b, b, b};
    }
    char const * key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key)
        throw ConfigError("environment variable " + config.api_key_env + " is not set");
    auto const b = std::make_shared<llm::HttpBackend>(
        llm::HttpBackendConfig{config.endpoint, key, std::chrono::seconds(config.timeout_seconds)});
    return {b, b, b, b};
}

ServiceDeps make_service_deps(Config const & config)
{
    Backends const b = make_backends(config);
    ServiceDeps d;
    d.tutor_llm = b.tutor;
    d.tutor_model = config.models.tutor;
    d.task_model = config.models.task_creation;
    d.planner_model = config.models.planner;
    // Offline, only the tutor follows the script; exercises come from the
    // verified templates and course plans from the deterministic ordering.
    if (config.live_llm) {
        d.task_llm = b.task_creation;
        d.planner_llm = b.planner;
    }
    d.guard_enforcement = config.guard_enforcement;
    d.educator_views = config.educator_views;
    fs::path const index = config.index_dir();
    if (fs::exists(index / "graph.json"))
        d.index = std::make_shared<kg::KnowledgeIndex const>(kg::load_index(index));
    return d;
}

} // namespace mtutor::platform
