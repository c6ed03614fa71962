// Command-line front end: ingest a textbook, serve the API, run the
// evaluation harness, and create courses against a data directory.

#include "mtutor/eval/eval.hpp"
#include "mtutor/kg/document.hpp"
#include "mtutor/llm/scripted.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/platform/config.hpp"
#include "mtutor/platform/http_api.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

using namespace mtutor;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int exit_runtime = 1;
constexpr int exit_config = 2;

std::string slurp(fs::path const & p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_ingest(std::vector<std::string> const & textbooks, std::string const & out)
{
    std::vector<kg::SourceDocument> docs;
    for (auto const & t : textbooks)
        docs.push_back(kg::parse_markdown(fs::path(t).stem().string(), slurp(t)));
    kg::KnowledgeIndex const index = kg::build_index(docs);
    kg::save_index(index, out);
    std::cout << "chunks: " << index.chunks().size() << "\n"
              << "entities: " << index.graph().entities.size() << "\n"
              << "relations: " << index.graph().relations.size() << "\n"
              << "communities: " << index.communities().size() << "\n";
    return 0;
}

int run_serve(std::string const & config_path)
{
    platform::Config const config = platform::load_config(config_path);
    platform::ServiceDeps deps = platform::make_service_deps(config);
    auto store = std::make_shared<platform::EventStore>(config.data_dir);
    platform::Service service(store, std::move(deps));

    platform::ApiOptions opts;
    opts.threads = config.parallelism;
    if (!config.bearer_token_env.empty()) {
        char const * token = std::getenv(config.bearer_token_env.c_str());
        if (!token || !*token)
            throw platform::ConfigError("environment variable " + config.bearer_token_env + " is not set");
        opts.bearer_token = token;
    }
    platform::HttpApi api(service, opts);

    // Signals go to a dedicated thread so stop() runs in a normal context.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    int const port = api.bind(config.host, config.port);
    std::cout << "listening on " << config.host << ":" << port << " (data in " << config.data_dir.string() << ", "
              << (config.live_llm ? "live model" : "scripted model") << ")" << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        api.stop();
    });
    api.run();
    if (waiter.joinable()) {
        pthread_kill(waiter.native_handle(), SIGTERM);
        waiter.join();
    }
    return 0;
}

/// "<model>/<variant>=<backend>" with backend one of socratic, teller,
/// live, or script:<path>.
eval::Arm parse_arm(std::string const & spec, std::optional<platform::Config> const & config)
{
    auto const eq = spec.find('=');
    auto const slash = spec.rfind('/', eq);
    if (eq == std::string::npos || slash == std::string::npos || slash == 0)
        throw platform::ConfigError("arm \"" + spec + "\" is not <model>/<variant>=<backend>");
    eval::Arm arm;
    arm.model = spec.substr(0, slash);
    auto const variant = tutor::prompt_variant_from_string(spec.substr(slash + 1, eq - slash - 1));
    if (!variant)
        throw platform::ConfigError("arm \"" + spec + "\" names an unknown prompt variant");
    arm.variant = *variant;
    std::string const backend = spec.substr(eq + 1);
    if (backend == "socratic") {
        arm.backend = eval::scripted_tutor(eval::ScriptedTutorStyle::socratic);
    } else if (backend == "teller") {
        arm.backend = eval::scripted_tutor(eval::ScriptedTutorStyle::teller);
    } else if (backend.rfind("script:", 0) == 0) {
        arm.backend = llm::load_script_file(backend.substr(7));
    } else if (backend == "live") {
        if (!config || !config->live_llm)
            throw platform::ConfigError("arm " + spec + " needs --config with flags.live_llm = true");
        arm.backend = platform::make_backends(*config).tutor;
    } else {
        throw platform::ConfigError("unknown arm backend \"" + backend + "\"");
    }
    return arm;
}

std::vector<std::string> split_arms(std::string const & s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty())
            out.push_back(part);
    return out;
}

struct EvalArgs
{
    std::string scenarios;
    std::string arms;
    int k_max = 5;
    std::string out;
    std::size_t parallelism = 1;
    std::string config;
    std::string solver_problems;
    bool enforce_guard = false;
};

int run_eval(EvalArgs const & a)
{
    if (a.k_max < 1)
        throw platform::ConfigError("--k-max must be at least 1");
    std::optional<platform::Config> config;
    if (!a.config.empty())
        config = platform::load_config(a.config);

    auto scenarios = eval::load_scenarios(a.scenarios);
    for (auto & sc : scenarios)
        sc.k_max = a.k_max;
    std::vector<eval::Arm> arms;
    for (auto const & spec : split_arms(a.arms)) {
        arms.push_back(parse_arm(spec, config));
        arms.back().enforce_guard = a.enforce_guard;
    }
    if (arms.empty())
        throw platform::ConfigError("--arms names no arm");

    eval::CompareOptions opts;
    opts.k_grid.clear();
    for (int k = 1; k <= a.k_max; ++k)
        opts.k_grid.push_back(k);
    opts.parallelism = a.parallelism;
    std::shared_ptr<kg::KnowledgeIndex const> index;
    if (config && fs::exists(config->index_dir() / "graph.json")) {
        index = std::make_shared<kg::KnowledgeIndex const>(kg::load_index(config->index_dir()));
        opts.index = index.get();
    }
    eval::MetricsReport report = eval::compare_arms(scenarios, arms, opts);

    if (!a.solver_problems.empty()) {
        std::vector<eval::SolverProblem> problems;
        std::istringstream lines(slurp(a.solver_problems));
        for (std::string line; std::getline(lines, line);) {
            if (line.find_first_not_of(" \t\r") == std::string::npos)
                continue;
            json const j = json::parse(line);
            eval::SolverProblem p;
            p.statement = j.at("statement").get<std::string>();
            for (auto const & t : j.at("answer"))
                p.ground_truth.push_back(math::parse(t.get<std::string>()));
            problems.push_back(std::move(p));
        }
        for (auto const & arm : arms)
            report.solver_accuracy[arm.label()] = eval::solver_accuracy(problems, arm).accuracy;
    }

    eval::write_report(report, a.out);
    for (auto const & m : report.arms) {
        std::cout << m.label << ": dialogues " << m.dialogues << ", aborted " << m.aborted << "\n";
        for (int k : report.k_grid)
            std::cout << "  k=" << k << "  success " << m.success_at.at(k) << "  telling " << m.telling_at.at(k)
                      << "\n";
    }
    std::cout << eval::accuracy_table(report.solver_accuracy);
    std::cout << "report written to " << a.out << "\n";
    return 0;
}

int run_course_create(std::string const & config_path, std::string const & student, std::string const & goal,
                      std::vector<std::string> const & hints, std::size_t max_nodes, bool dot)
{
    platform::Config const config = platform::load_config(config_path);
    platform::Service service(std::make_shared<platform::EventStore>(config.data_dir),
                              platform::make_service_deps(config));
    json body{{"student_id", student}, {"goal", goal}, {"topic_hints", hints}, {"max_nodes", max_nodes}};
    json const dag = service.create_course(body);
    if (dot)
        std::cout << service.course_dot(dag.at("course_id").get<std::string>());
    else
        std::cout << dag.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char ** argv)
{
    CLI::App app{"Socratic math tutor: knowledge ingestion, API server, evaluation and course planning"};
    app.require_subcommand(1);

    std::vector<std::string> textbooks;
    std::string index_out;
    auto * ingest = app.add_subcommand("ingest", "Build the knowledge index from markdown textbooks");
    ingest->add_option("--textbook", textbooks, "Markdown textbook (repeatable)")->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", index_out, "Index directory")->required();

    std::string serve_config;
    auto * serve = app.add_subcommand("serve", "Run the HTTP API");
    serve->add_option("--config", serve_config, "Config file (JSON)")->required();

    EvalArgs ea;
    auto * ev = app.add_subcommand("eval", "Compare tutor arms on simulated dialogues");
    ev->add_option("--scenarios", ea.scenarios, "Scenario file, one JSON object per line")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--arms", ea.arms, "Comma-separated <model>/<variant>=<socratic|teller|live|script:PATH>")
        ->required();
    ev->add_option("--k-max", ea.k_max, "Largest turn budget K")->capture_default_str();
    ev->add_option("--out", ea.out, "Report directory")->required();
    ev->add_option("--parallelism", ea.parallelism, "Concurrent dialogues")->capture_default_str();
    ev->add_option("--config", ea.config, "Config file, needed for live arms");
    ev->add_option("--solver-problems", ea.solver_problems, "Problems for the solver accuracy table (JSONL)")
        ->check(CLI::ExistingFile);
    ev->add_flag("--enforce-guard", ea.enforce_guard, "Show students the enforced reply instead of the raw one");

    auto * course = app.add_subcommand("course", "Course planning");
    course->require_subcommand(1);
    std::string course_config;
    std::string student;
    std::string goal;
    std::vector<std::string> hints;
    std::size_t max_nodes = 12;
    bool dot = false;
    auto * create = course->add_subcommand("create", "Plan a course for a student and store it");
    create->add_option("--config", course_config, "Config file (JSON)")->required();
    create->add_option("--student", student, "Student id")->required();
    create->add_option("--goal", goal, "Learning goal")->required();
    create->add_option("--hint", hints, "Topic to include (repeatable)");
    create->add_option("--max-nodes", max_nodes, "Largest course size")->capture_default_str();
    create->add_flag("--dot", dot, "Print Graphviz DOT instead of JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest)
            return run_ingest(textbooks, index_out);
        if (*serve)
            return run_serve(serve_config);
        if (*ev)
            return run_eval(ea);
        if (*create)
            return run_course_create(course_config, student, goal, hints, max_nodes, dot);
    } catch (platform::ConfigError const & e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (platform::ApiError const & e) {
        std::cerr << "error (" << e.status() << "): " << e.what() << "\n";
        return exit_runtime;
    } catch (std::exception const & e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return 0;
}
