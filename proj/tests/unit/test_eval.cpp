#include "doctest.h"

#include "mtutor/eval/eval.hpp"
#include "mtutor/llm/errors.hpp"
#include "mtutor/math/parser.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace mtutor;
using namespace mtutor::eval;
using nlohmann::json;

namespace {

std::string fixture(std::string const & name)
{
    return std::string(MTUTOR_FIXTURE_DIR) + "/" + name;
}

DialogueTrace trace(std::optional<int> success, std::optional<int> telling, int turns = 5)
{
    DialogueTrace t;
    t.scenario_id = "t";
    t.turns.resize(static_cast<std::size_t>(turns));
    t.success_turn = success;
    t.first_telling_turn = telling;
    return t;
}

Arm tutor_arm()
{
    return {"scripted:socratic", tutor::PromptVariant::tutor, scripted_tutor(ScriptedTutorStyle::socratic)};
}

Arm base_arm()
{
    return {"scripted:teller", tutor::PromptVariant::base, scripted_tutor(ScriptedTutorStyle::teller)};
}

Scenario scenario(std::string problem, std::string truth, int converge, int k_max = 5)
{
    Scenario sc;
    sc.scenario_id = "sc";
    sc.problem = std::move(problem);
    sc.ground_truth = {math::parse(truth)};
    sc.persona.converge_level = converge;
    sc.persona.confusion_script = {"I don't get it."};
    sc.k_max = k_max;
    return sc;
}

class FnBackend final : public llm::Backend
{
public:
    using Fn = std::function<llm::ChatResponse(llm::ChatRequest const &)>;
    explicit FnBackend(Fn fn)
        : fn_(std::move(fn))
    {
    }

private:
    llm::ChatResponse do_send(llm::ChatRequest const & r) override { return fn_(r); }
    Fn fn_;
};

} // namespace

TEST_CASE("success_at_k and telling_at_k examples")
{
    std::vector<DialogueTrace> four{trace(1, {}), trace(2, {}), trace({}, {}), trace(4, {})};
    CHECK(success_at_k(four, 2) == doctest::Approx(0.5));

    std::vector<DialogueTrace> all{trace(1, {}), trace(3, {}), trace(5, {})};
    CHECK(success_at_k(all, 5) == 1.0);
    CHECK(success_at_k(all, 7) == 1.0);

    std::vector<DialogueTrace> told{trace({}, 1), trace({}, 1)};
    CHECK(telling_at_k(told, 1) == 1.0);

    std::vector<DialogueTrace> never{trace(1, {}), trace({}, {})};
    for (int k = 1; k <= 5; ++k)
        CHECK(telling_at_k(never, k) == 0.0);

    std::vector<DialogueTrace> three{trace({}, 1), trace({}, 3), trace({}, {})};
    CHECK(telling_at_k(three, 2) == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS((void)success_at_k({}, 1), EmptyTraceSet);
    CHECK_THROWS_AS((void)telling_at_k({}, 1), EmptyTraceSet);
}

TEST_CASE("12-trace hand-labelled fixture matches the hand counts")
{
    std::ifstream in(fixture("metrics_traces.json"));
    REQUIRE(in);
    auto const doc = json::parse(in);
    std::vector<DialogueTrace> traces;
    for (auto const & t : doc["traces"])
        traces.push_back(trace_from_json(t));
    REQUIRE(traces.size() == 12);
    for (int k = 1; k <= 5; ++k) {
        int const s = doc["expected_success_counts"][std::to_string(k)];
        int const t = doc["expected_telling_counts"][std::to_string(k)];
        CHECK(success_at_k(traces, k) == static_cast<double>(s) / 12.0);
        CHECK(telling_at_k(traces, k) == static_cast<double>(t) / 12.0);
    }
    // The telling turn agrees with the per-turn labels.
    for (auto const & t : doc["traces"]) {
        std::optional<int> first;
        for (std::size_t i = 0; i < t["turns"].size(); ++i)
            if (t["turns"][i]["telling"].get<bool>() && !first)
                first = static_cast<int>(i) + 1;
        CHECK(first == (t["first_telling_turn"].is_null() ? std::nullopt : std::optional<int>(t["first_telling_turn"].get<int>())));
    }
}

TEST_CASE("metrics are monotone and agree with a brute-force recount")
{
    std::mt19937 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<DialogueTrace> traces;
        std::size_t const n = 1 + rng() % 20;
        for (std::size_t i = 0; i < n; ++i) {
            auto pick = [&]() -> std::optional<int> {
                int const v = static_cast<int>(rng() % 7);
                return v == 0 || v == 6 ? std::nullopt : std::optional<int>(v);
            };
            traces.push_back(trace(pick(), pick()));
        }
        double prev_s = 0;
        double prev_t = 0;
        for (int k = 1; k <= 6; ++k) {
            int s = 0;
            int t = 0;
            for (auto const & tr : traces) {
                if (tr.success_turn.has_value() && tr.success_turn.value() <= k)
                    ++s;
                if (tr.first_telling_turn.has_value() && tr.first_telling_turn.value() <= k)
                    ++t;
            }
            double const sk = success_at_k(traces, k);
            double const tk = telling_at_k(traces, k);
            CHECK(sk == static_cast<double>(s) / static_cast<double>(n));
            CHECK(tk == static_cast<double>(t) / static_cast<double>(n));
            CHECK(sk >= prev_s);
            CHECK(tk >= prev_t);
            CHECK(sk <= 1.0);
            prev_s = sk;
            prev_t = tk;
        }
    }
}

TEST_CASE("scripted student converging at level 2 succeeds at turn 3")
{
    auto sc = scenario("Solve 3x - 5 = 10.", "5", 2);
    ScriptedStudent student;
    auto const t = simulate_dialogue(sc, tutor_arm(), student);
    CHECK_FALSE(t.aborted);
    REQUIRE(t.success_turn);
    CHECK(*t.success_turn == 3);
    CHECK_FALSE(t.first_telling_turn);
    REQUIRE(t.turns.size() == 3);
    CHECK(t.turns[0].hint_level == 0);
    CHECK(t.turns[1].hint_level == 1);
    CHECK(t.turns[2].hint_level == 2);
}

TEST_CASE("a telling base arm is caught at turn 1")
{
    auto sc = scenario("Solve 3x - 5 = 10.", "5", 0);
    ScriptedStudent student;
    auto const t = simulate_dialogue(sc, base_arm(), student);
    REQUIRE(t.first_telling_turn);
    CHECK(*t.first_telling_turn == 1);
    CHECK_FALSE(t.success_turn);
    REQUIRE_FALSE(t.turns.empty());
    CHECK(t.turns[0].tool_calls == std::vector<std::string>{"solve"});
}

TEST_CASE("K_max 1 without success leaves success_turn absent")
{
    auto sc = scenario("Solve 3x - 5 = 10.", "5", 3, 1);
    ScriptedStudent student;
    auto const t = simulate_dialogue(sc, tutor_arm(), student);
    CHECK(t.turns.size() == 1);
    CHECK_FALSE(t.success_turn);
}

TEST_CASE("gateway failures abort a dialogue without success or telling")
{
    auto sc = scenario("Solve 3x - 5 = 10.", "5", 0);
    Arm broken{"broken", tutor::PromptVariant::tutor, std::make_shared<FnBackend>([](llm::ChatRequest const &) -> llm::ChatResponse {
                   throw llm::ScriptMiss("deadbeef");
               })};
    ScriptedStudent student;
    auto const t = simulate_dialogue(sc, broken, student);
    CHECK(t.aborted);
    CHECK_FALSE(t.success_turn);
    CHECK_FALSE(t.first_telling_turn);
    auto const report = compare_arms({sc}, {broken});
    CHECK(report.arms[0].aborted == 1);
}

TEST_CASE("scenario fixture: tutor arm dominates, hand counts hold")
{
    auto const scenarios = load_scenarios(fixture("scenarios.jsonl"));
    REQUIRE(scenarios.size() == 6);
    auto const report = compare_arms(scenarios, {tutor_arm(), base_arm()});
    REQUIRE(report.arms.size() == 2);
    auto const & tut = report.arms[0];
    auto const & base = report.arms[1];
    // Convergence levels 0,1,2,0,3,1 give success turns 1,2,3,1,4,2.
    std::map<int, double> const expected{{1, 2.0 / 6}, {2, 4.0 / 6}, {3, 5.0 / 6}, {4, 1.0}, {5, 1.0}};
    for (int k = 1; k <= 5; ++k) {
        CHECK(tut.success_at.at(k) == doctest::Approx(expected.at(k)));
        CHECK(tut.telling_at.at(k) == 0.0);
        CHECK(base.success_at.at(k) == 0.0);
        CHECK(base.telling_at.at(k) == 1.0);
        CHECK(tut.success_at.at(k) > base.success_at.at(k));
        CHECK(tut.telling_at.at(k) < base.telling_at.at(k));
    }
    CHECK(tut.aborted == 0);
    CHECK(base.aborted == 0);
}

TEST_CASE("compare_arms is deterministic and independent of parallelism")
{
    auto const scenarios = load_scenarios(fixture("scenarios.jsonl"));
    CompareOptions serial;
    CompareOptions parallel;
    parallel.parallelism = 3;
    auto const a = to_json(compare_arms(scenarios, {tutor_arm(), base_arm()}, serial));
    auto const b = to_json(compare_arms(scenarios, {tutor_arm(), base_arm()}, parallel));
    auto const c = to_json(compare_arms(scenarios, {tutor_arm(), base_arm()}, serial));
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("curve shapes and report files")
{
    CompareOptions single;
    single.k_grid = {1};
    auto const one = compare_arms({scenario("Solve 2x + 3 = 7.", "2", 0)}, {tutor_arm()}, single);
    REQUIRE(one.arms.size() == 1);
    CHECK(one.arms[0].success_at.size() == 1);
    CHECK(one.arms[0].telling_at.size() == 1);

    auto const scenarios = load_scenarios(fixture("scenarios.jsonl"));
    auto const report = compare_arms(scenarios, {tutor_arm(), base_arm()});
    auto const csv = curves_csv(report);
    CHECK(csv.rfind("arm,metric,k,value\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2 * 5);
    CHECK(csv.find("scripted:socratic/tutor,success,1,0.333333") != std::string::npos);

    auto const dir = std::filesystem::temp_directory_path() / "mtutor-eval-report";
    std::filesystem::remove_all(dir);
    write_report(report, dir);
    std::ifstream in(dir / "report.json");
    auto const j = json::parse(in);
    CHECK(j["arms"].size() == 2);
    CHECK(j["reference_accuracy"].size() == 5);
    CHECK(j["traces"].size() == 12);
    CHECK(std::filesystem::exists(dir / "curves.csv"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("solver accuracy: all correct, nine of ten, and flagged failures")
{
    std::vector<SolverProblem> problems;
    for (int r = 1; r <= 10; ++r)
        problems.push_back({"Solve 2x + " + std::to_string(r) + " = " + std::to_string(2 * r + r) + ".",
                            {math::Expr::number(r)}});
    auto const all = solver_accuracy(problems, base_arm());
    CHECK(all.accuracy == 1.0);

    int n = 0;
    Arm nine{"nine", tutor::PromptVariant::base, std::make_shared<FnBackend>([&](llm::ChatRequest const &) {
                 int const i = n++;
                 return llm::ChatResponse::text(i == 4 ? "Answer: x = 100" : "Work...\nAnswer: x = " + std::to_string(i + 1));
             }),
             false};
    auto const nine_out = solver_accuracy(problems, nine);
    CHECK(nine_out.accuracy == doctest::Approx(0.9));
    CHECK_FALSE(nine_out.items[4].correct);

    Arm down{"down", tutor::PromptVariant::base, std::make_shared<FnBackend>([](llm::ChatRequest const &) -> llm::ChatResponse {
                 throw llm::ProtocolError("bad body");
             }),
             false};
    auto const failed = solver_accuracy({problems[0]}, down);
    CHECK(failed.accuracy == 0.0);
    CHECK(failed.items[0].flagged);
}

TEST_CASE("accuracy table shows the reference rows next to measured values")
{
    auto const table = accuracy_table({{"scripted:teller", 1.0}});
    CHECK(table.find("scripted:teller") != std::string::npos);
    CHECK(table.find("measured") != std::string::npos);
    for (auto const * v : {"0.9000", "0.8867", "0.7867", "0.7733"})
        CHECK(table.find(v) != std::string::npos);
    CHECK(reference_accuracy().size() == 5);
    CHECK(reference_accuracy()[0].accuracy == 0.9);
    CHECK(reference_accuracy()[1].accuracy == 0.9);
}

TEST_CASE("scenario validation")
{
    CHECK_THROWS_AS((void)scenario_from_json(json{{"scenario_id", "x"}, {"problem", "p"}, {"ground_truth", json::array()}}),
                    PreconditionError);
    CHECK_THROWS_AS((void)scenario_from_json(json{{"scenario_id", "x"}, {"problem", "p"}, {"ground_truth", {"1"}}, {"k_max", 0}}),
                    PreconditionError);
    auto const sc = scenario("Solve 2x = 4.", "2", 1);
    auto const back = scenario_from_json(to_json(sc));
    CHECK(to_json(back) == to_json(sc));
    CHECK_THROWS_AS(compare_arms({sc}, {}), PreconditionError);
}

TEST_CASE("states_answer needs every root")
{
    std::vector<math::Expr> const roots{math::Expr::number(2), math::Expr::number(3)};
    CHECK(states_answer("x = 2 and x = 3", roots));
    CHECK_FALSE(states_answer("x = 2", roots));
    CHECK(states_answer("the value 6/3 works", {math::Expr::number(2)}));
}
