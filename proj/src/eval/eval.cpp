#include "mtutor/eval/eval.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"
#include "mtutor/llm/errors.hpp"
#include "mtutor/math/answers.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/math/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace mtutor::eval {

using nlohmann::json;

void validate(Scenario const & sc)
{
    if (sc.scenario_id.empty())
        throw PreconditionError("scenario has no id");
    if (sc.ground_truth.empty())
        throw PreconditionError("scenario " + sc.scenario_id + " has an empty ground truth");
    if (sc.k_max < 1)
        throw PreconditionError("scenario " + sc.scenario_id + " has k_max below 1");
}

Scenario scenario_from_json(json const & j)
{
    Scenario sc;
    try {
        sc.scenario_id = j.at("scenario_id").get<std::string>();
        sc.problem = j.at("problem").get<std::string>();
        for (auto const & t : j.at("ground_truth"))
            sc.ground_truth.push_back(math::parse(t.get<std::string>()));
        sc.k_max = j.value("k_max", 5);
        if (j.contains("persona")) {
            auto const & p = j["persona"];
            sc.persona.misconception_tag = p.value("misconception_tag", "");
            sc.persona.converge_level = p.value("converge_level", 1);
            sc.persona.confusion_script = p.value("confusion_script", std::vector<std::string>{});
            sc.persona.llm_prompt = p.value("llm_prompt", "");
        }
    } catch (json::exception const & e) {
        throw Error(std::string("malformed scenario: ") + e.what());
    } catch (math::SyntaxError const & e) {
        throw Error(std::string("scenario ground truth does not parse: ") + e.what());
    }
    validate(sc);
    return sc;
}

json to_json(Scenario const & sc)
{
    json truth = json::array();
    for (auto const & t : sc.ground_truth)
        truth.push_back(math::to_string(t));
    return {{"scenario_id", sc.scenario_id},
            {"problem", sc.problem},
            {"ground_truth", truth},
            {"k_max", sc.k_max},
            {"persona",
             {{"misconception_tag", sc.persona.misconception_tag},
              {"converge_level", sc.persona.converge_level},
              {"confusion_script", sc.persona.confusion_script},
              {"llm_prompt", sc.persona.llm_prompt}}}};
}

std::vector<Scenario> load_scenarios(std::filesystem::path const & path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open scenario file " + path.string());
    std::vector<Scenario> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty())
            continue;
        try {
            out.push_back(scenario_from_json(json::parse(line)));
        } catch (json::exception const & e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

json to_json(DialogueTrace const & t)
{
    json turns = json::array();
    for (auto const & turn : t.turns) {
        json matched = json::array();
        for (auto const & m : turn.verdict.matched)
            matched.push_back({{"span", m.span}, {"equivalent_to", math::to_string(m.equivalent_to)}});
        turns.push_back({{"tutor_reply", turn.tutor_reply},
                         {"student_reply", turn.student_reply},
                         {"telling", turn.verdict.telling},
                         {"matched", matched},
                         {"tool_calls", turn.tool_calls},
                         {"hint_level", turn.hint_level}});
    }
    json j{{"scenario_id", t.scenario_id}, {"arm", t.arm}, {"turns", turns}, {"aborted", t.aborted}};
    j["success_turn"] = t.success_turn ? json(*t.success_turn) : json(nullptr);
    j["first_telling_turn"] = t.first_telling_turn ? json(*t.first_telling_turn) : json(nullptr);
    if (t.aborted)
        j["abort_reason"] = t.abort_reason;
    return j;
}

DialogueTrace trace_from_json(json const & j)
{
    DialogueTrace t;
    t.scenario_id = j.at("scenario_id").get<std::string>();
    t.arm = j.value("arm", "");
    t.aborted = j.value("aborted", false);
    t.abort_reason = j.value("abort_reason", "");
    if (j.contains("turns"))
        for (auto const & turn : j["turns"]) {
            DialogueTurn d;
            d.tutor_reply = turn.value("tutor_reply", "");
            d.student_reply = turn.value("student_reply", "");
            d.verdict.telling = turn.value("telling", false);
            d.tool_calls = turn.value("tool_calls", std::vector<std::string>{});
            d.hint_level = turn.value("hint_level", 0);
            t.turns.push_back(std::move(d));
        }
    auto opt = [&](char const * key) -> std::optional<int> {
        if (!j.contains(key) || j[key].is_null())
            return std::nullopt;
        return j[key].get<int>();
    };
    t.success_turn = opt("success_turn");
    t.first_telling_turn = opt("first_telling_turn");
    if (t.success_turn && (*t.success_turn < 1 || *t.success_turn > static_cast<int>(t.turns.size())))
        throw Error("trace " + t.scenario_id + ": success_turn outside the recorded turns");
    return t;
}

namespace {

double fraction_at(std::vector<DialogueTrace> const & traces, int k,
                   std::optional<int> DialogueTrace::*field)
{
    if (traces.empty())
        throw EmptyTraceSet("no traces to score");
    auto const hits = std::count_if(traces.begin(), traces.end(), [&](DialogueTrace const & t) {
        auto const & v = t.*field;
        return v && *v <= k;
    });
    return static_cast<double>(hits) / static_cast<double>(traces.size());
}

std::string var_of(std::string const & problem)
{
    auto eq = math::find_equation(problem);
    return eq ? eq->var : std::string("x");
}

std::string state_roots(std::vector<math::Expr> const & roots, std::string const & var)
{
    std::vector<std::string> parts;
    for (auto const & r : roots)
        parts.push_back(var + " = " + math::to_string(r));
    return text::join(parts, " and ");
}

} // namespace

double success_at_k(std::vector<DialogueTrace> const & traces, int k)
{
    return fraction_at(traces, k, &DialogueTrace::success_turn);
}

double telling_at_k(std::vector<DialogueTrace> const & traces, int k)
{
    return fraction_at(traces, k, &DialogueTrace::first_telling_turn);
}

bool states_answer(std::string const & utterance, std::vector<math::Expr> const & ground_truth)
{
    if (ground_truth.empty())
        return false;
    std::vector<math::Expr> said;
    for (auto const & span : math::extract_answer_spans(utterance))
        said.push_back(span.value);
    return std::all_of(ground_truth.begin(), ground_truth.end(),
                       [&](math::Expr const & t) { return math::contains_equivalent(said, t); });
}

std::string ScriptedStudent::opening(Scenario const & sc)
{
    return "Can you help me with this problem? " + sc.problem;
}

std::string ScriptedStudent::respond(Scenario const & sc, tutor::TurnResult const & tutor_turn, bool telling,
                                     int turn)
{
    if (!telling && tutor_turn.hint_level >= sc.persona.converge_level)
        return "Oh, I think I've got it: " + state_roots(sc.ground_truth, var_of(sc.problem)) + ".";
    auto const & script = sc.persona.confusion_script;
    if (script.empty())
        return "I'm still not sure what to do.";
    return script[static_cast<std::size_t>(turn - 1) % script.size()];
}

LlmStudent::LlmStudent(llm::BackendHandle backend, std::string model)
    : backend_(std::move(backend))
    , model_(std::move(model))
{
}

std::string LlmStudent::opening(Scenario const & sc)
{
    history_.clear();
    std::string persona = sc.persona.llm_prompt.empty()
                              ? "You are a middle-school student working on a math problem with a tutor. You are "
                                "unsure and make mistakes; answer in one or two short sentences."
                              : sc.persona.llm_prompt;
    if (!sc.persona.misconception_tag.empty())
        persona += " You tend to make this mistake: " + sc.persona.misconception_tag + ".";
    history_.push_back(llm::ChatMessage::system(persona + "\nProblem: " + sc.problem));
    std::string const first = "Can you help me with this problem? " + sc.problem;
    history_.push_back(llm::ChatMessage::user("(The tutor greets you.)"));
    history_.push_back(llm::ChatMessage::assistant(first));
    return first;
}

std::string LlmStudent::respond(Scenario const &, tutor::TurnResult const & tutor_turn, bool, int)
{
    history_.push_back(llm::ChatMessage::user(tutor_turn.reply));
    llm::ChatRequest req;
    req.model = model_;
    req.messages = history_;
    req.temperature = 0.7;
    auto reply = llm::complete(backend_, req).message.content;
    history_.push_back(llm::ChatMessage::assistant(reply));
    return reply;
}

std::string Arm::label() const
{
    return model + "/" + std::string(tutor::to_string(variant));
}

DialogueTrace simulate_dialogue(Scenario const & sc, Arm const & arm, StudentAgent & student,
                                kg::KnowledgeIndex const * index)
{
    validate(sc);
    if (!arm.backend)
        throw PreconditionError("arm " + arm.label() + " has no backend");

    DialogueTrace trace;
    trace.scenario_id = sc.scenario_id;
    trace.arm = arm.label();

    auto state = tutor::start_session("eval-" + sc.scenario_id + "-" + arm.label(), "eval-student");
    tasks::Exercise ex;
    ex.statement = sc.problem;
    ex.canonical_task = math::find_equation(sc.problem);
    ex.answer = sc.ground_truth;
    ex.answer_text = state_roots(sc.ground_truth, var_of(sc.problem));
    ex.topic = sc.persona.misconception_tag.empty() ? "evaluation" : sc.persona.misconception_tag;
    ex.verification = tasks::Verification::verified;
    ex.exercise_id = "ex-" + sha256_hex(sc.scenario_id + "\n" + sc.problem).substr(0, 12);
    tutor::set_active_problem(state, ex);

    tutor::TutorDeps deps;
    deps.llm = arm.backend;
    deps.model = arm.model;
    deps.variant = arm.variant;
    deps.tools_enabled = arm.tools_enabled;
    deps.enforce_guard = arm.enforce_guard;
    deps.index = index;
    deps.default_topic = ex.topic;

    try {
        std::string msg = student.opening(sc);
        for (int k = 1; k <= sc.k_max; ++k) {
            deps.now = k;
            auto const r = tutor::run_turn(state, msg, deps);
            DialogueTurn turn;
            turn.tutor_reply = r.reply;
            turn.hint_level = r.hint_level;
            turn.verdict = tutor::anti_telling_guard(r.raw_candidate.empty() ? r.reply : r.raw_candidate,
                                                     sc.ground_truth);
            for (auto const & e : r.tool_events)
                turn.tool_calls.push_back(e.name);
            if (turn.verdict.telling && !trace.first_telling_turn)
                trace.first_telling_turn = k;
            turn.student_reply = student.respond(sc, r, turn.verdict.telling, k);
            msg = turn.student_reply;
            trace.turns.push_back(std::move(turn));
            if (states_answer(msg, sc.ground_truth)) {
                trace.success_turn = k;
                break;
            }
        }
    } catch (Error const & e) {
        trace.aborted = true;
        trace.abort_reason = e.what();
        trace.success_turn.reset();
        trace.first_telling_turn.reset();
    }
    return trace;
}

std::vector<ReferenceRow> const & reference_accuracy()
{
    static std::vector<ReferenceRow> const rows{{"o3-mini (high)", 0.9000},
                                                {"Claude 3.5 Sonnet", 0.9000},
                                                {"Gemini 2.0 Flash", 0.8867},
                                                {"GPT-4o", 0.7867},
                                                {"GPT-4o-mini", 0.7733}};
    return rows;
}

MetricsReport compare_arms(std::vector<Scenario> const & scenarios, std::vector<Arm> const & arms,
                           CompareOptions const & options)
{
    if (arms.empty())
        throw PreconditionError("compare_arms needs at least one arm");
    if (scenarios.empty())
        throw EmptyTraceSet("no scenarios to run");
    if (options.k_grid.empty())
        throw PreconditionError("k grid is empty");
    for (auto const & sc : scenarios)
        validate(sc);

    StudentFactory const factory = options.student ? options.student : [](Scenario const &) {
        return std::unique_ptr<StudentAgent>(std::make_unique<ScriptedStudent>());
    };

    std::size_t const jobs = scenarios.size() * arms.size();
    std::vector<DialogueTrace> traces(jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
            auto const & arm = arms[i / scenarios.size()];
            auto const & sc = scenarios[i % scenarios.size()];
            auto student = factory(sc);
            traces[i] = simulate_dialogue(sc, arm, *student, options.index);
        }
    };
    std::size_t const threads = std::clamp<std::size_t>(options.parallelism, 1, jobs);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
        for (auto & t : pool)
            t.join();
    }

    MetricsReport report;
    report.k_grid = options.k_grid;
    std::sort(report.k_grid.begin(), report.k_grid.end());
    report.k_grid.erase(std::unique(report.k_grid.begin(), report.k_grid.end()), report.k_grid.end());
    for (std::size_t a = 0; a < arms.size(); ++a) {
        std::vector<DialogueTrace> const mine(traces.begin() + static_cast<std::ptrdiff_t>(a * scenarios.size()),
                                              traces.begin() + static_cast<std::ptrdiff_t>((a + 1) * scenarios.size()));
        ArmMetrics m;
        m.label = arms[a].label();
        m.model = arms[a].model;
        m.variant = arms[a].variant;
        m.dialogues = static_cast<int>(mine.size());
        m.aborted = static_cast<int>(std::count_if(mine.begin(), mine.end(), [](auto const & t) { return t.aborted; }));
        for (int k : report.k_grid) {
            m.success_at[k] = success_at_k(mine, k);
            m.telling_at[k] = telling_at_k(mine, k);
        }
        report.arms.push_back(std::move(m));
    }
    report.traces = std::move(traces);
    return report;
}

json to_json(MetricsReport const & r)
{
    json arms = json::array();
    for (auto const & a : r.arms) {
        json s = json::object();
        json t = json::object();
        for (auto const & [k, v] : a.success_at)
            s[std::to_string(k)] = v;
        for (auto const & [k, v] : a.telling_at)
            t[std::to_string(k)] = v;
        arms.push_back({{"arm", a.label},
                        {"model", a.model},
                        {"prompt_variant", std::string(tutor::to_string(a.variant))},
                        {"dialogues", a.dialogues},
                        {"aborted", a.aborted},
                        {"success_at", s},
                        {"telling_at", t}});
    }
    json refs = json::array();
    for (auto const & row : reference_accuracy())
        refs.push_back({{"model", row.model}, {"accuracy", row.accuracy}});
    json traces = json::array();
    for (auto const & t : r.traces)
        traces.push_back(to_json(t));
    return {{"k_grid", r.k_grid},
            {"arms", arms},
            {"solver_accuracy", r.solver_accuracy},
            {"reference_accuracy", refs},
            {"traces", traces}};
}

namespace {

std::string fixed(double v, int digits)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string csv_field(std::string const & s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s)
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

} // namespace

std::string curves_csv(MetricsReport const & r)
{
    std::string out = "arm,metric,k,value\n";
    for (auto const & a : r.arms) {
        for (auto const & [k, v] : a.success_at)
            out += csv_field(a.label) + ",success," + std::to_string(k) + "," + fixed(v, 6) + "\n";
        for (auto const & [k, v] : a.telling_at)
            out += csv_field(a.label) + ",telling," + std::to_string(k) + "," + fixed(v, 6) + "\n";
    }
    return out;
}

std::string accuracy_table(std::map<std::string, double> const & measured)
{
    std::size_t width = 5;
    for (auto const & [m, _] : measured)
        width = std::max(width, m.size());
    for (auto const & row : reference_accuracy())
        width = std::max(width, row.model.size());
    auto line = [&](std::string const & model, std::string const & acc, std::string const & source) {
        return model + std::string(width + 2 - model.size(), ' ') + acc + std::string(10 - acc.size(), ' ') + source +
               "\n";
    };
    std::string out = line("model", "accuracy", "source");
    for (auto const & [m, v] : measured)
        out += line(m, fixed(v, 4), "measured");
    for (auto const & row : reference_accuracy())
        out += line(row.model, fixed(row.accuracy, 4), "reference");
    return out;
}

void write_report(MetricsReport const & r, std::filesystem::path const & dir)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        out << to_json(r).dump(2) << "\n";
        if (!out)
            throw Error("cannot write " + (dir / "report.json").string());
    }
    std::ofstream out(dir / "curves.csv");
    out << curves_csv(r);
    if (!out)
        throw Error("cannot write " + (dir / "curves.csv").string());
}

namespace {

char const * solver_system_prompt =
    "Solve the math problem. Show brief work and finish with a final line of the form 'Answer: x = ...'.";

std::string solve_observation(json const & args)
{
    try {
        auto const eq = math::parse_equation(args.at("equation").get<std::string>());
        auto const r = math::solve_equation(eq);
        if (r.kind != math::SolveKind::exact)
            return "cannot solve exactly: " + r.reason;
        return r.exact.empty() ? std::string("no real solution") : "solutions: " + state_roots(r.exact, eq.var);
    } catch (Error const & e) {
        return std::string("solve failed: ") + e.what();
    } catch (json::exception const & e) {
        return std::string("solve failed: ") + e.what();
    }
}

} // namespace

SolverAccuracy solver_accuracy(std::vector<SolverProblem> const & problems, Arm const & arm)
{
    if (problems.empty())
        throw PreconditionError("no solver problems");
    SolverAccuracy out;
    auto const tools = tutor::tutor_tools(false);
    int correct = 0;
    for (auto const & p : problems) {
        SolverItem item;
        item.statement = p.statement;
        llm::ChatRequest req;
        req.model = arm.model;
        req.temperature = 0.0;
        req.messages = {llm::ChatMessage::system(solver_system_prompt), llm::ChatMessage::user(p.statement)};
        if (arm.tools_enabled)
            req.tools = {*tools.find(tutor::tool_solve)};
        try {
            for (int round = 0; round <= tutor::step_budget_per_turn; ++round) {
                auto const resp = llm::complete(arm.backend, req);
                if (resp.message.tool_calls.empty()) {
                    item.reply = resp.message.content;
                    break;
                }
                req.messages.push_back(resp.message);
                for (auto const & c : resp.message.tool_calls)
                    req.messages.push_back(llm::ChatMessage::tool(
                        c.id, c.name == tutor::tool_solve ? solve_observation(c.arguments) : "unknown tool"));
            }
            std::string answer = item.reply;
            if (auto pos = answer.rfind("Answer:"); pos != std::string::npos)
                answer = answer.substr(pos + 7);
            auto const got = math::answer_candidates(answer);
            item.correct = !got.empty() && math::same_answer_set(got, p.ground_truth);
            if (!item.correct)
                item.note = got.empty() ? "no answer found in the reply" : "answer does not match";
        } catch (llm::TransportError const & e) {
            item.flagged = true;
            item.note = e.what();
        } catch (llm::ProtocolError const & e) {
            item.flagged = true;
            item.note = e.what();
        }
        correct += item.correct ? 1 : 0;
        out.items.push_back(std::move(item));
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(problems.size());
    return out;
}

namespace {

class ScriptedTutor final : public llm::Backend
{
public:
    explicit ScriptedTutor(ScriptedTutorStyle style)
        : style_(style)
    {
    }

private:
    llm::ChatResponse do_send(llm::ChatRequest const & req) override
    {
        std::string const & system = req.messages.front().content;
        if (style_ == ScriptedTutorStyle::socratic) {
            int level = 0;
            if (auto pos = system.find("Hint level: "); pos != std::string::npos)
                level = std::atoi(system.c_str() + pos + 12);
            return llm::ChatResponse::text(tutor::templated_hint(level));
        }
        // The teller works on the problem line of the prompt, or the first
        // student message when there is none.
        std::optional<math::Equation> eq;
        if (auto pos = system.find("Problem: "); pos != std::string::npos)
            eq = math::find_equation(system.substr(pos + 9, system.find('\n', pos) - pos - 9));
        for (auto const & m : req.messages)
            if (!eq && m.role == llm::Role::user)
                eq = math::find_equation(m.content);
        if (!eq)
            return llm::ChatResponse::text("I'm not sure which equation you mean.");
        bool const offered = std::any_of(req.tools.begin(), req.tools.end(),
                                         [](llm::ToolSpec const & t) { return t.name == tutor::tool_solve; });
        bool const consulted = std::any_of(req.messages.begin(), req.messages.end(),
                                           [](llm::ChatMessage const & m) { return m.role == llm::Role::tool; });
        if (offered && !consulted)
            return llm::ChatResponse::calls({{"call_solve", tutor::tool_solve, {{"equation", math::to_string(*eq)}}}});
        auto const r = math::solve_equation(*eq);
        if (r.kind != math::SolveKind::exact || r.exact.empty())
            return llm::ChatResponse::text("This one has no simple answer.");
        return llm::ChatResponse::text("The answer is " + state_roots(r.exact, eq->var) + ".");
    }

    ScriptedTutorStyle style_;
};

} // namespace

llm::BackendHandle scripted_tutor(ScriptedTutorStyle style)
{
    return std::make_shared<ScriptedTutor>(style);
}

} // namespace mtutor::eval
