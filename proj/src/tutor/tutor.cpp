#include "mtutor/tutor/tutor.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"
#include "mtutor/llm/errors.hpp"
#include "mtutor/math/answers.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/math/plot.hpp"
#include "mtutor/math/solver.hpp"

#include <algorithm>
#include <cstdio>

namespace mtutor::tutor {

using nlohmann::json;

std::string_view to_string(PromptVariant v)
{
    return v == PromptVariant::tutor ? "tutor" : "base";
}

std::optional<PromptVariant> prompt_variant_from_string(std::string_view s)
{
    if (s == "tutor")
        return PromptVariant::tutor;
    if (s == "base")
        return PromptVariant::base;
    return std::nullopt;
}

std::string render_template(std::string_view tmpl, std::map<std::string, std::string> const & vars)
{
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        auto const open = tmpl.find("{{", i);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        auto const close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        out.append(tmpl.substr(i, open - i));
        auto const it = vars.find(std::string(tmpl.substr(open + 2, close - open - 2)));
        if (it != vars.end())
            out += it->second;
        i = close + 2;
    }
    return out;
}

TutorTurnState start_session(std::string session_id, std::string student_id)
{
    TutorTurnState s;
    s.wm.session_id = std::move(session_id);
    s.wm.student_id = std::move(student_id);
    return s;
}

void set_active_problem(TutorTurnState & state, tasks::Exercise exercise)
{
    std::vector<std::string> shown;
    for (auto const & a : exercise.answer)
        shown.push_back(math::to_string(a));
    memory::set_problem(state.wm, exercise.exercise_id, text::join(shown, ", "));
    state.active_problem = ActiveProblem{std::move(exercise), 0, 0, 0};
}

namespace {

char const * sign_pointer = "Look at the minus sign in front of the parentheses: it changes the sign of every term inside.";

bool has_distributable_minus(math::Equation const & eq)
{
    return !(tasks::misdistribute_minus(eq.lhs) == eq.lhs) || !(tasks::misdistribute_minus(eq.rhs) == eq.rhs);
}

std::string current_topic(TutorTurnState const & state, std::string const & fallback)
{
    if (state.active_problem && !state.active_problem->exercise.topic.empty())
        return state.active_problem->exercise.topic;
    if (state.wm.current_topic)
        return *state.wm.current_topic;
    return fallback;
}

} // namespace

SocraticPolicy select_scaffolding(memory::PersonalizationContext const & ctx, TutorTurnState const & state)
{
    SocraticPolicy p;
    p.visual_aid = std::any_of(ctx.style_hints.begin(), ctx.style_hints.end(),
                               [](std::string const & h) { return text::contains_ci(h, "visual"); });
    std::string const topic = current_topic(state, "");
    for (auto const & m : ctx.active_misconceptions) {
        bool const sign_tag = m.tag == tasks::tag_sign_distribution;
        bool const topical = !topic.empty() && (text::contains_ci(topic, m.tag) || text::contains_ci(m.tag, topic));
        bool const structural = sign_tag && state.active_problem && state.active_problem->exercise.canonical_task &&
                                has_distributable_minus(*state.active_problem->exercise.canonical_task);
        if (!topical && !structural)
            continue;
        p.hint_level = 1;
        p.pointer = sign_tag ? std::string(sign_pointer)
                             : "Careful with a mistake from before: " +
                                   (m.description.empty() ? m.tag : m.description) + ".";
        break;
    }
    if (state.active_problem)
        p.hint_level = std::max(p.hint_level, state.active_problem->hint_level);
    return p;
}

std::string templated_hint(int level, std::string const & pointer)
{
    switch (std::clamp(level, 0, top_hint_level)) {
    case 0: return "What is the first step you would take to get the variable on its own?";
    case 1:
        return pointer.empty() ? "Which operation is applied to the variable, and how could you undo it?" : pointer;
    case 2: return "Try isolating the variable term first.";
    default:
        return "Let's do one step together: undo the outermost operation on both sides, then tell me what is left.";
    }
}

std::string hint_instruction(int level)
{
    switch (std::clamp(level, 0, top_hint_level)) {
    case 0: return "Ask one question that helps the student choose the first step. Do not name a method.";
    case 1: return "Point at the idea that unlocks the problem, phrased as a question.";
    case 2: return "Suggest the next step concretely, but let the student carry it out.";
    default: return "You may work one intermediate step together with the student. Still never state the final value.";
    }
}

EnforcedReply enforce_policy(GuardVerdict const & verdict, std::string const & candidate,
                             std::vector<math::Expr> const & ground_truth, int attempts, int hint_level,
                             SocraticPolicy const & policy, Regenerate const & regenerate)
{
    EnforcedReply out;
    out.text = candidate;
    if (!verdict.telling)
        return out;
    if (attempts >= policy.reveal_threshold) {
        out.text = redact(candidate, verdict);
        out.redacted = true;
        return out;
    }
    for (int n = 1; n <= max_regenerations && regenerate; ++n) {
        std::string next = regenerate(n);
        out.regenerations = n;
        if (!text::trim(next).empty() && !anti_telling_guard(next, ground_truth).telling) {
            out.text = std::move(next);
            return out;
        }
    }
    out.text = templated_hint(hint_level, policy.pointer);
    out.templated = true;
    return out;
}

llm::ToolRegistry tutor_tools(bool with_plot)
{
    llm::ToolRegistry r;
    r.add({tool_retrieve, "Search the textbook for passages about a concept.",
           json{{"type", "object"},
                {"properties",
                 {{"query", {{"type", "string"}}}, {"mode", {{"type", "string"}, {"enum", {"local", "global"}}}}}},
                {"required", {"query"}}}});
    r.add({tool_create_task, "Create a practice exercise for the student.",
           json{{"type", "object"},
                {"properties", {{"topic", {{"type", "string"}}}, {"difficulty", {{"type", "integer"}}}}},
                {"required", {"topic"}}}});
    r.add({tool_solve, "Solve an equation. The result is for you only; never show it to the student.",
           json{{"type", "object"}, {"properties", {{"equation", {{"type", "string"}}}}}, {"required", {"equation"}}}});
    if (with_plot)
        r.add({tool_plot, "Draw the graph of a function of x for the student.",
               json{{"type", "object"},
                    {"properties",
                     {{"expression", {{"type", "string"}}},
                      {"from", {{"type", "number"}}},
                      {"to", {{"type", "number"}}}}},
                    {"required", {"expression"}}}});
    r.add({tool_memory, "Read what is known about the student.",
           json{{"type", "object"}, {"properties", json::object()}}});
    return r;
}

namespace {

std::string personalization_text(memory::PersonalizationContext const & ctx, std::string const & topic)
{
    char mastery[32];
    std::snprintf(mastery, sizeof mastery, "%.2f", ctx.mastery_level);
    std::string out = "Mastery of " + topic + ": " + mastery + "\n";
    if (!ctx.active_misconceptions.empty()) {
        std::vector<std::string> parts;
        for (auto const & m : ctx.active_misconceptions)
            parts.push_back(m.tag + " (seen " + std::to_string(m.evidence_count) + "x)");
        out += "Recurring mistakes: " + text::join(parts, "; ") + "\n";
    }
    for (auto const & h : ctx.style_hints)
        out += h + "\n";
    if (!ctx.open_goals.empty())
        out += "Goals: " + text::join(ctx.open_goals, "; ") + "\n";
    return out;
}

std::optional<tasks::Exercise> problem_from_text(std::string const & msg, std::string const & topic)
{
    auto eq = math::find_equation(msg);
    if (!eq)
        return std::nullopt;
    auto const r = math::solve_equation(*eq);
    if (r.kind != math::SolveKind::exact || r.identity || r.exact.empty())
        return std::nullopt;
    tasks::Exercise ex;
    ex.statement = "Solve " + math::to_string(*eq) + " for " + eq->var + ".";
    ex.canonical_task = *eq;
    ex.answer = r.exact;
    std::vector<std::string> shown;
    for (auto const & v : r.exact)
        shown.push_back(eq->var + " = " + math::to_string(v));
    ex.answer_text = text::join(shown, ", ");
    ex.topic = topic;
    ex.verification = tasks::Verification::verified;
    ex.exercise_id = "ex-" + sha256_hex(topic + "\n" + ex.statement).substr(0, 12);
    return ex;
}

struct ToolContext
{
    TutorTurnState & state;
    TutorDeps const & deps;
    TurnResult & result;
    memory::PersonalizationContext const & ctx;
    std::string const & topic;
    llm::ToolRegistry const & registry;
};

std::string run_tool(ToolContext & tc, llm::ToolInvocation const & call, bool & error)
{
    error = true;
    if (!tc.registry.find(call.name))
        return "tool " + call.name + " is not available";
    if (auto problem = tc.registry.check(call))
        return "invalid arguments: " + *problem;
    auto const & args = call.arguments;
    try {
        if (call.name == tool_retrieve) {
            if (!tc.deps.index || !tc.deps.index->built())
                return "no textbook index is loaded";
            auto const mode = args.value("mode", "local") == "global" ? kg::RetrievalMode::global
                                                                       : kg::RetrievalMode::local;
            auto const res = tc.deps.index->retrieve(args.at("query").get<std::string>(), mode, 3);
            error = false;
            if (res.hits.empty())
                return "no matching passages";
            std::string out;
            for (auto const & h : res.hits)
                out += "- " + text::truncate_utf8(text::normalize_whitespace(h.text), 300) + "\n";
            return out;
        }
        if (call.name == tool_create_task) {
            tasks::TaskSpec spec;
            spec.topic = args.at("topic").get<std::string>();
            spec.difficulty = args.value("difficulty", 2);
            spec.personalization = tc.ctx;
            tasks::Exercise ex;
            if (tc.deps.task_llm)
                ex = tasks::generate(spec, tc.deps.task_llm, {tc.deps.task_model, tc.deps.index});
            else
                ex = tasks::generate_offline(
                    spec, crc32_of(tc.state.wm.session_id + "/" + std::to_string(tc.state.transcript.size())));
            tc.result.task = ex;
            set_active_problem(tc.state, ex);
            error = false;
            return "Created exercise " + ex.exercise_id + ": " + ex.statement;
        }
        if (call.name == tool_solve) {
            auto const eq = math::parse_equation(args.at("equation").get<std::string>());
            auto const r = math::solve_equation(eq);
            error = false;
            if (r.kind == math::SolveKind::unsupported)
                return "cannot solve: " + r.reason;
            if (r.identity)
                return "every value of " + eq.var + " is a solution";
            std::vector<std::string> shown;
            if (r.kind == math::SolveKind::numeric)
                for (double v : r.approximations) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.9g", v);
                    shown.push_back(eq.var + " ~ " + buf);
                }
            else
                for (auto const & v : r.exact)
                    shown.push_back(eq.var + " = " + math::to_string(v));
            return shown.empty() ? std::string("no real solution") : "solutions: " + text::join(shown, ", ");
        }
        if (call.name == tool_plot) {
            auto const e = math::parse(args.at("expression").get<std::string>());
            auto const series = math::plot(e, "x", args.value("from", -10.0), args.value("to", 10.0));
            tc.result.plot_svg = math::render_svg(series);
            error = false;
            return "plot of " + series.expr_text + " shown to the student";
        }
        if (call.name == tool_memory) {
            error = false;
            return personalization_text(tc.ctx, tc.topic);
        }
    } catch (Error const & e) {
        return std::string("tool failed: ") + e.what();
    } catch (json::exception const & e) {
        return std::string("tool failed: ") + e.what();
    }
    return "unknown tool " + call.name;
}

std::string attempt_note(std::optional<memory::GradedStep> const & graded, std::optional<tasks::GradeResult> const & g)
{
    if (!graded || graded->correct)
        return {};
    std::string note = "The student's last answer was not correct";
    if (g && g->grade == tasks::Grade::partial)
        note = "The student found only some of the solutions";
    if (graded->error_tag)
        note += " (likely mistake: " + *graded->error_tag + ")";
    return note + ".";
}

} // namespace

TurnResult run_turn(TutorTurnState & state, std::string const & student_msg, TutorDeps const & deps)
{
    if (state.wm.closed)
        throw PreconditionError("session " + state.wm.session_id + " is not active");
    if (text::trim(student_msg).empty())
        throw PreconditionError("student message is empty");

    TurnResult result;
    state.scratchpad.clear();
    state.step_budget = step_budget_per_turn;

    std::string const fallback_topic = state.wm.current_topic.value_or(deps.default_topic);
    std::optional<tasks::GradeResult> grade;

    // A newly stated equation replaces the active problem; otherwise any
    // values in the message are graded as an attempt.
    auto stated = problem_from_text(student_msg, fallback_topic);
    if (stated) {
        if (!(state.active_problem && state.active_problem->exercise.canonical_task == stated->canonical_task))
            set_active_problem(state, *stated);
    } else if (state.active_problem && !math::answer_candidates(student_msg).empty()) {
        auto & ap = *state.active_problem;
        grade = tasks::grade_response(ap.exercise, student_msg);
        memory::GradedStep step;
        step.topic = ap.exercise.topic;
        step.final_answer = true;
        step.correct = grade->grade == tasks::Grade::correct;
        for (auto const & tag : grade->tags)
            if (tag != tasks::tag_unparseable) {
                step.error_tag = tag;
                step.error_description = "answered " + student_msg;
                break;
            }
        if (!step.correct) {
            ++ap.attempts;
            memory::record_attempt(state.wm);
        }
        result.graded = step;
    }

    bool const solved = result.graded && result.graded->correct;
    std::string const topic = current_topic(state, fallback_topic);
    memory::StudentProfile const empty_profile{};
    memory::StudentProfile const & profile = deps.profile ? *deps.profile : empty_profile;
    auto const ctx = memory::retrieve_context(profile, state.wm, topic);

    if (state.active_problem && !solved && state.active_problem->turns > 0 && deps.variant == PromptVariant::tutor) {
        auto & ap = *state.active_problem;
        ap.hint_level = std::min(top_hint_level, ap.hint_level + 1);
    }
    SocraticPolicy const policy = select_scaffolding(ctx, state);
    int const level = deps.variant == PromptVariant::tutor ? policy.hint_level : 0;
    if (state.active_problem) {
        state.active_problem->hint_level = level;
        memory::raise_hint(state.wm, level);
    }
    result.hint_level = level;
    result.solved = solved;

    std::vector<math::Expr> const truth =
        state.active_problem && !solved ? state.active_problem->exercise.answer : std::vector<math::Expr>{};

    std::string reply;
    if (solved) {
        reply = "That's correct, well done! You worked it out yourself. Would you like another exercise on " + topic +
                "?";
        state.active_problem.reset();
        state.wm.problem_state.reset();
    } else {
        auto const registry = tutor_tools(policy.visual_aid);
        std::vector<std::string> tool_names;
        for (auto const & s : registry.specs())
            tool_names.push_back(s.name);

        std::map<std::string, std::string> vars{
            {"problem", state.active_problem ? state.active_problem->exercise.statement : "none yet"},
            {"attempt_note", attempt_note(result.graded, grade)},
            {"hint_level", std::to_string(level)},
            {"hint_instruction", hint_instruction(level)},
            {"personalization", personalization_text(ctx, topic)},
            {"tools", deps.tools_enabled ? text::join(tool_names, ", ") : "none"}};
        if (level >= 1 && !policy.pointer.empty())
            vars["hint_instruction"] += "\nTargeted pointer: " + policy.pointer;
        if (state.reprompt)
            vars["attempt_note"] += "\nYour previous reply did not arrive; ask your question again in other words.";

        llm::ChatRequest req;
        req.model = deps.model;
        req.temperature = 0.3;
        req.messages.push_back(llm::ChatMessage::system(render_template(prompt_template(deps.variant), vars)));
        std::size_t const first =
            state.transcript.size() > prompt_turn_window ? state.transcript.size() - prompt_turn_window : 0;
        for (std::size_t i = first; i < state.transcript.size(); ++i) {
            req.messages.push_back(llm::ChatMessage::user(state.transcript[i].student));
            req.messages.push_back(llm::ChatMessage::assistant(state.transcript[i].tutor));
        }
        req.messages.push_back(llm::ChatMessage::user(student_msg));
        if (deps.tools_enabled)
            req.tools = registry.specs();

        ToolContext tc{state, deps, result, ctx, topic, registry};
        std::string candidate;
        bool exhausted = false;
        try {
            while (true) {
                auto const resp = llm::complete(deps.llm, req, deps.retry);
                ++result.llm_calls;
                if (resp.message.tool_calls.empty()) {
                    candidate = resp.message.content;
                    break;
                }
                req.messages.push_back(resp.message);
                for (auto const & call : resp.message.tool_calls) {
                    if (state.step_budget == 0)
                        break;
                    bool error = false;
                    std::string obs = run_tool(tc, call, error);
                    --state.step_budget;
                    state.scratchpad.push_back({resp.message.content, call, obs});
                    result.tool_events.push_back({call.name, call.arguments, obs, error});
                    req.messages.push_back(llm::ChatMessage::tool(call.id, std::move(obs)));
                }
                if (state.step_budget == 0) {
                    exhausted = true;
                    break;
                }
            }
            state.reprompt = false;
        } catch (llm::TransportError const &) {
            state.reprompt = true;
        } catch (llm::ProtocolError const &) {
            state.reprompt = true;
        }

        // A tool may have installed a new exercise.
        std::vector<math::Expr> const live_truth =
            state.active_problem ? state.active_problem->exercise.answer : std::vector<math::Expr>{};
        int const attempts = state.active_problem ? state.active_problem->attempts : 0;

        if (state.reprompt) {
            reply = gateway_fallback_prefix + templated_hint(level, policy.pointer);
            result.fallback = true;
        } else if (exhausted || text::trim(candidate).empty()) {
            reply = templated_hint(level, policy.pointer);
            result.fallback = true;
        } else {
            result.raw_candidate = candidate;
            result.raw_verdict = anti_telling_guard(candidate, live_truth);
            if (deps.enforce_guard) {
                auto regenerate = [&](int) {
                    llm::ChatRequest again = req;
                    again.tools.clear();
                    // Tool messages need their calls; keep only the plain conversation.
                    again.messages.erase(std::remove_if(again.messages.begin(), again.messages.end(),
                                                        [](llm::ChatMessage const & m) {
                                                            return m.role == llm::Role::tool || !m.tool_calls.empty();
                                                        }),
                                         again.messages.end());
                    again.messages.push_back(llm::ChatMessage::assistant(candidate));
                    again.messages.push_back(llm::ChatMessage::user(
                        "Constraint: that reply revealed the answer. Rewrite it as a guiding question that does not "
                        "state the solution value in any form."));
                    try {
                        auto const resp = llm::complete(deps.llm, again, deps.retry);
                        ++result.llm_calls;
                        candidate = resp.message.content;
                    } catch (llm::TransportError const &) {
                        candidate.clear();
                    } catch (llm::ProtocolError const &) {
                        candidate.clear();
                    }
                    return candidate;
                };
                auto const enforced =
                    enforce_policy(result.raw_verdict, result.raw_candidate, live_truth, attempts, level, policy, regenerate);
                reply = enforced.text;
                result.regenerations = enforced.regenerations;
                result.redacted = enforced.redacted;
                result.fallback = enforced.templated;
            } else {
                reply = candidate;
            }
        }
        // Backstop: an emitted reply is clean unless it is the redacted form.
        if (deps.enforce_guard && !result.redacted && anti_telling_guard(reply, live_truth).telling) {
            reply = templated_hint(level, policy.pointer);
            result.fallback = true;
        }
    }
    result.reply = reply;

    memory::TurnSummary turn;
    turn.session_id = state.wm.session_id;
    turn.turn_index = static_cast<int>(state.transcript.size()) + 1;
    turn.student_text = student_msg;
    turn.tutor_text = reply;
    turn.graded = result.graded;
    turn.at = deps.now;
    result.directives = memory::dispatch(turn, state.wm, profile);
    memory::apply_directives(state.wm, result.directives);

    state.transcript.push_back({student_msg, reply});
    if (state.active_problem)
        ++state.active_problem->turns;
    return result;
}

std::string render_transcript(TutorTurnState const & state)
{
    std::string out;
    for (auto const & e : state.transcript)
        out += "Student: " + e.student + "\nTutor: " + e.tutor + "\n\n";
    return out;
}

json to_json(TurnResult const & r)
{
    // Tool observations can hold solver output, so only names go out.
    json events = json::array();
    for (auto const & e : r.tool_events)
        events.push_back({{"tool", e.name}, {"arguments", e.arguments}, {"error", e.error}});
    json j{{"reply", r.reply}, {"tool_events", events}, {"hint_level", r.hint_level}};
    if (r.plot_svg)
        j["plot"] = *r.plot_svg;
    if (r.task)
        j["task"] = tasks::student_view(*r.task);
    if (r.graded)
        j["graded"] = {{"correct", r.graded->correct}};
    return j;
}

} // namespace mtutor::tutor
