#include "mtutor/tasks/tasks.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"
#include "mtutor/math/answers.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/math/simplify.hpp"
#include "mtutor/math/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

namespace mtutor::tasks {

using math::Expr;
using math::Op;
using nlohmann::json;

std::string to_string(Verification v)
{
    switch (v) {
    case Verification::verified: return "verified";
    case Verification::unverifiable: return "unverifiable";
    case Verification::failed: return "failed";
    }
    return "?";
}

std::string to_string(Grade g)
{
    switch (g) {
    case Grade::correct: return "correct";
    case Grade::incorrect: return "incorrect";
    case Grade::partial: return "partial";
    }
    return "?";
}

GenerationExhausted::GenerationExhausted(std::string const & what, std::optional<Exercise> last)
    : Error(what)
    , last_(std::move(last))
{
}

void validate(TaskSpec const & spec)
{
    if (spec.difficulty < 1 || spec.difficulty > 5)
        throw PreconditionError("difficulty must be within 1..5");
    if (text::trim(spec.topic).empty())
        throw PreconditionError("task topic must not be empty");
}

namespace {

std::string exercise_id_for(Exercise const & ex)
{
    std::string key = ex.topic + "\n" + ex.statement + "\n";
    if (ex.canonical_task)
        key += math::to_string(*ex.canonical_task);
    key += "\n" + ex.answer_text;
    return "ex-" + sha256_hex(key).substr(0, 12);
}

bool is_none(std::string const & s)
{
    std::string const t = text::fold_case(text::trim(s));
    return t.empty() || t == "none" || t == "n/a" || t == "-";
}

std::optional<double> numeric(Expr const & e)
{
    double const v = math::evaluate(e, {});
    if (!std::isfinite(v))
        return std::nullopt;
    return v;
}

/// Exact equivalence, or numeric agreement within tolerance for constants.
bool same_value(Expr const & a, Expr const & b)
{
    if (math::equivalent(a, b))
        return true;
    auto x = numeric(a);
    auto y = numeric(b);
    return x && y && std::abs(*x - *y) <= numeric_tolerance * std::max(1.0, std::abs(*y));
}

bool contains_value(std::vector<Expr> const & set, Expr const & v)
{
    return std::any_of(set.begin(), set.end(), [&](Expr const & s) { return same_value(s, v); });
}

bool same_set(std::vector<Expr> const & a, std::vector<Expr> const & b)
{
    return std::all_of(a.begin(), a.end(), [&](Expr const & v) { return contains_value(b, v); }) &&
           std::all_of(b.begin(), b.end(), [&](Expr const & v) { return contains_value(a, v); });
}

struct Fields
{
    std::string statement;
    std::string equation;
    std::string answer;
    std::string steps;
    bool has_statement = false;
    bool has_answer = false;
    bool has_equation = false;
};

Fields split_fields(std::string const & reply)
{
    Fields f;
    std::string * current = nullptr;
    for (auto const & raw : text::split_lines(reply)) {
        std::string line = text::trim(raw);
        if (line.rfind("```", 0) == 0)
            continue;
        // Tolerate markdown emphasis around field names.
        std::string probe = line;
        probe.erase(std::remove(probe.begin(), probe.end(), '*'), probe.end());
        struct Field
        {
            char const * name;
            std::string * slot;
            bool * seen;
        };
        Field const fields[] = {{"STATEMENT:", &f.statement, &f.has_statement},
                                {"EQUATION:", &f.equation, &f.has_equation},
                                {"ANSWER:", &f.answer, &f.has_answer},
                                {"STEPS:", &f.steps, nullptr}};
        bool matched = false;
        for (auto const & field : fields)
            if (text::starts_with_ci(probe, field.name)) {
                current = field.slot;
                *current = text::trim(probe.substr(std::string_view(field.name).size()));
                if (field.seen)
                    *field.seen = true;
                matched = true;
                break;
            }
        if (!matched && current) {
            if (!current->empty())
                *current += "\n";
            *current += line;
        }
    }
    return f;
}

std::vector<std::string> step_lines(std::string const & steps)
{
    std::vector<std::string> out;
    for (auto line : text::split_lines(steps)) {
        line = text::trim(line);
        std::size_t i = 0;
        while (i < line.size() && (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '.' ||
                                   line[i] == ')' || line[i] == '-' || line[i] == '*'))
            ++i;
        line = text::trim(line.substr(i));
        if (!line.empty())
            out.push_back(line);
    }
    return out;
}

} // namespace

Exercise parse_exercise_reply(std::string const & reply, TaskSpec const & spec)
{
    Fields const f = split_fields(reply);
    if (!f.has_statement || text::trim(f.statement).empty())
        throw ParseFailure("reply has no STATEMENT field");
    if (!f.has_answer || text::trim(f.answer).empty())
        throw ParseFailure("reply has no ANSWER field");

    Exercise ex;
    ex.statement = text::trim(f.statement);
    ex.topic = spec.topic;
    ex.difficulty = spec.difficulty;
    ex.answer_text = text::trim(f.answer);
    ex.solution_steps = step_lines(f.steps);

    if (f.has_equation && !is_none(f.equation)) {
        try {
            ex.canonical_task = math::parse_equation(text::trim(text::split_lines(f.equation).front()));
        } catch (math::SyntaxError const & e) {
            throw ParseFailure("EQUATION does not parse: " + std::string(e.what()));
        }
        try {
            ex.answer = math::parse_answer_list(ex.answer_text, ex.canonical_task->var);
        } catch (math::SyntaxError const & e) {
            throw ParseFailure("ANSWER does not parse: " + std::string(e.what()));
        }
    } else {
        try {
            ex.answer = math::parse_answer_list(ex.answer_text);
        } catch (math::SyntaxError const &) {
            ex.answer.clear();
        }
    }
    ex.exercise_id = exercise_id_for(ex);
    return ex;
}

VerifyOutcome check(Exercise const & ex)
{
    if (!ex.canonical_task)
        return {Verification::unverifiable, "no canonical equation"};
    math::SolveResult r;
    try {
        r = math::solve_equation(*ex.canonical_task);
    } catch (Error const & e) {
        return {Verification::unverifiable, std::string("solver error: ") + e.what()};
    }
    if (r.kind == math::SolveKind::unsupported)
        return {Verification::unverifiable, "solver cannot handle this equation: " + r.reason};
    if (r.identity)
        return {Verification::unverifiable, "the equation holds for every value"};

    std::vector<std::string> shown;
    bool ok = false;
    if (r.kind == math::SolveKind::numeric) {
        auto near = [](double a, double b) { return std::abs(a - b) <= numeric_tolerance * std::max(1.0, std::abs(b)); };
        std::vector<double> claimed;
        for (auto const & a : ex.answer)
            if (auto v = numeric(a))
                claimed.push_back(*v);
        ok = claimed.size() == ex.answer.size();
        for (double c : claimed)
            ok = ok && std::any_of(r.approximations.begin(), r.approximations.end(), [&](double t) { return near(c, t); });
        for (double t : r.approximations)
            ok = ok && std::any_of(claimed.begin(), claimed.end(), [&](double c) { return near(c, t); });
        for (double t : r.approximations) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.9g", t);
            shown.emplace_back(buf);
        }
    } else {
        ok = same_set(ex.answer, r.exact);
        for (auto const & t : r.exact)
            shown.push_back(math::to_string(t));
    }
    if (ok)
        return {Verification::verified, ""};

    std::string note = "the solver finds ";
    note += shown.empty() ? std::string("no real solution") : "{" + text::join(shown, ", ") + "}";
    std::vector<std::string> claimed;
    for (auto const & a : ex.answer)
        claimed.push_back(math::to_string(a));
    note += " but the answer claims {" + text::join(claimed, ", ") + "}";
    return {Verification::failed, note};
}

namespace {

std::string build_prompt(TaskSpec const & spec, GenerateOptions const & options)
{
    std::string p = "Topic: " + spec.topic + "\nDifficulty: " + std::to_string(spec.difficulty) + " of 5\n";
    if (spec.grounding && options.index) {
        std::string excerpts;
        for (auto const & id : *spec.grounding)
            if (auto const * c = options.index->chunk(id))
                excerpts += "- " + text::truncate_utf8(text::normalize_whitespace(c->text), 400) + "\n";
        if (!excerpts.empty())
            p += "Textbook excerpts:\n" + excerpts;
    }
    if (spec.personalization) {
        auto const & ctx = *spec.personalization;
        std::vector<std::string> tags;
        for (auto const & m : ctx.active_misconceptions)
            tags.push_back(m.tag);
        if (!tags.empty())
            p += "The student has shown these misconceptions: " + text::join(tags, "; ") +
                 ". Make the exercise exercise them.\n";
        for (auto const & h : ctx.style_hints)
            p += "Style: " + h + "\n";
    }
    return p;
}

char const * generation_system_prompt =
    "You write one practice exercise for a mathematics student. Reply in exactly this format:\n"
    "STATEMENT: <the task as shown to the student>\n"
    "EQUATION: <the equation to solve, in plain ASCII math such as 2*x + 3 = 7, or none for a word task>\n"
    "ANSWER: <every solution, for example x = 2, x = 3; or none>\n"
    "STEPS:\n1. <first step>\n2. <next step>";

} // namespace

Exercise generate(TaskSpec const & spec, llm::BackendHandle const & backend, GenerateOptions const & options)
{
    validate(spec);
    llm::ChatRequest req;
    req.model = options.model;
    req.temperature = 0.2;
    req.messages = {llm::ChatMessage::system(generation_system_prompt),
                    llm::ChatMessage::user(build_prompt(spec, options))};

    std::optional<Exercise> last;
    std::string problem;
    for (int attempt = 1; attempt <= max_generation_attempts; ++attempt) {
        if (attempt > 1)
            req.messages.push_back(llm::ChatMessage::user("That exercise was rejected: " + problem +
                                                          ". Write a corrected exercise in the same format."));
        auto const reply = llm::complete(backend, req).message.content;
        req.messages.push_back(llm::ChatMessage::assistant(reply));
        try {
            Exercise ex = parse_exercise_reply(reply, spec);
            ex.attempts = attempt;
            auto const outcome = check(ex);
            ex.verification = outcome.status;
            ex.verification_note = outcome.note;
            if (outcome.status != Verification::failed)
                return ex;
            problem = outcome.note;
            last = std::move(ex);
        } catch (ParseFailure const & e) {
            problem = e.what();
        }
    }
    throw GenerationExhausted("no verified exercise after " + std::to_string(max_generation_attempts) +
                                  " attempts: " + problem,
                              std::move(last));
}

Exercise generate_offline(TaskSpec const & spec, std::uint64_t seed)
{
    validate(spec);
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(spec.topic + std::to_string(spec.difficulty)));
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1)); };
    auto nonzero = [&](int lo, int hi) {
        int v = 0;
        while (v == 0)
            v = pick(lo, hi);
        return v;
    };
    Expr const x = Expr::symbol("x");
    std::string const topic = text::fold_case(spec.topic);
    bool const quadratic = topic.find("quadratic") != std::string::npos || topic.find("factor") != std::string::npos ||
                           topic.find("square") != std::string::npos || spec.difficulty >= 4;
    bool const signs = topic.find("sign") != std::string::npos || topic.find("distribut") != std::string::npos ||
                       spec.difficulty == 3;

    math::Equation eq;
    eq.var = "x";
    std::vector<std::string> steps;
    if (quadratic) {
        int const r1 = pick(-9, 9);
        int r2 = pick(-9, 9);
        while (r2 == r1)
            r2 = pick(-9, 9);
        eq.lhs = math::simplify(Expr::mul(Expr::sub(x, Expr::number(r1)), Expr::sub(x, Expr::number(r2))));
        eq.rhs = Expr::number(0);
        steps = {"Look for two numbers whose product is the constant term and whose sum is the x coefficient.",
                 "Factor the left side into two linear factors.", "Set each factor equal to zero and solve."};
    } else if (signs) {
        int const a = nonzero(-9, 9);
        int const root = pick(-9, 9);
        int const c = pick(-9, 9);
        // c - (x + a) = c - root - a
        eq.lhs = Expr::sub(Expr::number(c), Expr::add(x, Expr::number(a)));
        eq.rhs = Expr::number(c - root - a);
        steps = {"Distribute the minus sign to every term inside the parentheses.", "Collect the constant terms.",
                 "Isolate x."};
    } else {
        int const k = nonzero(2, 9);
        int const root = pick(-9, 9);
        int const b = nonzero(-9, 9);
        eq.lhs = Expr::add(Expr::mul(Expr::number(k), x), Expr::number(b));
        eq.rhs = Expr::number(k * root + b);
        steps = {"Subtract the constant term from both sides.", "Divide both sides by the coefficient of x."};
    }

    Exercise ex;
    ex.topic = spec.topic;
    ex.difficulty = spec.difficulty;
    ex.canonical_task = eq;
    ex.statement = "Solve " + math::to_string(eq) + " for x.";
    ex.solution_steps = steps;
    auto const r = math::solve_equation(eq);
    ex.answer = r.exact;
    std::vector<std::string> shown;
    for (auto const & v : ex.answer)
        shown.push_back("x = " + math::to_string(v));
    ex.answer_text = text::join(shown, ", ");
    auto const outcome = check(ex);
    ex.verification = outcome.status;
    ex.verification_note = outcome.note;
    ex.exercise_id = exercise_id_for(ex);
    return ex;
}

namespace {

bool is_sum(Expr const & e)
{
    return e.op() == Op::add || e.op() == Op::sub;
}

bool is_scaled_sum(Expr const & e)
{
    return e.op() == Op::mul && is_sum(e.rhs()) && e.lhs().is_number();
}

/// The wrong negation of a sum: only the first term flips.
Expr wrong_negation(Expr const & e)
{
    if (is_sum(e))
        return e.op() == Op::add ? Expr::add(Expr::neg(e.lhs()), e.rhs()) : Expr::sub(Expr::neg(e.lhs()), e.rhs());
    if (is_scaled_sum(e)) {
        Expr const & k = e.lhs();
        Expr const & s = e.rhs();
        Expr const first = Expr::neg(Expr::mul(k, s.lhs()));
        Expr const second = Expr::mul(k, s.rhs());
        return s.op() == Op::add ? Expr::add(first, second) : Expr::sub(first, second);
    }
    return Expr::neg(e);
}

} // namespace

Expr misdistribute_minus(Expr const & e)
{
    switch (e.op()) {
    case Op::number:
    case Op::symbol: return e;
    case Op::neg: {
        Expr const inner = misdistribute_minus(e.operand());
        if (is_sum(inner) || is_scaled_sum(inner))
            return wrong_negation(inner);
        return Expr::neg(inner);
    }
    case Op::sub: {
        Expr const a = misdistribute_minus(e.lhs());
        Expr const b = misdistribute_minus(e.rhs());
        if (is_sum(b) || is_scaled_sum(b))
            return Expr::add(a, wrong_negation(b));
        return Expr::sub(a, b);
    }
    case Op::mul: {
        Expr const a = misdistribute_minus(e.lhs());
        Expr const b = misdistribute_minus(e.rhs());
        // -k(a+b) parses as (-k)(a+b).
        if (a.op() == Op::neg && a.operand().is_number() && is_sum(b))
            return wrong_negation(Expr::mul(a.operand(), b));
        return Expr::mul(a, b);
    }
    case Op::add: return Expr::add(misdistribute_minus(e.lhs()), misdistribute_minus(e.rhs()));
    case Op::div: return Expr::div(misdistribute_minus(e.lhs()), misdistribute_minus(e.rhs()));
    case Op::pow: return Expr::pow(misdistribute_minus(e.lhs()), e.exponent());
    case Op::func: return Expr::call(e.func(), misdistribute_minus(e.operand()));
    }
    return e;
}

GradeResult grade_response(Exercise const & ex, std::string const & student_answer)
{
    if (ex.verification == Verification::failed)
        throw PreconditionError("cannot grade against a failed exercise");
    GradeResult result;
    std::string const var = ex.canonical_task ? ex.canonical_task->var : "x";

    // A strict list first; prose such as "I got 3" parses as a product of
    // letters, so anything with free symbols falls back to span extraction.
    bool parsed = false;
    try {
        result.student_values = math::parse_answer_list(student_answer, var);
        parsed = std::all_of(result.student_values.begin(), result.student_values.end(),
                             [](Expr const & v) { return math::free_symbols(v).empty(); });
    } catch (math::SyntaxError const &) {
    }
    if (!parsed) {
        result.student_values = math::answer_candidates(student_answer);
        parsed = !result.student_values.empty();
    }
    if (!parsed) {
        result.grade = Grade::incorrect;
        result.tags.push_back(tag_unparseable);
        return result;
    }

    auto const & truth = ex.answer;
    auto const & got = result.student_values;
    if (same_set(got, truth)) {
        result.grade = Grade::correct;
        return result;
    }
    bool const subset = !got.empty() && std::all_of(got.begin(), got.end(), [&](Expr const & v) {
        return contains_value(truth, v);
    });
    if (truth.size() > 1 && subset) {
        result.grade = Grade::partial;
        result.tags.push_back(tag_missing_root);
        return result;
    }
    result.grade = Grade::incorrect;

    if (ex.canonical_task) {
        math::Equation decoy{misdistribute_minus(ex.canonical_task->lhs), misdistribute_minus(ex.canonical_task->rhs),
                             ex.canonical_task->var};
        if (!(decoy == *ex.canonical_task)) {
            auto const r = math::solve_equation(decoy);
            if (r.kind == math::SolveKind::exact && !r.exact.empty() && !same_set(r.exact, truth) &&
                same_set(got, r.exact))
                result.tags.push_back(tag_sign_distribution);
        }
    }
    if (result.tags.empty() && !truth.empty() && !got.empty()) {
        std::vector<Expr> negated;
        for (auto const & t : truth)
            negated.push_back(math::simplify(Expr::neg(t)));
        bool const all_zero = std::all_of(truth.begin(), truth.end(), [](Expr const & t) { return math::simplify(t).is_zero(); });
        if (!all_zero && same_set(got, negated))
            result.tags.push_back(tag_sign_error);
    }
    return result;
}

json to_json(Exercise const & ex)
{
    json answer = json::array();
    for (auto const & a : ex.answer)
        answer.push_back(math::to_string(a));
    json j{{"schema_version", 1},
           {"exercise_id", ex.exercise_id},
           {"statement", ex.statement},
           {"answer", answer},
           {"answer_text", ex.answer_text},
           {"solution_steps", ex.solution_steps},
           {"difficulty", ex.difficulty},
           {"topic", ex.topic},
           {"verification", to_string(ex.verification)},
           {"attempts", ex.attempts}};
    if (ex.canonical_task)
        j["canonical_task"] = {{"lhs", math::to_string(ex.canonical_task->lhs)},
                               {"rhs", math::to_string(ex.canonical_task->rhs)},
                               {"var", ex.canonical_task->var}};
    else
        j["canonical_task"] = nullptr;
    if (!ex.verification_note.empty())
        j["verification_note"] = ex.verification_note;
    return j;
}

Exercise exercise_from_json(json const & j)
{
    if (j.value("schema_version", 0) != 1)
        throw Error("unsupported exercise schema_version");
    Exercise ex;
    try {
        ex.exercise_id = j.at("exercise_id").get<std::string>();
        ex.statement = j.at("statement").get<std::string>();
        for (auto const & a : j.at("answer"))
            ex.answer.push_back(math::parse(a.get<std::string>()));
        ex.answer_text = j.value("answer_text", "");
        ex.solution_steps = j.value("solution_steps", std::vector<std::string>{});
        ex.difficulty = j.at("difficulty").get<int>();
        ex.topic = j.at("topic").get<std::string>();
        std::string const v = j.at("verification").get<std::string>();
        ex.verification = v == "verified" ? Verification::verified
                          : v == "failed" ? Verification::failed
                                          : Verification::unverifiable;
        ex.attempts = j.value("attempts", 1);
        ex.verification_note = j.value("verification_note", "");
        if (j.contains("canonical_task") && !j["canonical_task"].is_null()) {
            auto const & t = j["canonical_task"];
            ex.canonical_task = math::Equation{math::parse(t.at("lhs").get<std::string>()),
                                               math::parse(t.at("rhs").get<std::string>()),
                                               t.at("var").get<std::string>()};
        }
    } catch (json::exception const & e) {
        throw Error(std::string("malformed exercise document: ") + e.what());
    }
    return ex;
}

json student_view(Exercise const & ex)
{
    return {{"exercise_id", ex.exercise_id},
            {"statement", ex.statement},
            {"difficulty", ex.difficulty},
            {"topic", ex.topic}};
}

} // namespace mtutor::tasks
