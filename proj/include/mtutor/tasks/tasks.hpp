#pragma once

#include "mtutor/kg/index.hpp"
#include "mtutor/llm/gateway.hpp"
#include "mtutor/math/expr.hpp"
#include "mtutor/tasks/task_spec.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace mtutor::tasks {

enum class Verification { verified, unverifiable, failed };

std::string to_string(Verification v);

struct Exercise
{
    std::string exercise_id;
    std::string statement;
    std::optional<math::Equation> canonical_task;
    /// Exact values; empty with a canonical task means "no real solution".
    std::vector<math::Expr> answer;
    /// The answer as written, kept for non-symbolic exercises.
    std::string answer_text;
    std::vector<std::string> solution_steps;
    int difficulty = 2;
    std::string topic;
    Verification verification = Verification::unverifiable;
    /// Generation attempts used (1..3).
    int attempts = 1;
    /// Why verification did not pass, if it did not.
    std::string verification_note;
};

class ParseFailure : public Error
{
public:
    using Error::Error;
};

class GenerationExhausted : public Error
{
public:
    GenerationExhausted(std::string const & what, std::optional<Exercise> last);
    [[nodiscard]] std::optional<Exercise> const & last() const { return last_; }

private:
    std::optional<Exercise> last_;
};

inline constexpr int max_generation_attempts = 3;
/// Numeric roots (irreducible cubics and up) are compared within this.
inline constexpr double numeric_tolerance = 1e-6;

void validate(TaskSpec const & spec);

/// Parse a STATEMENT:/EQUATION:/ANSWER:/STEPS: reply. Throws ParseFailure.
Exercise parse_exercise_reply(std::string const & reply, TaskSpec const & spec);

struct VerifyOutcome
{
    Verification status = Verification::unverifiable;
    std::string note;
};

VerifyOutcome check(Exercise const & ex);
inline Verification verify(Exercise const & ex)
{
    return check(ex).status;
}

struct GenerateOptions
{
    std::string model;
    /// Resolves grounding chunk ids to text for the prompt when set.
    kg::KnowledgeIndex const * index = nullptr;
};

/// Ask the model for an exercise and verify it, feeding failures back for
/// up to three attempts in total. Unverifiable exercises are returned as
/// they are. Throws GenerationExhausted after three failures.
Exercise generate(TaskSpec const & spec, llm::BackendHandle const & backend, GenerateOptions const & options = {});

/// A verified linear or quadratic exercise with integer roots built from a
/// fixed template family, for running without a model.
Exercise generate_offline(TaskSpec const & spec, std::uint64_t seed);

enum class Grade { correct, incorrect, partial };

std::string to_string(Grade g);

struct GradeResult
{
    Grade grade = Grade::incorrect;
    std::vector<std::string> tags;
    std::vector<math::Expr> student_values;
};

inline constexpr char const * tag_sign_distribution = "negative sign distribution";
inline constexpr char const * tag_sign_error = "sign error";
inline constexpr char const * tag_missing_root = "missing root";
inline constexpr char const * tag_unparseable = "unparseable";

GradeResult grade_response(Exercise const & ex, std::string const & student_answer);

/// Mis-distribute every minus over a parenthesised sum: -(a+b) -> -a+b,
/// c-(a+b) -> c-a+b, -(a-b) -> -a-b, c-(a-b) -> c-a-b.
math::Expr misdistribute_minus(math::Expr const & e);

nlohmann::json to_json(Exercise const & ex);
Exercise exercise_from_json(nlohmann::json const & j);

/// What a student may see: no answer, no steps.
nlohmann::json student_view(Exercise const & ex);

} // namespace mtutor::tasks
