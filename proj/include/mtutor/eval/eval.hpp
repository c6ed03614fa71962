#pragma once

#include "mtutor/llm/gateway.hpp"
#include "mtutor/math/expr.hpp"
#include "mtutor/tutor/tutor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>

namespace mtutor::eval {

class EmptyTraceSet : public Error
{
public:
    using Error::Error;
};

struct StudentPersona
{
    std::string misconception_tag;
    /// The scripted student states the answer after a non-telling tutor
    /// turn at this hint level or above.
    int converge_level = 1;
    /// Replies while still confused, cycled turn by turn.
    std::vector<std::string> confusion_script;
    /// System prompt for a model-played student (live mode only).
    std::string llm_prompt;
};

struct Scenario
{
    std::string scenario_id;
    std::string problem;
    std::vector<math::Expr> ground_truth;
    StudentPersona persona;
    int k_max = 5;
};

void validate(Scenario const & sc);
Scenario scenario_from_json(nlohmann::json const & j);
nlohmann::json to_json(Scenario const & sc);
/// One scenario per line; blank lines are skipped.
std::vector<Scenario> load_scenarios(std::filesystem::path const & path);

struct DialogueTurn
{
    std::string tutor_reply;
    std::string student_reply;
    /// Verdict on the raw candidate, before any enforcement.
    tutor::GuardVerdict verdict;
    std::vector<std::string> tool_calls;
    int hint_level = 0;
};

struct DialogueTrace
{
    std::string scenario_id;
    std::string arm;
    std::vector<DialogueTurn> turns;
    /// 1-based tutor turn after which the student first stated the answer.
    std::optional<int> success_turn;
    std::optional<int> first_telling_turn;
    bool aborted = false;
    std::string abort_reason;
};

nlohmann::json to_json(DialogueTrace const & t);
DialogueTrace trace_from_json(nlohmann::json const & j);

/// Fraction of traces with success_turn <= k. Throws EmptyTraceSet.
double success_at_k(std::vector<DialogueTrace> const & traces, int k);
/// Fraction of traces with first_telling_turn <= k. Throws EmptyTraceSet.
double telling_at_k(std::vector<DialogueTrace> const & traces, int k);

/// True when every ground-truth value appears in `utterance`, found with
/// the same span extractor the guard uses.
bool states_answer(std::string const & utterance, std::vector<math::Expr> const & ground_truth);

class StudentAgent
{
public:
    virtual ~StudentAgent() = default;
    virtual std::string opening(Scenario const & sc) = 0;
    /// `turn` is the 1-based tutor turn just answered.
    virtual std::string respond(Scenario const & sc, tutor::TurnResult const & tutor_turn, bool telling, int turn) = 0;
};

/// Deterministic persona: confused until a non-telling reply reaches its
/// convergence level, then states every root.
class ScriptedStudent final : public StudentAgent
{
public:
    std::string opening(Scenario const & sc) override;
    std::string respond(Scenario const & sc, tutor::TurnResult const & tutor_turn, bool telling, int turn) override;
};

/// A model plays the student from the persona prompt.
class LlmStudent final : public StudentAgent
{
public:
    LlmStudent(llm::BackendHandle backend, std::string model);
    std::string opening(Scenario const & sc) override;
    std::string respond(Scenario const & sc, tutor::TurnResult const & tutor_turn, bool telling, int turn) override;

private:
    llm::BackendHandle backend_;
    std::string model_;
    std::vector<llm::ChatMessage> history_;
};

using StudentFactory = std::function<std::unique_ptr<StudentAgent>(Scenario const &)>;

struct Arm
{
    std::string model;
    tutor::PromptVariant variant = tutor::PromptVariant::tutor;
    llm::BackendHandle backend;
    bool tools_enabled = true;
    /// Measurement runs show the student the raw reply by default.
    bool enforce_guard = false;

    [[nodiscard]] std::string label() const;
};

DialogueTrace simulate_dialogue(Scenario const & sc, Arm const & arm, StudentAgent & student,
                                kg::KnowledgeIndex const * index = nullptr);

struct ArmMetrics
{
    std::string label;
    std::string model;
    tutor::PromptVariant variant = tutor::PromptVariant::tutor;
    std::map<int, double> success_at;
    std::map<int, double> telling_at;
    int dialogues = 0;
    int aborted = 0;
};

/// Published accuracies of the compared models, shown next to measured values.
struct ReferenceRow
{
    std::string model;
    double accuracy = 0;
};

std::vector<ReferenceRow> const & reference_accuracy();

struct MetricsReport
{
    std::vector<int> k_grid;
    std::vector<ArmMetrics> arms;
    std::map<std::string, double> solver_accuracy;
    std::vector<DialogueTrace> traces;
};

struct CompareOptions
{
    std::vector<int> k_grid{1, 2, 3, 4, 5};
    std::size_t parallelism = 1;
    /// Defaults to ScriptedStudent.
    StudentFactory student;
    kg::KnowledgeIndex const * index = nullptr;
};

/// Run every scenario against every arm and compute both curves per arm.
/// Results do not depend on `parallelism`.
MetricsReport compare_arms(std::vector<Scenario> const & scenarios, std::vector<Arm> const & arms,
                           CompareOptions const & options = {});

nlohmann::json to_json(MetricsReport const & r);
/// Columns: arm, metric, k, value.
std::string curves_csv(MetricsReport const & r);
/// Plain-text accuracy table: measured arms, then the reference rows.
std::string accuracy_table(std::map<std::string, double> const & measured);

/// Writes report.json and curves.csv into `dir`.
void write_report(MetricsReport const & r, std::filesystem::path const & dir);

struct SolverProblem
{
    std::string statement;
    std::vector<math::Expr> ground_truth;
};

struct SolverItem
{
    std::string statement;
    std::string reply;
    bool correct = false;
    /// The model could not be reached for this item.
    bool flagged = false;
    std::string note;
};

struct SolverAccuracy
{
    double accuracy = 0;
    std::vector<SolverItem> items;
};

/// Ask the arm to solve each problem (with the solve tool when the arm has
/// tools) and check the last stated answer set against the ground truth.
SolverAccuracy solver_accuracy(std::vector<SolverProblem> const & problems, Arm const & arm);

enum class ScriptedTutorStyle { socratic, teller };

/// Offline tutor doubles. `socratic` answers with the templated hint for
/// the hint level in its prompt; `teller` solves the problem and states it,
/// and also answers solver-accuracy prompts.
llm::BackendHandle scripted_tutor(ScriptedTutorStyle style);

} // namespace mtutor::eval
