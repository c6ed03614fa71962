#pragma once

#include "mtutor/kg/index.hpp"
#include "mtutor/llm/gateway.hpp"
#include "mtutor/llm/tools.hpp"
#include "mtutor/memory/memory.hpp"
#include "mtutor/tasks/tasks.hpp"
#include "mtutor/tutor/guard.hpp"
#include "mtutor/tutor/prompts.hpp"

#include <functional>
#include <optional>

namespace mtutor::tutor {

inline constexpr int step_budget_per_turn = 6;
inline constexpr int max_regenerations = 2;
inline constexpr int reveal_threshold = 3;
inline constexpr int top_hint_level = 3;
/// Past exchanges replayed into the prompt.
inline constexpr std::size_t prompt_turn_window = 6;

struct ActiveProblem
{
    /// Carries the statement, canonical equation and exact answer set.
    tasks::Exercise exercise;
    int attempts = 0;
    int hint_level = 0;
    /// Tutor turns taken on this problem so far.
    int turns = 0;
};

struct ScratchEntry
{
    std::string thought;
    llm::ToolInvocation action;
    std::string observation;
};

struct Exchange
{
    std::string student;
    std::string tutor;
};

struct TutorTurnState
{
    memory::SessionContext wm;
    std::vector<Exchange> transcript;
    std::optional<ActiveProblem> active_problem;
    /// Tool steps of the turn in progress; cleared when a turn starts.
    std::vector<ScratchEntry> scratchpad;
    int step_budget = step_budget_per_turn;
    /// The previous turn fell back after a gateway failure.
    bool reprompt = false;
};

TutorTurnState start_session(std::string session_id, std::string student_id);

/// Install a problem without waiting for the student to state it.
void set_active_problem(TutorTurnState & state, tasks::Exercise exercise);

struct SocraticPolicy
{
    int hint_level = 0;
    int reveal_threshold = tutor::reveal_threshold;
    bool visual_aid = false;
    /// Targeted pointer used for level-1 hints when a known misconception applies.
    std::string pointer;
};

SocraticPolicy select_scaffolding(memory::PersonalizationContext const & ctx, TutorTurnState const & state);

/// Canned reply at a hint level, used when the model cannot produce one.
std::string templated_hint(int level, std::string const & pointer = {});

/// What a reply at each level may contain, as told to the model.
std::string hint_instruction(int level);

struct EnforcedReply
{
    std::string text;
    int regenerations = 0;
    bool redacted = false;
    bool templated = false;
};

/// Called with the 1-based regeneration number; returns a fresh candidate.
using Regenerate = std::function<std::string(int)>;

/// Pass clean replies through. A telling reply is regenerated up to twice
/// and then replaced by the templated hint, unless the student has used up
/// `reveal_threshold` attempts, in which case the reply is kept with the
/// answer values blanked out.
EnforcedReply enforce_policy(GuardVerdict const & verdict, std::string const & candidate,
                             std::vector<math::Expr> const & ground_truth, int attempts, int hint_level,
                             SocraticPolicy const & policy, Regenerate const & regenerate);

/// Tool names offered to the model.
inline constexpr char const * tool_retrieve = "retrieve";
inline constexpr char const * tool_create_task = "create_task";
inline constexpr char const * tool_solve = "solve";
inline constexpr char const * tool_plot = "plot";
inline constexpr char const * tool_memory = "memory_read";

llm::ToolRegistry tutor_tools(bool with_plot);

struct TutorDeps
{
    llm::BackendHandle llm;
    std::string model;
    PromptVariant variant = PromptVariant::tutor;
    bool tools_enabled = true;
    /// When false the raw candidate is emitted as is (measurement runs).
    bool enforce_guard = true;
    kg::KnowledgeIndex const * index = nullptr;
    /// Task creation backend; without one exercises come from the offline templates.
    llm::BackendHandle task_llm;
    std::string task_model;
    memory::StudentProfile const * profile = nullptr;
    std::string default_topic = "algebra";
    llm::RetryPolicy retry;
    memory::Millis now = 0;
};

struct ToolEvent
{
    std::string name;
    nlohmann::json arguments;
    std::string observation;
    bool error = false;
};

struct TurnResult
{
    std::string reply;
    /// The model's reply before enforcement, and its verdict.
    std::string raw_candidate;
    GuardVerdict raw_verdict;
    std::vector<ToolEvent> tool_events;
    memory::MemoryDirectives directives;
    std::optional<memory::GradedStep> graded;
    std::optional<std::string> plot_svg;
    std::optional<tasks::Exercise> task;
    /// Level the reply was produced at.
    int hint_level = 0;
    int llm_calls = 0;
    int regenerations = 0;
    bool redacted = false;
    bool fallback = false;
    bool solved = false;
};

/// One tutoring turn: grade any answer in `student_msg`, run the tool loop,
/// enforce the guard and route memory directives into the working memory.
/// Throws PreconditionError when the session is closed.
TurnResult run_turn(TutorTurnState & state, std::string const & student_msg, TutorDeps const & deps);

inline constexpr char const * gateway_fallback_prefix = "Let me ask this differently. ";

/// Stable text form of the transcript.
std::string render_transcript(TutorTurnState const & state);

nlohmann::json to_json(TurnResult const & r);

} // namespace mtutor::tutor
