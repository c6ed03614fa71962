#pragma once

#include "mtutor/common/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mtutor::memory {

/// Milliseconds since the Unix epoch. Callers pass clocks explicitly so
/// every operation here stays deterministic.
using Millis = std::int64_t;

inline constexpr double mastery_alpha = 0.3;
inline constexpr double mastery_prior = 0.5;
inline constexpr std::size_t recent_turn_window = 12;
inline constexpr std::size_t history_limit = 20;
inline constexpr std::size_t summary_chars = 200;
inline constexpr int max_hint_level = 3;

class SessionMismatch : public Error
{
public:
    using Error::Error;
};

class SessionStillActive : public Error
{
public:
    using Error::Error;
};

enum class LearningStyle { visual, verbal, example_driven, formal };

std::string to_string(LearningStyle s);
LearningStyle learning_style_from_string(std::string const & s);

struct MisconceptionRecord
{
    std::string tag;
    std::string description;
    int evidence_count = 1;
    Millis last_seen = 0;
    /// Session in which the tag was last observed.
    std::string last_session;

    bool operator==(MisconceptionRecord const &) const = default;
};

struct SessionRecord
{
    std::string session_id;
    std::string summary;
    Millis ended_at = 0;

    bool operator==(SessionRecord const &) const = default;
};

struct StudentProfile
{
    std::string student_id;
    std::map<std::string, double> mastery;
    std::vector<MisconceptionRecord> misconceptions;
    std::set<LearningStyle> learning_style;
    std::vector<std::string> goals;
    std::vector<SessionRecord> history;
    Millis created_at = 0;
    Millis updated_at = 0;

    bool operator==(StudentProfile const &) const = default;

    [[nodiscard]] double mastery_of(std::string const & topic) const;
    [[nodiscard]] MisconceptionRecord const * misconception(std::string const & tag) const;
};

enum class ObservationKind { mastery_evidence, misconception_signal, preference_signal, goal_stated };

std::string to_string(ObservationKind k);

/// For misconception_signal the payload is the tag; for preference_signal it
/// is a learning-style name; for goal_stated it is the goal text.
struct Observation
{
    ObservationKind kind = ObservationKind::mastery_evidence;
    std::optional<std::string> topic;
    std::optional<double> score;
    std::string payload;
    std::string detail;
    Millis at = 0;
    std::string session_id;

    bool operator==(Observation const &) const = default;
};

/// Throws PreconditionError when `obs` breaks the observation invariants.
void validate(Observation const & obs);

struct ProblemState
{
    std::string exercise_id;
    std::string canonical_answer;
    int attempts = 0;
    int hint_level = 0;

    bool operator==(ProblemState const &) const = default;
};

struct SessionContext
{
    std::string session_id;
    std::string student_id;
    std::optional<std::string> current_topic;
    std::optional<ProblemState> problem_state;
    std::deque<std::string> recent_turns;
    std::vector<std::string> scratch_facts;
    /// LTM writes routed by the dispatcher and held until end_session.
    std::vector<Observation> pending;
    bool closed = false;

    bool operator==(SessionContext const &) const = default;
};

struct GradedStep
{
    std::string topic;
    bool correct = false;
    bool final_answer = false;
    std::optional<std::string> error_tag;
    std::string error_description;
};

struct TurnSummary
{
    std::string session_id;
    int turn_index = 0;
    std::string student_text;
    std::string tutor_text;
    std::string summary;
    std::optional<GradedStep> graded;
    Millis at = 0;
};

/// Deterministic offline summary: the first 200 characters of the exchange.
std::string summarize_turn(std::string const & student_text, std::string const & tutor_text);

enum class PatchKind { append_turn, set_topic, add_fact };

struct WmPatch
{
    PatchKind kind = PatchKind::append_turn;
    std::string value;

    bool operator==(WmPatch const &) const = default;
};

struct ContextQuery
{
    std::string topic;

    bool operator==(ContextQuery const &) const = default;
};

struct MemoryDirectives
{
    std::vector<Observation> ltm_writes;
    std::vector<WmPatch> wm_updates;
    std::vector<ContextQuery> context_reads;

    bool operator==(MemoryDirectives const &) const = default;
};

MemoryDirectives dispatch(TurnSummary const & turn, SessionContext const & wm, StudentProfile const & profile);

/// Apply the working-memory patches and queue the LTM writes as pending.
void apply_directives(SessionContext & wm, MemoryDirectives const & directives);

StudentProfile apply_observation(StudentProfile profile, Observation const & obs);

/// Start a problem or raise its hint level. The level never decreases while
/// the exercise id stays the same.
void set_problem(SessionContext & wm, std::string exercise_id, std::string canonical_answer);
void raise_hint(SessionContext & wm, int level);
void record_attempt(SessionContext & wm);

struct PersonalizationContext
{
    double mastery_level = mastery_prior;
    std::vector<MisconceptionRecord> active_misconceptions;
    std::vector<std::string> style_hints;
    std::vector<std::string> open_goals;

    bool operator==(PersonalizationContext const &) const = default;
};

PersonalizationContext retrieve_context(StudentProfile const & profile, SessionContext const & wm,
                                        std::string const & topic);

/// Promote pending observations and append a session record.
StudentProfile end_session(SessionContext const & wm, StudentProfile profile, Millis now);

nlohmann::json to_json(StudentProfile const & p);
StudentProfile profile_from_json(nlohmann::json const & j);

nlohmann::json to_json(SessionContext const & wm);
SessionContext session_from_json(nlohmann::json const & j);

nlohmann::json to_json(Observation const & o);
Observation observation_from_json(nlohmann::json const & j);

nlohmann::json to_json(MemoryDirectives const & d);

} // namespace mtutor::memory
