#pragma once

#include "mtutor/course/course.hpp"
#include "mtutor/memory/memory.hpp"
#include "mtutor/platform/event_store.hpp"
#include "mtutor/tasks/tasks.hpp"
#include "mtutor/tutor/tutor.hpp"

#include <iostream>

namespace mtutor::platform {

enum class SessionStatus { active, closed };

std::string to_string(SessionStatus s);

struct SessionState
{
    std::string session_id;
    std::string student_id;
    SessionStatus status = SessionStatus::active;
    Millis created_at = 0;
    Millis closed_at = 0;
    tutor::TutorTurnState turn;
};

struct TaskState
{
    tasks::Exercise exercise;
    int gradings = 0;
    /// Result of the most recent grading, if any.
    std::string last_result;
};

nlohmann::json to_json(tutor::TutorTurnState const & s);
tutor::TutorTurnState turn_state_from_json(nlohmann::json const & j);

nlohmann::json to_json(SessionState const & s);
SessionState session_state_from_json(nlohmann::json const & j);

nlohmann::json to_json(TaskState const & s);
TaskState task_state_from_json(nlohmann::json const & j);

/// Event kinds per stream.
namespace events {
inline constexpr char const * profile_created = "created";
inline constexpr char const * profile_observation = "observation";
inline constexpr char const * profile_session_ended = "session_ended";
inline constexpr char const * session_opened = "opened";
inline constexpr char const * session_turn = "turn";
inline constexpr char const * session_closed = "closed";
inline constexpr char const * course_created = "created";
inline constexpr char const * course_node_started = "node_started";
inline constexpr char const * course_node_completed = "node_completed";
inline constexpr char const * task_created = "created";
inline constexpr char const * task_graded = "graded";
} // namespace events

/// One step of each left fold. Unknown kinds throw CorruptEvent.
memory::StudentProfile apply_event(memory::StudentProfile state, EventRecord const & e);
SessionState apply_event(SessionState state, EventRecord const & e);
course::CourseDag apply_event(course::CourseDag state, EventRecord const & e);
TaskState apply_event(TaskState state, EventRecord const & e);

inline nlohmann::json encode_state(memory::StudentProfile const & s) { return memory::to_json(s); }
inline nlohmann::json encode_state(SessionState const & s) { return to_json(s); }
inline nlohmann::json encode_state(course::CourseDag const & s) { return course::to_json(s); }
inline nlohmann::json encode_state(TaskState const & s) { return to_json(s); }

template <class State>
State decode_state(nlohmann::json const & j);

template <>
inline memory::StudentProfile decode_state(nlohmann::json const & j)
{
    return memory::profile_from_json(j);
}
template <>
inline SessionState decode_state(nlohmann::json const & j)
{
    return session_state_from_json(j);
}
template <>
inline course::CourseDag decode_state(nlohmann::json const & j)
{
    return course::dag_from_json(j);
}
template <>
inline TaskState decode_state(nlohmann::json const & j)
{
    return task_state_from_json(j);
}

/// Current state of a stream: the snapshot (or a default state) with the
/// tail folded in. Empty when the stream does not exist.
template <class State>
std::optional<State> replay(EventStore const & store, StreamKind stream, std::string const & id)
{
    if (!store.exists(stream, id))
        return std::nullopt;
    StreamTail tail = store.load(stream, id);
    if (!tail.snapshot && tail.events.empty())
        return std::nullopt;
    State state = tail.snapshot ? decode_state<State>(*tail.snapshot) : State{};
    for (auto const & e : tail.events)
        state = apply_event(std::move(state), e);
    return state;
}

/// Append one event and return the state with it folded in. Snapshots are
/// written on cadence; a failed snapshot only costs replay time, so it is
/// reported and otherwise ignored.
template <class State>
State commit(EventStore & store, StreamKind stream, std::string const & id, std::string kind,
             nlohmann::json payload, Millis ts, State current)
{
    EventRecord const e = store.append(stream, id, std::move(kind), std::move(payload), ts);
    State next = apply_event(std::move(current), e);
    if (store.snapshot_due(e.seq)) {
        try {
            store.write_snapshot(stream, id, e.seq, encode_state(next));
        } catch (std::exception const & ex) {
            std::cerr << "snapshot of " << to_string(stream) << "/" << id << " failed: " << ex.what() << "\n";
        }
    }
    return next;
}

} // namespace mtutor::platform
