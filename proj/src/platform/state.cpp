#include "mtutor/platform/state.hpp"

namespace mtutor::platform {

using json = nlohmann::json;

std::string to_string(SessionStatus s)
{
    return s == SessionStatus::active ? "active" : "closed";
}

json to_json(tutor::TutorTurnState const & s)
{
    json transcript = json::array();
    for (auto const & x : s.transcript)
        transcript.push_back({{"student", x.student}, {"tutor", x.tutor}});
    json j{{"wm", memory::to_json(s.wm)}, {"transcript", transcript}, {"reprompt", s.reprompt}};
    if (s.active_problem)
        j["active_problem"] = {{"exercise", tasks::to_json(s.active_problem->exercise)},
                               {"attempts", s.active_problem->attempts},
                               {"hint_level", s.active_problem->hint_level},
                               {"turns", s.active_problem->turns}};
    else
        j["active_problem"] = nullptr;
    return j;
}

tutor::TutorTurnState turn_state_from_json(json const & j)
{
    tutor::TutorTurnState s;
    s.wm = memory::session_from_json(j.at("wm"));
    for (auto const & x : j.at("transcript"))
        s.transcript.push_back({x.at("student").get<std::string>(), x.at("tutor").get<std::string>()});
    s.reprompt = j.value("reprompt", false);
    if (auto it = j.find("active_problem"); it != j.end() && !it->is_null()) {
        tutor::ActiveProblem p;
        p.exercise = tasks::exercise_from_json(it->at("exercise"));
        p.attempts = it->at("attempts").get<int>();
        p.hint_level = it->at("hint_level").get<int>();
        p.turns = it->at("turns").get<int>();
        s.active_problem = std::move(p);
    }
    return s;
}

json to_json(SessionState const & s)
{
    return {{"session_id", s.session_id},
            {"student_id", s.student_id},
            {"status", to_string(s.status)},
            {"created_at", s.created_at},
            {"closed_at", s.closed_at},
            {"turn", to_json(s.turn)}};
}

SessionState session_state_from_json(json const & j)
{
    SessionState s;
    s.session_id = j.at("session_id").get<std::string>();
    s.student_id = j.at("student_id").get<std::string>();
    s.status = j.at("status").get<std::string>() == "closed" ? SessionStatus::closed : SessionStatus::active;
    s.created_at = j.at("created_at").get<Millis>();
    s.closed_at = j.at("closed_at").get<Millis>();
    s.turn = turn_state_from_json(j.at("turn"));
    return s;
}

json to_json(TaskState const & s)
{
    return {{"exercise", tasks::to_json(s.exercise)}, {"gradings", s.gradings}, {"last_result", s.last_result}};
}

TaskState task_state_from_json(json const & j)
{
    return {tasks::exercise_from_json(j.at("exercise")), j.at("gradings").get<int>(),
            j.at("last_result").get<std::string>()};
}

namespace {

[[noreturn]] void unknown(EventRecord const & e)
{
    throw CorruptEvent("unknown " + to_string(e.stream) + " event kind \"" + e.kind + "\"", e.seq, 0);
}

} // namespace

memory::StudentProfile apply_event(memory::StudentProfile state, EventRecord const & e)
{
    if (e.kind == events::profile_created)
        return memory::profile_from_json(e.payload);
    if (e.kind == events::profile_observation)
        return memory::apply_observation(std::move(state), memory::observation_from_json(e.payload));
    if (e.kind == events::profile_session_ended)
        return memory::end_session(memory::session_from_json(e.payload.at("wm")), std::move(state), e.timestamp);
    unknown(e);
}

SessionState apply_event(SessionState state, EventRecord const & e)
{
    if (e.kind == events::session_opened) {
        SessionState s;
        s.session_id = e.stream_id;
        s.student_id = e.payload.at("student_id").get<std::string>();
        s.created_at = e.timestamp;
        s.turn = tutor::start_session(s.session_id, s.student_id);
        return s;
    }
    if (e.kind == events::session_turn) {
        auto & t = state.turn;
        t.wm = memory::session_from_json(e.payload.at("wm"));
        t.transcript.push_back({e.payload.at("student").get<std::string>(), e.payload.at("tutor").get<std::string>()});
        t.reprompt = e.payload.value("reprompt", false);
        auto const & p = e.payload.at("active_problem");
        if (p.is_null()) {
            t.active_problem.reset();
        } else {
            tutor::ActiveProblem ap;
            ap.exercise = tasks::exercise_from_json(p.at("exercise"));
            ap.attempts = p.at("attempts").get<int>();
            ap.hint_level = p.at("hint_level").get<int>();
            ap.turns = p.at("turns").get<int>();
            t.active_problem = std::move(ap);
        }
        return state;
    }
    if (e.kind == events::session_closed) {
        state.status = SessionStatus::closed;
        state.closed_at = e.timestamp;
        state.turn.wm.closed = true;
        return state;
    }
    unknown(e);
}

course::CourseDag apply_event(course::CourseDag state, EventRecord const & e)
{
    if (e.kind == events::course_created)
        return course::dag_from_json(e.payload);
    if (e.kind == events::course_node_started)
        return course::mark_started(std::move(state), e.payload.at("node_id").get<std::string>());
    if (e.kind == events::course_node_completed)
        return course::mark_completed(std::move(state), e.payload.at("node_id").get<std::string>());
    unknown(e);
}

TaskState apply_event(TaskState state, EventRecord const & e)
{
    if (e.kind == events::task_created)
        return {tasks::exercise_from_json(e.payload), 0, {}};
    if (e.kind == events::task_graded) {
        ++state.gradings;
        state.last_result = e.payload.at("result").get<std::string>();
        return state;
    }
    unknown(e);
}

} // namespace mtutor::platform
