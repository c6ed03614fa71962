#include "mtutor/platform/service.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"
#include "mtutor/math/course_graph.hpp"

#include <chrono>
#include <random>

namespace mtutor::platform {

using json = nlohmann::json;

struct Service::SessionSlot
{
    /// Held for the whole of a turn or close; try_lock failure means 409.
    std::mutex busy;
    SessionState state;
};

namespace {

ApiError bad_request(std::string const & what)
{
    return ApiError(400, what);
}

ApiError not_found(std::string const & what)
{
    return ApiError(404, what);
}

std::string required_string(json const & body, char const * key)
{
    if (!body.is_object() || !body.contains(key) || !body[key].is_string())
        throw bad_request(std::string("missing string field \"") + key + "\"");
    return body[key].get<std::string>();
}

void check_path_id(std::string const & id, char const * what)
{
    if (!valid_stream_id(id))
        throw not_found(std::string("unknown ") + what + " " + id);
}

json turn_payload(std::string const & student, std::string const & reply, tutor::TutorTurnState const & t)
{
    json j = to_json(t);
    j.erase("transcript");
    j["student"] = student;
    j["tutor"] = reply;
    return j;
}

} // namespace

course::CourseRequest course_request_from_json(json const & j)
{
    course::CourseRequest req;
    req.student_id = required_string(j, "student_id");
    req.goal = required_string(j, "goal");
    try {
        req.topic_hints = j.value("topic_hints", std::vector<std::string>{});
        req.max_nodes = j.value("max_nodes", req.max_nodes);
    } catch (json::exception const & e) {
        throw bad_request(std::string("malformed course request: ") + e.what());
    }
    return req;
}

tasks::TaskSpec task_spec_from_json(json const & j)
{
    tasks::TaskSpec spec;
    spec.topic = required_string(j, "topic");
    try {
        spec.difficulty = j.value("difficulty", spec.difficulty);
        if (j.contains("grounding") && !j["grounding"].is_null())
            spec.grounding = j["grounding"].get<std::vector<std::string>>();
    } catch (json::exception const & e) {
        throw bad_request(std::string("malformed task spec: ") + e.what());
    }
    try {
        tasks::validate(spec);
    } catch (PreconditionError const & e) {
        throw bad_request(e.what());
    }
    return spec;
}

Service::Service(std::shared_ptr<EventStore> store, ServiceDeps deps) : store_(std::move(store)), deps_(std::move(deps))
{
    if (!store_)
        throw PreconditionError("service needs an event store");
}

Service::~Service() = default;

Millis Service::now() const
{
    if (deps_.clock)
        return deps_.clock();
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string Service::fresh_id(std::string const & prefix)
{
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::string const seed = prefix + std::to_string(now()) + ":" + std::to_string(counter_++) + ":"
                             + std::to_string(rng());
    return prefix + sha256_hex(seed).substr(0, 12);
}

memory::StudentProfile Service::load_profile(std::string const & student_id)
{
    check_path_id(student_id, "student");
    auto p = replay<memory::StudentProfile>(*store_, StreamKind::profile, student_id);
    if (!p)
        throw not_found("unknown student " + student_id);
    return std::move(*p);
}

json Service::create_student(json const & body)
{
    if (!body.is_null() && !body.is_object())
        throw bad_request("expected a JSON object");
    memory::StudentProfile p;
    p.student_id = body.is_object() && body.contains("student_id") ? required_string(body, "student_id")
                                                                    : fresh_id("stu-");
    if (!valid_stream_id(p.student_id))
        throw bad_request("student_id may only contain letters, digits, '.', '_' and '-'");
    try {
        if (body.is_object()) {
            p.goals = body.value("goals", std::vector<std::string>{});
            for (auto const & s : body.value("learning_style", std::vector<std::string>{}))
                p.learning_style.insert(memory::learning_style_from_string(s));
        }
    } catch (json::exception const & e) {
        throw bad_request(std::string("malformed student: ") + e.what());
    } catch (PreconditionError const & e) {
        throw bad_request(e.what());
    }
    p.created_at = p.updated_at = now();

    std::lock_guard lock(profiles_mutex_);
    if (store_->exists(StreamKind::profile, p.student_id))
        throw ApiError(409, "student " + p.student_id + " already exists");
    auto const state = commit(*store_, StreamKind::profile, p.student_id, events::profile_created, memory::to_json(p),
                              p.created_at, memory::StudentProfile{});
    return memory::to_json(state);
}

json Service::get_profile(std::string const & student_id)
{
    std::lock_guard lock(profiles_mutex_);
    return memory::to_json(load_profile(student_id));
}

std::shared_ptr<Service::SessionSlot> Service::session_slot(std::string const & session_id)
{
    check_path_id(session_id, "session");
    std::lock_guard lock(sessions_mutex_);
    if (auto it = sessions_.find(session_id); it != sessions_.end())
        return it->second;
    auto state = replay<SessionState>(*store_, StreamKind::session, session_id);
    if (!state)
        throw not_found("unknown session " + session_id);
    auto slot = std::make_shared<SessionSlot>();
    slot->state = std::move(*state);
    sessions_.emplace(session_id, slot);
    return slot;
}

json Service::open_session(json const & body)
{
    std::string const student_id = required_string(body, "student_id");
    {
        std::lock_guard lock(profiles_mutex_);
        load_profile(student_id);
    }
    std::string const id = fresh_id("sess-");
    auto slot = std::make_shared<SessionSlot>();
    slot->state = commit(*store_, StreamKind::session, id, events::session_opened, {{"student_id", student_id}}, now(),
                         SessionState{});
    json out{{"session_id", id},
             {"student_id", student_id},
             {"state", to_string(slot->state.status)},
             {"created_at", slot->state.created_at}};
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(id, std::move(slot));
    return out;
}

json Service::post_message(std::string const & session_id, json const & body)
{
    std::string const text = required_string(body, "text");
    if (text::trim(text).empty())
        throw bad_request("message text is empty");
    auto slot = session_slot(session_id);
    std::unique_lock busy(slot->busy, std::try_to_lock);
    if (!busy.owns_lock())
        throw ApiError(409, "a turn is already in flight for session " + session_id);
    if (slot->state.status == SessionStatus::closed)
        throw not_found("session " + session_id + " is closed");

    memory::StudentProfile profile;
    {
        std::lock_guard lock(profiles_mutex_);
        profile = load_profile(slot->state.student_id);
    }
    tutor::TutorDeps td;
    td.llm = deps_.tutor_llm;
    td.model = deps_.tutor_model;
    td.enforce_guard = deps_.guard_enforcement;
    td.index = deps_.index && deps_.index->built() ? deps_.index.get() : nullptr;
    td.task_llm = deps_.task_llm;
    td.task_model = deps_.task_model;
    td.profile = &profile;
    td.retry = deps_.retry;
    td.now = now();

    // Work on a copy so a failed turn leaves the session untouched.
    tutor::TutorTurnState working = slot->state.turn;
    tutor::TurnResult result;
    try {
        result = tutor::run_turn(working, text, td);
    } catch (llm::ScriptMiss const & e) {
        throw ApiError(502, std::string("tutor model gave no response: ") + e.what());
    } catch (llm::TransportError const & e) {
        throw ApiError(502, std::string("tutor model unreachable: ") + e.what());
    } catch (llm::ProtocolError const & e) {
        throw ApiError(502, std::string("tutor model reply unusable: ") + e.what());
    }

    if (result.task) {
        std::lock_guard lock(tasks_mutex_);
        if (!store_->exists(StreamKind::task, result.task->exercise_id))
            commit(*store_, StreamKind::task, result.task->exercise_id, events::task_created,
                   tasks::to_json(*result.task), td.now, TaskState{});
    }
    slot->state = commit(*store_, StreamKind::session, session_id, events::session_turn,
                         turn_payload(text, result.reply, working), td.now, std::move(slot->state));

    json j = tutor::to_json(result);
    json out{{"reply", j["reply"]}, {"tool_events", j["tool_events"]}, {"hint_level", j["hint_level"]}};
    if (j.contains("plot"))
        out["plot"] = j["plot"];
    if (j.contains("task"))
        out["task"] = j["task"];
    if (j.contains("graded"))
        out["graded"] = j["graded"];
    return out;
}

json Service::close_session(std::string const & session_id)
{
    auto slot = session_slot(session_id);
    std::unique_lock busy(slot->busy, std::try_to_lock);
    if (!busy.owns_lock())
        throw ApiError(409, "a turn is in flight for session " + session_id);
    if (slot->state.status == SessionStatus::closed)
        throw not_found("session " + session_id + " is already closed");

    Millis const t = now();
    std::lock_guard lock(profiles_mutex_);
    memory::StudentProfile profile = load_profile(slot->state.student_id);
    slot->state = commit(*store_, StreamKind::session, session_id, events::session_closed, json::object(), t,
                         std::move(slot->state));
    std::string const student_id = profile.student_id;
    profile = commit(*store_, StreamKind::profile, student_id, events::profile_session_ended,
                     {{"wm", memory::to_json(slot->state.turn.wm)}}, t, std::move(profile));
    return {{"session_id", session_id},
            {"student_id", slot->state.student_id},
            {"state", to_string(slot->state.status)},
            {"closed_at", slot->state.closed_at},
            {"turns", slot->state.turn.transcript.size()}};
}

namespace {

class StoreAdapter final : public course::CourseStore
{
public:
    StoreAdapter(EventStore & store, Millis at) : store_(store), at_(at) {}

    void save_course(course::CourseDag const & dag) override
    {
        saved = commit(store_, StreamKind::course, dag.course_id, events::course_created, course::to_json(dag), at_,
                       course::CourseDag{});
    }

    course::CourseDag saved;

private:
    EventStore & store_;
    Millis at_;
};

} // namespace

json Service::create_course(json const & body)
{
    course::CourseRequest const req = course_request_from_json(body);
    try {
        course::validate(req);
    } catch (PreconditionError const & e) {
        throw bad_request(e.what());
    }
    memory::StudentProfile profile;
    {
        std::lock_guard lock(profiles_mutex_);
        profile = load_profile(req.student_id);
    }
    if (!deps_.index || !deps_.index->built())
        throw ApiError(503, "no knowledge index is loaded; run ingest first");

    Millis const t = now();
    StoreAdapter adapter(*store_, t);
    course::PlannerConfig config{deps_.planner_llm, deps_.planner_model, &adapter};
    std::lock_guard lock(courses_mutex_);
    try {
        course::create_course(req, *deps_.index, profile, config, t);
    } catch (course::EmptyDossier const & e) {
        throw ApiError(422, e.what());
    } catch (llm::TransportError const & e) {
        throw ApiError(502, std::string("planner model unreachable: ") + e.what());
    } catch (llm::ProtocolError const & e) {
        throw ApiError(502, std::string("planner model reply unusable: ") + e.what());
    } catch (llm::ScriptMiss const & e) {
        throw ApiError(502, std::string("planner model gave no response: ") + e.what());
    }
    return course::to_json(adapter.saved);
}

json Service::get_course(std::string const & course_id)
{
    check_path_id(course_id, "course");
    std::lock_guard lock(courses_mutex_);
    auto dag = replay<course::CourseDag>(*store_, StreamKind::course, course_id);
    if (!dag)
        throw not_found("unknown course " + course_id);
    return course::to_json(*dag);
}

std::string Service::course_dot(std::string const & course_id)
{
    return math::draw_course_graph(course::dag_from_json(get_course(course_id)));
}

json Service::complete_node(std::string const & course_id, std::string const & node_id)
{
    check_path_id(course_id, "course");
    std::lock_guard lock(courses_mutex_);
    auto dag = replay<course::CourseDag>(*store_, StreamKind::course, course_id);
    if (!dag)
        throw not_found("unknown course " + course_id);
    bool const known = std::any_of(dag->nodes.begin(), dag->nodes.end(),
                                   [&](course::CourseNode const & n) { return n.node_id == node_id; });
    if (!known)
        throw not_found("course " + course_id + " has no node " + node_id);
    // Validate before appending so a refused transition leaves no event.
    try {
        course::mark_completed(*dag, node_id);
    } catch (course::InvalidTransition const & e) {
        throw ApiError(409, e.what());
    }
    auto const next = commit(*store_, StreamKind::course, course_id, events::course_node_completed,
                             {{"node_id", node_id}}, now(), std::move(*dag));
    return course::to_json(next);
}

json Service::create_task(json const & body, bool educator_view)
{
    if (educator_view && !deps_.educator_views)
        throw ApiError(403, "educator views are disabled");
    tasks::TaskSpec const spec = task_spec_from_json(body);
    tasks::Exercise ex;
    if (deps_.task_llm) {
        tasks::GenerateOptions opts;
        opts.model = deps_.task_model;
        opts.index = deps_.index && deps_.index->built() ? deps_.index.get() : nullptr;
        try {
            ex = tasks::generate(spec, deps_.task_llm, opts);
        } catch (tasks::GenerationExhausted const & e) {
            throw ApiError(502, e.what());
        } catch (llm::TransportError const & e) {
            throw ApiError(502, std::string("task model unreachable: ") + e.what());
        } catch (llm::ProtocolError const & e) {
            throw ApiError(502, std::string("task model reply unusable: ") + e.what());
        } catch (llm::ScriptMiss const & e) {
            throw ApiError(502, std::string("task model gave no response: ") + e.what());
        }
    } else {
        ex = tasks::generate_offline(spec, static_cast<std::uint64_t>(now()) ^ (counter_++ << 32));
    }

    std::lock_guard lock(tasks_mutex_);
    if (!store_->exists(StreamKind::task, ex.exercise_id))
        commit(*store_, StreamKind::task, ex.exercise_id, events::task_created, tasks::to_json(ex), now(),
               TaskState{});
    return educator_view ? tasks::to_json(ex) : tasks::student_view(ex);
}

json Service::grade_task(std::string const & task_id, json const & body)
{
    std::string const answer = required_string(body, "answer");
    check_path_id(task_id, "task");
    std::lock_guard lock(tasks_mutex_);
    auto state = replay<TaskState>(*store_, StreamKind::task, task_id);
    if (!state)
        throw not_found("unknown task " + task_id);
    if (state->exercise.verification == tasks::Verification::failed)
        throw ApiError(409, "task " + task_id + " failed verification and cannot be graded");
    tasks::GradeResult const g = tasks::grade_response(state->exercise, answer);
    std::string const result = tasks::to_string(g.grade);
    commit(*store_, StreamKind::task, task_id, events::task_graded,
           {{"answer", answer}, {"result", result}, {"tags", g.tags}}, now(), std::move(*state));
    return {{"task_id", task_id}, {"result", result}, {"feedback_tags", g.tags}};
}

} // namespace mtutor::platform
