#pragma once

#include "mtutor/platform/state.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>

namespace mtutor::platform {

/// Carries the HTTP status the API layer answers with.
class ApiError : public Error
{
public:
    ApiError(int status, std::string const & what) : Error(what), status_(status) {}
    [[nodiscard]] int status() const { return status_; }

private:
    int status_;
};

struct ServiceDeps
{
    llm::BackendHandle tutor_llm;
    std::string tutor_model;
    /// Without a task backend exercises come from the offline templates.
    llm::BackendHandle task_llm;
    std::string task_model;
    llm::BackendHandle planner_llm;
    std::string planner_model;
    /// Shared read-only by every request. Course creation needs one.
    std::shared_ptr<kg::KnowledgeIndex const> index;
    bool guard_enforcement = true;
    /// Allow `?view=educator` to return exercises with their answers.
    bool educator_views = false;
    llm::RetryPolicy retry;
    /// Defaults to the system clock.
    std::function<Millis()> clock;
};

/// The operations behind the HTTP API. Every method returns the response
/// document or throws ApiError; other exceptions are server faults.
///
/// Sessions are single-writer: a message or close request that finds a
/// turn already running for the session is refused with 409 rather than
/// queued, so turns and their memory writes never interleave.
class Service
{
public:
    Service(std::shared_ptr<EventStore> store, ServiceDeps deps);
    ~Service();

    /// Body (all optional): student_id, goals, learning_style.
    nlohmann::json create_student(nlohmann::json const & body);
    nlohmann::json get_profile(std::string const & student_id);

    /// Body: student_id.
    nlohmann::json open_session(nlohmann::json const & body);
    /// Body: text. Returns reply, tool_events and, when present, plot and task.
    nlohmann::json post_message(std::string const & session_id, nlohmann::json const & body);
    nlohmann::json close_session(std::string const & session_id);

    /// Body: student_id, goal, topic_hints, max_nodes.
    nlohmann::json create_course(nlohmann::json const & body);
    nlohmann::json get_course(std::string const & course_id);
    std::string course_dot(std::string const & course_id);
    nlohmann::json complete_node(std::string const & course_id, std::string const & node_id);

    /// Body: topic, difficulty, grounding. The student view leaves out the
    /// answer and the worked steps.
    nlohmann::json create_task(nlohmann::json const & body, bool educator_view = false);
    /// Body: answer.
    nlohmann::json grade_task(std::string const & task_id, nlohmann::json const & body);

    [[nodiscard]] EventStore & store() { return *store_; }

private:
    struct SessionSlot;

    Millis now() const;
    std::shared_ptr<SessionSlot> session_slot(std::string const & session_id);
    memory::StudentProfile load_profile(std::string const & student_id);
    std::string fresh_id(std::string const & prefix);

    std::shared_ptr<EventStore> store_;
    ServiceDeps deps_;

    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
    /// Serializes read-modify-append on profile, course and task streams.
    std::mutex profiles_mutex_;
    std::mutex courses_mutex_;
    std::mutex tasks_mutex_;
    std::atomic<std::uint64_t> counter_{0};
};

/// Parse a course request body. Throws ApiError(400).
course::CourseRequest course_request_from_json(nlohmann::json const & j);
/// Parse a task spec body. Throws ApiError(400).
tasks::TaskSpec task_spec_from_json(nlohmann::json const & j);

} // namespace mtutor::platform
