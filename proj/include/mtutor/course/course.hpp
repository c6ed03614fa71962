#pragma once

#include "mtutor/course/dag.hpp"
#include "mtutor/kg/index.hpp"
#include "mtutor/llm/gateway.hpp"
#include "mtutor/memory/memory.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace mtutor::course {

class CycleError : public Error
{
public:
    explicit CycleError(std::vector<std::string> cycle);
    [[nodiscard]] std::vector<std::string> const & cycle() const { return cycle_; }

private:
    std::vector<std::string> cycle_;
};

class InvalidTransition : public Error
{
public:
    using Error::Error;
};

class EmptyDossier : public Error
{
public:
    using Error::Error;
};

/// Throws CycleError with one witness cycle (first node repeated at the
/// end), or PreconditionError for duplicate ids and dangling edges.
void validate_dag(CourseDag const & dag);

/// Kahn order; among ready nodes the lowest node_id goes first.
std::vector<std::string> topological_order(CourseDag const & dag);

std::vector<std::string> prerequisites_of(CourseDag const & dag, std::string const & node_id);

/// Roots become available, everything else locked.
void assign_initial_status(CourseDag & dag);

CourseDag mark_started(CourseDag dag, std::string const & node_id);
CourseDag mark_completed(CourseDag dag, std::string const & node_id);

/// True when every locked/available node is available exactly when all of
/// its prerequisites are completed, and started nodes had theirs completed.
bool status_invariant_holds(CourseDag const & dag);

/// Mastery lookups use the case-folded topic.
std::vector<std::string> next_steps(CourseDag const & dag, memory::StudentProfile const & profile, std::size_t n);

nlohmann::json to_json(CourseDag const & dag);
CourseDag dag_from_json(nlohmann::json const & j);

struct CourseRequest
{
    std::string student_id;
    std::string goal;
    std::vector<std::string> topic_hints;
    std::size_t max_nodes = 12;
};

void validate(CourseRequest const & req);

struct Candidate
{
    std::string name;
    std::string rationale;
    std::vector<std::string> evidence;
    std::optional<std::string> entity_id;
    bool ungrounded = false;

    bool operator==(Candidate const &) const = default;
};

struct TopicDossier
{
    std::vector<Candidate> candidates;
};

inline constexpr double weak_topic_threshold = 0.6;

TopicDossier research_stage(CourseRequest const & req, kg::KnowledgeIndex const & index,
                            memory::StudentProfile const & profile);

struct DraftPlan
{
    /// Topological order.
    std::vector<Candidate> topics;
    /// (prerequisite, dependent) indices into `topics`.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

/// Parse "A -> B" lines; anything else is ignored.
std::vector<std::pair<std::string, std::string>> parse_prerequisite_lines(std::string const & reply);

DraftPlan planning_stage(TopicDossier const & dossier, memory::StudentProfile const & profile,
                         kg::KnowledgeIndex const & index, llm::BackendHandle const & backend,
                         std::string const & model, std::size_t max_nodes);

std::vector<CourseNode> step_handling_stage(DraftPlan const & plan, kg::KnowledgeIndex const & index,
                                            llm::BackendHandle const & backend, std::string const & model);

class CourseStore
{
public:
    virtual ~CourseStore() = default;
    virtual void save_course(CourseDag const & dag) = 0;
};

CourseDag coding_stage(std::vector<CourseNode> nodes, std::vector<Edge> edges, std::string const & student_id,
                       std::int64_t now, CourseStore * store);

struct PlannerConfig
{
    llm::BackendHandle backend;
    std::string model;
    CourseStore * store = nullptr;
};

/// Research, planning, step handling and coding in sequence.
CourseDag create_course(CourseRequest const & req, kg::KnowledgeIndex const & index,
                        memory::StudentProfile const & profile, PlannerConfig const & config, std::int64_t now);

} // namespace mtutor::course
