#pragma once

#include "mtutor/tasks/task_spec.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mtutor::course {

enum class NodeStatus { locked, available, in_progress, completed };

inline char const * to_string(NodeStatus s)
{
    switch (s) {
    case NodeStatus::locked: return "locked";
    case NodeStatus::available: return "available";
    case NodeStatus::in_progress: return "in_progress";
    case NodeStatus::completed: return "completed";
    }
    return "?";
}

struct CourseNode
{
    std::string node_id;
    std::string topic;
    std::vector<std::string> objectives;
    std::vector<std::string> resources;
    std::vector<tasks::TaskSpec> task_templates;
    NodeStatus status = NodeStatus::locked;

    bool operator==(CourseNode const &) const = default;
};

/// (prerequisite node_id, dependent node_id)
using Edge = std::pair<std::string, std::string>;

struct CourseDag
{
    std::string course_id;
    std::string student_id;
    std::vector<CourseNode> nodes;
    std::vector<Edge> edges;
    std::int64_t created_at = 0;

    bool operator==(CourseDag const &) const = default;
};

} // namespace mtutor::course
