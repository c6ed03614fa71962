#pragma once

#include "mtutor/course/dag.hpp"

#include <string>

namespace mtutor::math {

/// Graphviz DOT for a course. Nodes are emitted in node_id order and filled
/// by status; edges point from prerequisite to dependent.
std::string draw_course_graph(course::CourseDag const & dag);

/// Fill colour used for `status`.
char const * status_color(course::NodeStatus status);

} // namespace mtutor::math
