#include "mtutor/math/course_graph.hpp"

#include <algorithm>

namespace mtutor::math {

namespace {

std::string quoted(std::string const & s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out += c;
    }
    return out + "\"";
}

} // namespace

char const * status_color(course::NodeStatus status)
{
    switch (status) {
    case course::NodeStatus::completed: return "#81c784";
    case course::NodeStatus::available: return "#64b5f6";
    case course::NodeStatus::in_progress: return "#ffd54f";
    case course::NodeStatus::locked: return "#e0e0e0";
    }
    return "#ffffff";
}

std::string draw_course_graph(course::CourseDag const & dag)
{
    std::string out = "digraph course {\n";
    if (dag.nodes.empty())
        return out + "}\n";
    out += "  rankdir=TB;\n";
    out += "  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n";

    std::vector<course::CourseNode const *> nodes;
    for (auto const & n : dag.nodes)
        nodes.push_back(&n);
    std::sort(nodes.begin(), nodes.end(), [](auto a, auto b) { return a->node_id < b->node_id; });
    for (auto const * n : nodes)
        out += "  " + quoted(n->node_id) + " [label=" + quoted(n->topic) + ", fillcolor=\"" +
               status_color(n->status) + "\", tooltip=\"" + course::to_string(n->status) + "\"];\n";

    std::vector<course::Edge> edges = dag.edges;
    std::sort(edges.begin(), edges.end());
    for (auto const & [from, to] : edges)
        out += "  " + quoted(from) + " -> " + quoted(to) + ";\n";
    return out + "}\n";
}

} // namespace mtutor::math
