#include "mtutor/course/course.hpp"

#include "mtutor/common/digest.hpp"
#include "mtutor/common/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <queue>
#include <set>

namespace mtutor::course {

using nlohmann::json;

CycleError::CycleError(std::vector<std::string> cycle)
    : Error("prerequisite cycle: " + text::join(cycle, " -> "))
    , cycle_(std::move(cycle))
{
}

namespace {

struct Index
{
    std::map<std::string, std::size_t> pos;
    std::vector<std::vector<std::size_t>> succ;
    std::vector<std::vector<std::size_t>> pred;
};

Index index_of(CourseDag const & dag)
{
    Index ix;
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
        if (!ix.pos.emplace(dag.nodes[i].node_id, i).second)
            throw PreconditionError("duplicate node id " + dag.nodes[i].node_id);
    ix.succ.resize(dag.nodes.size());
    ix.pred.resize(dag.nodes.size());
    for (auto const & [from, to] : dag.edges) {
        auto a = ix.pos.find(from);
        auto b = ix.pos.find(to);
        if (a == ix.pos.end() || b == ix.pos.end())
            throw PreconditionError("edge " + from + " -> " + to + " names an unknown node");
        ix.succ[a->second].push_back(b->second);
        ix.pred[b->second].push_back(a->second);
    }
    return ix;
}

std::size_t node_pos(CourseDag const & dag, std::string const & node_id)
{
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
        if (dag.nodes[i].node_id == node_id)
            return i;
    throw PreconditionError("no node " + node_id + " in course " + dag.course_id);
}

std::string topic_key(std::string const & topic)
{
    return text::fold_case(text::normalize_whitespace(topic));
}

} // namespace

std::vector<std::string> topological_order(CourseDag const & dag)
{
    Index const ix = index_of(dag);
    std::vector<std::size_t> indeg(dag.nodes.size());
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
        indeg[i] = ix.pred[i].size();
    auto cmp = [&](std::size_t a, std::size_t b) { return dag.nodes[a].node_id > dag.nodes[b].node_id; };
    std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> ready(cmp);
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
        if (indeg[i] == 0)
            ready.push(i);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::size_t const i = ready.top();
        ready.pop();
        order.push_back(dag.nodes[i].node_id);
        for (std::size_t j : ix.succ[i])
            if (--indeg[j] == 0)
                ready.push(j);
    }
    return order;
}

void validate_dag(CourseDag const & dag)
{
    Index const ix = index_of(dag);
    auto const order = topological_order(dag);
    if (order.size() == dag.nodes.size())
        return;

    // Nodes Kahn never released all keep a predecessor among themselves, so
    // walking predecessors from any of them must revisit a node.
    std::set<std::string> const done(order.begin(), order.end());
    std::vector<bool> remaining(dag.nodes.size());
    std::size_t start = dag.nodes.size();
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
        remaining[i] = !done.count(dag.nodes[i].node_id);
        if (remaining[i] && (start == dag.nodes.size() || dag.nodes[i].node_id < dag.nodes[start].node_id))
            start = i;
    }
    std::vector<std::size_t> walk{start};
    std::map<std::size_t, std::size_t> seen{{start, 0}};
    for (;;) {
        std::size_t best = dag.nodes.size();
        for (std::size_t p : ix.pred[walk.back()])
            if (remaining[p] && (best == dag.nodes.size() || dag.nodes[p].node_id < dag.nodes[best].node_id))
                best = p;
        auto hit = seen.find(best);
        if (hit != seen.end()) {
            std::vector<std::string> cycle;
            for (std::size_t k = walk.size(); k-- > hit->second;)
                cycle.push_back(dag.nodes[walk[k]].node_id);
            // Rotate so the cycle starts at its smallest id.
            auto smallest = std::min_element(cycle.begin(), cycle.end());
            std::rotate(cycle.begin(), smallest, cycle.end());
            cycle.push_back(cycle.front());
            throw CycleError(std::move(cycle));
        }
        seen[best] = walk.size();
        walk.push_back(best);
    }
}

std::vector<std::string> prerequisites_of(CourseDag const & dag, std::string const & node_id)
{
    std::vector<std::string> out;
    for (auto const & [from, to] : dag.edges)
        if (to == node_id)
            out.push_back(from);
    std::sort(out.begin(), out.end());
    return out;
}

void assign_initial_status(CourseDag & dag)
{
    Index const ix = index_of(dag);
    for (std::size_t i = 0; i < dag.nodes.size(); ++i)
        dag.nodes[i].status = ix.pred[i].empty() ? NodeStatus::available : NodeStatus::locked;
}

CourseDag mark_started(CourseDag dag, std::string const & node_id)
{
    CourseNode & n = dag.nodes[node_pos(dag, node_id)];
    if (n.status != NodeStatus::available)
        throw InvalidTransition("cannot start " + node_id + " from " + to_string(n.status));
    n.status = NodeStatus::in_progress;
    return dag;
}

CourseDag mark_completed(CourseDag dag, std::string const & node_id)
{
    std::size_t const i = node_pos(dag, node_id);
    CourseNode & n = dag.nodes[i];
    if (n.status != NodeStatus::available && n.status != NodeStatus::in_progress)
        throw InvalidTransition("cannot complete " + node_id + " from " + to_string(n.status));
    n.status = NodeStatus::completed;
    Index const ix = index_of(dag);
    for (std::size_t d : ix.succ[i]) {
        if (dag.nodes[d].status != NodeStatus::locked)
            continue;
        bool const ready = std::all_of(ix.pred[d].begin(), ix.pred[d].end(),
                                       [&](std::size_t p) { return dag.nodes[p].status == NodeStatus::completed; });
        if (ready)
            dag.nodes[d].status = NodeStatus::available;
    }
    return dag;
}

bool status_invariant_holds(CourseDag const & dag)
{
    Index const ix = index_of(dag);
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
        bool const prereqs_done = std::all_of(ix.pred[i].begin(), ix.pred[i].end(), [&](std::size_t p) {
            return dag.nodes[p].status == NodeStatus::completed;
        });
        switch (dag.nodes[i].status) {
        case NodeStatus::locked:
            if (prereqs_done)
                return false;
            break;
        case NodeStatus::available:
        case NodeStatus::in_progress:
        case NodeStatus::completed:
            if (!prereqs_done)
                return false;
            break;
        }
    }
    return true;
}

std::vector<std::string> next_steps(CourseDag const & dag, memory::StudentProfile const & profile, std::size_t n)
{
    auto const order = topological_order(dag);
    std::map<std::string, std::size_t> rank;
    for (std::size_t i = 0; i < order.size(); ++i)
        rank[order[i]] = i;
    struct Option
    {
        double priority;
        std::size_t rank;
        std::string id;
    };
    std::vector<Option> options;
    for (auto const & node : dag.nodes)
        if (node.status == NodeStatus::available)
            options.push_back({1.0 - profile.mastery_of(topic_key(node.topic)), rank.at(node.node_id), node.node_id});
    std::sort(options.begin(), options.end(), [](Option const & a, Option const & b) {
        if (a.priority != b.priority)
            return a.priority > b.priority;
        if (a.rank != b.rank)
            return a.rank < b.rank;
        return a.id < b.id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < options.size() && i < n; ++i)
        out.push_back(options[i].id);
    return out;
}

namespace {

NodeStatus status_from_string(std::string const & s)
{
    for (auto st : {NodeStatus::locked, NodeStatus::available, NodeStatus::in_progress, NodeStatus::completed})
        if (s == to_string(st))
            return st;
    throw Error("unknown node status " + s);
}

} // namespace

json to_json(CourseDag const & dag)
{
    json nodes = json::array();
    for (auto const & n : dag.nodes) {
        json templates = json::array();
        for (auto const & t : n.task_templates) {
            json tj{{"topic", t.topic}, {"difficulty", t.difficulty}};
            if (t.grounding)
                tj["grounding"] = *t.grounding;
            templates.push_back(tj);
        }
        nodes.push_back({{"node_id", n.node_id},
                         {"topic", n.topic},
                         {"objectives", n.objectives},
                         {"resources", n.resources},
                         {"task_templates", templates},
                         {"status", to_string(n.status)}});
    }
    json edges = json::array();
    for (auto const & [a, b] : dag.edges)
        edges.push_back({a, b});
    return {{"schema_version", 1},   {"course_id", dag.course_id}, {"student_id", dag.student_id},
            {"created_at", dag.created_at}, {"nodes", nodes},         {"edges", edges}};
}

CourseDag dag_from_json(json const & j)
{
    if (j.value("schema_version", 0) != 1)
        throw Error("unsupported course schema_version");
    CourseDag dag;
    try {
        dag.course_id = j.at("course_id").get<std::string>();
        dag.student_id = j.at("student_id").get<std::string>();
        dag.created_at = j.value("created_at", std::int64_t{0});
        for (auto const & nj : j.at("nodes")) {
            CourseNode n;
            n.node_id = nj.at("node_id").get<std::string>();
            n.topic = nj.at("topic").get<std::string>();
            n.objectives = nj.value("objectives", std::vector<std::string>{});
            n.resources = nj.value("resources", std::vector<std::string>{});
            for (auto const & tj : nj.value("task_templates", json::array())) {
                tasks::TaskSpec t;
                t.topic = tj.at("topic").get<std::string>();
                t.difficulty = tj.at("difficulty").get<int>();
                if (tj.contains("grounding"))
                    t.grounding = tj["grounding"].get<std::vector<std::string>>();
                n.task_templates.push_back(std::move(t));
            }
            n.status = status_from_string(nj.at("status").get<std::string>());
            dag.nodes.push_back(std::move(n));
        }
        for (auto const & e : j.at("edges"))
            dag.edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    } catch (json::exception const & e) {
        throw Error(std::string("malformed course document: ") + e.what());
    }
    validate_dag(dag);
    return dag;
}

void validate(CourseRequest const & req)
{
    if (text::trim(req.goal).empty())
        throw PreconditionError("course goal must not be empty");
    if (req.max_nodes < 3 || req.max_nodes > 50)
        throw PreconditionError("max_nodes must be within [3, 50]");
}

namespace {

std::vector<kg::Entity const *> concepts(kg::KnowledgeIndex const & index)
{
    std::vector<kg::Entity const *> out;
    for (auto const & e : index.graph().entities)
        if (e.kind == kg::EntityKind::concept_)
            out.push_back(&e);
    return out;
}

Candidate grounded(kg::Entity const & e, std::string rationale)
{
    return {e.label.empty() ? e.name : e.label, std::move(rationale),
            std::vector<std::string>(e.source_chunks.begin(), e.source_chunks.end()), e.entity_id, false};
}

kg::Entity const * exact_concept(kg::KnowledgeIndex const & index, std::string const & name)
{
    return index.graph().find(topic_key(name), kg::EntityKind::concept_);
}

kg::Entity const * best_concept(kg::KnowledgeIndex const & index, std::string const & query)
{
    if (auto const * e = exact_concept(index, query))
        return e;
    auto const cs = concepts(index);
    std::vector<std::string> names;
    for (auto const * e : cs)
        names.push_back(e->name);
    kg::Bm25 const bm25(names);
    auto const top = kg::top_k(bm25.scores(query), 1);
    return top.empty() ? nullptr : cs[top[0]];
}

} // namespace

TopicDossier research_stage(CourseRequest const & req, kg::KnowledgeIndex const & index,
                            memory::StudentProfile const & profile)
{
    validate(req);
    if (!index.built())
        throw kg::IndexNotBuilt("course research needs a built knowledge index");
    TopicDossier dossier;
    std::set<std::string> seen;
    auto add = [&](Candidate c) {
        if (seen.insert(topic_key(c.name)).second)
            dossier.candidates.push_back(std::move(c));
    };

    for (auto const & hint : req.topic_hints) {
        if (text::trim(hint).empty())
            continue;
        if (auto const * e = best_concept(index, hint))
            add(grounded(*e, "requested topic \"" + hint + "\""));
        else
            add({text::trim(hint), "requested topic, not covered by the textbook", {}, std::nullopt, true});
    }

    for (auto const & hit : index.retrieve(req.goal, kg::RetrievalMode::global, req.max_nodes).hits) {
        if (hit.score <= 0)
            break;
        for (auto const & id : hit.entity_ids)
            if (auto const * e = index.graph().find(id); e && e->kind == kg::EntityKind::concept_)
                add(grounded(*e, "related to the goal \"" + req.goal + "\""));
    }

    for (auto const & [topic, level] : profile.mastery) {
        if (level >= weak_topic_threshold)
            continue;
        if (auto const * e = exact_concept(index, topic))
            add(grounded(*e, "weak topic in the student profile"));
        else
            add({topic, "weak topic in the student profile", {}, std::nullopt, true});
    }

    if (dossier.candidates.size() > 2 * req.max_nodes)
        dossier.candidates.resize(2 * req.max_nodes);
    return dossier;
}

std::vector<std::pair<std::string, std::string>> parse_prerequisite_lines(std::string const & reply)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (auto line : text::split_lines(reply)) {
        line = text::trim(line);
        while (!line.empty() && (line[0] == '-' || line[0] == '*') && line.rfind("->", 0) != 0)
            line = text::trim(line.substr(1));
        auto arrow = line.find("->");
        if (arrow == std::string::npos)
            continue;
        std::string a = text::trim(line.substr(0, arrow));
        std::string b = text::trim(line.substr(arrow + 2));
        if (!a.empty() && !b.empty())
            out.emplace_back(std::move(a), std::move(b));
    }
    return out;
}

DraftPlan planning_stage(TopicDossier const & dossier, memory::StudentProfile const & profile,
                         kg::KnowledgeIndex const & index, llm::BackendHandle const & backend,
                         std::string const & model, std::size_t max_nodes)
{
    if (dossier.candidates.empty())
        throw EmptyDossier("no candidate topics to plan");

    std::vector<std::size_t> keep(dossier.candidates.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
        keep[i] = i;
    auto mastery = [&](std::size_t i) { return profile.mastery_of(topic_key(dossier.candidates[i].name)); };
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return mastery(a) < mastery(b); });
    if (keep.size() > max_nodes)
        keep.resize(max_nodes);
    std::sort(keep.begin(), keep.end());

    std::vector<Candidate> topics;
    for (std::size_t i : keep)
        topics.push_back(dossier.candidates[i]);
    std::size_t const n = topics.size();

    std::vector<std::set<std::size_t>> succ(n);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    auto reaches = [&](std::size_t from, std::size_t to) {
        std::vector<bool> seen(n);
        std::vector<std::size_t> stack{from};
        while (!stack.empty()) {
            std::size_t const v = stack.back();
            stack.pop_back();
            if (v == to)
                return true;
            if (seen[v])
                continue;
            seen[v] = true;
            stack.insert(stack.end(), succ[v].begin(), succ[v].end());
        }
        return false;
    };
    auto propose = [&](std::size_t a, std::size_t b) {
        if (a == b || succ[a].count(b) || reaches(b, a))
            return;
        succ[a].insert(b);
        pairs.emplace_back(a, b);
    };

    std::map<std::string, std::size_t> by_entity;
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < n; ++i) {
        if (topics[i].entity_id)
            by_entity[*topics[i].entity_id] = i;
        by_name[topic_key(topics[i].name)] = i;
    }
    for (auto const & r : index.graph().relations) {
        if (r.kind != kg::RelationKind::prerequisite_of)
            continue;
        auto a = by_entity.find(r.src);
        auto b = by_entity.find(r.dst);
        if (a != by_entity.end() && b != by_entity.end())
            propose(a->second, b->second);
    }

    if (backend && n > 1) {
        std::string listing;
        for (auto const & t : topics)
            listing += "- " + t.name + "\n";
        llm::ChatRequest req;
        req.model = model;
        req.temperature = 0.0;
        req.messages = {llm::ChatMessage::system(
                            "You order topics in a revision course. For every direct prerequisite relationship "
                            "among the listed topics, write one line of the form 'A -> B', meaning A must be "
                            "learned before B. Use the topic names exactly as listed and write nothing else."),
                        llm::ChatMessage::user(listing)};
        for (auto const & [a, b] : parse_prerequisite_lines(llm::complete(backend, req).message.content)) {
            auto ia = by_name.find(topic_key(a));
            auto ib = by_name.find(topic_key(b));
            if (ia != by_name.end() && ib != by_name.end())
                propose(ia->second, ib->second);
        }
    }

    // Kahn order, ties resolved by dossier position.
    std::vector<std::size_t> indeg(n);
    for (auto const & [a, b] : pairs)
        ++indeg[b];
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0)
            ready.insert(i);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        std::size_t const v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (std::size_t w : succ[v])
            if (--indeg[w] == 0)
                ready.insert(w);
    }
    std::vector<std::size_t> new_pos(n);
    DraftPlan plan;
    for (std::size_t i = 0; i < order.size(); ++i) {
        new_pos[order[i]] = i;
        plan.topics.push_back(topics[order[i]]);
    }
    for (auto const & [a, b] : pairs)
        plan.pairs.emplace_back(new_pos[a], new_pos[b]);
    return plan;
}

namespace {

std::vector<std::string> objective_lines(std::string const & reply)
{
    std::vector<std::string> out;
    for (auto line : text::split_lines(reply)) {
        line = text::trim(line);
        std::size_t i = 0;
        while (i < line.size() && (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '-' ||
                                   line[i] == '*' || line[i] == '.' || line[i] == ')' || line[i] == ' '))
            ++i;
        line = text::trim(line.substr(i));
        if (!line.empty())
            out.push_back(line);
    }
    return out;
}

} // namespace

std::vector<CourseNode> step_handling_stage(DraftPlan const & plan, kg::KnowledgeIndex const & index,
                                            llm::BackendHandle const & backend, std::string const & model)
{
    std::vector<CourseNode> nodes;
    for (std::size_t i = 0; i < plan.topics.size(); ++i) {
        Candidate const & topic = plan.topics[i];
        CourseNode node;
        char id[16];
        std::snprintf(id, sizeof id, "n%02zu", i + 1);
        node.node_id = id;
        node.topic = topic.name;

        if (backend) {
            try {
                llm::ChatRequest req;
                req.model = model;
                req.temperature = 0.0;
                req.messages = {llm::ChatMessage::system("Write two to four short learning objectives for the "
                                                         "course topic, one per line, nothing else."),
                                llm::ChatMessage::user(topic.name)};
                auto lines = objective_lines(llm::complete(backend, req).message.content);
                if (lines.size() >= 2) {
                    if (lines.size() > 4)
                        lines.resize(4);
                    node.objectives = std::move(lines);
                }
            } catch (Error const &) {
                // fall through to the template
            }
        }
        if (node.objectives.empty())
            node.objectives = {"Understand " + topic.name, "Solve " + topic.name + " exercises"};

        if (!topic.ungrounded && index.built())
            for (auto const & hit : index.retrieve(topic.name, kg::RetrievalMode::local, 3).hits)
                node.resources.insert(node.resources.end(), hit.chunk_ids.begin(), hit.chunk_ids.end());

        for (int difficulty : {2, 3}) {
            tasks::TaskSpec spec;
            spec.topic = topic.name;
            spec.difficulty = difficulty;
            if (!node.resources.empty())
                spec.grounding = node.resources;
            node.task_templates.push_back(std::move(spec));
        }
        nodes.push_back(std::move(node));
    }
    return nodes;
}

CourseDag coding_stage(std::vector<CourseNode> nodes, std::vector<Edge> edges, std::string const & student_id,
                       std::int64_t now, CourseStore * store)
{
    CourseDag dag;
    dag.student_id = student_id;
    dag.created_at = now;
    dag.nodes = std::move(nodes);
    dag.edges = std::move(edges);
    std::string fingerprint = student_id + "\n" + std::to_string(now);
    for (auto const & n : dag.nodes)
        fingerprint += "\n" + n.node_id + ":" + n.topic;
    for (auto const & [a, b] : dag.edges)
        fingerprint += "\n" + a + ">" + b;
    dag.course_id = "course-" + sha256_hex(fingerprint).substr(0, 12);
    validate_dag(dag);
    assign_initial_status(dag);
    if (store)
        store->save_course(dag);
    return dag;
}

CourseDag create_course(CourseRequest const & req, kg::KnowledgeIndex const & index,
                        memory::StudentProfile const & profile, PlannerConfig const & config, std::int64_t now)
{
    auto const dossier = research_stage(req, index, profile);
    auto const plan = planning_stage(dossier, profile, index, config.backend, config.model, req.max_nodes);
    auto nodes = step_handling_stage(plan, index, config.backend, config.model);
    std::vector<Edge> edges;
    for (auto const & [a, b] : plan.pairs)
        edges.emplace_back(nodes[a].node_id, nodes[b].node_id);
    return coding_stage(std::move(nodes), std::move(edges), req.student_id, now, config.store);
}

} // namespace mtutor::course
