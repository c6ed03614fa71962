#include "mtutor/kg/graph.hpp"

#include "mtutor/common/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

namespace mtutor::kg {

using nlohmann::json;

std::string to_string(EntityKind k)
{
    switch (k) {
    case EntityKind::concept_: return "concept";
    case EntityKind::definition: return "definition";
    case EntityKind::theorem: return "theorem";
    case EntityKind::procedure: return "procedure";
    case EntityKind::example: return "example";
    }
    return "?";
}

std::string to_string(RelationKind k)
{
    switch (k) {
    case RelationKind::prerequisite_of: return "prerequisite_of";
    case RelationKind::part_of: return "part_of";
    case RelationKind::related_to: return "related_to";
    case RelationKind::illustrates: return "illustrates";
    }
    return "?";
}

EntityKind entity_kind_from_string(std::string const & s)
{
    for (auto k : {EntityKind::concept_, EntityKind::definition, EntityKind::theorem, EntityKind::procedure,
                   EntityKind::example})
        if (to_string(k) == s)
            return k;
    throw PreconditionError("unknown entity kind: " + s);
}

RelationKind relation_kind_from_string(std::string const & s)
{
    for (auto k : {RelationKind::prerequisite_of, RelationKind::part_of, RelationKind::related_to,
                   RelationKind::illustrates})
        if (to_string(k) == s)
            return k;
    throw PreconditionError("unknown relation kind: " + s);
}

Entity const * Graph::find(std::string const & entity_id) const
{
    for (auto const & e : entities)
        if (e.entity_id == entity_id)
            return &e;
    return nullptr;
}

Entity const * Graph::find(std::string const & name, EntityKind kind) const
{
    for (auto const & e : entities)
        if (e.name == name && e.kind == kind)
            return &e;
    return nullptr;
}

std::map<std::string, std::map<std::string, double>> Graph::adjacency() const
{
    std::map<std::string, std::map<std::string, double>> adj;
    for (auto const & e : entities)
        adj[e.entity_id];
    for (auto const & r : relations) {
        adj[r.src][r.dst] += r.weight;
        adj[r.dst][r.src] += r.weight;
    }
    return adj;
}

namespace {

std::string canonical(std::string_view label)
{
    std::string s = text::normalize_whitespace(label);
    while (!s.empty() && std::string_view("*_:.,;").find(s.back()) != std::string_view::npos)
        s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == '*' || s[i] == '_'))
        ++i;
    return text::fold_case(text::trim(s.substr(i)));
}

std::string clean_label(std::string_view label)
{
    std::string s = text::normalize_whitespace(label);
    while (!s.empty() && std::string_view("*_:.,;").find(s.back()) != std::string_view::npos)
        s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == '*' || s[i] == '_'))
        ++i;
    return text::trim(s.substr(i));
}

struct Marker
{
    EntityKind kind;
    std::string name;
    std::string rest;
};

std::optional<EntityKind> marker_kind(std::string const & word)
{
    std::string const w = text::fold_case(word);
    if (w == "definition")
        return EntityKind::definition;
    if (w == "theorem" || w == "lemma" || w == "proposition")
        return EntityKind::theorem;
    if (w == "procedure" || w == "algorithm" || w == "method")
        return EntityKind::procedure;
    if (w == "example")
        return EntityKind::example;
    return std::nullopt;
}

std::string strip_article(std::string s)
{
    for (char const * a : {"the ", "a ", "an "})
        if (text::starts_with_ci(s, a))
            return s.substr(std::string_view(a).size());
    return s;
}

std::string name_from_rest(std::string const & rest, EntityKind kind)
{
    if (kind == EntityKind::example) {
        std::string s = text::first_sentence(rest);
        return text::truncate_utf8(clean_label(s), 80);
    }
    std::string const folded = text::fold_case(rest);
    std::size_t cut = rest.size();
    for (char const * stop : {" is ", " are ", " of ", " means ", " states ", " says ", ":", ". ", ",", " ("})
        cut = std::min(cut, folded.find(stop));
    std::string name = clean_label(strip_article(text::trim(rest.substr(0, cut))));
    auto words = text::split_whitespace(name);
    if (words.size() > 6) {
        words.resize(6);
        name = text::join(words, " ");
    }
    return name;
}

/// `**Definition (Name):** rest`, `**Theorem:** rest`, `**Example 2.**` and
/// the colon-outside-bold variants.
std::optional<Marker> parse_marker(std::string const & paragraph)
{
    std::string const p = text::trim(paragraph);
    if (p.rfind("**", 0) != 0)
        return std::nullopt;
    auto close = p.find("**", 2);
    if (close == std::string::npos)
        return std::nullopt;
    std::string inner = text::trim(p.substr(2, close - 2));
    std::string rest = p.substr(close + 2);
    while (!inner.empty() && (inner.back() == ':' || inner.back() == '.'))
        inner.pop_back();
    std::size_t r = 0;
    while (r < rest.size() && (rest[r] == ':' || rest[r] == '.' || rest[r] == ' '))
        ++r;
    rest = text::normalize_whitespace(rest.substr(r));

    std::size_t w = 0;
    while (w < inner.size() && std::isalpha(static_cast<unsigned char>(inner[w])))
        ++w;
    auto kind = marker_kind(inner.substr(0, w));
    if (!kind)
        return std::nullopt;
    Marker m{*kind, "", rest};
    auto open = inner.find('(', w);
    auto shut = inner.rfind(')');
    if (open != std::string::npos && shut != std::string::npos && shut > open)
        m.name = clean_label(inner.substr(open + 1, shut - open - 1));
    if (m.name.empty())
        m.name = name_from_rest(rest, *kind);
    if (m.name.empty())
        return std::nullopt;
    return m;
}

std::vector<std::string> paragraphs(std::string const & body)
{
    std::vector<std::string> out;
    std::string cur;
    for (auto const & line : text::split_lines(body)) {
        if (text::trim(line).empty()) {
            if (!text::trim(cur).empty())
                out.push_back(cur);
            cur.clear();
            continue;
        }
        // A marker always opens a new paragraph.
        if (text::trim(line).rfind("**", 0) == 0 && !text::trim(cur).empty()) {
            out.push_back(cur);
            cur.clear();
        }
        cur += line;
        cur += '\n';
    }
    if (!text::trim(cur).empty())
        out.push_back(cur);
    return out;
}

bool word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

struct Mention
{
    std::size_t begin;
    std::size_t end;
    Entity const * entity;
};

/// Non-overlapping whole-word mentions in `folded`, longest first, then in
/// text order. A trailing plural "s"/"es" still matches.
std::vector<Mention> find_mentions(std::string const & folded, std::vector<Entity> const & entities)
{
    std::vector<Mention> all;
    for (auto const & e : entities) {
        if (e.kind == EntityKind::example || e.name.size() < 3)
            continue;
        for (std::size_t pos = folded.find(e.name); pos != std::string::npos; pos = folded.find(e.name, pos + 1)) {
            std::size_t end = pos + e.name.size();
            if (pos > 0 && word_char(folded[pos - 1]))
                continue;
            if (end < folded.size() && folded[end] == 's')
                ++end;
            else if (end + 1 < folded.size() && folded[end] == 'e' && folded[end + 1] == 's')
                end += 2;
            if (end < folded.size() && word_char(folded[end]))
                continue;
            all.push_back({pos, end, &e});
        }
    }
    std::sort(all.begin(), all.end(), [](Mention const & a, Mention const & b) {
        if (a.end - a.begin != b.end - b.begin)
            return a.end - a.begin > b.end - b.begin;
        if (a.begin != b.begin)
            return a.begin < b.begin;
        return a.entity->entity_id < b.entity->entity_id;
    });
    std::vector<Mention> kept;
    for (auto const & m : all) {
        bool clash = false;
        for (auto const & k : kept)
            if (m.begin < k.end && k.begin < m.end)
                clash = true;
        if (!clash)
            kept.push_back(m);
    }
    std::sort(kept.begin(), kept.end(), [](Mention const & a, Mention const & b) { return a.begin < b.begin; });
    return kept;
}

struct Cue
{
    char const * phrase;
    bool dependent_first; // "X requires Y" vs "Y before X"
};

constexpr std::array<Cue, 6> prerequisite_cues{{{"requires", true},
                                                {"require", true},
                                                {"builds on", true},
                                                {"build on", true},
                                                {"depends on", true},
                                                {"before", false}}};

std::optional<std::size_t> find_phrase(std::string const & folded, std::string_view phrase)
{
    for (std::size_t pos = folded.find(phrase); pos != std::string::npos; pos = folded.find(phrase, pos + 1)) {
        std::size_t const end = pos + phrase.size();
        if ((pos == 0 || !word_char(folded[pos - 1])) && (end == folded.size() || !word_char(folded[end])))
            return pos;
    }
    return std::nullopt;
}

} // namespace

ChunkExtraction DeterministicExtractor::extract(Chunk const & chunk)
{
    ChunkExtraction out;
    for (std::size_t i = 0; i < chunk.heading_path.size(); ++i) {
        out.entities.push_back({chunk.heading_path[i], EntityKind::concept_, ""});
        if (i > 0)
            out.relations.push_back({chunk.heading_path[i], chunk.heading_path[i - 1], RelationKind::part_of,
                                     EntityKind::concept_, EntityKind::concept_});
    }
    std::string const & topic = chunk.heading_path.back();
    for (auto const & para : paragraphs(chunk.text)) {
        auto marker = parse_marker(para);
        if (!marker)
            continue;
        out.entities.push_back({marker->name, marker->kind, marker->rest});
        RelationKind const rk = marker->kind == EntityKind::example ? RelationKind::illustrates : RelationKind::part_of;
        out.relations.push_back({marker->name, topic, rk, marker->kind, EntityKind::concept_});
    }
    return out;
}

std::vector<RawRelation> DeterministicExtractor::link(Chunk const & chunk, std::vector<Entity> const & entities)
{
    std::vector<RawRelation> out;
    std::string const topic = chunk.heading_path.back();
    std::string const topic_name = canonical(topic);

    for (auto const & sentence : text::split_sentences(chunk.text)) {
        std::string const folded = text::fold_case(sentence);
        for (auto const & cue : prerequisite_cues) {
            auto pos = find_phrase(folded, cue.phrase);
            if (!pos)
                continue;
            auto mentions = find_mentions(folded, entities);
            Entity const * left = nullptr;
            Entity const * right = nullptr;
            for (auto const & m : mentions) {
                if (m.end <= *pos)
                    left = m.entity;
                else if (m.begin >= *pos + std::string_view(cue.phrase).size() && !right)
                    right = m.entity;
            }
            if (!right)
                break;
            std::string dependent;
            std::string prerequisite;
            std::optional<EntityKind> dk;
            std::optional<EntityKind> pk = right->kind;
            if (cue.dependent_first) {
                if (left) {
                    dependent = left->name;
                    dk = left->kind;
                } else {
                    dependent = topic;
                    dk = EntityKind::concept_;
                }
                prerequisite = right->name;
            } else {
                if (!left)
                    break;
                prerequisite = left->name;
                pk = left->kind;
                dependent = right->name;
                dk = right->kind;
            }
            out.push_back({prerequisite, dependent, RelationKind::prerequisite_of, pk, dk});
            break;
        }
    }

    std::set<std::string> related;
    for (auto const & m : find_mentions(text::fold_case(chunk.text), entities)) {
        Entity const & e = *m.entity;
        if (e.name == topic_name || e.source_chunks.count(chunk.chunk_id))
            continue;
        out.push_back({topic, e.name, RelationKind::related_to, EntityKind::concept_, e.kind});
    }
    return out;
}

LlmExtractor::LlmExtractor(llm::BackendHandle backend, std::string model)
    : backend_(std::move(backend))
    , model_(std::move(model))
{
}

ChunkExtraction LlmExtractor::extract(Chunk const & chunk)
{
    llm::ChatRequest req;
    req.model = model_;
    req.temperature = 0.0;
    req.messages = {
        llm::ChatMessage::system(
            "Extract the mathematical entities and relations from the textbook passage. Reply with one JSON object: "
            "{\"entities\":[{\"name\":...,\"kind\":\"concept|definition|theorem|procedure|example\","
            "\"description\":...}],\"relations\":[{\"src\":...,\"dst\":...,"
            "\"kind\":\"prerequisite_of|part_of|related_to|illustrates\"}]}. Use entity names exactly as in the "
            "entity list for relations."),
        llm::ChatMessage::user("Section: " + text::join(chunk.heading_path, " > ") + "\n\n" + chunk.text)};
    auto const reply = llm::complete(backend_, req).message.content;
    auto const open = reply.find('{');
    auto const shut = reply.rfind('}');
    if (open == std::string::npos || shut == std::string::npos || shut < open)
        throw ExtractorFailure("no JSON object in extractor reply");
    ChunkExtraction out;
    try {
        json const j = json::parse(reply.substr(open, shut - open + 1));
        for (auto const & e : j.value("entities", json::array()))
            out.entities.push_back({e.at("name").get<std::string>(),
                                    entity_kind_from_string(e.value("kind", "concept")),
                                    e.value("description", "")});
        for (auto const & r : j.value("relations", json::array()))
            out.relations.push_back({r.at("src").get<std::string>(), r.at("dst").get<std::string>(),
                                     relation_kind_from_string(r.value("kind", "related_to")), std::nullopt,
                                     std::nullopt});
    } catch (json::exception const & e) {
        throw ExtractorFailure(std::string("malformed extractor reply: ") + e.what());
    } catch (PreconditionError const & e) {
        throw ExtractorFailure(e.what());
    }
    return out;
}

namespace {

class GraphBuilder
{
public:
    void add_entity(RawEntity const & raw, std::string const & chunk_id)
    {
        std::string const name = canonical(raw.name);
        if (name.empty())
            return;
        auto key = std::make_pair(name, raw.kind);
        auto it = index_.find(key);
        if (it == index_.end()) {
            char id[16];
            std::snprintf(id, sizeof id, "e%04zu", graph.entities.size() + 1);
            Entity e;
            e.entity_id = id;
            e.name = name;
            e.label = clean_label(raw.name);
            e.kind = raw.kind;
            it = index_.emplace(key, graph.entities.size()).first;
            graph.entities.push_back(std::move(e));
        }
        Entity & e = graph.entities[it->second];
        e.source_chunks.insert(chunk_id);
        std::string const desc = text::normalize_whitespace(raw.description);
        if (!desc.empty() && e.description.find(desc) == std::string::npos)
            e.description = text::truncate_utf8(e.description.empty() ? desc : e.description + " " + desc,
                                                description_limit);
    }

    void add_relation(RawRelation const & raw)
    {
        auto src = resolve(raw.src, raw.src_kind);
        auto dst = resolve(raw.dst, raw.dst_kind);
        if (!src || !dst || *src == *dst)
            return;
        auto key = std::make_tuple(*src, *dst, raw.kind);
        auto it = relation_index_.find(key);
        if (it == relation_index_.end()) {
            relation_index_.emplace(key, graph.relations.size());
            graph.relations.push_back({*src, *dst, raw.kind, 1.0});
        } else {
            graph.relations[it->second].weight += 1.0;
        }
    }

    Graph graph;

private:
    std::optional<std::string> resolve(std::string const & raw_name, std::optional<EntityKind> kind) const
    {
        std::string const name = canonical(raw_name);
        if (kind) {
            auto it = index_.find({name, *kind});
            if (it != index_.end())
                return graph.entities[it->second].entity_id;
        }
        for (auto k : {EntityKind::concept_, EntityKind::definition, EntityKind::theorem, EntityKind::procedure,
                       EntityKind::example}) {
            auto it = index_.find({name, k});
            if (it != index_.end())
                return graph.entities[it->second].entity_id;
        }
        return std::nullopt;
    }

    std::map<std::pair<std::string, EntityKind>, std::size_t> index_;
    std::map<std::tuple<std::string, std::string, RelationKind>, std::size_t> relation_index_;
};

} // namespace

ExtractionReport extract_graph(std::vector<Chunk> const & chunks, Extractor & extractor)
{
    if (chunks.empty())
        throw ExtractorFailure("no chunks to extract from");
    ExtractionReport report;
    GraphBuilder builder;
    std::vector<std::pair<Chunk const *, ChunkExtraction>> done;
    for (auto const & c : chunks) {
        try {
            done.emplace_back(&c, extractor.extract(c));
        } catch (std::exception const & e) {
            report.failures[c.chunk_id] = e.what();
        }
    }
    if (done.size() * 5 < chunks.size() * 4)
        throw ExtractorFailure("extraction failed on " + std::to_string(report.failures.size()) + " of " +
                               std::to_string(chunks.size()) + " chunks");
    for (auto const & [chunk, ex] : done)
        for (auto const & e : ex.entities)
            builder.add_entity(e, chunk->chunk_id);
    for (auto const & [chunk, ex] : done)
        for (auto const & r : ex.relations)
            builder.add_relation(r);
    // Link against a frozen copy so mentions never see half-built state.
    std::vector<Entity> const known = builder.graph.entities;
    for (auto const & [chunk, ex] : done) {
        try {
            for (auto const & r : extractor.link(*chunk, known))
                builder.add_relation(r);
        } catch (std::exception const & e) {
            report.failures[chunk->chunk_id] = e.what();
        }
    }
    report.graph = std::move(builder.graph);
    return report;
}

std::vector<Community> detect_communities(Graph const & graph)
{
    if (graph.entities.empty())
        throw EmptyGraph("no entities to cluster");
    std::vector<std::string> ids;
    for (auto const & e : graph.entities)
        ids.push_back(e.entity_id);
    std::sort(ids.begin(), ids.end());
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i)
        pos[ids[i]] = i;

    std::vector<std::vector<std::pair<std::size_t, double>>> nbrs(ids.size());
    for (auto const & [a, row] : graph.adjacency())
        for (auto const & [b, w] : row)
            if (a != b)
                nbrs[pos.at(a)].emplace_back(pos.at(b), w);

    std::vector<std::size_t> label(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        label[i] = i;
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool changed = false;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (nbrs[i].empty())
                continue;
            std::map<std::size_t, double> tally;
            for (auto const & [j, w] : nbrs[i])
                tally[label[j]] += w;
            std::size_t best = tally.begin()->first;
            double best_w = tally.begin()->second;
            for (auto const & [l, w] : tally)
                if (w > best_w) {
                    best = l;
                    best_w = w;
                }
            if (best != label[i]) {
                label[i] = best;
                changed = true;
            }
        }
        if (!changed)
            break;
    }

    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < ids.size(); ++i)
        groups[label[i]].push_back(ids[i]);
    std::vector<std::vector<std::string>> ordered;
    for (auto & [l, members] : groups)
        ordered.push_back(std::move(members));
    std::sort(ordered.begin(), ordered.end(), [](auto const & a, auto const & b) { return a.front() < b.front(); });

    std::vector<Community> out;
    for (auto & members : ordered) {
        char id[16];
        std::snprintf(id, sizeof id, "c%04zu", out.size());
        out.push_back({id, 0, std::move(members), ""});
    }
    return out;
}

std::string fallback_summary(Community const & community, Graph const & graph)
{
    std::vector<std::string> names;
    std::vector<std::string> firsts;
    for (auto const & id : community.members) {
        Entity const * e = graph.find(id);
        if (!e)
            continue;
        names.push_back(e->label.empty() ? e->name : e->label);
        if (!text::trim(e->description).empty())
            firsts.push_back(text::first_sentence(e->description));
    }
    std::string s = text::join(names, ", ");
    if (!firsts.empty())
        s += " \xE2\x80\x94 " + text::join(firsts, " ");
    return text::truncate_utf8(s, summary_limit);
}

std::vector<Community> summarize_communities(std::vector<Community> communities, Graph const & graph,
                                             llm::BackendHandle const & backend, std::string const & model)
{
    for (auto & c : communities) {
        if (!backend) {
            c.summary = fallback_summary(c, graph);
            continue;
        }
        std::string listing;
        for (auto const & id : c.members)
            if (Entity const * e = graph.find(id))
                listing += "- " + (e->label.empty() ? e->name : e->label) + " (" + to_string(e->kind) +
                           "): " + e->description + "\n";
        llm::ChatRequest req;
        req.model = model;
        req.temperature = 0.0;
        req.messages = {llm::ChatMessage::system("Summarize this group of related textbook entities in a short "
                                                 "paragraph a tutor can use as background."),
                        llm::ChatMessage::user(listing)};
        c.summary = llm::complete(backend, req).message.content;
    }
    return communities;
}

} // namespace mtutor::kg
