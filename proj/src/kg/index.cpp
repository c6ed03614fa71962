#include "mtutor/kg/index.hpp"

#include "mtutor/common/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace mtutor::kg {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(RetrievalMode m)
{
    return m == RetrievalMode::local ? "local" : "global";
}

RetrievalMode retrieval_mode_from_string(std::string const & s)
{
    if (s == "local")
        return RetrievalMode::local;
    if (s == "global")
        return RetrievalMode::global;
    throw PreconditionError("unknown retrieval mode: " + s);
}

KnowledgeIndex::KnowledgeIndex(std::vector<Chunk> chunks, Graph graph, std::vector<Community> communities)
    : built_(true)
    , chunks_(std::move(chunks))
    , graph_(std::move(graph))
    , communities_(std::move(communities))
{
    for (std::size_t i = 0; i < chunks_.size(); ++i)
        chunk_pos_[chunks_[i].chunk_id] = i;
    adjacency_ = graph_.adjacency();
    max_weight_ = 0;
    for (auto const & [a, row] : adjacency_)
        for (auto const & [b, w] : row)
            max_weight_ = std::max(max_weight_, w);
    if (max_weight_ <= 0)
        max_weight_ = 1.0;

    std::vector<std::string> docs;
    for (auto const & e : graph_.entities)
        docs.push_back(e.name + " " + e.description);
    entity_bm25_ = std::make_unique<Bm25>(docs);
    docs.clear();
    for (auto const & c : communities_)
        docs.push_back(c.summary);
    community_bm25_ = std::make_unique<Bm25>(docs);
}

Chunk const * KnowledgeIndex::chunk(std::string const & chunk_id) const
{
    auto it = chunk_pos_.find(chunk_id);
    return it == chunk_pos_.end() ? nullptr : &chunks_[it->second];
}

std::vector<double> KnowledgeIndex::entity_scores(std::string_view query) const
{
    if (!built_)
        throw IndexNotBuilt("knowledge index has not been built");
    return entity_bm25_->scores(query);
}

std::map<std::string, double> KnowledgeIndex::neighborhood(std::string const & seed) const
{
    std::map<std::string, double> best{{seed, 1.0}};
    std::map<std::string, double> frontier{{seed, 1.0}};
    for (int depth = 1; depth <= expansion_depth; ++depth) {
        std::map<std::string, double> next;
        for (auto const & [node, p] : frontier) {
            auto row = adjacency_.find(node);
            if (row == adjacency_.end())
                continue;
            for (auto const & [n, w] : row->second) {
                double const q = p * (w / max_weight_) * 0.5;
                auto & slot = next[n];
                slot = std::max(slot, q);
            }
        }
        for (auto const & [n, q] : next) {
            auto & slot = best[n];
            slot = std::max(slot, q);
        }
        frontier = std::move(next);
    }
    return best;
}

RetrievalResult KnowledgeIndex::retrieve(std::string const & query, RetrievalMode mode, std::size_t k) const
{
    if (!built_)
        throw IndexNotBuilt("knowledge index has not been built");
    RetrievalResult result;
    result.mode = mode;
    result.query = query;

    if (mode == RetrievalMode::global) {
        auto const scores = community_bm25_->scores(query);
        std::vector<std::size_t> order(communities_.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b])
                return scores[a] > scores[b];
            return communities_[a].community_id < communities_[b].community_id;
        });
        for (std::size_t i = 0; i < order.size() && result.hits.size() < k; ++i) {
            Community const & c = communities_[order[i]];
            std::set<std::string> chunk_ids;
            for (auto const & id : c.members)
                if (Entity const * e = graph_.find(id))
                    chunk_ids.insert(e->source_chunks.begin(), e->source_chunks.end());
            result.hits.push_back(
                {c.summary, scores[order[i]], c.members, std::vector<std::string>(chunk_ids.begin(), chunk_ids.end())});
        }
        return result;
    }

    auto const scores = entity_bm25_->scores(query);
    std::map<std::string, double> entity_score;
    for (std::size_t s : top_k(scores, seed_count))
        for (auto const & [id, prox] : neighborhood(graph_.entities[s].entity_id)) {
            auto & slot = entity_score[id];
            slot = std::max(slot, scores[s] * prox);
        }

    struct Scored
    {
        double score = 0;
        std::set<std::string> entities;
    };
    std::map<std::string, Scored> chunk_score;
    for (auto const & [id, score] : entity_score) {
        Entity const * e = graph_.find(id);
        for (auto const & cid : e->source_chunks) {
            auto & slot = chunk_score[cid];
            slot.score = std::max(slot.score, score);
            slot.entities.insert(id);
        }
    }
    std::vector<std::pair<std::string, Scored>> ranked(chunk_score.begin(), chunk_score.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](auto const & a, auto const & b) {
        if (a.second.score != b.second.score)
            return a.second.score > b.second.score;
        return a.first < b.first;
    });
    for (auto const & [cid, s] : ranked) {
        if (result.hits.size() >= k)
            break;
        Chunk const * c = chunk(cid);
        result.hits.push_back({c ? c->text : "", s.score, std::vector<std::string>(s.entities.begin(), s.entities.end()),
                               {cid}});
    }
    return result;
}

KnowledgeIndex build_index(std::vector<SourceDocument> const & docs, BuildOptions const & options)
{
    std::vector<Chunk> chunks;
    for (auto const & d : docs) {
        auto c = ingest(d, options.chunking);
        chunks.insert(chunks.end(), std::make_move_iterator(c.begin()), std::make_move_iterator(c.end()));
    }
    if (chunks.empty())
        throw EmptyDocument("no documents to index");
    DeterministicExtractor fallback;
    Extractor & extractor = options.extractor ? *options.extractor : fallback;
    auto report = extract_graph(chunks, extractor);
    std::vector<Community> communities;
    if (!report.graph.entities.empty())
        communities = summarize_communities(detect_communities(report.graph), report.graph, options.summarizer,
                                            options.model);
    return KnowledgeIndex(std::move(chunks), std::move(report.graph), std::move(communities));
}

namespace {

json to_json(Chunk const & c)
{
    return {{"chunk_id", c.chunk_id},       {"doc_id", c.doc_id},
            {"heading_path", c.heading_path}, {"text", c.text},
            {"token_count", c.token_count},   {"section_index", c.section_index},
            {"overlap_bytes", c.overlap_bytes}, {"gap", c.gap}};
}

Chunk chunk_from_json(json const & j)
{
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.heading_path = j.at("heading_path").get<std::vector<std::string>>();
    c.text = j.at("text").get<std::string>();
    c.token_count = j.at("token_count").get<std::size_t>();
    c.section_index = j.value("section_index", std::size_t{0});
    c.overlap_bytes = j.value("overlap_bytes", std::size_t{0});
    c.gap = j.value("gap", "");
    return c;
}

void write_atomically(fs::path const & path, std::string const & content)
{
    fs::path const tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << content;
        if (!out.flush())
            throw Error("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(fs::path const & path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IndexNotBuilt("missing index file " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

void save_index(KnowledgeIndex const & index, fs::path const & dir)
{
    if (!index.built())
        throw IndexNotBuilt("cannot save an index that was never built");
    fs::create_directories(dir);

    json entities = json::array();
    for (auto const & e : index.graph().entities)
        entities.push_back({{"entity_id", e.entity_id},
                            {"name", e.name},
                            {"label", e.label},
                            {"kind", to_string(e.kind)},
                            {"description", e.description},
                            {"source_chunks", e.source_chunks}});
    json relations = json::array();
    for (auto const & r : index.graph().relations)
        relations.push_back({{"src", r.src}, {"dst", r.dst}, {"kind", to_string(r.kind)}, {"weight", r.weight}});
    write_atomically(dir / "graph.json",
                     json{{"schema_version", 1}, {"entities", entities}, {"relations", relations}}.dump(1));

    json communities = json::array();
    for (auto const & c : index.communities())
        communities.push_back({{"community_id", c.community_id},
                               {"level", c.level},
                               {"members", c.members},
                               {"summary", c.summary}});
    write_atomically(dir / "communities.json", communities.dump(1));

    std::string lines;
    for (auto const & c : index.chunks())
        lines += to_json(c).dump() + "\n";
    write_atomically(dir / "chunks.jsonl", lines);
}

KnowledgeIndex load_index(fs::path const & dir)
{
    std::string const graph_text = read_file(dir / "graph.json");
    std::string const community_text = read_file(dir / "communities.json");
    std::string const chunk_text = read_file(dir / "chunks.jsonl");
    try {
        Graph graph;
        json const g = json::parse(graph_text);
        for (auto const & e : g.at("entities"))
            graph.entities.push_back({e.at("entity_id").get<std::string>(), e.at("name").get<std::string>(),
                                      e.value("label", ""), entity_kind_from_string(e.at("kind").get<std::string>()),
                                      e.value("description", ""),
                                      e.at("source_chunks").get<std::set<std::string>>()});
        for (auto const & r : g.at("relations"))
            graph.relations.push_back({r.at("src").get<std::string>(), r.at("dst").get<std::string>(),
                                       relation_kind_from_string(r.at("kind").get<std::string>()),
                                       r.at("weight").get<double>()});
        std::vector<Community> communities;
        for (auto const & c : json::parse(community_text))
            communities.push_back({c.at("community_id").get<std::string>(), c.value("level", 0),
                                   c.at("members").get<std::vector<std::string>>(), c.value("summary", "")});
        std::vector<Chunk> chunks;
        for (auto const & line : text::split_lines(chunk_text))
            if (!line.empty())
                chunks.push_back(chunk_from_json(json::parse(line)));
        return KnowledgeIndex(std::move(chunks), std::move(graph), std::move(communities));
    } catch (json::exception const & e) {
        throw Error("corrupt index in " + dir.string() + ": " + e.what());
    }
}

} // namespace mtutor::kg
