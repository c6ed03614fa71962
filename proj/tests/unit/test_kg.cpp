#include "doctest.h"

#include "mtutor/common/text.hpp"
#include "mtutor/kg/index.hpp"
#include "mtutor/llm/scripted.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mtutor;
using namespace mtutor::kg;

namespace {

std::string words(std::size_t from, std::size_t to, std::string sep = " ")
{
    std::string s;
    for (std::size_t i = from; i < to; ++i)
        s += (i == from ? "" : sep) + "w" + std::to_string(i);
    return s;
}

SourceDocument single_section(std::string body)
{
    return SourceDocument{"doc", "Doc", {{{"Top"}, std::move(body)}}};
}

std::string slurp(std::filesystem::path const & p)
{
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::string const fixture = slurp(std::filesystem::path(MTUTOR_FIXTURE_DIR) / "algebra.md");

Entity const & by_name(Graph const & g, std::string const & name, EntityKind kind)
{
    Entity const * e = g.find(name, kind);
    REQUIRE_MESSAGE(e != nullptr, name);
    return *e;
}

bool has_relation(Graph const & g, std::string const & src, std::string const & dst, RelationKind kind)
{
    for (auto const & r : g.relations)
        if (r.kind == kind && g.find(r.src)->name == src && g.find(r.dst)->name == dst)
            return true;
    return false;
}

class ScriptedFailures final : public Extractor
{
public:
    explicit ScriptedFailures(std::size_t fail_first)
        : fail_first_(fail_first)
    {
    }
    ChunkExtraction extract(Chunk const & chunk) override
    {
        if (seen_++ < fail_first_)
            throw std::runtime_error("model returned garbage");
        return DeterministicExtractor().extract(chunk);
    }

private:
    std::size_t fail_first_;
    std::size_t seen_ = 0;
};

/// Graph + chunks where entity i lives in chunk "t:c<i>".
KnowledgeIndex toy_index(std::vector<std::string> const & names, std::vector<std::pair<int, int>> const & edges,
                         std::vector<double> weights = {})
{
    Graph g;
    std::vector<Chunk> chunks;
    for (std::size_t i = 0; i < names.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "e%04zu", i + 1);
        std::string const cid = "t:c" + std::to_string(100 + i);
        g.entities.push_back({id, names[i], names[i], EntityKind::concept_, "about " + names[i], {cid}});
        Chunk c;
        c.chunk_id = cid;
        c.doc_id = "t";
        c.heading_path = {names[i]};
        c.text = "text of " + names[i];
        c.token_count = 3;
        chunks.push_back(c);
    }
    for (std::size_t i = 0; i < edges.size(); ++i)
        g.relations.push_back({g.entities[edges[i].first].entity_id, g.entities[edges[i].second].entity_id,
                               RelationKind::related_to, weights.empty() ? 1.0 : weights[i]});
    auto communities = summarize_communities(detect_communities(g), g);
    return KnowledgeIndex(std::move(chunks), std::move(g), std::move(communities));
}

std::set<std::string> hit_chunks(RetrievalResult const & r)
{
    std::set<std::string> out;
    for (auto const & h : r.hits)
        out.insert(h.chunk_ids.begin(), h.chunk_ids.end());
    return out;
}

} // namespace

TEST_CASE("markdown headings define heading paths")
{
    auto doc = parse_markdown("alg", fixture);
    CHECK(doc.title == "Algebra Foundations");
    REQUIRE(doc.sections.size() >= 8);
    CHECK(doc.sections[0].heading_path == std::vector<std::string>{"Algebra Foundations"});
    bool found = false;
    for (auto const & s : doc.sections)
        if (s.heading_path ==
            std::vector<std::string>{"Algebra Foundations", "Quadratic Equations", "Completing the Square"})
            found = true;
    CHECK(found);

    auto pre = parse_markdown("d", "intro text\n\n# Title\n\n\n## Empty\n## Full\nbody\n");
    REQUIRE(pre.sections.size() == 2);
    CHECK(pre.sections[0].heading_path == std::vector<std::string>{"d"});
    CHECK(pre.sections[1].heading_path == std::vector<std::string>{"Title", "Full"});
}

TEST_CASE("chunking examples")
{
    auto one = ingest(single_section(words(0, 100)));
    REQUIRE(one.size() == 1);
    CHECK(one[0].token_count == 100);
    CHECK(one[0].chunk_id == "doc:c00000");

    auto two = ingest(single_section(words(0, 1100)), {600, 100});
    REQUIRE(two.size() == 2);
    CHECK(two[0].token_count == 600);
    CHECK(two[1].token_count == 600);
    CHECK(two[0].text == words(0, 600));
    CHECK(two[1].text == words(500, 1100));

    CHECK_THROWS_AS(ingest(SourceDocument{"empty", "Empty", {}}), EmptyDocument);
    CHECK_THROWS_AS(ingest(single_section("x"), {100, 100}), PreconditionError);
}

TEST_CASE("chunks cover every section body exactly and overlap by the stated amount")
{
    std::mt19937 rng(21);
    std::uniform_int_distribution<int> len(1, 400);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int trial = 0; trial < 200; ++trial) {
        SourceDocument doc{"d", "D", {}};
        int const n_sections = 1 + pick(rng);
        for (int s = 0; s < n_sections; ++s) {
            std::string body;
            int const n = len(rng);
            for (int i = 0; i < n; ++i) {
                body += "t" + std::to_string(s) + "_" + std::to_string(i);
                body += std::string(1 + pick(rng), pick(rng) == 0 ? '\n' : ' ');
            }
            doc.sections.push_back({{"S" + std::to_string(s)}, std::string(body.begin(), body.end() - 1)});
            while (!doc.sections.back().body.empty() && std::isspace(doc.sections.back().body.back()))
                doc.sections.back().body.pop_back();
        }
        std::size_t const size = 2 + static_cast<std::size_t>(len(rng) % 60);
        std::size_t const overlap = static_cast<std::size_t>(len(rng)) % size;
        auto chunks = ingest(doc, {size, overlap});

        std::vector<std::string> rebuilt(doc.sections.size());
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            auto const & c = chunks[i];
            CHECK(c.token_count <= size);
            rebuilt[c.section_index] += c.gap + c.text.substr(c.overlap_bytes);
            if (i + 1 < chunks.size() && chunks[i + 1].section_index == c.section_index) {
                auto a = text::split_whitespace(c.text);
                auto b = text::split_whitespace(chunks[i + 1].text);
                std::vector<std::string> tail(a.end() - static_cast<long>(overlap), a.end());
                std::vector<std::string> head(b.begin(), b.begin() + static_cast<long>(overlap));
                CHECK(tail == head);
                CHECK(c.token_count == size);
            }
        }
        for (std::size_t s = 0; s < doc.sections.size(); ++s)
            CHECK(rebuilt[s] == doc.sections[s].body);
    }
}

TEST_CASE("deterministic extractor applies the marker rules")
{
    Chunk c;
    c.chunk_id = "q:c00000";
    c.heading_path = {"Quadratic Equations"};
    c.text = "**Definition:** discriminant. The quantity b^2 - 4ac.";
    DeterministicExtractor ex;
    auto g = extract_graph({c}, ex).graph;
    REQUIRE(g.entities.size() == 2);
    CHECK(by_name(g, "quadratic equations", EntityKind::concept_).label == "Quadratic Equations");
    by_name(g, "discriminant", EntityKind::definition);
    REQUIRE(g.relations.size() == 1);
    CHECK(has_relation(g, "discriminant", "quadratic equations", RelationKind::part_of));
}

TEST_CASE("extraction over the textbook")
{
    auto chunks = ingest(parse_markdown("alg", fixture));
    DeterministicExtractor ex;
    auto report = extract_graph(chunks, ex);
    auto const & g = report.graph;
    CHECK(report.failures.empty());
    CHECK(g.entities.front().entity_id == "e0001");

    by_name(g, "distributive law", EntityKind::definition);
    by_name(g, "quadratic formula", EntityKind::theorem);
    by_name(g, "isolating the variable", EntityKind::procedure);
    CHECK(has_relation(g, "quadratic equations", "algebra foundations", RelationKind::part_of));
    CHECK(has_relation(g, "completing the square", "quadratic equations", RelationKind::part_of));
    CHECK(has_relation(g, "signed numbers", "distributive property", RelationKind::prerequisite_of));
    CHECK(has_relation(g, "distributive property", "linear equations", RelationKind::prerequisite_of));
    CHECK(has_relation(g, "factoring", "quadratic equations", RelationKind::prerequisite_of));
    CHECK(has_relation(g, "functions and graphs", "derivatives", RelationKind::prerequisite_of));
    CHECK(has_relation(g, "factoring", "completing the square", RelationKind::prerequisite_of));

    // The root heading is on every chunk's path.
    CHECK(by_name(g, "algebra foundations", EntityKind::concept_).source_chunks.size() == chunks.size());

    std::set<std::pair<std::string, EntityKind>> keys;
    std::set<std::tuple<std::string, std::string, RelationKind>> rel_keys;
    for (auto const & e : g.entities) {
        CHECK(keys.insert({e.name, e.kind}).second);
        CHECK_FALSE(e.source_chunks.empty());
    }
    for (auto const & r : g.relations) {
        CHECK(r.src != r.dst);
        CHECK(r.weight > 0);
        CHECK(rel_keys.insert({r.src, r.dst, r.kind}).second);
    }
}

TEST_CASE("an entity named in two chunks merges")
{
    Chunk a;
    a.chunk_id = "d:c00000";
    a.heading_path = {"Factoring"};
    a.text = "**Definition:** Factor. One part. ";
    Chunk b = a;
    b.chunk_id = "d:c00001";
    b.text = "**Definition:** factor. Another part.";
    DeterministicExtractor ex;
    auto g = extract_graph({a, b}, ex).graph;
    auto const & e = by_name(g, "factor", EntityKind::definition);
    CHECK(e.source_chunks.size() == 2);
    CHECK(e.description == "Factor. One part. factor. Another part.");
    // Weights count mentions.
    CHECK(g.relations.size() == 1);
    CHECK(g.relations[0].weight == 2.0);
}

TEST_CASE("extraction tolerates up to 20% failed chunks")
{
    auto chunks = ingest(single_section(words(0, 50)), {10, 0});
    REQUIRE(chunks.size() == 5);
    ScriptedFailures one(1);
    auto report = extract_graph(chunks, one);
    CHECK(report.failures.size() == 1);
    ScriptedFailures two(2);
    CHECK_THROWS_AS(extract_graph(chunks, two), ExtractorFailure);
    ScriptedFailures all(5);
    CHECK_THROWS_AS(extract_graph(chunks, all), ExtractorFailure);
}

TEST_CASE("llm extractor parses structured replies")
{
    auto backend = llm::load_script(nlohmann::json::parse(R"({"rules": [
        {"when": {"last_user_contains": "broken"}, "reply": "sorry, no"},
        {"reply": "Here you go: {\"entities\": [{\"name\": \"Slope\", \"kind\": \"definition\", \"description\": \"rise over run\"}, {\"name\": \"Lines\", \"kind\": \"concept\"}], \"relations\": [{\"src\": \"slope\", \"dst\": \"lines\", \"kind\": \"part_of\"}]}"}
    ]})"));
    LlmExtractor ex(backend, "m");
    Chunk c;
    c.chunk_id = "d:c00000";
    c.heading_path = {"Lines"};
    c.text = "slope";
    Chunk bad = c;
    bad.chunk_id = "d:c00001";
    bad.text = "broken";
    auto report = extract_graph({c, c, c, c, bad}, ex);
    CHECK(report.failures.count("d:c00001") == 1);
    CHECK(by_name(report.graph, "slope", EntityKind::definition).description == "rise over run");
    CHECK(has_relation(report.graph, "slope", "lines", RelationKind::part_of));
}

TEST_CASE("community examples")
{
    auto cliques = toy_index({"a", "b", "c", "d", "e", "f"}, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
    auto const & cs = cliques.communities();
    REQUIRE(cs.size() == 2);
    CHECK(cs[0].members == std::vector<std::string>{"e0001", "e0002", "e0003"});
    CHECK(cs[1].members == std::vector<std::string>{"e0004", "e0005", "e0006"});
    CHECK(cs[0].level == 0);

    auto single = toy_index({"solo"}, {});
    REQUIRE(single.communities().size() == 1);
    CHECK(single.communities()[0].members == std::vector<std::string>{"e0001"});

    auto cycle = toy_index({"a", "b", "c", "d"}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    REQUIRE(cycle.communities().size() == 1);
    CHECK(cycle.communities()[0].members.size() == 4);

    CHECK_THROWS_AS(detect_communities(Graph{}), EmptyGraph);
}

TEST_CASE("communities partition the entity set")
{
    std::mt19937 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        int const n = 1 + static_cast<int>(rng() % 20);
        std::vector<std::string> names;
        for (int i = 0; i < n; ++i)
            names.push_back("n" + std::to_string(i));
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng() % 5 == 0)
                    edges.emplace_back(i, j);
        auto idx = toy_index(names, edges);
        std::multiset<std::string> seen;
        for (auto const & c : idx.communities()) {
            CHECK_FALSE(c.members.empty());
            seen.insert(c.members.begin(), c.members.end());
        }
        CHECK(seen.size() == static_cast<std::size_t>(n));
        CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == seen.size());
        CHECK(detect_communities(idx.graph()) == detect_communities(idx.graph()));
    }
}

TEST_CASE("community summaries")
{
    Graph g;
    g.entities = {{"e0001", "a", "A", EntityKind::concept_, "desc one. more.", {"c"}},
                  {"e0002", "b", "B", EntityKind::concept_, "desc two.", {"c"}},
                  {"e0003", "c", "C", EntityKind::concept_, "", {"c"}}};
    Community ab{"c0000", 0, {"e0001", "e0002"}, ""};
    CHECK(fallback_summary(ab, g) == "A, B \xE2\x80\x94 desc one. desc two.");
    Community c{"c0001", 0, {"e0003"}, ""};
    CHECK(fallback_summary(c, g) == "C");

    g.entities[0].description = std::string(2000, 'x');
    CHECK(fallback_summary(ab, g).size() <= summary_limit);

    auto backend = llm::load_script(nlohmann::json::parse(R"({"rules": [{"reply": "  Scripted summary.\n"}]})"));
    auto out = summarize_communities({ab, c}, g, backend, "m");
    CHECK(out[0].summary == "  Scripted summary.\n");
    CHECK(out[1].summary == "  Scripted summary.\n");
}

TEST_CASE("local retrieval ranks the matching entity's chunks first")
{
    auto idx = build_index({parse_markdown("alg", fixture)});
    auto r = idx.retrieve("discriminant", RetrievalMode::local, 3);
    REQUIRE_FALSE(r.hits.empty());
    Entity const & d = by_name(idx.graph(), "discriminant", EntityKind::definition);
    CHECK(d.source_chunks.count(r.hits[0].chunk_ids[0]) == 1);
    CHECK(r.hits.size() <= 3);
    for (std::size_t i = 1; i < r.hits.size(); ++i)
        CHECK(r.hits[i - 1].score >= r.hits[i].score);

    auto all = idx.retrieve("zzz unknown", RetrievalMode::global, 10000);
    CHECK(all.hits.size() == idx.communities().size());
    auto g = idx.retrieve("quadratic formula roots", RetrievalMode::global, 2);
    CHECK(g.hits.size() == 2);
    CHECK(g.hits[0].score > 0);
    CHECK(g.mode == RetrievalMode::global);

    CHECK(idx.retrieve("discriminant", RetrievalMode::local, 5) == idx.retrieve("discriminant", RetrievalMode::local, 5));
}

TEST_CASE("a depth-3 node is outside the neighborhood")
{
    // seed(0) - a(1), seed - b(2), b - c(3), c - far(4): far is 3 hops out.
    auto idx = toy_index({"seedword", "alpha", "beta", "gamma", "delta"}, {{0, 1}, {0, 2}, {2, 3}, {3, 4}});
    auto r = idx.retrieve("seedword", RetrievalMode::local, 100);
    auto chunks = hit_chunks(r);
    CHECK(chunks == std::set<std::string>{"t:c100", "t:c101", "t:c102", "t:c103"});
    CHECK(r.hits[0].chunk_ids[0] == "t:c100");
    auto big = idx.retrieve("seedword", RetrievalMode::local, 2);
    CHECK(big.hits.size() == 2);
}

TEST_CASE("retrieval against an unbuilt index fails")
{
    KnowledgeIndex empty;
    CHECK_THROWS_AS((void)empty.retrieve("x", RetrievalMode::local, 3), IndexNotBuilt);
    CHECK_THROWS_AS(load_index(std::filesystem::temp_directory_path() / "mtutor-no-such-index"), IndexNotBuilt);
}

TEST_CASE("indexes persist and reload identically")
{
    auto idx = build_index({parse_markdown("alg", fixture)});
    auto dir = std::filesystem::temp_directory_path() / "mtutor-kg-test";
    std::filesystem::remove_all(dir);
    save_index(idx, dir);
    CHECK(std::filesystem::exists(dir / "graph.json"));
    CHECK(std::filesystem::exists(dir / "communities.json"));
    CHECK(std::filesystem::exists(dir / "chunks.jsonl"));
    auto back = load_index(dir);
    CHECK(back.graph() == idx.graph());
    CHECK(back.communities() == idx.communities());
    CHECK(back.chunks() == idx.chunks());
    for (auto q : {"factoring", "derivative power rule", "sign"})
        for (auto mode : {RetrievalMode::local, RetrievalMode::global})
            CHECK(back.retrieve(q, mode, 4) == idx.retrieve(q, mode, 4));
    std::filesystem::remove_all(dir);
}

namespace {

// Independent BM25 (k1 = 1.2, b = 0.75) over whole lowercase words; the toy
// vocabulary has no plurals so no stemming is needed.
std::vector<double> oracle_bm25(std::vector<std::vector<std::string>> const & docs, std::vector<std::string> const & q)
{
    double avg = 0;
    for (auto const & d : docs)
        avg += static_cast<double>(d.size());
    avg /= static_cast<double>(docs.size());
    std::vector<double> out(docs.size(), 0.0);
    std::set<std::string> const uq(q.begin(), q.end());
    for (auto const & t : uq) {
        double df = 0;
        for (auto const & d : docs)
            df += std::count(d.begin(), d.end(), t) > 0;
        if (df == 0)
            continue;
        double const idf = std::log((static_cast<double>(docs.size()) - df + 0.5) / (df + 0.5) + 1);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            double const tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), t));
            if (tf > 0)
                out[i] += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * static_cast<double>(docs[i].size()) / avg));
        }
    }
    return out;
}

} // namespace

TEST_CASE("local retrieval equals brute-force depth-2 enumeration")
{
    std::vector<std::string> const vocab{"root", "slope", "factor", "sign", "graph", "limit", "power", "term"};
    std::mt19937 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        int const n = 2 + static_cast<int>(rng() % 19);
        std::vector<std::string> names;
        std::vector<std::vector<std::string>> docs;
        for (int i = 0; i < n; ++i) {
            std::string name = vocab[rng() % vocab.size()] + std::to_string(i);
            if (rng() % 2)
                name += " " + vocab[rng() % vocab.size()];
            names.push_back(name);
        }
        std::vector<std::pair<int, int>> edges;
        std::vector<double> weights;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (rng() % 6 == 0) {
                    edges.emplace_back(i, j);
                    weights.push_back(1.0 + static_cast<double>(rng() % 3));
                }
        auto idx = toy_index(names, edges, weights);
        for (auto const & e : idx.graph().entities)
            docs.push_back(text::split_whitespace(e.name + " about " + e.name));

        std::string const query = vocab[rng() % vocab.size()] + " " + vocab[rng() % vocab.size()];
        auto const scores = oracle_bm25(docs, text::split_whitespace(query));
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i)
            order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
        std::vector<int> seeds;
        for (int i : order)
            if (scores[i] > 0 && seeds.size() < 3)
                seeds.push_back(i);

        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        for (auto [a, b] : edges)
            adj[a][b] = adj[b][a] = true;
        std::set<std::string> expected;
        for (int s : seeds)
            for (int v = 0; v < n; ++v) {
                bool reach = v == s || adj[s][v];
                for (int m = 0; m < n && !reach; ++m)
                    reach = adj[s][m] && adj[m][v];
                if (reach)
                    expected.insert("t:c" + std::to_string(100 + v));
            }
        auto const got = idx.retrieve(query, RetrievalMode::local, 1000);
        CHECK(hit_chunks(got) == expected);
        for (std::size_t i = 1; i < got.hits.size(); ++i) {
            auto const & a = got.hits[i - 1];
            auto const & b = got.hits[i];
            CHECK((a.score > b.score || (a.score == b.score && a.chunk_ids[0] < b.chunk_ids[0])));
        }
    }
}
