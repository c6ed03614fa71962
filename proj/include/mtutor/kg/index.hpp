#pragma once

#include "mtutor/kg/bm25.hpp"
#include "mtutor/kg/graph.hpp"

#include <filesystem>
#include <memory>

namespace mtutor::kg {

class IndexNotBuilt : public Error
{
public:
    using Error::Error;
};

enum class RetrievalMode { local, global };

std::string to_string(RetrievalMode m);
RetrievalMode retrieval_mode_from_string(std::string const & s);

struct Hit
{
    std::string text;
    double score = 0;
    std::vector<std::string> entity_ids;
    std::vector<std::string> chunk_ids;

    bool operator==(Hit const &) const = default;
};

struct RetrievalResult
{
    RetrievalMode mode = RetrievalMode::local;
    std::vector<Hit> hits;
    std::string query;

    bool operator==(RetrievalResult const &) const = default;
};

inline constexpr std::size_t seed_count = 3;
inline constexpr int expansion_depth = 2;

/// Immutable once built. Share through shared_ptr<KnowledgeIndex const>.
class KnowledgeIndex
{
public:
    KnowledgeIndex() = default;
    KnowledgeIndex(std::vector<Chunk> chunks, Graph graph, std::vector<Community> communities);
    KnowledgeIndex(KnowledgeIndex &&) noexcept = default;
    KnowledgeIndex & operator=(KnowledgeIndex &&) noexcept = default;

    [[nodiscard]] bool built() const { return built_; }
    [[nodiscard]] std::vector<Chunk> const & chunks() const { return chunks_; }
    [[nodiscard]] Graph const & graph() const { return graph_; }
    [[nodiscard]] std::vector<Community> const & communities() const { return communities_; }
    [[nodiscard]] Chunk const * chunk(std::string const & chunk_id) const;

    /// BM25 over entity name plus description, in graph entity order.
    [[nodiscard]] std::vector<double> entity_scores(std::string_view query) const;

    /// Best proximity from `seed` to every entity within expansion_depth
    /// hops: the product of w / max_w along the path times 0.5 per hop.
    [[nodiscard]] std::map<std::string, double> neighborhood(std::string const & seed) const;

    [[nodiscard]] RetrievalResult retrieve(std::string const & query, RetrievalMode mode, std::size_t k) const;

private:
    bool built_ = false;
    std::vector<Chunk> chunks_;
    Graph graph_;
    std::vector<Community> communities_;
    std::map<std::string, std::size_t> chunk_pos_;
    std::map<std::string, std::map<std::string, double>> adjacency_;
    double max_weight_ = 1.0;
    std::unique_ptr<Bm25> entity_bm25_;
    std::unique_ptr<Bm25> community_bm25_;
};

struct BuildOptions
{
    ChunkOptions chunking;
    /// Null selects the deterministic extractor.
    Extractor * extractor = nullptr;
    /// Null selects offline community summaries.
    llm::BackendHandle summarizer;
    std::string model;
};

KnowledgeIndex build_index(std::vector<SourceDocument> const & docs, BuildOptions const & options = {});

/// Writes graph.json, communities.json and chunks.jsonl.
void save_index(KnowledgeIndex const & index, std::filesystem::path const & dir);

/// Throws IndexNotBuilt when any of the three files is missing.
KnowledgeIndex load_index(std::filesystem::path const & dir);

} // namespace mtutor::kg
