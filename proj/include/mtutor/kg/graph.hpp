#pragma once

#include "mtutor/kg/document.hpp"
#include "mtutor/llm/gateway.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mtutor::kg {

class ExtractorFailure : public Error
{
public:
    using Error::Error;
};

class EmptyGraph : public Error
{
public:
    using Error::Error;
};

enum class EntityKind { concept_, definition, theorem, procedure, example };
enum class RelationKind { prerequisite_of, part_of, related_to, illustrates };

std::string to_string(EntityKind k);
std::string to_string(RelationKind k);
EntityKind entity_kind_from_string(std::string const & s);
RelationKind relation_kind_from_string(std::string const & s);

struct Entity
{
    std::string entity_id;
    /// Canonical, case-folded.
    std::string name;
    /// Name as first written in the source.
    std::string label;
    EntityKind kind = EntityKind::concept_;
    std::string description;
    std::set<std::string> source_chunks;

    bool operator==(Entity const &) const = default;
};

struct Relation
{
    std::string src;
    std::string dst;
    RelationKind kind = RelationKind::related_to;
    double weight = 1.0;

    bool operator==(Relation const &) const = default;
};

struct Graph
{
    std::vector<Entity> entities;
    std::vector<Relation> relations;

    bool operator==(Graph const &) const = default;

    [[nodiscard]] Entity const * find(std::string const & entity_id) const;
    [[nodiscard]] Entity const * find(std::string const & name, EntityKind kind) const;
    /// Undirected weighted projection: summed weights per unordered pair.
    [[nodiscard]] std::map<std::string, std::map<std::string, double>> adjacency() const;
};

/// Per-chunk extractor output. Relations reference entities by name; the
/// kind is optional and resolved against the merged entity set.
struct RawEntity
{
    std::string name;
    EntityKind kind = EntityKind::concept_;
    std::string description;
};

struct RawRelation
{
    std::string src;
    std::string dst;
    RelationKind kind = RelationKind::related_to;
    std::optional<EntityKind> src_kind;
    std::optional<EntityKind> dst_kind;
};

struct ChunkExtraction
{
    std::vector<RawEntity> entities;
    std::vector<RawRelation> relations;
};

class Extractor
{
public:
    virtual ~Extractor() = default;

    /// May throw; a throwing chunk is counted as failed.
    virtual ChunkExtraction extract(Chunk const & chunk) = 0;

    /// Second pass once every entity name is known, for rules that need to
    /// find mentions in free text.
    virtual std::vector<RawRelation> link(Chunk const & chunk, std::vector<Entity> const & entities)
    {
        return {};
    }
};

/// Pattern rules over headings, bold markers and prerequisite phrases.
class DeterministicExtractor final : public Extractor
{
public:
    ChunkExtraction extract(Chunk const & chunk) override;
    std::vector<RawRelation> link(Chunk const & chunk, std::vector<Entity> const & entities) override;
};

/// Prompted extraction; the model must reply with a JSON object
/// {"entities":[{name,kind,description}], "relations":[{src,dst,kind}]}.
class LlmExtractor final : public Extractor
{
public:
    LlmExtractor(llm::BackendHandle backend, std::string model);
    ChunkExtraction extract(Chunk const & chunk) override;

private:
    llm::BackendHandle backend_;
    std::string model_;
};

struct ExtractionReport
{
    Graph graph;
    /// chunk_id -> failure message.
    std::map<std::string, std::string> failures;
};

inline constexpr std::size_t description_limit = 600;

/// Throws ExtractorFailure unless at least 80% of chunks were processed.
ExtractionReport extract_graph(std::vector<Chunk> const & chunks, Extractor & extractor);

struct Community
{
    std::string community_id;
    int level = 0;
    std::vector<std::string> members;
    std::string summary;

    bool operator==(Community const &) const = default;
};

/// Label propagation, level 0 only.
std::vector<Community> detect_communities(Graph const & graph);

inline constexpr std::size_t summary_limit = 800;

/// Without a backend every summary uses the offline construction.
std::vector<Community> summarize_communities(std::vector<Community> communities, Graph const & graph,
                                             llm::BackendHandle const & backend = nullptr,
                                             std::string const & model = "");

std::string fallback_summary(Community const & community, Graph const & graph);

} // namespace mtutor::kg
