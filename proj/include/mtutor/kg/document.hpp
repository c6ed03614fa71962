#pragma once

#include "mtutor/common/error.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mtutor::kg {

class EmptyDocument : public Error
{
public:
    using Error::Error;
};

struct Section
{
    std::vector<std::string> heading_path;
    std::string body;
};

struct SourceDocument
{
    std::string doc_id;
    std::string title;
    std::vector<Section> sections;
};

/// Split Markdown into sections on `#`, `##` and `###` headings. Deeper
/// headings stay in the body. Text before the first heading is filed under
/// the document title; sections whose body is blank are dropped.
SourceDocument parse_markdown(std::string doc_id, std::string_view markdown);

struct Chunk
{
    std::string chunk_id;
    std::string doc_id;
    std::vector<std::string> heading_path;
    std::string text;
    std::size_t token_count = 0;
    std::size_t section_index = 0;
    /// Byte length of the prefix of `text` repeated from the previous chunk
    /// of the same section (0 for the first chunk of a section).
    std::size_t overlap_bytes = 0;
    /// Whitespace between the previous chunk of the section and this one
    /// when the two do not overlap.
    std::string gap;

    bool operator==(Chunk const &) const = default;
};

struct ChunkOptions
{
    std::size_t chunk_size_max = 600;
    std::size_t overlap = 100;
};

/// Sliding-window chunking over whitespace tokens, one window sequence per
/// section. Chunk text is the exact body slice from the first to the last
/// token of the window.
std::vector<Chunk> ingest(SourceDocument const & doc, ChunkOptions options = {});

} // namespace mtutor::kg
