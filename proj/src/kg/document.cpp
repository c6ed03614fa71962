#include "mtutor/kg/document.hpp"

#include "mtutor/common/text.hpp"

#include <cctype>
#include <cstdio>

namespace mtutor::kg {

namespace {

/// Heading level 1..3 of a Markdown line, or 0.
int heading_level(std::string_view line, std::string & title)
{
    std::size_t n = 0;
    while (n < line.size() && line[n] == '#')
        ++n;
    if (n == 0 || n > 3 || n >= line.size() || line[n] != ' ')
        return 0;
    std::string t = text::trim(line.substr(n + 1));
    while (!t.empty() && t.back() == '#')
        t.pop_back();
    title = text::trim(t);
    return title.empty() ? 0 : static_cast<int>(n);
}

struct Token
{
    std::size_t begin;
    std::size_t end;
};

std::vector<Token> tokenize(std::string_view body)
{
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < body.size()) {
        while (i < body.size() && std::isspace(static_cast<unsigned char>(body[i])))
            ++i;
        if (i == body.size())
            break;
        std::size_t const b = i;
        while (i < body.size() && !std::isspace(static_cast<unsigned char>(body[i])))
            ++i;
        out.push_back({b, i});
    }
    return out;
}

} // namespace

SourceDocument parse_markdown(std::string doc_id, std::string_view markdown)
{
    SourceDocument doc;
    doc.doc_id = std::move(doc_id);
    doc.title = doc.doc_id;

    std::vector<std::string> path;
    std::vector<int> levels;
    std::string body;
    bool in_fence = false;
    bool have_heading = false;

    auto flush = [&] {
        if (!text::trim(body).empty()) {
            Section s;
            s.heading_path = path.empty() ? std::vector<std::string>{doc.title} : path;
            s.body = text::trim(body);
            doc.sections.push_back(std::move(s));
        }
        body.clear();
    };

    for (std::string const & line : text::split_lines(markdown)) {
        if (text::starts_with_ci(text::trim(line), "```"))
            in_fence = !in_fence;
        std::string title;
        int const level = in_fence ? 0 : heading_level(line, title);
        if (level == 0) {
            body += line;
            body += '\n';
            continue;
        }
        flush();
        if (level == 1 && !have_heading)
            doc.title = title;
        have_heading = true;
        while (!levels.empty() && levels.back() >= level) {
            levels.pop_back();
            path.pop_back();
        }
        levels.push_back(level);
        path.push_back(title);
    }
    flush();
    return doc;
}

std::vector<Chunk> ingest(SourceDocument const & doc, ChunkOptions options)
{
    if (!(options.chunk_size_max > options.overlap))
        throw PreconditionError("chunk_size_max must exceed overlap");
    std::vector<Chunk> chunks;
    std::size_t const step = options.chunk_size_max - options.overlap;
    for (std::size_t si = 0; si < doc.sections.size(); ++si) {
        Section const & section = doc.sections[si];
        if (section.heading_path.empty())
            throw PreconditionError("section without a heading path in " + doc.doc_id);
        auto const tokens = tokenize(section.body);
        if (tokens.empty())
            continue;
        std::size_t prev_end = 0;
        for (std::size_t start = 0;; start += step) {
            std::size_t const stop = std::min(start + options.chunk_size_max, tokens.size());
            Chunk c;
            char id[32];
            std::snprintf(id, sizeof id, ":c%05zu", chunks.size());
            c.chunk_id = doc.doc_id + id;
            c.doc_id = doc.doc_id;
            c.heading_path = section.heading_path;
            std::size_t const b = tokens[start].begin;
            std::size_t const e = tokens[stop - 1].end;
            c.text = section.body.substr(b, e - b);
            c.token_count = stop - start;
            c.section_index = si;
            if (start > 0 && prev_end > b)
                c.overlap_bytes = prev_end - b;
            else if (start > 0)
                c.gap = section.body.substr(prev_end, b - prev_end);
            prev_end = e;
            chunks.push_back(std::move(c));
            if (stop == tokens.size())
                break;
        }
    }
    if (chunks.empty())
        throw EmptyDocument("document " + doc.doc_id + " has no content");
    return chunks;
}

} // namespace mtutor::kg
