#include "mtutor/common/text.hpp"

#include <algorithm>
#include <cctype>

namespace mtutor::text {

namespace {

bool is_space(char c)
{
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_terminal(std::string_view s, std::size_t i)
{
    char const c = s[i];
    if (c != '.' && c != '!' && c != '?')
        return false;
    return i + 1 == s.size() || is_space(s[i + 1]);
}

} // namespace

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b]))
        ++b;
    while (e > b && is_space(s[e - 1]))
        --e;
    return std::string(s.substr(b, e - b));
}

std::string fold_case(std::string_view s)
{
    std::string out(s);
    for (auto & c : out)
        if (c >= 'A' && c <= 'Z')
            c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::string normalize_whitespace(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> split_whitespace(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i]))
            ++i;
        std::size_t const b = i;
        while (i < s.size() && !is_space(s[i]))
            ++i;
        if (i > b)
            out.emplace_back(s.substr(b, i - b));
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t b = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            std::string_view line = s.substr(b, i - b);
            if (!line.empty() && line.back() == '\r')
                line.remove_suffix(1);
            if (i < s.size() || !line.empty())
                out.emplace_back(line);
            b = i + 1;
        }
    }
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix)
{
    if (prefix.size() > s.size())
        return false;
    return fold_case(s.substr(0, prefix.size())) == fold_case(prefix);
}

bool contains_ci(std::string_view haystack, std::string_view needle)
{
    return fold_case(haystack).find(fold_case(needle)) != std::string::npos;
}

std::string join(std::vector<std::string> const & parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0)
            out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes)
{
    if (s.size() <= max_bytes)
        return std::string(s);
    std::size_t cut = max_bytes;
    // back off continuation bytes (10xxxxxx)
    while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80)
        --cut;
    return std::string(s.substr(0, cut));
}

std::string first_sentence(std::string_view s)
{
    std::string const t = trim(s);
    for (std::size_t i = 0; i < t.size(); ++i)
        if (is_terminal(t, i))
            return t.substr(0, i + 1);
    return t;
}

std::vector<std::string> split_sentences(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t b = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (is_terminal(s, i)) {
            auto sentence = trim(s.substr(b, i + 1 - b));
            if (!sentence.empty())
                out.push_back(std::move(sentence));
            b = i + 1;
        }
    }
    auto rest = trim(s.substr(std::min(b, s.size())));
    if (!rest.empty())
        out.push_back(std::move(rest));
    return out;
}

} // namespace mtutor::text
