#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mtutor::text {

std::string trim(std::string_view s);

/// ASCII case fold; bytes outside A-Z pass through untouched.
std::string fold_case(std::string_view s);

/// Collapse every whitespace run to one space and trim the ends.
std::string normalize_whitespace(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

bool starts_with_ci(std::string_view s, std::string_view prefix);

bool contains_ci(std::string_view haystack, std::string_view needle);

std::string join(std::vector<std::string> const & parts, std::string_view sep);

/// Truncate to at most `max_bytes` without cutting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

/// First sentence of `s` (through the first '.', '!' or '?' followed by
/// whitespace or end of input).
std::string first_sentence(std::string_view s);

/// Split prose into sentences on terminal punctuation.
std::vector<std::string> split_sentences(std::string_view s);

} // namespace mtutor::text
