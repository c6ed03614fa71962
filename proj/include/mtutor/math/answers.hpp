#pragma once

#include "mtutor/math/expr.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mtutor::math {

enum class SpanKind
{
    assignment,  // `x = 2`
    literal,     // a constant expression standing alone: `4/2`, `-3`
    expression,  // a non-constant expression in the final sentence
};

/// A stretch of prose that parses as a mathematical value.
struct AnswerSpan
{
    SpanKind kind = SpanKind::literal;
    std::string text;             // whole span, e.g. "x = 2"
    std::size_t begin = 0;        // byte range of `text`
    std::size_t end = 0;
    std::size_t value_begin = 0;  // byte range of the value part ("2")
    std::size_t value_end = 0;
    Expr value;
};

/// Scan prose for candidate answer values: `var = expr` assignments,
/// standalone constant expressions, and non-constant expressions in the
/// final sentence. Fragments that fail to parse are skipped.
std::vector<AnswerSpan> extract_answer_spans(std::string_view text);

/// Values a student message offers as an answer: the assignments if any,
/// else the constant literals of the final sentence, else every literal.
std::vector<Expr> answer_candidates(std::string_view text);

/// The first equation to solve stated in `text` (an `=` with an unknown on
/// some side that is not a plain `var = constant` assignment).
std::optional<Equation> find_equation(std::string_view text);

/// Parse an answer list such as "x = 2, x = 3", "2 or 3" or "{1/2}".
/// "none", "no solution", "no real solution" and "∅" give an empty list.
/// Throws SyntaxError on the first piece that does not parse.
std::vector<Expr> parse_answer_list(std::string_view text, std::string const & var = {});

/// Set equivalence under `equivalent`: every element of each side matches
/// some element of the other.
bool same_answer_set(std::vector<Expr> const & a, std::vector<Expr> const & b);

/// True when some element of `haystack` is equivalent to `needle`.
bool contains_equivalent(std::vector<Expr> const & haystack, Expr const & needle);

} // namespace mtutor::math
