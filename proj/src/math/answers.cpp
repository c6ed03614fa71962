#include "mtutor/math/answers.hpp"

#include "mtutor/common/text.hpp"
#include "mtutor/math/parser.hpp"
#include "mtutor/math/simplify.hpp"

#include <cctype>

namespace mtutor::math {

namespace {

enum class Lex
{
    number,
    word,
    op,
    equals,
    space,
    other,
};

struct Piece
{
    Lex kind;
    std::size_t begin;
    std::size_t end;
    bool mathy = true;  // words only
};

bool is_function_word(std::string_view w)
{
    Func f{};
    return func_from_name(w, f);
}

std::vector<Piece> scan(std::string_view s)
{
    std::vector<Piece> out;
    std::size_t i = 0;
    auto starts = [&](std::string_view seq) { return s.substr(i, seq.size()) == seq; };
    while (i < s.size()) {
        unsigned char const c = static_cast<unsigned char>(s[i]);
        std::size_t const b = i;
        if (std::isdigit(c)) {
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
                ++i;
            if (i + 1 < s.size() && s[i] == '.' && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
                ++i;
                while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])))
                    ++i;
            }
            out.push_back({Lex::number, b, i});
        } else if (std::isalpha(c)) {
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
                ++i;
            std::string_view const w = s.substr(b, i - b);
            bool const mathy = w.size() == 1 || is_function_word(w);
            out.push_back({Lex::word, b, i, mathy});
        } else if (std::isspace(c)) {
            while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
                ++i;
            out.push_back({Lex::space, b, i});
        } else if (c == '=') {
            ++i;
            out.push_back({Lex::equals, b, i});
        } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^' || c == '(' || c == ')') {
            ++i;
            out.push_back({Lex::op, b, i});
        } else if (starts("−")) {
            i += 3;
            out.push_back({Lex::op, b, i});
        } else if (starts("×") || starts("÷") || starts("·") || starts("²") || starts("³")) {
            i += 2;
            out.push_back({Lex::op, b, i});
        } else {
            // skip the rest of a UTF-8 sequence as one piece
            ++i;
            while (i < s.size() && (static_cast<unsigned char>(s[i]) & 0xC0) == 0x80)
                ++i;
            out.push_back({Lex::other, b, i});
        }
    }
    return out;
}

bool in_run(Piece const & p)
{
    switch (p.kind) {
    case Lex::number:
    case Lex::op:
    case Lex::equals:
    case Lex::space: return true;
    case Lex::word: return p.mathy;
    case Lex::other: return false;
    }
    return false;
}

using Run = std::vector<Piece>;

std::vector<Run> math_runs(std::vector<Piece> const & pieces)
{
    std::vector<Run> runs;
    Run current;
    auto close = [&] {
        while (!current.empty() && current.back().kind == Lex::space)
            current.pop_back();
        std::size_t lead = 0;
        while (lead < current.size() && current[lead].kind == Lex::space)
            ++lead;
        current.erase(current.begin(), current.begin() + static_cast<long>(lead));
        if (!current.empty())
            runs.push_back(current);
        current.clear();
    };
    for (auto const & p : pieces) {
        if (in_run(p))
            current.push_back(p);
        else
            close();
    }
    close();
    return runs;
}

bool is_trailing_junk(std::string_view s, Piece const & p)
{
    if (p.kind == Lex::space || p.kind == Lex::equals)
        return true;
    if (p.kind != Lex::op)
        return false;
    std::string_view const t = s.substr(p.begin, p.end - p.begin);
    return t != ")" && t != "²" && t != "³";
}

bool is_leading_junk(std::string_view s, Piece const & p)
{
    if (p.kind == Lex::space || p.kind == Lex::equals)
        return true;
    if (p.kind != Lex::op)
        return false;
    std::string_view const t = s.substr(p.begin, p.end - p.begin);
    return t != "(" && t != "-" && t != "−";
}

/// Trim a segment of pieces to something plausibly parseable.
Run tidy(std::string_view s, Run seg)
{
    while (!seg.empty() && is_trailing_junk(s, seg.back()))
        seg.pop_back();
    std::size_t lead = 0;
    while (lead < seg.size() && is_leading_junk(s, seg[lead]))
        ++lead;
    seg.erase(seg.begin(), seg.begin() + static_cast<long>(lead));

    auto text_of = [&](Piece const & p) { return s.substr(p.begin, p.end - p.begin); };
    for (;;) {
        int depth = 0;
        for (auto const & p : seg) {
            if (p.kind == Lex::op && text_of(p) == "(")
                ++depth;
            else if (p.kind == Lex::op && text_of(p) == ")")
                --depth;
        }
        if (depth > 0 && !seg.empty() && text_of(seg.front()) == "(")
            seg.erase(seg.begin());
        else if (depth < 0 && !seg.empty() && text_of(seg.back()) == ")")
            seg.pop_back();
        else
            break;
    }
    return seg;
}

std::optional<Expr> try_parse(std::string_view s, Run const & seg)
{
    if (seg.empty())
        return std::nullopt;
    try {
        return parse(s.substr(seg.front().begin, seg.back().end - seg.front().begin));
    } catch (Error const &) {
        return std::nullopt;
    }
}

bool has_digit(Run const & seg)
{
    for (auto const & p : seg)
        if (p.kind == Lex::number)
            return true;
    return false;
}

bool is_lone_symbol(std::string_view s, Run const & seg)
{
    return seg.size() == 1 && seg[0].kind == Lex::word && seg[0].mathy
        && !is_function_word(s.substr(seg[0].begin, seg[0].end - seg[0].begin));
}

std::size_t final_sentence_begin(std::string_view s)
{
    std::size_t last = 0;
    std::size_t end = s.size();
    while (end > 0 && (std::isspace(static_cast<unsigned char>(s[end - 1]))
                       || s[end - 1] == '.' || s[end - 1] == '?' || s[end - 1] == '!'))
        --end;
    for (std::size_t i = 0; i < end; ++i) {
        char const c = s[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == s.size() || std::isspace(static_cast<unsigned char>(s[i + 1]))))
            last = i + 1;
    }
    return last;
}

AnswerSpan make_span(std::string_view s, SpanKind kind, std::size_t b, std::size_t e, Run const & value_seg, Expr value)
{
    AnswerSpan span;
    span.kind = kind;
    span.begin = b;
    span.end = e;
    span.text = std::string(s.substr(b, e - b));
    span.value_begin = value_seg.front().begin;
    span.value_end = value_seg.back().end;
    span.value = std::move(value);
    return span;
}

} // namespace

std::vector<AnswerSpan> extract_answer_spans(std::string_view text)
{
    std::vector<AnswerSpan> spans;
    auto const pieces = scan(text);
    std::size_t const tail = final_sentence_begin(text);

    for (auto const & run : math_runs(pieces)) {
        std::vector<Run> segments(1);
        for (auto const & p : run) {
            if (p.kind == Lex::equals)
                segments.emplace_back();
            else
                segments.back().push_back(p);
        }
        for (auto & seg : segments)
            seg = tidy(text, seg);

        for (std::size_t i = 0; i < segments.size(); ++i) {
            Run const & seg = segments[i];
            if (seg.empty())
                continue;
            auto value = try_parse(text, seg);
            if (!value)
                continue;
            bool const assigned = i > 0 && is_lone_symbol(text, segments[i - 1]);
            if (assigned) {
                spans.push_back(make_span(text, SpanKind::assignment, segments[i - 1].front().begin, seg.back().end,
                                          seg, *value));
                continue;
            }
            bool const constant = free_symbols(*value).empty();
            if (constant && has_digit(seg)) {
                spans.push_back(make_span(text, SpanKind::literal, seg.front().begin, seg.back().end, seg, *value));
                continue;
            }
            bool const followed_by_assignment = i + 1 < segments.size() && is_lone_symbol(text, seg);
            if (!constant && !followed_by_assignment && seg.front().begin >= tail)
                spans.push_back(make_span(text, SpanKind::expression, seg.front().begin, seg.back().end, seg, *value));
        }
    }
    return spans;
}

std::vector<Expr> answer_candidates(std::string_view text)
{
    auto const spans = extract_answer_spans(text);
    std::vector<Expr> assigned;
    std::vector<Expr> final_literals;
    std::vector<Expr> literals;
    std::size_t const tail = final_sentence_begin(text);
    for (auto const & s : spans) {
        if (s.kind == SpanKind::assignment) {
            if (free_symbols(s.value).empty())
                assigned.push_back(s.value);
        } else if (s.kind == SpanKind::literal) {
            literals.push_back(s.value);
            if (s.begin >= tail)
                final_literals.push_back(s.value);
        }
    }
    if (!assigned.empty())
        return assigned;
    if (!final_literals.empty())
        return final_literals;
    return literals;
}

std::optional<Equation> find_equation(std::string_view text)
{
    auto const pieces = scan(text);
    for (auto const & run : math_runs(pieces)) {
        std::vector<Run> segments(1);
        for (auto const & p : run) {
            if (p.kind == Lex::equals)
                segments.emplace_back();
            else
                segments.back().push_back(p);
        }
        if (segments.size() != 2)
            continue;
        Run const lhs = tidy(text, segments[0]);
        Run const rhs = tidy(text, segments[1]);
        auto l = try_parse(text, lhs);
        auto r = try_parse(text, rhs);
        if (!l || !r)
            continue;
        if (is_lone_symbol(text, lhs) && free_symbols(*r).empty())
            continue;
        if (free_symbols(*l).empty() && free_symbols(*r).empty())
            continue;
        std::string const src(text.substr(lhs.front().begin, rhs.back().end - lhs.front().begin));
        try {
            return parse_equation(src);
        } catch (Error const &) {
            continue;
        }
    }
    return std::nullopt;
}

std::vector<Expr> parse_answer_list(std::string_view raw, std::string const & var)
{
    std::string const t = text::fold_case(text::trim(raw));
    for (std::string_view empty : {"none", "no solution", "no real solution", "no real solutions", "∅", "{}"})
        if (t == empty)
            return {};

    std::string s(raw);
    for (char & c : s)
        if (c == '{' || c == '}' || c == ';')
            c = ',';
    std::vector<std::string> pieces;
    std::string current;
    auto flush = [&] {
        auto p = text::trim(current);
        if (!p.empty())
            pieces.push_back(p);
        current.clear();
    };
    std::string const folded = text::fold_case(s);
    for (std::size_t i = 0; i < s.size();) {
        if (s[i] == ',') {
            flush();
            ++i;
        } else if (folded.compare(i, 4, " or ") == 0) {
            flush();
            i += 4;
        } else if (folded.compare(i, 5, " and ") == 0) {
            flush();
            i += 5;
        } else {
            current.push_back(s[i++]);
        }
    }
    flush();

    std::vector<Expr> out;
    for (auto const & piece : pieces) {
        std::string_view value = piece;
        auto const eq = value.find('=');
        if (eq != std::string_view::npos) {
            std::string const lhs = text::trim(value.substr(0, eq));
            if (!var.empty() && lhs != var)
                throw SyntaxError("answer assigns '" + lhs + "' instead of '" + var + "'", 0);
            value = value.substr(eq + 1);
        }
        out.push_back(parse(value));
    }
    return out;
}

bool contains_equivalent(std::vector<Expr> const & haystack, Expr const & needle)
{
    for (auto const & h : haystack)
        if (equivalent(h, needle))
            return true;
    return false;
}

bool same_answer_set(std::vector<Expr> const & a, std::vector<Expr> const & b)
{
    for (auto const & x : a)
        if (!contains_equivalent(b, x))
            return false;
    for (auto const & y : b)
        if (!contains_equivalent(a, y))
            return false;
    return true;
}

} // namespace mtutor::math
