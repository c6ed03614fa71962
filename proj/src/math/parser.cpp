#include "mtutor/math/parser.hpp"

#include <cctype>
#include <vector>

namespace mtutor::math {

SyntaxError::SyntaxError(std::string const & message, std::size_t offset)
    : Error(message + " at offset " + std::to_string(offset))
    , offset_(offset)
{
}

namespace {

enum class Tok
{
    number,
    ident,
    plus,
    minus,
    star,
    slash,
    caret,
    lparen,
    rparen,
    end,
};

struct Token
{
    Tok kind;
    std::size_t offset;
    std::string text;
    Rational number;
};

constexpr long long max_exponent = 10000;

Rational parse_decimal(std::string const & digits)
{
    auto const dot = digits.find('.');
    if (dot == std::string::npos)
        return Rational(BigInt(digits));
    std::string const whole = digits.substr(0, dot);
    std::string const frac = digits.substr(dot + 1);
    BigInt num(whole.empty() ? std::string("0") : whole);
    BigInt scale = 1;
    for (char c : frac) {
        num = num * 10 + (c - '0');
        scale *= 10;
    }
    return Rational(num, scale);
}

std::vector<Token> lex(std::string_view s)
{
    std::vector<Token> out;
    std::size_t i = 0;
    auto push = [&](Tok k, std::size_t at, std::string text = {}) {
        out.push_back(Token{k, at, std::move(text), Rational(0)});
    };
    auto utf8_is = [&](std::size_t at, std::string_view seq) {
        return s.substr(at, seq.size()) == seq;
    };
    while (i < s.size()) {
        unsigned char const c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (std::isdigit(c) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            std::size_t const b = i;
            bool seen_dot = false;
            while (i < s.size()) {
                char const d = s[i];
                if (std::isdigit(static_cast<unsigned char>(d))) {
                    ++i;
                } else if (d == '.' && !seen_dot && i + 1 < s.size()
                           && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
                    seen_dot = true;
                    ++i;
                } else {
                    break;
                }
            }
            Token t{Tok::number, b, std::string(s.substr(b, i - b)), Rational(0)};
            t.number = parse_decimal(t.text);
            out.push_back(std::move(t));
            continue;
        }
        if (std::isalpha(c)) {
            std::size_t const b = i;
            while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_'))
                ++i;
            push(Tok::ident, b, std::string(s.substr(b, i - b)));
            continue;
        }
        switch (c) {
        case '+': push(Tok::plus, i); ++i; continue;
        case '-': push(Tok::minus, i); ++i; continue;
        case '*': push(Tok::star, i); ++i; continue;
        case '/': push(Tok::slash, i); ++i; continue;
        case '^': push(Tok::caret, i); ++i; continue;
        case '(':
        case '[': push(Tok::lparen, i); ++i; continue;
        case ')':
        case ']': push(Tok::rparen, i); ++i; continue;
        default: break;
        }
        if (utf8_is(i, "−")) {  // minus sign
            push(Tok::minus, i);
            i += 3;
            continue;
        }
        if (utf8_is(i, "×") || utf8_is(i, "·")) {
            push(Tok::star, i);
            i += 2;
            continue;
        }
        if (utf8_is(i, "÷")) {
            push(Tok::slash, i);
            i += 2;
            continue;
        }
        if (utf8_is(i, "²") || utf8_is(i, "³")) {
            push(Tok::caret, i);
            Token t{Tok::number, i, utf8_is(i, "²") ? "2" : "3", Rational(0)};
            t.number = parse_decimal(t.text);
            out.push_back(std::move(t));
            i += 2;
            continue;
        }
        throw SyntaxError("unexpected character", i);
    }
    push(Tok::end, s.size());
    return out;
}

std::optional<Rational> constant_value(Expr const & e)
{
    switch (e.op()) {
    case Op::number: return e.value();
    case Op::neg: {
        auto v = constant_value(e.operand());
        if (!v)
            return std::nullopt;
        return Rational(-*v);
    }
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
        auto a = constant_value(e.lhs());
        auto b = constant_value(e.rhs());
        if (!a || !b)
            return std::nullopt;
        if (e.op() == Op::add)
            return Rational(*a + *b);
        if (e.op() == Op::sub)
            return Rational(*a - *b);
        if (e.op() == Op::mul)
            return Rational(*a * *b);
        if (*b == 0)
            return std::nullopt;
        return Rational(*a / *b);
    }
    case Op::pow: {
        auto a = constant_value(e.lhs());
        if (!a || (*a == 0 && e.exponent() < 0))
            return std::nullopt;
        Rational r = 1;
        long long const n = e.exponent() < 0 ? -e.exponent() : e.exponent();
        for (long long k = 0; k < n; ++k)
            r *= *a;
        return e.exponent() < 0 ? Rational(1 / r) : r;
    }
    default: return std::nullopt;
    }
}

class Parser
{
public:
    explicit Parser(std::string_view text)
        : tokens_(lex(text))
    {
    }

    Expr parse_all()
    {
        Expr e = expression();
        if (peek().kind != Tok::end)
            throw SyntaxError("unexpected token '" + describe(peek()) + "'", peek().offset);
        return e;
    }

private:
    Token const & peek() const { return tokens_[pos_]; }
    Token const & advance() { return tokens_[pos_++]; }

    static std::string describe(Token const & t)
    {
        switch (t.kind) {
        case Tok::number:
        case Tok::ident: return t.text;
        case Tok::plus: return "+";
        case Tok::minus: return "-";
        case Tok::star: return "*";
        case Tok::slash: return "/";
        case Tok::caret: return "^";
        case Tok::lparen: return "(";
        case Tok::rparen: return ")";
        case Tok::end: return "end of input";
        }
        return "?";
    }

    void expect(Tok kind, char const * what)
    {
        if (peek().kind != kind)
            throw SyntaxError(std::string("expected ") + what, peek().offset);
        advance();
    }

    Expr expression()
    {
        Expr acc = term();
        while (peek().kind == Tok::plus || peek().kind == Tok::minus) {
            bool const plus = advance().kind == Tok::plus;
            Expr rhs = term();
            acc = plus ? Expr::add(std::move(acc), std::move(rhs)) : Expr::sub(std::move(acc), std::move(rhs));
        }
        return acc;
    }

    Expr term()
    {
        Expr acc = unary();
        for (;;) {
            Tok const k = peek().kind;
            if (k == Tok::star || k == Tok::slash) {
                advance();
                Expr rhs = unary();
                acc = k == Tok::star ? Expr::mul(std::move(acc), std::move(rhs)) : Expr::div(std::move(acc), std::move(rhs));
            } else if (k == Tok::number || k == Tok::ident || k == Tok::lparen) {
                acc = Expr::mul(std::move(acc), power());
            } else {
                return acc;
            }
        }
    }

    Expr unary()
    {
        if (peek().kind == Tok::minus) {
            advance();
            return Expr::neg(unary());
        }
        if (peek().kind == Tok::plus) {
            advance();
            return unary();
        }
        return power();
    }

    Expr power()
    {
        Expr base = primary();
        if (peek().kind != Tok::caret)
            return base;
        advance();
        std::size_t const at = peek().offset;
        Expr exponent = exponent_operand();
        auto value = constant_value(exponent);
        if (!value || boost::multiprecision::denominator(*value) != 1)
            throw SyntaxError("exponent must be an integer constant", at);
        BigInt const n = boost::multiprecision::numerator(*value);
        if (n > max_exponent || n < -max_exponent)
            throw SyntaxError("exponent out of range", at);
        return Expr::pow(std::move(base), n.convert_to<long long>());
    }

    Expr exponent_operand()
    {
        if (peek().kind == Tok::minus) {
            advance();
            return Expr::neg(exponent_operand());
        }
        return power();
    }

    Expr primary()
    {
        Token const & t = peek();
        switch (t.kind) {
        case Tok::number:
            advance();
            return Expr::number(t.number);
        case Tok::ident: {
            advance();
            Func f{};
            if (func_from_name(t.text, f)) {
                expect(Tok::lparen, "'(' after function name");
                Expr arg = expression();
                expect(Tok::rparen, "')'");
                return Expr::call(f, std::move(arg));
            }
            return Expr::symbol(t.text);
        }
        case Tok::lparen: {
            advance();
            Expr inner = expression();
            expect(Tok::rparen, "')'");
            return inner;
        }
        case Tok::end: throw SyntaxError("unexpected end of input", t.offset);
        default: throw SyntaxError("unexpected token '" + describe(t) + "'", t.offset);
        }
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

} // namespace

Expr parse(std::string_view text)
{
    return Parser(text).parse_all();
}

Equation parse_equation(std::string_view text, std::string_view var)
{
    auto const eq = text.find('=');
    if (eq == std::string_view::npos)
        throw SyntaxError("expected '='", text.size());
    if (text.find('=', eq + 1) != std::string_view::npos)
        throw SyntaxError("more than one '='", text.find('=', eq + 1));

    Expr lhs;
    Expr rhs;
    try {
        lhs = parse(text.substr(0, eq));
    } catch (SyntaxError const & e) {
        throw SyntaxError("left side: malformed expression", e.offset());
    }
    try {
        rhs = parse(text.substr(eq + 1));
    } catch (SyntaxError const & e) {
        throw SyntaxError("right side: malformed expression", eq + 1 + e.offset());
    }

    auto symbols = free_symbols(lhs);
    auto const more = free_symbols(rhs);
    symbols.insert(more.begin(), more.end());

    std::string unknown(var);
    if (unknown.empty()) {
        if (symbols.size() == 1)
            unknown = *symbols.begin();
        else if (symbols.count("x"))
            unknown = "x";
        else
            throw SyntaxError("cannot infer the unknown", 0);
    }
    if (!symbols.count(unknown))
        throw SyntaxError("variable '" + unknown + "' does not occur", 0);
    return Equation{std::move(lhs), std::move(rhs), std::move(unknown)};
}

} // namespace mtutor::math
