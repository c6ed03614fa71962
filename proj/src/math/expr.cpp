#include "mtutor/math/expr.hpp"

#include <cmath>
#include <sstream>

namespace mtutor::math {

struct Expr::Node
{
    Op op;
    Rational value;
    std::string name;
    Func func = Func::sin;
    long long exponent = 0;
    std::vector<Expr> kids;
};

std::string_view func_name(Func f)
{
    switch (f) {
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::exp: return "exp";
    case Func::ln: return "ln";
    case Func::sqrt: return "sqrt";
    }
    return "?";
}

bool func_from_name(std::string_view name, Func & out)
{
    for (Func f : {Func::sin, Func::cos, Func::exp, Func::ln, Func::sqrt}) {
        if (func_name(f) == name) {
            out = f;
            return true;
        }
    }
    return false;
}

Expr::Expr()
    : Expr(number(Rational(0)))
{
}

Expr::Expr(std::shared_ptr<Node const> node)
    : node_(std::move(node))
{
}

Expr Expr::number(Rational value)
{
    auto n = std::make_shared<Node>();
    n->op = Op::number;
    n->value = std::move(value);
    return Expr(std::move(n));
}

Expr Expr::number(long long value)
{
    return number(Rational(value));
}

Expr Expr::symbol(std::string name)
{
    auto n = std::make_shared<Node>();
    n->op = Op::symbol;
    n->name = std::move(name);
    return Expr(std::move(n));
}

namespace {

template <class... Kids>
std::shared_ptr<Expr::Node> make(Op op, Kids &&... kids)
{
    auto n = std::make_shared<Expr::Node>();
    n->op = op;
    (n->kids.push_back(std::forward<Kids>(kids)), ...);
    return n;
}

} // namespace

Expr Expr::add(Expr a, Expr b) { return Expr(make(Op::add, std::move(a), std::move(b))); }
Expr Expr::sub(Expr a, Expr b) { return Expr(make(Op::sub, std::move(a), std::move(b))); }
Expr Expr::mul(Expr a, Expr b) { return Expr(make(Op::mul, std::move(a), std::move(b))); }
Expr Expr::div(Expr a, Expr b) { return Expr(make(Op::div, std::move(a), std::move(b))); }
Expr Expr::neg(Expr a) { return Expr(make(Op::neg, std::move(a))); }

Expr Expr::pow(Expr base, long long exponent)
{
    auto n = make(Op::pow, std::move(base));
    n->exponent = exponent;
    return Expr(std::move(n));
}

Expr Expr::call(Func f, Expr arg)
{
    auto n = make(Op::func, std::move(arg));
    n->func = f;
    return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
Rational const & Expr::value() const { return node_->value; }
std::string const & Expr::name() const { return node_->name; }
Func Expr::func() const { return node_->func; }
long long Expr::exponent() const { return node_->exponent; }
Expr const & Expr::lhs() const { return node_->kids.at(0); }
Expr const & Expr::rhs() const { return node_->kids.at(1); }
Expr const & Expr::operand() const { return node_->kids.at(0); }

bool Expr::is_zero() const { return is_number() && value() == 0; }
bool Expr::is_one() const { return is_number() && value() == 1; }

bool operator==(Expr const & a, Expr const & b)
{
    if (a.node_ == b.node_)
        return true;
    Expr::Node const & x = *a.node_;
    Expr::Node const & y = *b.node_;
    if (x.op != y.op || x.kids.size() != y.kids.size())
        return false;
    switch (x.op) {
    case Op::number: return x.value == y.value;
    case Op::symbol: return x.name == y.name;
    case Op::pow:
        if (x.exponent != y.exponent)
            return false;
        break;
    case Op::func:
        if (x.func != y.func)
            return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < x.kids.size(); ++i)
        if (x.kids[i] != y.kids[i])
            return false;
    return true;
}

// ---------------------------------------------------------------------------
// rendering

namespace {

constexpr int prec_add = 1;
constexpr int prec_mul = 2;
constexpr int prec_neg = 3;
constexpr int prec_pow = 4;
constexpr int prec_atom = 5;

bool terminating_decimal(BigInt den, int & places)
{
    int twos = 0;
    int fives = 0;
    while (den % 2 == 0) {
        den /= 2;
        ++twos;
    }
    while (den % 5 == 0) {
        den /= 5;
        ++fives;
    }
    places = std::max(twos, fives);
    return den == 1;
}

std::string decimal_string(Rational const & r, int places)
{
    BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(places));
    BigInt scaled = boost::multiprecision::numerator(r) * scale / boost::multiprecision::denominator(r);
    bool const negative = scaled < 0;
    if (negative)
        scaled = -scaled;
    std::string digits = scaled.str();
    if (static_cast<int>(digits.size()) <= places)
        digits.insert(0, static_cast<std::size_t>(places) - digits.size() + 1, '0');
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
    return negative ? "-" + digits : digits;
}

int precedence(Expr const & e)
{
    switch (e.op()) {
    case Op::number: {
        if (e.value() < 0)
            return prec_neg;
        int places = 0;
        if (boost::multiprecision::denominator(e.value()) == 1
            || terminating_decimal(boost::multiprecision::denominator(e.value()), places))
            return prec_atom;
        return prec_mul;
    }
    case Op::symbol:
    case Op::func: return prec_atom;
    case Op::add:
    case Op::sub: return prec_add;
    case Op::mul:
    case Op::div: return prec_mul;
    case Op::neg: return prec_neg;
    case Op::pow: return prec_pow;
    }
    return prec_atom;
}

void render(Expr const & e, std::string & out);

void render_wrapped(Expr const & e, bool wrap, std::string & out)
{
    if (wrap)
        out.push_back('(');
    render(e, out);
    if (wrap)
        out.push_back(')');
}

void render_binary(Expr const & e, int prec, char const * op, std::string & out)
{
    render_wrapped(e.lhs(), precedence(e.lhs()) < prec, out);
    out.append(op);
    render_wrapped(e.rhs(), precedence(e.rhs()) <= prec, out);
}

void render(Expr const & e, std::string & out)
{
    switch (e.op()) {
    case Op::number: out.append(to_string(e.value())); break;
    case Op::symbol: out.append(e.name()); break;
    case Op::add: render_binary(e, prec_add, " + ", out); break;
    case Op::sub: render_binary(e, prec_add, " - ", out); break;
    case Op::mul: render_binary(e, prec_mul, "*", out); break;
    case Op::div: render_binary(e, prec_mul, "/", out); break;
    case Op::neg:
        out.push_back('-');
        render_wrapped(e.operand(), precedence(e.operand()) < prec_neg, out);
        break;
    case Op::pow:
        render_wrapped(e.lhs(), precedence(e.lhs()) <= prec_pow, out);
        out.push_back('^');
        if (e.exponent() < 0)
            out.append("(" + std::to_string(e.exponent()) + ")");
        else
            out.append(std::to_string(e.exponent()));
        break;
    case Op::func:
        out.append(func_name(e.func()));
        out.push_back('(');
        render(e.operand(), out);
        out.push_back(')');
        break;
    }
}

} // namespace

std::string to_string(Rational const & r)
{
    BigInt const den = boost::multiprecision::denominator(r);
    if (den == 1)
        return boost::multiprecision::numerator(r).str();
    int places = 0;
    if (terminating_decimal(den, places))
        return decimal_string(r, places);
    return boost::multiprecision::numerator(r).str() + "/" + den.str();
}

std::string to_string(Expr const & e)
{
    std::string out;
    render(e, out);
    return out;
}

std::ostream & operator<<(std::ostream & os, Expr const & e)
{
    return os << to_string(e);
}

std::string to_string(Equation const & eq)
{
    return to_string(eq.lhs) + " = " + to_string(eq.rhs);
}

// ---------------------------------------------------------------------------
// traversal

namespace {

void collect_symbols(Expr const & e, std::set<std::string> & out)
{
    switch (e.op()) {
    case Op::number: return;
    case Op::symbol: out.insert(e.name()); return;
    case Op::neg:
    case Op::func:
    case Op::pow: collect_symbols(e.lhs(), out); return;
    default:
        collect_symbols(e.lhs(), out);
        collect_symbols(e.rhs(), out);
    }
}

} // namespace

std::set<std::string> free_symbols(Expr const & e)
{
    std::set<std::string> out;
    collect_symbols(e, out);
    return out;
}

bool contains_symbol(Expr const & e, std::string const & name)
{
    return free_symbols(e).count(name) > 0;
}

Expr substitute(Expr const & e, std::string const & var, Expr const & value)
{
    switch (e.op()) {
    case Op::number: return e;
    case Op::symbol: return e.name() == var ? value : e;
    case Op::add: return Expr::add(substitute(e.lhs(), var, value), substitute(e.rhs(), var, value));
    case Op::sub: return Expr::sub(substitute(e.lhs(), var, value), substitute(e.rhs(), var, value));
    case Op::mul: return Expr::mul(substitute(e.lhs(), var, value), substitute(e.rhs(), var, value));
    case Op::div: return Expr::div(substitute(e.lhs(), var, value), substitute(e.rhs(), var, value));
    case Op::pow: return Expr::pow(substitute(e.lhs(), var, value), e.exponent());
    case Op::neg: return Expr::neg(substitute(e.operand(), var, value));
    case Op::func: return Expr::call(e.func(), substitute(e.operand(), var, value));
    }
    return e;
}

double evaluate(Expr const & e, std::map<std::string, double> const & env)
{
    switch (e.op()) {
    case Op::number: return e.value().convert_to<double>();
    case Op::symbol: {
        auto it = env.find(e.name());
        return it == env.end() ? std::nan("") : it->second;
    }
    case Op::add: return evaluate(e.lhs(), env) + evaluate(e.rhs(), env);
    case Op::sub: return evaluate(e.lhs(), env) - evaluate(e.rhs(), env);
    case Op::mul: return evaluate(e.lhs(), env) * evaluate(e.rhs(), env);
    case Op::div: return evaluate(e.lhs(), env) / evaluate(e.rhs(), env);
    case Op::pow: return std::pow(evaluate(e.lhs(), env), static_cast<double>(e.exponent()));
    case Op::neg: return -evaluate(e.operand(), env);
    case Op::func: {
        double const x = evaluate(e.operand(), env);
        switch (e.func()) {
        case Func::sin: return std::sin(x);
        case Func::cos: return std::cos(x);
        case Func::exp: return std::exp(x);
        case Func::ln: return x > 0 ? std::log(x) : std::nan("");
        case Func::sqrt: return x >= 0 ? std::sqrt(x) : std::nan("");
        }
    }
    }
    return std::nan("");
}

} // namespace mtutor::math
