#pragma once

#include "mtutor/common/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace mtutor::math {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

enum class Op
{
    number,
    symbol,
    add,
    sub,
    mul,
    div,
    pow,
    neg,
    func,
};

/// Elementary functions understood by the toolkit. `sqrt` only appears in
/// solver output (quadratic surds) and in user input; it is never produced
/// by differentiation of the other four.
enum class Func
{
    sin,
    cos,
    exp,
    ln,
    sqrt,
};

std::string_view func_name(Func f);
bool func_from_name(std::string_view name, Func & out);

/// Immutable expression tree. Copies share structure; equality is structural.
class Expr
{
public:
    Expr();  // the number 0

    static Expr number(Rational value);
    static Expr number(long long value);
    static Expr symbol(std::string name);
    static Expr add(Expr a, Expr b);
    static Expr sub(Expr a, Expr b);
    static Expr mul(Expr a, Expr b);
    static Expr div(Expr a, Expr b);
    static Expr pow(Expr base, long long exponent);
    static Expr neg(Expr a);
    static Expr call(Func f, Expr arg);

    [[nodiscard]] Op op() const;
    [[nodiscard]] Rational const & value() const;        // number
    [[nodiscard]] std::string const & name() const;      // symbol
    [[nodiscard]] Func func() const;                     // func
    [[nodiscard]] long long exponent() const;            // pow
    [[nodiscard]] Expr const & lhs() const;              // binary, pow base
    [[nodiscard]] Expr const & rhs() const;              // binary
    [[nodiscard]] Expr const & operand() const;          // neg, func

    [[nodiscard]] bool is_number() const { return op() == Op::number; }
    [[nodiscard]] bool is_symbol() const { return op() == Op::symbol; }
    [[nodiscard]] bool is_zero() const;
    [[nodiscard]] bool is_one() const;

    friend bool operator==(Expr const & a, Expr const & b);
    friend bool operator!=(Expr const & a, Expr const & b) { return !(a == b); }

    struct Node;  // opaque

private:
    explicit Expr(std::shared_ptr<Node const> node);
    std::shared_ptr<Node const> node_;
};

/// Render in the input grammar; the result reparses to an equal tree.
std::string to_string(Expr const & e);
std::ostream & operator<<(std::ostream & os, Expr const & e);

std::string to_string(Rational const & r);

std::set<std::string> free_symbols(Expr const & e);

bool contains_symbol(Expr const & e, std::string const & name);

Expr substitute(Expr const & e, std::string const & var, Expr const & value);

/// Floating-point evaluation. Unbound symbols and domain errors give NaN;
/// division by zero gives an infinity.
double evaluate(Expr const & e, std::map<std::string, double> const & env);

struct Equation
{
    Expr lhs;
    Expr rhs;
    std::string var;

    friend bool operator==(Equation const &, Equation const &) = default;
};

std::string to_string(Equation const & eq);

} // namespace mtutor::math
