#pragma once

// Internal multivariate polynomial / rational-function representation used
// by simplify and the solver. Not part of the public surface.

#include "mtutor/math/expr.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mtutor::math::detail {

/// One atom raised to a positive power. Atoms are symbols or opaque
/// function calls with canonical arguments. `radicand` is set for
/// sqrt(n) with n a square-free integer > 1; its square reduces to n.
struct Factor
{
    Expr atom;
    long long exp = 1;
    std::optional<BigInt> radicand;
};

using Monomial = std::map<std::string, Factor>;

struct Term
{
    Monomial mono;
    Rational coeff;
};

class Poly
{
public:
    Poly() = default;
    static Poly constant(Rational c);
    static Poly atom(std::string key, Expr atom, std::optional<BigInt> radicand = std::nullopt);

    [[nodiscard]] bool is_zero() const { return terms_.empty(); }
    [[nodiscard]] bool is_constant() const;
    [[nodiscard]] Rational constant_value() const;  // valid when is_constant()
    [[nodiscard]] std::size_t size() const { return terms_.size(); }
    [[nodiscard]] std::map<std::string, Term> const & terms() const { return terms_; }

    /// Terms in canonical order (degree descending, then lexicographic).
    [[nodiscard]] std::vector<Term> ordered() const;

    Poly operator+(Poly const & o) const;
    Poly operator-(Poly const & o) const;
    Poly operator*(Poly const & o) const;
    Poly scaled(Rational const & c) const;
    Poly negated() const { return scaled(Rational(-1)); }
    Poly power(long long n) const;

    /// Divide every term by `mono` (must divide each term exactly).
    Poly divided_by(Monomial const & mono) const;

    friend bool operator==(Poly const & a, Poly const & b);

private:
    void add_term(Monomial mono, Rational coeff);
    std::map<std::string, Term> terms_;
};

std::string monomial_key(Monomial const & m);
long long total_degree(Monomial const & m);

struct RatFunc
{
    Poly num;
    Poly den = Poly::constant(Rational(1));
};

/// Convert to a normalized rational function. Throws DivisionByZero.
RatFunc to_ratfunc(Expr const & e);

Expr to_expr(Poly const & p);
Expr to_expr(RatFunc const & f);

/// Coefficients (index = power) when `p` is a polynomial in `var` alone
/// with rational coefficients.
std::optional<std::vector<Rational>> univariate_coefficients(Poly const & p, std::string const & var);

/// n = s^2 * r with r square-free; returns (s, r). Requires n >= 0.
std::pair<BigInt, BigInt> split_square(BigInt n);

/// sqrt of a non-negative rational in canonical `c*sqrt(r)` form.
Expr sqrt_of(Rational const & value);

} // namespace mtutor::math::detail
