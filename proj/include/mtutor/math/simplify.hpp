#pragma once

#include "mtutor/math/expr.hpp"

namespace mtutor::math {

/// A constant denominator reduced to zero.
class DivisionByZero : public Error
{
public:
    using Error::Error;
};

struct SimplifyResult
{
    Expr expr;
    /// True when the result is a quotient with a non-constant denominator.
    /// Such quotients are not reduced by polynomial division.
    bool rational = false;
};

/// Canonical form: polynomial parts expanded with like terms collected,
/// monomials ordered by total degree (descending) then lexicographically by
/// symbol, rational coefficients reduced. Function arguments are simplified
/// recursively. Square roots of rational constants are reduced to
/// `c*sqrt(n)` with `n` square-free.
Expr simplify(Expr const & e);
SimplifyResult simplify_with_report(Expr const & e);

/// simplify(a - b) == 0. Division by zero on either side is not equivalence.
bool equivalent(Expr const & a, Expr const & b);

/// The exact rational value of a constant expression, if it has one.
std::optional<Rational> rational_value(Expr const & e);

} // namespace mtutor::math
