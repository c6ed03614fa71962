#pragma once

#include "mtutor/math/expr.hpp"

#include <string>
#include <vector>

namespace mtutor::math {

enum class SolveKind
{
    exact,
    numeric,
    unsupported,
};

struct SolveResult
{
    SolveKind kind = SolveKind::unsupported;
    /// Distinct real roots found exactly, ascending.
    std::vector<Expr> exact;
    /// All real roots found (exact ones evaluated), ascending. Only for numeric.
    std::vector<double> approximations;
    std::string method;
    bool complex_roots_exist = false;
    /// The equation holds for every value of the unknown.
    bool identity = false;
    std::string reason;
};

/// Move everything to one side, simplify, and solve p(var) = 0.
///
/// Degree 1 and 2 are solved in closed form (quadratic surds stay
/// symbolic). Higher degrees use a rational-root search with synthetic
/// division; an irreducible residual of degree >= 3 is handled by a
/// sign-change scan over [-1000, 1000] refined by bisection to 1e-9.
/// Anything that is not a polynomial in `var` with rational coefficients
/// is reported as unsupported.
SolveResult solve_equation(Equation const & eq);

/// Exact roots from an exact or numeric result; numeric-only roots are
/// not included.
std::vector<Expr> const & exact_roots(SolveResult const & r);

} // namespace mtutor::math
