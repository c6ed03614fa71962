#include "mtutor/math/solver.hpp"

#include "mtutor/math/simplify.hpp"
#include "poly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mtutor::math {

namespace {

constexpr double scan_lo = -1000.0;
constexpr double scan_hi = 1000.0;
constexpr double scan_step = 0.01;
constexpr double bisection_tol = 1e-9;

using Coeffs = std::vector<Rational>;  // index = power

void trim(Coeffs & c)
{
    while (c.size() > 1 && c.back() == 0)
        c.pop_back();
}

Rational horner(Coeffs const & c, Rational const & x)
{
    Rational acc = 0;
    for (auto it = c.rbegin(); it != c.rend(); ++it)
        acc = acc * x + *it;
    return acc;
}

double horner(Coeffs const & c, double x)
{
    double acc = 0;
    for (auto it = c.rbegin(); it != c.rend(); ++it)
        acc = acc * x + it->convert_to<double>();
    return acc;
}

/// Divide by (x - r); `r` must be a root.
Coeffs deflate(Coeffs const & c, Rational const & r)
{
    std::size_t const n = c.size() - 1;
    Coeffs q(n);
    Rational carry = 0;
    for (std::size_t i = n; i-- > 0;) {
        carry = carry * r + c[i + 1];
        q[i] = carry;
    }
    return q;
}

std::vector<BigInt> divisors(BigInt n)
{
    if (n < 0)
        n = -n;
    std::vector<BigInt> out;
    if (n == 0 || n > BigInt(1000000000000LL))
        return out;
    for (BigInt d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            out.push_back(d);
            if (d * d != n)
                out.push_back(n / d);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Coeffs integral(Coeffs const & c)
{
    BigInt lcm = 1;
    for (auto const & v : c) {
        BigInt const d = boost::multiprecision::denominator(v);
        lcm = lcm / boost::multiprecision::gcd(lcm, d) * d;
    }
    Coeffs out;
    for (auto const & v : c)
        out.push_back(v * Rational(lcm));
    return out;
}

std::optional<Rational> find_rational_root(Coeffs const & c)
{
    Coeffs const ic = integral(c);
    auto const ps = divisors(boost::multiprecision::numerator(ic.front()));
    auto const qs = divisors(boost::multiprecision::numerator(ic.back()));
    for (auto const & q : qs) {
        for (auto const & p : ps) {
            for (int sign : {1, -1}) {
                Rational const candidate(BigInt(p * sign), q);
                if (horner(c, candidate) == 0)
                    return candidate;
            }
        }
    }
    return std::nullopt;
}

struct Accumulator
{
    std::vector<Expr> exact;
    std::vector<double> numeric;
    bool complex = false;
    bool used_numeric = false;
};

void solve_quadratic(Coeffs const & c, Accumulator & acc)
{
    Rational const & a = c[2];
    Rational const & b = c[1];
    Rational const & k = c[0];
    Rational const disc = b * b - 4 * a * k;
    if (disc < 0) {
        acc.complex = true;
        return;
    }
    if (disc == 0) {
        acc.exact.push_back(Expr::number(Rational(-b / (2 * a))));
        return;
    }
    Expr const root_disc = detail::sqrt_of(disc);
    Expr const minus_b = Expr::number(Rational(-b));
    Expr const denom = Expr::number(Rational(2 * a));
    acc.exact.push_back(simplify(Expr::div(Expr::sub(minus_b, root_disc), denom)));
    acc.exact.push_back(simplify(Expr::div(Expr::add(minus_b, root_disc), denom)));
}

void solve_numeric(Coeffs const & c, Accumulator & acc)
{
    acc.used_numeric = true;
    std::size_t found = 0;
    double x0 = scan_lo;
    double f0 = horner(c, x0);
    long const steps = std::lround((scan_hi - scan_lo) / scan_step);
    for (long i = 1; i <= steps; ++i) {
        double const x1 = scan_lo + static_cast<double>(i) * scan_step;
        double const f1 = horner(c, x1);
        if (f0 == 0.0) {
            acc.numeric.push_back(x0);
            ++found;
        } else if ((f0 < 0) != (f1 < 0) && f1 != 0.0) {
            double lo = x0;
            double hi = x1;
            double flo = f0;
            while (hi - lo > bisection_tol) {
                double const mid = 0.5 * (lo + hi);
                double const fm = horner(c, mid);
                if (fm == 0.0) {
                    lo = hi = mid;
                    break;
                }
                if ((fm < 0) == (flo < 0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            acc.numeric.push_back(0.5 * (lo + hi));
            ++found;
        }
        x0 = x1;
        f0 = f1;
    }
    if (f0 == 0.0) {
        acc.numeric.push_back(x0);
        ++found;
    }
    if (found < c.size() - 1)
        acc.complex = true;
}

void solve_polynomial(Coeffs c, Accumulator & acc)
{
    trim(c);
    std::size_t const degree = c.size() - 1;
    if (degree == 0)
        return;
    if (c[0] == 0) {
        acc.exact.push_back(Expr::number(0));
        c.erase(c.begin());
        solve_polynomial(std::move(c), acc);
        return;
    }
    if (degree == 1) {
        acc.exact.push_back(Expr::number(Rational(-c[0] / c[1])));
        return;
    }
    if (degree == 2) {
        solve_quadratic(c, acc);
        return;
    }
    if (auto r = find_rational_root(c)) {
        acc.exact.push_back(Expr::number(*r));
        solve_polynomial(deflate(c, *r), acc);
        return;
    }
    solve_numeric(c, acc);
}

bool makes_zero(detail::Poly const & den, std::string const & var, Expr const & root)
{
    if (den.is_constant())
        return false;
    try {
        return simplify(substitute(detail::to_expr(den), var, root)).is_zero();
    } catch (Error const &) {
        return true;
    }
}

} // namespace

SolveResult solve_equation(Equation const & eq)
{
    SolveResult result;
    detail::RatFunc f;
    try {
        f = detail::to_ratfunc(Expr::sub(eq.lhs, eq.rhs));
    } catch (Error const & e) {
        result.reason = e.what();
        return result;
    }
    auto coeffs = detail::univariate_coefficients(f.num, eq.var);
    if (!coeffs) {
        result.reason = "not a polynomial in " + eq.var + " with rational coefficients";
        return result;
    }
    trim(*coeffs);
    if (coeffs->size() == 1) {
        result.kind = SolveKind::exact;
        result.method = "constant";
        result.identity = coeffs->front() == 0;
        return result;
    }

    Accumulator acc;
    solve_polynomial(*coeffs, acc);

    std::vector<Expr> roots;
    for (auto & r : acc.exact) {
        if (makes_zero(f.den, eq.var, r))
            continue;
        bool duplicate = false;
        for (auto const & seen : roots)
            duplicate = duplicate || equivalent(seen, r);
        if (!duplicate)
            roots.push_back(r);
    }
    std::sort(roots.begin(), roots.end(),
              [](Expr const & a, Expr const & b) { return evaluate(a, {}) < evaluate(b, {}); });

    result.exact = roots;
    result.complex_roots_exist = acc.complex;
    std::size_t const degree = coeffs->size() - 1;
    if (!acc.used_numeric) {
        result.kind = SolveKind::exact;
        result.method = degree == 1 ? "linear" : degree == 2 ? "quadratic" : "rational-root";
        return result;
    }
    result.kind = SolveKind::numeric;
    result.method = "bisection";
    for (auto const & r : roots)
        result.approximations.push_back(evaluate(r, {}));
    for (double x : acc.numeric) {
        bool const excluded = !f.den.is_constant()
            && std::abs(evaluate(detail::to_expr(f.den), {{eq.var, x}})) < 1e-12;
        if (!excluded)
            result.approximations.push_back(x);
    }
    std::sort(result.approximations.begin(), result.approximations.end());
    return result;
}

std::vector<Expr> const & exact_roots(SolveResult const & r)
{
    return r.exact;
}

} // namespace mtutor::math
