#include "poly.hpp"

#include "mtutor/math/simplify.hpp"

#include <algorithm>

namespace mtutor::math::detail {

namespace {

constexpr std::size_t max_terms = 20000;

bool canonical_less(Monomial const & a, Monomial const & b)
{
    long long const da = total_degree(a);
    long long const db = total_degree(b);
    if (da != db)
        return da > db;
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end() && ib != b.end(); ++ia, ++ib) {
        if (ia->first != ib->first)
            return ia->first < ib->first;
        if (ia->second.exp != ib->second.exp)
            return ia->second.exp > ib->second.exp;
    }
    return ia != a.end() && ib == b.end();
}

} // namespace

std::string monomial_key(Monomial const & m)
{
    std::string key;
    for (auto const & [name, f] : m) {
        if (!key.empty())
            key.push_back('*');
        key.append(name);
        if (f.exp != 1)
            key.append("^" + std::to_string(f.exp));
    }
    return key;
}

long long total_degree(Monomial const & m)
{
    long long d = 0;
    for (auto const & [name, f] : m)
        d += f.exp;
    return d;
}

Poly Poly::constant(Rational c)
{
    Poly p;
    p.add_term({}, std::move(c));
    return p;
}

Poly Poly::atom(std::string key, Expr atom, std::optional<BigInt> radicand)
{
    Poly p;
    Monomial m;
    m.emplace(std::move(key), Factor{std::move(atom), 1, std::move(radicand)});
    p.add_term(std::move(m), Rational(1));
    return p;
}

bool Poly::is_constant() const
{
    return terms_.empty() || (terms_.size() == 1 && terms_.begin()->second.mono.empty());
}

Rational Poly::constant_value() const
{
    if (terms_.empty())
        return Rational(0);
    return terms_.begin()->second.coeff;
}

std::vector<Term> Poly::ordered() const
{
    std::vector<Term> out;
    out.reserve(terms_.size());
    for (auto const & [k, t] : terms_)
        out.push_back(t);
    std::sort(out.begin(), out.end(), [](Term const & a, Term const & b) { return canonical_less(a.mono, b.mono); });
    return out;
}

void Poly::add_term(Monomial mono, Rational coeff)
{
    if (coeff == 0)
        return;
    std::string key = monomial_key(mono);
    auto it = terms_.find(key);
    if (it == terms_.end()) {
        terms_.emplace(std::move(key), Term{std::move(mono), std::move(coeff)});
        return;
    }
    it->second.coeff += coeff;
    if (it->second.coeff == 0)
        terms_.erase(it);
}

Poly Poly::operator+(Poly const & o) const
{
    Poly r = *this;
    for (auto const & [k, t] : o.terms_)
        r.add_term(t.mono, t.coeff);
    return r;
}

Poly Poly::operator-(Poly const & o) const
{
    return *this + o.negated();
}

Poly Poly::operator*(Poly const & o) const
{
    if (terms_.size() * o.terms_.size() > max_terms)
        throw Error("expression too large to expand");
    Poly r;
    for (auto const & [ka, a] : terms_) {
        for (auto const & [kb, b] : o.terms_) {
            Monomial m = a.mono;
            Rational c = a.coeff * b.coeff;
            for (auto const & [name, f] : b.mono) {
                auto [it, inserted] = m.emplace(name, f);
                if (!inserted)
                    it->second.exp += f.exp;
            }
            for (auto it = m.begin(); it != m.end();) {
                Factor & f = it->second;
                if (f.radicand && f.exp >= 2) {
                    c *= Rational(boost::multiprecision::pow(*f.radicand, static_cast<unsigned>(f.exp / 2)));
                    f.exp %= 2;
                }
                if (f.exp == 0)
                    it = m.erase(it);
                else
                    ++it;
            }
            r.add_term(std::move(m), std::move(c));
        }
    }
    return r;
}

Poly Poly::scaled(Rational const & c) const
{
    Poly r;
    if (c == 0)
        return r;
    for (auto const & [k, t] : terms_)
        r.add_term(t.mono, t.coeff * c);
    return r;
}

Poly Poly::power(long long n) const
{
    Poly result = Poly::constant(Rational(1));
    Poly base = *this;
    while (n > 0) {
        if (n & 1)
            result = result * base;
        n >>= 1;
        if (n > 0)
            base = base * base;
    }
    return result;
}

Poly Poly::divided_by(Monomial const & mono) const
{
    Poly r;
    for (auto const & [k, t] : terms_) {
        Monomial m = t.mono;
        for (auto const & [name, f] : mono) {
            auto it = m.find(name);
            it->second.exp -= f.exp;
            if (it->second.exp == 0)
                m.erase(it);
        }
        r.add_term(std::move(m), t.coeff);
    }
    return r;
}

bool operator==(Poly const & a, Poly const & b)
{
    if (a.terms_.size() != b.terms_.size())
        return false;
    for (auto const & [k, t] : a.terms_) {
        auto it = b.terms_.find(k);
        if (it == b.terms_.end() || it->second.coeff != t.coeff)
            return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

std::pair<BigInt, BigInt> split_square(BigInt n)
{
    BigInt outside = 1;
    BigInt inside = 1;
    for (BigInt p = 2; p * p <= n && p <= 1000000; ++p) {
        while (n % (p * p) == 0) {
            n /= p * p;
            outside *= p;
        }
        if (n % p == 0) {
            n /= p;
            inside *= p;
        }
    }
    BigInt const root = boost::multiprecision::sqrt(n);
    if (root * root == n)
        outside *= root;
    else
        inside *= n;
    return {outside, inside};
}

namespace {

Poly sqrt_poly(Rational const & value)
{
    BigInt const p = boost::multiprecision::numerator(value);
    BigInt const q = boost::multiprecision::denominator(value);
    auto [outside, inside] = split_square(p * q);
    Rational const coeff(outside, q);
    if (inside == 1)
        return Poly::constant(coeff);
    Expr atom = Expr::call(Func::sqrt, Expr::number(Rational(inside)));
    return Poly::atom(to_string(atom), atom, inside).scaled(coeff);
}

Monomial common_factor(Poly const & a, Poly const & b)
{
    std::optional<Monomial> common;
    auto visit = [&](Poly const & p) {
        for (auto const & [k, t] : p.terms()) {
            if (!common) {
                common = t.mono;
                continue;
            }
            for (auto it = common->begin(); it != common->end();) {
                auto jt = t.mono.find(it->first);
                if (jt == t.mono.end()) {
                    it = common->erase(it);
                    continue;
                }
                it->second.exp = std::min(it->second.exp, jt->second.exp);
                ++it;
            }
        }
    };
    visit(a);
    visit(b);
    return common.value_or(Monomial{});
}

/// The single factor of a sqrt monomial `q*sqrt(r)`, or nullptr.
Factor const * lone_sqrt(Term const & t)
{
    if (t.mono.size() != 1)
        return nullptr;
    Factor const & f = t.mono.begin()->second;
    return f.radicand && f.exp == 1 ? &f : nullptr;
}

RatFunc normalize(Poly num, Poly den)
{
    if (den.is_zero())
        throw DivisionByZero("division by zero");
    if (num.is_zero())
        return RatFunc{};

    // rationalize surd denominators
    if (den.size() == 1) {
        Poly sqrt_part = Poly::constant(Rational(1));
        for (auto const & [name, f] : den.terms().begin()->second.mono)
            if (f.radicand)
                sqrt_part = sqrt_part * Poly::atom(name, f.atom, f.radicand);
        if (!sqrt_part.is_constant()) {
            num = num * sqrt_part;
            den = den * sqrt_part;
        }
    } else if (den.size() == 2) {
        auto ts = den.ordered();
        Factor const * s0 = lone_sqrt(ts[0]);
        Factor const * s1 = lone_sqrt(ts[1]);
        bool const c0 = ts[0].mono.empty();
        bool const c1 = ts[1].mono.empty();
        if ((s0 && c1) || (s1 && c0)) {
            Poly conj = den;
            // flip the sign of the surd term
            Term const & surd = s0 ? ts[0] : ts[1];
            Poly surd_poly;
            surd_poly = Poly::atom(surd.mono.begin()->first, surd.mono.begin()->second.atom,
                                   surd.mono.begin()->second.radicand)
                            .scaled(surd.coeff);
            conj = conj - surd_poly - surd_poly;
            num = num * conj;
            den = den * conj;
        }
    }

    if (den.is_constant())
        return RatFunc{num.scaled(Rational(1) / den.constant_value()), Poly::constant(Rational(1))};

    Monomial const common = common_factor(num, den);
    if (!common.empty()) {
        num = num.divided_by(common);
        den = den.divided_by(common);
        if (den.is_constant())
            return RatFunc{num.scaled(Rational(1) / den.constant_value()), Poly::constant(Rational(1))};
    }

    auto const den_terms = den.ordered();
    Rational const lead = den_terms.front().coeff;
    auto const num_terms = num.ordered();
    if (num.size() == den.size()) {
        Rational const q = num_terms.front().coeff / lead;
        if ((num - den.scaled(q)).is_zero())
            return RatFunc{Poly::constant(q), Poly::constant(Rational(1))};
    }
    Rational const inv = Rational(1) / lead;
    return RatFunc{num.scaled(inv), den.scaled(inv)};
}

RatFunc add(RatFunc const & a, RatFunc const & b)
{
    if (a.den == b.den)
        return normalize(a.num + b.num, a.den);
    return normalize(a.num * b.den + b.num * a.den, a.den * b.den);
}

RatFunc mul(RatFunc const & a, RatFunc const & b)
{
    return normalize(a.num * b.num, a.den * b.den);
}

RatFunc function_atom(Func f, Expr const & raw_arg)
{
    Expr const arg = simplify(raw_arg);
    if (arg.is_number()) {
        Rational const & v = arg.value();
        if (v == 0 && f == Func::sin)
            return RatFunc{};
        if (v == 0 && (f == Func::cos || f == Func::exp))
            return RatFunc{Poly::constant(Rational(1))};
        if (v == 1 && f == Func::ln)
            return RatFunc{};
        if (f == Func::sqrt && v >= 0)
            return RatFunc{sqrt_poly(v)};
    }
    Expr atom = Expr::call(f, arg);
    return RatFunc{Poly::atom(to_string(atom), atom)};
}

} // namespace

Expr sqrt_of(Rational const & value)
{
    return to_expr(sqrt_poly(value));
}

RatFunc to_ratfunc(Expr const & e)
{
    switch (e.op()) {
    case Op::number: return RatFunc{Poly::constant(e.value())};
    case Op::symbol: return RatFunc{Poly::atom(e.name(), e)};
    case Op::add: return add(to_ratfunc(e.lhs()), to_ratfunc(e.rhs()));
    case Op::sub: {
        RatFunc b = to_ratfunc(e.rhs());
        b.num = b.num.negated();
        return add(to_ratfunc(e.lhs()), b);
    }
    case Op::mul: return mul(to_ratfunc(e.lhs()), to_ratfunc(e.rhs()));
    case Op::div: {
        RatFunc b = to_ratfunc(e.rhs());
        if (b.num.is_zero())
            throw DivisionByZero("division by zero");
        return mul(to_ratfunc(e.lhs()), RatFunc{b.den, b.num});
    }
    case Op::neg: {
        RatFunc a = to_ratfunc(e.operand());
        a.num = a.num.negated();
        return a;
    }
    case Op::pow: {
        RatFunc base = to_ratfunc(e.lhs());
        long long const n = e.exponent();
        if (n >= 0)
            return normalize(base.num.power(n), base.den.power(n));
        if (base.num.is_zero())
            throw DivisionByZero("zero raised to a negative power");
        return normalize(base.den.power(-n), base.num.power(-n));
    }
    case Op::func: return function_atom(e.func(), e.operand());
    }
    return RatFunc{};
}

namespace {

Expr term_body(Monomial const & m)
{
    std::optional<Expr> acc;
    for (auto const & [name, f] : m) {
        Expr part = f.exp == 1 ? f.atom : Expr::pow(f.atom, f.exp);
        acc = acc ? Expr::mul(*acc, part) : part;
    }
    return *acc;
}

Expr term_magnitude(Term const & t)
{
    Rational const mag = t.coeff < 0 ? Rational(-t.coeff) : t.coeff;
    if (t.mono.empty())
        return Expr::number(mag);
    Expr body = term_body(t.mono);
    return mag == 1 ? body : Expr::mul(Expr::number(mag), body);
}

} // namespace

Expr to_expr(Poly const & p)
{
    if (p.is_zero())
        return Expr::number(Rational(0));
    std::optional<Expr> acc;
    for (Term const & t : p.ordered()) {
        bool const negative = t.coeff < 0;
        if (!acc) {
            if (negative && t.mono.empty())
                acc = Expr::number(t.coeff);
            else
                acc = negative ? Expr::neg(term_magnitude(t)) : term_magnitude(t);
            continue;
        }
        acc = negative ? Expr::sub(*acc, term_magnitude(t)) : Expr::add(*acc, term_magnitude(t));
    }
    return *acc;
}

Expr to_expr(RatFunc const & f)
{
    if (f.den.is_constant() && f.den.constant_value() == 1)
        return to_expr(f.num);
    return Expr::div(to_expr(f.num), to_expr(f.den));
}

std::optional<std::vector<Rational>> univariate_coefficients(Poly const & p, std::string const & var)
{
    std::vector<Rational> coeffs;
    for (auto const & [k, t] : p.terms()) {
        long long power = 0;
        if (!t.mono.empty()) {
            if (t.mono.size() != 1 || t.mono.begin()->first != var || !t.mono.begin()->second.atom.is_symbol())
                return std::nullopt;
            power = t.mono.begin()->second.exp;
        }
        if (coeffs.size() <= static_cast<std::size_t>(power))
            coeffs.resize(static_cast<std::size_t>(power) + 1, Rational(0));
        coeffs[static_cast<std::size_t>(power)] = t.coeff;
    }
    if (coeffs.empty())
        coeffs.push_back(Rational(0));
    return coeffs;
}

} // namespace mtutor::math::detail

namespace mtutor::math {

SimplifyResult simplify_with_report(Expr const & e)
{
    detail::RatFunc const f = detail::to_ratfunc(e);
    bool const rational = !f.den.is_constant();
    return SimplifyResult{detail::to_expr(f), rational};
}

Expr simplify(Expr const & e)
{
    return simplify_with_report(e).expr;
}

bool equivalent(Expr const & a, Expr const & b)
{
    try {
        return simplify(Expr::sub(a, b)).is_zero();
    } catch (DivisionByZero const &) {
        return false;
    }
}

std::optional<Rational> rational_value(Expr const & e)
{
    try {
        Expr const s = simplify(e);
        if (s.is_number())
            return s.value();
    } catch (Error const &) {
    }
    return std::nullopt;
}

} // namespace mtutor::math
