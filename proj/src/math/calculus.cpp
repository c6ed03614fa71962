#include "mtutor/math/calculus.hpp"

#include "mtutor/math/simplify.hpp"

namespace mtutor::math {

namespace {

Expr derive(Expr const & e, std::string const & var)
{
    switch (e.op()) {
    case Op::number: return Expr::number(0);
    case Op::symbol: return Expr::number(e.name() == var ? 1 : 0);
    case Op::add: return Expr::add(derive(e.lhs(), var), derive(e.rhs(), var));
    case Op::sub: return Expr::sub(derive(e.lhs(), var), derive(e.rhs(), var));
    case Op::neg: return Expr::neg(derive(e.operand(), var));
    case Op::mul:
        return Expr::add(Expr::mul(derive(e.lhs(), var), e.rhs()), Expr::mul(e.lhs(), derive(e.rhs(), var)));
    case Op::div:
        return Expr::div(
            Expr::sub(Expr::mul(derive(e.lhs(), var), e.rhs()), Expr::mul(e.lhs(), derive(e.rhs(), var))),
            Expr::pow(e.rhs(), 2));
    case Op::pow: {
        long long const n = e.exponent();
        if (n == 0)
            return Expr::number(0);
        return Expr::mul(Expr::mul(Expr::number(n), Expr::pow(e.lhs(), n - 1)), derive(e.lhs(), var));
    }
    case Op::func: {
        Expr const & u = e.operand();
        Expr const du = derive(u, var);
        switch (e.func()) {
        case Func::sin: return Expr::mul(Expr::call(Func::cos, u), du);
        case Func::cos: return Expr::neg(Expr::mul(Expr::call(Func::sin, u), du));
        case Func::exp: return Expr::mul(e, du);
        case Func::ln: return Expr::div(du, u);
        case Func::sqrt: return Expr::div(du, Expr::mul(Expr::number(2), e));
        }
    }
    }
    return Expr::number(0);
}

} // namespace

Expr differentiate(Expr const & e, std::string const & var)
{
    return simplify(derive(e, var));
}

} // namespace mtutor::math
