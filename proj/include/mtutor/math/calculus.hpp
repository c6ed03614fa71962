#pragma once

#include "mtutor/math/expr.hpp"

namespace mtutor::math {

/// d/d`var` by the sum, product, quotient and chain rules; simplified.
Expr differentiate(Expr const & e, std::string const & var);

} // namespace mtutor::math
