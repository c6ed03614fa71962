#pragma once

#include "mtutor/math/expr.hpp"

#include <optional>
#include <string_view>

namespace mtutor::math {

/// Malformed expression text. `offset` is the byte offset of the offending
/// token (the input length when the input ended early).
class SyntaxError : public Error
{
public:
    SyntaxError(std::string const & message, std::size_t offset);

    [[nodiscard]] std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Parse one expression.
///
/// Precedence, loosest to tightest: `+ -`, `* /` (and implicit
/// multiplication such as `2x` or `2(x+1)`), unary minus, `^`. Exponents
/// are right-associative and must reduce to integer constants. Whitespace
/// is insignificant. The Unicode operators `−`, `×`, `÷`, `·` and the
/// superscripts `²`, `³` are accepted as aliases.
Expr parse(std::string_view text);

/// Parse `lhs = rhs`. When `var` is empty the unknown is inferred: the
/// only free symbol, or `x` when several are present.
Equation parse_equation(std::string_view text, std::string_view var = {});

} // namespace mtutor::math
