#pragma once

#include "mtutor/math/expr.hpp"

#include <string>
#include <vector>

namespace mtutor::tutor {

struct GuardMatch
{
    /// The whole span as written, e.g. "x = 2".
    std::string span;
    math::Expr equivalent_to;
    /// Byte range of the value inside the candidate ("2" in "x = 2").
    std::size_t value_begin = 0;
    std::size_t value_end = 0;
};

struct GuardVerdict
{
    bool telling = false;
    std::vector<GuardMatch> matched;
};

/// Flag a candidate reply that states a value equivalent to any element of
/// the ground truth. Candidate spans are assignments, standalone constants
/// and expressions in the final sentence; spans that fail to parse are
/// skipped. An empty ground truth passes everything.
GuardVerdict anti_telling_guard(std::string const & candidate, std::vector<math::Expr> const & ground_truth);

inline constexpr char const * redaction_blank = "____";

/// Replace every matched value with a blank to fill in.
std::string redact(std::string const & candidate, GuardVerdict const & verdict);

} // namespace mtutor::tutor
