#pragma once

#include "mtutor/math/expr.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mtutor::math {

class InvalidRange : public Error
{
public:
    using Error::Error;
};

struct PlotSample
{
    double x = 0;
    std::optional<double> y;  // empty where the function is undefined
};

struct PlotSeries
{
    std::string var;
    std::vector<PlotSample> samples;
    double lo = 0;
    double hi = 0;
    std::string expr_text;
};

/// Sample `e` on a uniform grid over [lo, hi] including both endpoints.
PlotSeries plot(Expr const & e, std::string const & var, double lo, double hi, std::size_t samples = 200);

/// 640x480 SVG 1.1 document: axes plus one polyline per defined run.
std::string render_svg(PlotSeries const & series);

} // namespace mtutor::math
