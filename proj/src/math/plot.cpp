#include "mtutor/math/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace mtutor::math {

namespace {

constexpr double width = 640;
constexpr double height = 480;
constexpr double margin = 40;

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string escape(std::string const & s)
{
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

} // namespace

PlotSeries plot(Expr const & e, std::string const & var, double lo, double hi, std::size_t samples)
{
    if (!(lo < hi))
        throw InvalidRange("plot range requires lo < hi");
    if (samples < 2)
        throw InvalidRange("plot requires at least 2 samples");
    PlotSeries s;
    s.var = var;
    s.lo = lo;
    s.hi = hi;
    s.expr_text = to_string(e);
    s.samples.reserve(samples);
    double const step = (hi - lo) / static_cast<double>(samples - 1);
    for (std::size_t i = 0; i < samples; ++i) {
        double const x = i + 1 == samples ? hi : lo + step * static_cast<double>(i);
        double const y = evaluate(e, {{var, x}});
        s.samples.push_back(PlotSample{x, std::isfinite(y) ? std::optional<double>(y) : std::nullopt});
    }
    return s;
}

std::string render_svg(PlotSeries const & series)
{
    double ymin = 0;
    double ymax = 0;
    bool any = false;
    for (auto const & p : series.samples) {
        if (!p.y)
            continue;
        ymin = any ? std::min(ymin, *p.y) : *p.y;
        ymax = any ? std::max(ymax, *p.y) : *p.y;
        any = true;
    }
    if (!any || ymax - ymin < 1e-12) {
        ymin -= 1;
        ymax += 1;
    }
    double const xspan = series.hi - series.lo;
    auto sx = [&](double x) { return margin + (x - series.lo) / xspan * (width - 2 * margin); };
    auto sy = [&](double y) { return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin); };

    std::string out;
    out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    out += "<title>" + escape(series.expr_text) + "</title>\n";
    out += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";

    double const axis_y = ymin <= 0 && ymax >= 0 ? sy(0) : height - margin;
    double const axis_x = series.lo <= 0 && series.hi >= 0 ? sx(0) : margin;
    out += "<line class=\"axis\" x1=\"" + fmt(margin) + "\" y1=\"" + fmt(axis_y) + "\" x2=\"" + fmt(width - margin)
        + "\" y2=\"" + fmt(axis_y) + "\" stroke=\"black\"/>\n";
    out += "<line class=\"axis\" x1=\"" + fmt(axis_x) + "\" y1=\"" + fmt(margin) + "\" x2=\"" + fmt(axis_x)
        + "\" y2=\"" + fmt(height - margin) + "\" stroke=\"black\"/>\n";

    std::string points;
    auto flush = [&] {
        if (!points.empty())
            out += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
        points.clear();
    };
    for (auto const & p : series.samples) {
        if (!p.y) {
            flush();
            continue;
        }
        if (!points.empty())
            points.push_back(' ');
        points += fmt(sx(p.x)) + "," + fmt(sy(*p.y));
    }
    flush();
    out += "</svg>\n";
    return out;
}

} // namespace mtutor::math
