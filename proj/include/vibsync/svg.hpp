// svg.hpp - minimal line plots written as standalone SVG.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace vibsync::svg {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline const char* colour(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                    "#7f7f7f", "#bcbd22", "#17becf"};
    return palette[i % 10];
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

}  // namespace detail

/// y-range defaults to the data range; NaN points break the polyline.
inline std::string line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                             const std::vector<Series>& series, std::optional<double> y_min = std::nullopt,
                             std::optional<double> y_max = std::nullopt) {
    constexpr double W = 800, H = 480, L = 70, R = 150, T = 40, B = 55;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (y_min) y0 = *y_min;
    if (y_max) y1 = *y_max;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    const double pw = W - L - R, ph = H - T - B;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return T + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream os;
    os.precision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(title)
       << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double fx = x0 + (x1 - x0) * i / 5.0, fy = y0 + (y1 - y0) * i / 5.0;
        os << "<text x=\"" << px(fx) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">" << detail::tick(fx)
           << "</text>\n";
        os << "<text x=\"" << L - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << detail::tick(fy)
           << "</text>\n";
        os << "<line x1=\"" << L << "\" x2=\"" << L + pw << "\" y1=\"" << py(fy) << "\" y2=\"" << py(fy)
           << "\" stroke=\"#ddd\"/>\n";
    }
    os << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << detail::escape(xlabel)
       << "</text>\n";
    os << "<text transform=\"translate(18," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::escape(ylabel) << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        std::string pts;
        auto flush = [&] {
            if (!pts.empty()) {
                os << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << detail::colour(si) << "\" points=\""
                   << pts << "\"/>\n";
            }
            pts.clear();
        };
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            const double y = std::clamp(s.y[i], y0, y1);
            char buf[48];
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(y));
            pts += buf;
        }
        flush();
        const double ly = T + 14 + 18.0 * static_cast<double>(si);
        os << "<line x1=\"" << L + pw + 10 << "\" x2=\"" << L + pw + 30 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
           << "\" stroke=\"" << detail::colour(si) << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << L + pw + 35 << "\" y=\"" << ly << "\">" << detail::escape(s.name) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace vibsync::svg
