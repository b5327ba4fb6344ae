#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "cg2/errors.hpp"

namespace cg2 {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y)
};

// Minimal line chart; enough for metric-vs-steps curves.
inline void write_svg_lines(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
                                    "#bcbd22", "#e377c2", "#393b79", "#637939"};
    const double W = 860, H = 520, L = 70, R = 200, T = 48, B = 56;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
    auto fmt = [](double v) {
        std::ostringstream o;
        o << std::setprecision(4) << v;
        return o.str();
    };

    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    f << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
      << "' stroke='black'/>\n";
    f << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
      << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
        double fx = xmin + (xmax - xmin) * i / 4.0;
        double fy = ymin + (ymax - ymin) * i / 4.0;
        f << "<text x='" << px(fx) << "' y='" << H - B + 18
          << "' text-anchor='middle' font-size='11'>" << fmt(fx) << "</text>\n";
        f << "<text x='" << L - 6 << "' y='" << py(fy) + 4
          << "' text-anchor='end' font-size='11'>" << fmt(fy) << "</text>\n";
        f << "<line x1='" << L << "' y1='" << py(fy) << "' x2='" << W - R << "' y2='" << py(fy)
          << "' stroke='#dddddd'/>\n";
    }
    f << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
    f << "<text x='16' y='" << (T + H - B) / 2 << "' font-size='13' transform='rotate(-90 16 "
      << (T + H - B) / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";

    for (size_t i = 0; i < series.size(); ++i) {
        const char* color = palette[i % 12];
        if (!series[i].points.empty()) {
            f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.6' points='";
            for (auto [x, y] : series[i].points) f << px(x) << "," << py(y) << " ";
            f << "'/>\n";
        }
        double ly = T + 16 + static_cast<double>(i) * 16;
        f << "<line x1='" << W - R + 12 << "' y1='" << ly << "' x2='" << W - R + 34 << "' y2='"
          << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
        f << "<text x='" << W - R + 40 << "' y='" << ly + 4 << "' font-size='11'>"
          << series[i].name << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace cg2
