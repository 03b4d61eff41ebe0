#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace worldprobe {

// Small self-contained SVG emitters for the toolkit's plots.

namespace svg_detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string color_ramp(double t) {
    // dark blue -> teal -> yellow
    t = std::clamp(t, 0.0, 1.0);
    const double r = std::clamp(t < 0.5 ? 0.1 + 0.3 * t : -0.7 + 1.9 * t, 0.0, 1.0);
    const double g = std::clamp(0.05 + 0.95 * t, 0.0, 1.0);
    const double b = std::clamp(0.4 + 0.8 * t - 1.1 * t * t, 0.0, 1.0);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(255 * r),
                  static_cast<int>(255 * g), static_cast<int>(255 * b));
    return buf;
}

}  // namespace svg_detail

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
};

// Line plot with optional log10 axes. Returns the SVG document text.
inline std::string svg_line_plot(const std::vector<SvgSeries>& series, const std::string& title,
                                 const std::string& x_label, const std::string& y_label,
                                 bool log_x = false, bool log_y = false) {
    const double w = 640, h = 440, ml = 70, mr = 20, mt = 40, mb = 50;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_x && s.x[i] <= 0) continue;
            if (log_y && s.y[i] <= 0) continue;
            xmin = std::min(xmin, tx(s.x[i]));
            xmax = std::max(xmax, tx(s.x[i]));
            ymin = std::min(ymin, ty(s.y[i]));
            ymax = std::max(ymax, ty(s.y[i]));
        }
    if (!(xmin < xmax)) { xmin -= 0.5; xmax += 0.5; }
    if (!(ymin < ymax)) { ymin -= 0.5; ymax += 0.5; }
    const double xpad = 0.03 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;

    auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - (ty(v) - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_detail::num(w) +
           "\" height=\"" + svg_detail::num(h) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + svg_detail::num(w / 2) + "\" y=\"22\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";

    // frame and ticks
    out += "<rect x=\"" + svg_detail::num(ml) + "\" y=\"" + svg_detail::num(mt) + "\" width=\"" +
           svg_detail::num(w - ml - mr) + "\" height=\"" + svg_detail::num(h - mt - mb) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = xmin + (xmax - xmin) * i / 4.0;
        const double fy = ymin + (ymax - ymin) * i / 4.0;
        const double gx = ml + (w - ml - mr) * i / 4.0;
        const double gy = h - mb - (h - mt - mb) * i / 4.0;
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%.3g", log_x ? std::pow(10.0, fx) : fx);
        out += "<text x=\"" + svg_detail::num(gx) + "\" y=\"" + svg_detail::num(h - mb + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + lbl +
               "</text>\n";
        std::snprintf(lbl, sizeof(lbl), "%.3g", log_y ? std::pow(10.0, fy) : fy);
        out += "<text x=\"" + svg_detail::num(ml - 8) + "\" y=\"" + svg_detail::num(gy + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + lbl +
               "</text>\n";
    }
    out += "<text x=\"" + svg_detail::num(w / 2) + "\" y=\"" + svg_detail::num(h - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
           "</text>\n";
    out += "<text x=\"16\" y=\"" + svg_detail::num(h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 16 " + svg_detail::num(h / 2) + ")\">" + y_label +
           "</text>\n";

    double legend_y = mt + 14;
    for (const auto& s : series) {
        std::string points;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_x && s.x[i] <= 0) continue;
            if (log_y && s.y[i] <= 0) continue;
            points += svg_detail::num(px(s.x[i])) + "," + svg_detail::num(py(s.y[i])) + " ";
            out += "<circle cx=\"" + svg_detail::num(px(s.x[i])) + "\" cy=\"" +
                   svg_detail::num(py(s.y[i])) + "\" r=\"2.5\" fill=\"" + s.color + "\"/>\n";
        }
        out += "<polyline points=\"" + points + "\" fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.6\"/>\n";
        if (!s.label.empty()) {
            out += "<line x1=\"" + svg_detail::num(w - mr - 150) + "\" y1=\"" +
                   svg_detail::num(legend_y - 4) + "\" x2=\"" + svg_detail::num(w - mr - 130) +
                   "\" y2=\"" + svg_detail::num(legend_y - 4) + "\" stroke=\"" + s.color +
                   "\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + svg_detail::num(w - mr - 124) + "\" y=\"" +
                   svg_detail::num(legend_y) +
                   "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label + "</text>\n";
            legend_y += 16;
        }
    }
    out += "</svg>\n";
    return out;
}

// Heatmap over an irregular (row, col) grid, rendered with bilinear
// interpolation between the grid points. Interpolation only affects the
// rendering; the underlying values are not modified.
inline std::string svg_heatmap(const std::vector<double>& row_coords,
                               const std::vector<double>& col_coords,
                               const std::vector<std::vector<double>>& values,
                               const std::string& title, const std::string& x_label,
                               const std::string& y_label) {
    if (row_coords.size() < 2 || col_coords.size() < 2)
        throw std::invalid_argument("svg_heatmap: needs at least a 2x2 grid");
    const double w = 640, h = 480, ml = 70, mr = 90, mt = 40, mb = 50;
    const double pw = w - ml - mr, ph = h - mt - mb;
    double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
    for (const auto& row : values)
        for (double v : row) {
            if (!std::isfinite(v)) continue;
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    if (!(vmin < vmax)) vmax = vmin + 1.0;

    const double r0 = row_coords.front(), r1 = row_coords.back();
    const double c0 = col_coords.front(), c1 = col_coords.back();
    auto interp = [&](double rc, double cc) {
        std::size_t i = 0, j = 0;
        while (i + 2 < row_coords.size() && row_coords[i + 1] <= rc) ++i;
        while (j + 2 < col_coords.size() && col_coords[j + 1] <= cc) ++j;
        const double fr = row_coords[i + 1] > row_coords[i]
                              ? (rc - row_coords[i]) / (row_coords[i + 1] - row_coords[i])
                              : 0.0;
        const double fc = col_coords[j + 1] > col_coords[j]
                              ? (cc - col_coords[j]) / (col_coords[j + 1] - col_coords[j])
                              : 0.0;
        return values[i][j] * (1 - fr) * (1 - fc) + values[i + 1][j] * fr * (1 - fc) +
               values[i][j + 1] * (1 - fr) * fc + values[i + 1][j + 1] * fr * fc;
    };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_detail::num(w) +
           "\" height=\"" + svg_detail::num(h) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + svg_detail::num(w / 2) + "\" y=\"22\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + title + "</text>\n";

    const int cells = 48;
    for (int i = 0; i < cells; ++i) {
        for (int j = 0; j < cells; ++j) {
            const double rc = r0 + (r1 - r0) * (i + 0.5) / cells;
            const double cc = c0 + (c1 - c0) * (j + 0.5) / cells;
            const double v = interp(rc, cc);
            const double t = (v - vmin) / (vmax - vmin);
            out += "<rect x=\"" + svg_detail::num(ml + pw * j / cells) + "\" y=\"" +
                   svg_detail::num(mt + ph * i / cells) + "\" width=\"" +
                   svg_detail::num(pw / cells + 0.5) + "\" height=\"" +
                   svg_detail::num(ph / cells + 0.5) + "\" fill=\"" +
                   svg_detail::color_ramp(t) + "\"/>\n";
        }
    }
    for (std::size_t i = 0; i < row_coords.size(); ++i) {
        const double gy = mt + (r1 > r0 ? (row_coords[i] - r0) / (r1 - r0) : 0.5) * ph;
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%g", row_coords[i]);
        out += "<text x=\"" + svg_detail::num(ml - 8) + "\" y=\"" + svg_detail::num(gy + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + lbl +
               "</text>\n";
    }
    for (std::size_t j = 0; j < col_coords.size(); ++j) {
        const double gx = ml + (c1 > c0 ? (col_coords[j] - c0) / (c1 - c0) : 0.5) * pw;
        char lbl[32];
        std::snprintf(lbl, sizeof(lbl), "%g", col_coords[j]);
        out += "<text x=\"" + svg_detail::num(gx) + "\" y=\"" + svg_detail::num(h - mb + 18) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + lbl +
               "</text>\n";
    }
    out += "<text x=\"" + svg_detail::num(w / 2) + "\" y=\"" + svg_detail::num(h - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + x_label +
           "</text>\n";
    out += "<text x=\"16\" y=\"" + svg_detail::num(h / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 16 " + svg_detail::num(h / 2) + ")\">" + y_label + "</text>\n";

    // color bar
    for (int i = 0; i <= 40; ++i) {
        const double t = 1.0 - i / 40.0;
        out += "<rect x=\"" + svg_detail::num(w - mr + 20) + "\" y=\"" +
               svg_detail::num(mt + ph * i / 41.0) + "\" width=\"16\" height=\"" +
               svg_detail::num(ph / 41.0 + 0.5) + "\" fill=\"" + svg_detail::color_ramp(t) +
               "\"/>\n";
    }
    char lbl[32];
    std::snprintf(lbl, sizeof(lbl), "%.3f", vmax);
    out += "<text x=\"" + svg_detail::num(w - mr + 40) + "\" y=\"" + svg_detail::num(mt + 10) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + lbl + "</text>\n";
    std::snprintf(lbl, sizeof(lbl), "%.3f", vmin);
    out += "<text x=\"" + svg_detail::num(w - mr + 40) + "\" y=\"" + svg_detail::num(mt + ph) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + lbl + "</text>\n";
    out += "</svg>\n";
    return out;
}

}  // namespace worldprobe
