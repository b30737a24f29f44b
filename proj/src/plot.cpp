#include "tally/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tally/baselines.hpp"
#include "tally/error.hpp"

namespace tally {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void finish() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi <= lo) lo -= 0.5, hi += 0.5;
        const double pad = 0.05 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
};

std::string header(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
           "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           "<text x=\"" + num(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
           "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* extra = "stroke=\"black\"") {
    return "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) + "\" " +
           extra + "/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor, const std::string& extra = "") {
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" +
           escape(s) + "</text>\n";
}

// Y axis with five ticks; returns the SVG and fills the mapping.
std::string y_axis(const Range& r, const std::string& label) {
    std::string out = line(kLeft, kTop, kLeft, kHeight - kBottom);
    for (int i = 0; i <= 4; ++i) {
        const double v = r.lo + (r.hi - r.lo) * i / 4.0;
        const double y = kHeight - kBottom - (kHeight - kTop - kBottom) * i / 4.0;
        out += line(kLeft - 4, y, kLeft, y);
        out += text(kLeft - 6, y + 4, tick(v), "end");
    }
    const double cy = kTop + (kHeight - kTop - kBottom) / 2;
    out += text(16, cy, label, "middle", " transform=\"rotate(-90 16 " + num(cy) + ")\"");
    return out;
}

double map_y(const Range& r, double v) {
    return kHeight - kBottom - (v - r.lo) / (r.hi - r.lo) * (kHeight - kTop - kBottom);
}

double map_x(const Range& r, double v) { return kLeft + (v - r.lo) / (r.hi - r.lo) * (kWidth - kLeft - kRight); }

}  // namespace

std::string svg_boxplot(const std::vector<BoxGroup>& groups, const std::string& title, const std::string& ylabel) {
    if (groups.empty()) fail(ErrorKind::InvalidInput, "boxplot needs at least one group");
    Range r;
    for (const auto& g : groups)
        for (double v : g.values) r.add(v);
    r.finish();
    std::string out = header(title) + y_axis(r, ylabel);
    out += line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom);
    const double slot = (kWidth - kLeft - kRight) / static_cast<double>(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double cx = kLeft + slot * (static_cast<double>(i) + 0.5);
        out += text(cx, kHeight - kBottom + 18, groups[i].label, "middle");
        std::vector<double> v;
        for (double x : groups[i].values)
            if (std::isfinite(x)) v.push_back(x);
        if (v.empty()) continue;
        const double w = std::min(60.0, 0.6 * slot);
        const double q0 = map_y(r, quantile(v, 0.025)), q1 = map_y(r, quantile(v, 0.25)),
                     q2 = map_y(r, quantile(v, 0.5)), q3 = map_y(r, quantile(v, 0.75)),
                     q4 = map_y(r, quantile(v, 0.975));
        out += line(cx, q0, cx, q1);
        out += line(cx, q3, cx, q4);
        out += line(cx - w / 4, q0, cx + w / 4, q0);
        out += line(cx - w / 4, q4, cx + w / 4, q4);
        out += "<rect x=\"" + num(cx - w / 2) + "\" y=\"" + num(q3) + "\" width=\"" + num(w) + "\" height=\"" +
               num(q1 - q3) + "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
        out += line(cx - w / 2, q2, cx + w / 2, q2, "stroke=\"black\" stroke-width=\"2\"");
    }
    return out + "</svg>\n";
}

std::string svg_scatter(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                        const std::string& xlabel, const std::string& ylabel, const std::vector<double>& hlines) {
    if (x.size() != y.size()) fail(ErrorKind::InvalidInput, "scatter: x and y differ in length");
    Range rx, ry;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
        rx.add(x[i]);
        ry.add(y[i]);
    }
    for (double h : hlines) ry.add(h);
    rx.finish();
    ry.finish();
    std::string out = header(title) + y_axis(ry, ylabel);
    out += line(kLeft, kHeight - kBottom, kWidth - kRight, kHeight - kBottom);
    for (int i = 0; i <= 4; ++i) {
        const double v = rx.lo + (rx.hi - rx.lo) * i / 4.0;
        const double px = map_x(rx, v);
        out += line(px, kHeight - kBottom, px, kHeight - kBottom + 4);
        out += text(px, kHeight - kBottom + 18, tick(v), "middle");
    }
    out += text(kLeft + (kWidth - kLeft - kRight) / 2, kHeight - 16, xlabel, "middle");
    for (double h : hlines)
        out += line(kLeft, map_y(ry, h), kWidth - kRight, map_y(ry, h), "stroke=\"#d62728\" stroke-dasharray=\"4 3\"");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
        out += "<circle cx=\"" + num(map_x(rx, x[i])) + "\" cy=\"" + num(map_y(ry, y[i])) +
               "\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n";
    }
    return out + "</svg>\n";
}

}  // namespace tally
