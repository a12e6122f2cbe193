#include "flab/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "flab/errors.hpp"

namespace flab::svg {

namespace {

constexpr int kW = 640, kH = 420;
constexpr int kL = 64, kR = 24, kT = 40, kB = 48; // margins

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void take(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0;
            hi = 1;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

struct Canvas {
    std::ofstream os;
    Range rx, ry;

    explicit Canvas(const std::string& path) : os(path) {
        if (!os) throw IoError("cannot write plot: " + path);
    }
    double px(double x) const { return kL + (x - rx.lo) / (rx.hi - rx.lo) * (kW - kL - kR); }
    double py(double y) const { return kH - kB - (y - ry.lo) / (ry.hi - ry.lo) * (kH - kT - kB); }

    void open(const std::string& title, const std::string& xl, const std::string& yl) {
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
           << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
           << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
           << title << "</text>\n"
           << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 10
           << "\" text-anchor=\"middle\" font-size=\"12\">" << xl << "</text>\n"
           << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2
           << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
           << (kT + kH - kB) / 2 << ")\">" << yl << "</text>\n";
        // axes + extremal ticks
        os << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
           << kH - kB << "\" stroke=\"black\"/>\n"
           << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\"" << kH - kB
           << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << kL << "\" y=\"" << kH - kB + 16
           << "\" font-size=\"10\" text-anchor=\"middle\">" << num(rx.lo) << "</text>\n"
           << "<text x=\"" << kW - kR << "\" y=\"" << kH - kB + 16
           << "\" font-size=\"10\" text-anchor=\"middle\">" << num(rx.hi) << "</text>\n"
           << "<text x=\"" << kL - 6 << "\" y=\"" << kH - kB << "\" font-size=\"10\" "
           << "text-anchor=\"end\">" << num(ry.lo) << "</text>\n"
           << "<text x=\"" << kL - 6 << "\" y=\"" << kT + 4 << "\" font-size=\"10\" "
           << "text-anchor=\"end\">" << num(ry.hi) << "</text>\n";
    }
    void close() { os << "</svg>\n"; }
};

} // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
    Canvas c(path);
    for (const auto& s : series) {
        for (double v : s.x) c.rx.take(v);
        for (double v : s.y) c.ry.take(v);
    }
    c.rx.pad();
    c.ry.pad();
    c.open(title, x_label, y_label);
    int ci = 0;
    for (const auto& s : series) {
        const char* color = kPalette[ci % 6];
        c.os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i)
            c.os << num(c.px(s.x[i])) << "," << num(c.py(s.y[i])) << " ";
        c.os << "\"/>\n";
        c.os << "<text x=\"" << kW - kR - 4 << "\" y=\"" << kT + 14 + 14 * ci
             << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << color << "\">" << s.name
             << "</text>\n";
        ++ci;
    }
    c.close();
}

void write_scatter_chart(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<analysis::QuantileBand>& bands) {
    Canvas c(path);
    for (double v : x) c.rx.take(v);
    for (double v : y) c.ry.take(v);
    for (const auto& b : bands) {
        c.rx.take(b.center);
        c.ry.take(b.q25);
        c.ry.take(b.q75);
    }
    c.rx.pad();
    c.ry.pad();
    c.open(title, x_label, y_label);
    if (bands.size() >= 2) {
        c.os << "<polygon fill=\"#1f77b4\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
        for (const auto& b : bands) c.os << num(c.px(b.center)) << "," << num(c.py(b.q75)) << " ";
        for (auto it = bands.rbegin(); it != bands.rend(); ++it)
            c.os << num(c.px(it->center)) << "," << num(c.py(it->q25)) << " ";
        c.os << "\"/>\n";
        c.os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
        for (const auto& b : bands) c.os << num(c.px(b.center)) << "," << num(c.py(b.mean_y)) << " ";
        c.os << "\"/>\n";
    }
    for (size_t i = 0; i < x.size(); ++i)
        c.os << "<circle cx=\"" << num(c.px(x[i])) << "\" cy=\"" << num(c.py(y[i]))
             << "\" r=\"2.5\" fill=\"#d62728\" fill-opacity=\"0.7\"/>\n";
    c.close();
}

} // namespace flab::svg
