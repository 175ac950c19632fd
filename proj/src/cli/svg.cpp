#include "coda/cli/svg.hpp"

#include "coda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace coda::cli::svg {

namespace {

std::string esc(const std::string& s) {
    std::string out;
    for (const char c : s) {
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

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void pad(double frac) {
        if (!(hi > lo)) {
            lo -= 1.0;
            hi += 1.0;
            return;
        }
        const double w = (hi - lo) * frac;
        lo -= w;
        hi += w;
    }
    double at(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

} // namespace

std::string scatter_plot(const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<Series>& series) {
    const double width = 760, height = 480;
    const double left = 64, right = width - 150, top = 44, bottom = height - 52;
    Range rx, ry;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size())
            throw parameter_error("series '" + s.label + "' has mismatched x/y lengths");
        for (const double v : s.x)
            rx.add(v);
        for (const double v : s.y)
            ry.add(v);
    }
    if (!std::isfinite(rx.lo) || !std::isfinite(ry.lo)) {
        rx = Range{0.0, 1.0};
        ry = Range{0.0, 1.0};
    }
    rx.pad(0.05);
    ry.pad(0.05);

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << px(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" << esc(title) << "</text>\n";
    // axes
    out << "<line x1=\"" << px(left) << "\" y1=\"" << px(bottom) << "\" x2=\"" << px(right)
        << "\" y2=\"" << px(bottom) << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << px(left) << "\" y1=\"" << px(top) << "\" x2=\"" << px(left)
        << "\" y2=\"" << px(bottom) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = rx.lo + (rx.hi - rx.lo) * t / 4.0;
        const double gx = rx.at(fx, left, right);
        out << "<line x1=\"" << px(gx) << "\" y1=\"" << px(bottom) << "\" x2=\"" << px(gx)
            << "\" y2=\"" << px(bottom + 5) << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << px(gx) << "\" y=\"" << px(bottom + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << tick_label(fx) << "</text>\n";
        const double fy = ry.lo + (ry.hi - ry.lo) * t / 4.0;
        const double gy = ry.at(fy, bottom, top);
        out << "<line x1=\"" << px(left - 5) << "\" y1=\"" << px(gy) << "\" x2=\"" << px(left)
            << "\" y2=\"" << px(gy) << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << px(left - 8) << "\" y=\"" << px(gy + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << tick_label(fy) << "</text>\n";
    }
    out << "<text x=\"" << px((left + right) / 2) << "\" y=\"" << px(height - 14)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << esc(x_label) << "</text>\n"
        << "<text x=\"18\" y=\"" << px((top + bottom) / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "transform=\"rotate(-90 18 " << px((top + bottom) / 2) << ")\">" << esc(y_label)
        << "</text>\n";
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i)
            if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
                out << "<circle cx=\"" << px(rx.at(s.x[i], left, right)) << "\" cy=\""
                    << px(ry.at(s.y[i], bottom, top)) << "\" r=\"3\" fill=\"" << esc(s.color)
                    << "\" fill-opacity=\"0.7\"/>\n";
    double ly = top + 8;
    for (const auto& s : series) {
        out << "<circle cx=\"" << px(right + 16) << "\" cy=\"" << px(ly) << "\" r=\"4\" fill=\""
            << esc(s.color) << "\"/>\n"
            << "<text x=\"" << px(right + 26) << "\" y=\"" << px(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << esc(s.label) << "</text>\n";
        ly += 18;
    }
    out << "</svg>\n";
    return out.str();
}

std::string interval_plot(const std::string& title, const std::string& x_label,
                          const std::vector<IntervalBox>& boxes, double reference) {
    const double row_h = 26;
    const double width = 760;
    const double left = 170, right = width - 40, top = 48;
    const double bottom = top + row_h * static_cast<double>(boxes.size());
    const double height = bottom + 56;
    Range rx;
    rx.add(reference);
    for (const auto& b : boxes) {
        rx.add(b.lo95);
        rx.add(b.hi95);
        rx.add(b.mean);
    }
    rx.pad(0.08);

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << px(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">" << esc(title) << "</text>\n";
    const double gref = rx.at(reference, left, right);
    out << "<line x1=\"" << px(gref) << "\" y1=\"" << px(top - 6) << "\" x2=\"" << px(gref)
        << "\" y2=\"" << px(bottom + 6)
        << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
    for (size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        const double cy = top + row_h * (static_cast<double>(i) + 0.5);
        out << "<text x=\"" << px(left - 10) << "\" y=\"" << px(cy + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">"
            << esc(b.label) << "</text>\n"
            << "<line x1=\"" << px(rx.at(b.lo95, left, right)) << "\" y1=\"" << px(cy)
            << "\" x2=\"" << px(rx.at(b.hi95, left, right)) << "\" y2=\"" << px(cy)
            << "\" stroke=\"black\"/>\n"
            << "<rect x=\"" << px(rx.at(b.lo50, left, right)) << "\" y=\"" << px(cy - 6)
            << "\" width=\"" << px(std::max(0.0, rx.at(b.hi50, left, right) -
                                                     rx.at(b.lo50, left, right)))
            << "\" height=\"12\" fill=\"steelblue\" fill-opacity=\"0.6\" stroke=\"black\"/>\n"
            << "<circle cx=\"" << px(rx.at(b.mean, left, right)) << "\" cy=\"" << px(cy)
            << "\" r=\"3.2\" fill=\"black\"/>\n";
    }
    out << "<line x1=\"" << px(left) << "\" y1=\"" << px(bottom + 10) << "\" x2=\"" << px(right)
        << "\" y2=\"" << px(bottom + 10) << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fv = rx.lo + (rx.hi - rx.lo) * t / 4.0;
        const double gx = rx.at(fv, left, right);
        out << "<line x1=\"" << px(gx) << "\" y1=\"" << px(bottom + 10) << "\" x2=\"" << px(gx)
            << "\" y2=\"" << px(bottom + 15) << "\" stroke=\"black\"/>\n"
            << "<text x=\"" << px(gx) << "\" y=\"" << px(bottom + 28)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << tick_label(fv) << "</text>\n";
    }
    out << "<text x=\"" << px((left + right) / 2) << "\" y=\"" << px(height - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << esc(x_label) << "</text>\n</svg>\n";
    return out.str();
}

} // namespace coda::cli::svg
