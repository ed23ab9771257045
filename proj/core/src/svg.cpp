#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "otoclab/error.hpp"
#include "otoclab/experiments.hpp"

namespace otoclab {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    bool log = false;

    double map(double v) const {
        const double a = log ? std::log10(lo) : lo;
        const double b = log ? std::log10(hi) : hi;
        const double x = log ? std::log10(v) : v;
        return (x - a) / (b - a);
    }

    std::vector<double> ticks() const {
        std::vector<double> out;
        if (log) {
            for (double e = std::floor(std::log10(lo)); e <= std::ceil(std::log10(hi)); e += 1.0) {
                const double t = std::pow(10.0, e);
                if (t >= lo * (1 - 1e-12) && t <= hi * (1 + 1e-12)) out.push_back(t);
            }
            return out;
        }
        const double raw = (hi - lo) / 5.0;
        const double mag = std::pow(10.0, std::floor(std::log10(raw)));
        double step = mag;
        for (double m : {1.0, 2.0, 5.0, 10.0}) {
            step = m * mag;
            if (step >= raw) break;
        }
        for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
            out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
        }
        return out;
    }
};

Axis make_axis(const std::vector<double>& values, bool log) {
    Axis ax;
    ax.log = log;
    if (values.empty()) {
        ax.lo = log ? 1.0 : 0.0;
        ax.hi = log ? 10.0 : 1.0;
        return ax;
    }
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (log) {
        double a = std::log10(lo), b = std::log10(hi);
        if (b - a < 1e-12) {
            a -= 0.5;
            b += 0.5;
        }
        const double pad = 0.05 * (b - a);
        ax.lo = std::pow(10.0, a - pad);
        ax.hi = std::pow(10.0, b + pad);
        return ax;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        lo -= 0.5 * std::max(1.0, std::abs(lo));
        hi += 0.5 * std::max(1.0, std::abs(hi));
    }
    const double pad = 0.05 * (hi - lo);
    ax.lo = lo - pad;
    ax.hi = hi + pad;
    return ax;
}

bool usable(const std::optional<double>& v, bool log) { return v && std::isfinite(*v) && (!log || *v > 0.0); }

} // namespace

std::string emit_svg(const ResultTable& table, const PlotSpec& spec) {
    const auto xs = table.numeric(spec.x);
    std::vector<std::vector<std::optional<double>>> ys;
    for (const auto& y : spec.y) ys.push_back(table.numeric(y));

    std::vector<double> xv, yv;
    for (const auto& col : ys) {
        for (std::size_t i = 0; i < col.size(); ++i) {
            if (usable(xs[i], spec.log_x) && usable(col[i], spec.log_y)) {
                xv.push_back(*xs[i]);
                yv.push_back(*col[i]);
            }
        }
    }
    const Axis ax = make_axis(xv, spec.log_x);
    const Axis ay = make_axis(yv, spec.log_y);

    const double W = spec.width, H = spec.height;
    const double left = 70, right = 20, top = 36, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double v) { return left + ax.map(v) * pw; };
    auto py = [&](double v) { return top + (1.0 - ay.map(v)) * ph; };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(W) + "\" height=\"" + num(H) +
         "\" viewBox=\"0 0 " + num(W) + " " + num(H) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    if (!table.provenance.config_hash.empty()) {
        s += "<!-- table " + escape(table.name()) + ", config " + escape(table.provenance.config_hash) +
             ", seed " + std::to_string(table.provenance.seed) + " -->\n";
    }
    s += "<rect x=\"0\" y=\"0\" width=\"" + num(W) + "\" height=\"" + num(H) + "\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
        s += "<text x=\"" + num(W / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
             escape(spec.title) + "</text>\n";
    }

    // axes and ticks
    s += "<g stroke=\"#333\" stroke-width=\"1\" fill=\"none\">\n";
    s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\"/>\n";
    for (double t : ax.ticks()) {
        const double x = px(t);
        s += "<line x1=\"" + num(x) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(x) + "\" y2=\"" +
             num(top + ph + 5) + "\"/>\n";
    }
    for (double t : ay.ticks()) {
        const double y = py(t);
        s += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(left) + "\" y2=\"" + num(y) +
             "\"/>\n";
    }
    s += "</g>\n<g fill=\"#333\">\n";
    for (double t : ax.ticks()) {
        s += "<text x=\"" + num(px(t)) + "\" y=\"" + num(top + ph + 18) + "\" text-anchor=\"middle\">" +
             tick_label(t) + "</text>\n";
    }
    for (double t : ay.ticks()) {
        s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(py(t) + 4) + "\" text-anchor=\"end\">" +
             tick_label(t) + "</text>\n";
    }
    s += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(H - 10) + "\" text-anchor=\"middle\">" +
         escape(spec.x) + (spec.log_x ? " (log)" : "") + "</text>\n";
    const std::string ylabel = spec.y.size() == 1 ? spec.y.front() : std::string();
    if (!ylabel.empty() || spec.log_y) {
        s += "<text transform=\"translate(16," + num(top + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
             escape(ylabel) + (spec.log_y ? " (log)" : "") + "</text>\n";
    }
    s += "</g>\n";

    // data
    for (std::size_t k = 0; k < ys.size(); ++k) {
        const std::string color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
        const auto& col = ys[k];
        if (spec.lines) {
            std::string pts;
            for (std::size_t i = 0; i < col.size(); ++i) {
                if (!usable(xs[i], spec.log_x) || !usable(col[i], spec.log_y)) continue;
                if (!pts.empty()) pts += ' ';
                pts += num(px(*xs[i])) + "," + num(py(*col[i]));
            }
            if (!pts.empty()) {
                s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" + pts +
                     "\"/>\n";
            }
        } else {
            s += "<g fill=\"" + color + "\" fill-opacity=\"0.7\">\n";
            for (std::size_t i = 0; i < col.size(); ++i) {
                if (!usable(xs[i], spec.log_x) || !usable(col[i], spec.log_y)) continue;
                s += "<circle cx=\"" + num(px(*xs[i])) + "\" cy=\"" + num(py(*col[i])) + "\" r=\"2\"/>\n";
            }
            s += "</g>\n";
        }
    }

    // legend
    if (!spec.y.empty()) {
        s += "<g>\n";
        for (std::size_t k = 0; k < spec.y.size(); ++k) {
            const std::string color = kPalette[k % (sizeof kPalette / sizeof kPalette[0])];
            const double y = top + 10 + 16.0 * static_cast<double>(k);
            const double x = left + pw - 130;
            s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" + color +
                 "\"/>\n";
            s += "<text x=\"" + num(x + 16) + "\" y=\"" + num(y + 1) + "\" fill=\"#333\">" + escape(spec.y[k]) +
                 "</text>\n";
        }
        s += "</g>\n";
    }
    s += "</svg>\n";
    return s;
}

} // namespace otoclab
