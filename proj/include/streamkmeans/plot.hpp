#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "streamkmeans/core.hpp"
#include "streamkmeans/errors.hpp"

namespace streamkm {

// Minimal self-contained SVG renderer for run traces: cost and per-center
// gradient-norm trajectories on a log-log-ish layout plus estimator ribbons.
// Provenance (config hash, seed) goes into <metadata>; no display server is
// involved anywhere.

struct PlotSeries {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotBand {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
};

class SvgPlot {
public:
    SvgPlot(std::string title, bool log_x, bool log_y)
        : title_(std::move(title)), log_x_(log_x), log_y_(log_y) {}

    void add_series(PlotSeries s) { series_.push_back(std::move(s)); }
    void add_band(PlotBand b) { bands_.push_back(std::move(b)); }
    void set_metadata(std::string meta) { metadata_ = std::move(meta); }

    void render(std::ostream& out) const {
        const double W = 760, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        auto tx = [&](double v) { return log_x_ ? std::log10(std::max(v, 1e-300)) : v; };
        auto ty = [&](double v) { return log_y_ ? std::log10(std::max(v, 1e-300)) : v; };
        auto scan = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                xmin = std::min(xmin, tx(xs[i]));
                xmax = std::max(xmax, tx(xs[i]));
                ymin = std::min(ymin, ty(ys[i]));
                ymax = std::max(ymax, ty(ys[i]));
            }
        };
        for (const auto& s : series_) scan(s.x, s.y);
        for (const auto& b : bands_) { scan(b.x, b.lo); scan(b.x, b.hi); }
        if (!(xmin <= xmax)) throw input_error("plot: no rows");
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        const double px = (W - ml - mr) / (xmax - xmin);
        const double py = (H - mt - mb) / (ymax - ymin);
        auto X = [&](double v) { return ml + (tx(v) - xmin) * px; };
        auto Y = [&](double v) { return H - mb - (ty(v) - ymin) * py; };

        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
            << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
        if (!metadata_.empty())
            out << "<metadata>" << metadata_ << "</metadata>\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"16\">" << title_ << "</text>\n";
        // axes
        out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr
            << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
        out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
            << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
        for (int t = 0; t <= 4; ++t) {
            const double fx = xmin + (xmax - xmin) * t / 4.0;
            const double fy = ymin + (ymax - ymin) * t / 4.0;
            const double gx = ml + (fx - xmin) * px;
            const double gy = H - mb - (fy - ymin) * py;
            out << "<text x=\"" << gx << "\" y=\"" << H - mb + 18
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
                << format_double(log_x_ ? std::pow(10.0, fx) : fx) << "</text>\n";
            out << "<text x=\"" << ml - 8 << "\" y=\"" << gy + 4
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
                << format_double(log_y_ ? std::pow(10.0, fy) : fy) << "</text>\n";
        }
        for (const auto& b : bands_) {
            out << "<path fill=\"" << b.color << "\" fill-opacity=\"0.25\" stroke=\"none\" d=\"";
            for (std::size_t i = 0; i < b.x.size(); ++i)
                out << (i ? 'L' : 'M') << X(b.x[i]) << ' ' << Y(b.hi[i]);
            for (std::size_t i = b.x.size(); i-- > 0;)
                out << 'L' << X(b.x[i]) << ' ' << Y(b.lo[i]);
            out << "Z\"/>\n";
        }
        int li = 0;
        for (const auto& s : series_) {
            out << "<polyline fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                out << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
            out << "\"/>\n";
            out << "<text x=\"" << W - mr - 6 << "\" y=\"" << mt + 16 * li + 4
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
                << s.color << "\">" << s.label << "</text>\n";
            ++li;
        }
        out << "</svg>\n";
    }

private:
    std::string title_;
    bool log_x_;
    bool log_y_;
    std::vector<PlotSeries> series_;
    std::vector<PlotBand> bands_;
    std::string metadata_;
};

// FNV-1a, used to stamp config provenance into plot metadata
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace streamkm
