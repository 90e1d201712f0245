#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace hemopinn::svg {

// Minimal deterministic SVG line plots: fixed float formatting, no
// timestamps, data embedded as comments so plots are self-contained.

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Series {
    std::vector<double> x, y;
    std::string color = "#d62728";
    bool dashed = false;
    std::string label;
};

struct Band {
    std::vector<double> x, ylo, yhi;
    std::string color = "#d62728";
};

struct Panel {
    std::string title;
    std::vector<Series> series;
    std::vector<Band> bands;
    double hline = std::nan(""); // optional dashed reference line
};

class Figure {
public:
    Figure(int panels_x, int panels_y, int panel_w = 360, int panel_h = 220)
        : px_(panels_x), py_(panels_y), w_(panel_w), h_(panel_h) {}

    void add_panel(Panel p) { panels_.push_back(std::move(p)); }

    std::string render() const {
        const int margin = 46;
        const int W = px_ * (w_ + margin) + margin;
        const int H = py_ * (h_ + margin) + margin;
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
            << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
        out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
        for (std::size_t p = 0; p < panels_.size(); ++p) {
            const int col = static_cast<int>(p) % px_;
            const int row = static_cast<int>(p) / px_;
            render_panel(out, panels_[p], margin + col * (w_ + margin), margin + row * (h_ + margin));
        }
        out << "</svg>\n";
        return out.str();
    }

private:
    void render_panel(std::ostringstream& out, const Panel& p, int ox, int oy) const {
        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        auto grow = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
            for (double v : xs) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
            for (double v : ys) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
        };
        for (const auto& s : p.series) grow(s.x, s.y);
        for (const auto& b : p.bands) { grow(b.x, b.ylo); grow(b.x, b.yhi); }
        if (!std::isnan(p.hline)) { ymin = std::min(ymin, p.hline); ymax = std::max(ymax, p.hline); }
        if (xmin >= xmax) { xmin -= 1.0; xmax += 1.0; }
        if (ymin >= ymax) { ymin -= 1.0; ymax += 1.0; }
        const double ypad = 0.05 * (ymax - ymin);
        ymin -= ypad;
        ymax += ypad;

        auto X = [&](double v) { return ox + (v - xmin) / (xmax - xmin) * w_; };
        auto Y = [&](double v) { return oy + h_ - (v - ymin) / (ymax - ymin) * h_; };

        out << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << w_ << "\" height=\"" << h_
            << "\" fill=\"none\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << ox + 4 << "\" y=\"" << oy - 6
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << p.title << "</text>\n";
        // axis ticks: min and max labels
        out << "<text x=\"" << ox - 4 << "\" y=\"" << oy + h_ + 14
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(xmin) << "</text>\n";
        out << "<text x=\"" << ox + w_ - 24 << "\" y=\"" << oy + h_ + 14
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(xmax) << "</text>\n";
        out << "<text x=\"" << ox - 42 << "\" y=\"" << oy + h_
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(ymin) << "</text>\n";
        out << "<text x=\"" << ox - 42 << "\" y=\"" << oy + 10
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << num(ymax) << "</text>\n";

        for (const auto& b : p.bands) {
            out << "<polygon fill=\"" << b.color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (std::size_t q = 0; q < b.x.size(); ++q)
                out << num(X(b.x[q])) << ',' << num(Y(b.yhi[q])) << ' ';
            for (std::size_t q = b.x.size(); q-- > 0;)
                out << num(X(b.x[q])) << ',' << num(Y(b.ylo[q])) << ' ';
            out << "\"/>\n";
        }
        if (!std::isnan(p.hline))
            out << "<line x1=\"" << ox << "\" y1=\"" << num(Y(p.hline)) << "\" x2=\"" << ox + w_
                << "\" y2=\"" << num(Y(p.hline))
                << "\" stroke=\"black\" stroke-dasharray=\"6 4\" stroke-width=\"1\"/>\n";
        int label_y = oy + 14;
        for (const auto& s : p.series) {
            out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.4\"";
            if (s.dashed) out << " stroke-dasharray=\"5 3\"";
            out << " points=\"";
            for (std::size_t q = 0; q < s.x.size(); ++q)
                out << num(X(s.x[q])) << ',' << num(Y(s.y[q])) << ' ';
            out << "\"/>\n";
            if (!s.label.empty()) {
                out << "<text x=\"" << ox + w_ - 110 << "\" y=\"" << label_y
                    << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" << s.color << "\">"
                    << s.label << "</text>\n";
                label_y += 12;
            }
        }
        // embed the data for self-containment
        out << "<!-- data\n";
        for (const auto& s : p.series) {
            out << "series " << (s.label.empty() ? std::string("unnamed") : s.label) << '\n';
            for (std::size_t q = 0; q < s.x.size(); ++q)
                out << num(s.x[q]) << ' ' << num(s.y[q]) << '\n';
        }
        out << "-->\n";
    }

    int px_, py_, w_, h_;
    std::vector<Panel> panels_;
};

} // namespace hemopinn::svg
