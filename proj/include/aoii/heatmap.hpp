#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "aoii/grid_files.hpp"

namespace aoii {

struct HeatmapOptions {
    bool log_scale = false;  ///< color by log10(value), for long-tailed densities
    int cell_px = 12;
    std::string title;
};

namespace detail {

/// Dark-blue -> teal -> green -> yellow ramp over t in [0,1].
inline std::string ramp_color(double t) {
    static const double anchors[5][3] = {{68, 1, 84},
                                         {59, 82, 139},
                                         {33, 145, 140},
                                         {94, 201, 98},
                                         {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int lo = std::min(3, static_cast<int>(t));
    const double w = t - lo;
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(anchors[lo][0] + w * (anchors[lo + 1][0] - anchors[lo][0])),
                  static_cast<int>(anchors[lo][1] + w * (anchors[lo + 1][1] - anchors[lo][1])),
                  static_cast<int>(anchors[lo][2] + w * (anchors[lo + 1][2] - anchors[lo][2])));
    return buf;
}

}  // namespace detail

/// Standalone vector-graphic colormap of a state grid: f on the horizontal
/// axis, g on the vertical, invalid states left blank.
inline void write_heatmap_svg(std::ostream& os, const GridFile& grid,
                              const HeatmapOptions& opts = {}) {
    const StateSpace space(grid.params());
    check_same_size(grid.values.size(), space.size(), "write_heatmap_svg");

    double vmin = 0.0, vmax = 0.0;
    bool first = true;
    const double log_floor = 1e-12;
    for (std::size_t s = 0; s < space.size(); ++s) {
        double v = grid.values[s];
        if (opts.log_scale) v = std::log10(std::max(v, log_floor));
        if (first) {
            vmin = vmax = v;
            first = false;
        } else {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    }
    const double span = vmax > vmin ? vmax - vmin : 1.0;

    const int cell = std::max(2, opts.cell_px);
    const int margin_left = 46, margin_top = opts.title.empty() ? 14 : 34;
    const int margin_bottom = 34, margin_right = 14;
    const int width = margin_left + (grid.F + 1) * cell + margin_right;
    const int height = margin_top + (grid.G + 1) * cell + margin_bottom;

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty())
        os << "<text x=\"" << margin_left << "\" y=\"20\" font-family=\"sans-serif\" "
              "font-size=\"13\">"
           << opts.title << "</text>\n";

    for (int f = 0; f <= grid.F; ++f) {
        for (int g = 0; g <= grid.G; ++g) {
            if (!space.contains(f, g)) continue;
            double v = grid.values[space.index(f, g)];
            if (opts.log_scale) v = std::log10(std::max(v, log_floor));
            const double t = (v - vmin) / span;
            os << "<rect x=\"" << margin_left + f * cell << "\" y=\"" << margin_top + g * cell
               << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
               << detail::ramp_color(t) << "\"/>\n";
        }
    }

    const int axis_y = margin_top + (grid.G + 1) * cell;
    os << "<text x=\"" << margin_left + (grid.F + 1) * cell / 2 << "\" y=\"" << axis_y + 26
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">age penalty "
          "f</text>\n";
    os << "<text x=\"12\" y=\"" << margin_top + (grid.G + 1) * cell / 2
       << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
          "transform=\"rotate(-90 12 "
       << margin_top + (grid.G + 1) * cell / 2 << ")\">error penalty g</text>\n";
    os << "<text x=\"" << margin_left << "\" y=\"" << axis_y + 12
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << (opts.log_scale ? "log10 " : "")
       << "range [" << format_double(vmin) << ", " << format_double(vmax) << "]</text>\n";
    os << "</svg>\n";
}

inline void write_heatmap_file(const std::filesystem::path& path, const GridFile& grid,
                               const HeatmapOptions& opts = {}) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_heatmap_svg(os, grid, opts);
}

}  // namespace aoii
