#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "stprotein/errors.hpp"
#include "stprotein/types.hpp"

namespace stprotein {
namespace svg {

namespace detail {

/// Fixed three-decimal formatting so identical inputs always produce identical
/// SVG bytes.
inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {
        "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
        "#a6761d", "#666666", "#1f78b4", "#b2df8a", "#fb9a99", "#cab2d6"};
    return colors;
}

/// Two-color lerp from blue (low) to red (high), fixed-format hex.
inline std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r0 = 0x21, g0 = 0x66, b0 = 0xac;
    const int r1 = 0xb2, g1 = 0x18, b1 = 0x2b;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x",
                  static_cast<int>(r0 + t * (r1 - r0) + 0.5),
                  static_cast<int>(g0 + t * (g1 - g0) + 0.5),
                  static_cast<int>(b0 + t * (b1 - b0) + 0.5));
    return buf;
}

struct Frame {
    double x_min, x_span, y_min, y_span;
    static constexpr double margin = 50.0;
    static constexpr double plot = 520.0;

    explicit Frame(const Matrix& coords) {
        x_min = coords.col(0).minCoeff();
        y_min = coords.col(1).minCoeff();
        x_span = std::max(coords.col(0).maxCoeff() - x_min, 1e-12);
        y_span = std::max(coords.col(1).maxCoeff() - y_min, 1e-12);
    }
    double x(double v) const { return margin + (v - x_min) / x_span * plot; }
    // SVG y grows downward; flip so larger data y plots higher.
    double y(double v) const { return margin + (1.0 - (v - y_min) / y_span) * plot; }
};

inline std::string header(double width) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
           "\" height=\"620\" viewBox=\"0 0 " + num(width) + " 620\">\n"
           "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

inline std::string title_text(const std::string& title) {
    return "<text x=\"50\" y=\"30\" font-family=\"sans-serif\" font-size=\"16\">" +
           xml_escape(title) + "</text>\n";
}

} // namespace detail

/// Scatter of spots colored by categorical label, with a legend listing labels
/// in sorted order.
inline std::string scatter_categorical(const Matrix& coords, const std::vector<std::string>& labels,
                                       const std::string& title) {
    if (static_cast<std::size_t>(coords.rows()) != labels.size())
        throw LengthMismatch("scatter_categorical: coords vs labels length");
    detail::Frame f(coords);
    std::map<std::string, std::string> color_of; // sorted labels -> color
    for (const auto& l : labels) color_of.emplace(l, "");
    std::size_t idx = 0;
    for (auto& [label, color] : color_of) {
        color = detail::palette()[idx % detail::palette().size()];
        ++idx;
    }

    std::string out = detail::header(760.0) + detail::title_text(title);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        out += "<circle cx=\"" + detail::num(f.x(coords(i, 0))) + "\" cy=\"" +
               detail::num(f.y(coords(i, 1))) + "\" r=\"4\" fill=\"" +
               color_of[labels[static_cast<std::size_t>(i)]] + "\"/>\n";
    }
    double ly = 60.0;
    for (const auto& [label, color] : color_of) {
        out += "<rect x=\"600\" y=\"" + detail::num(ly) + "\" width=\"12\" height=\"12\" fill=\"" +
               color + "\"/>\n";
        out += "<text x=\"618\" y=\"" + detail::num(ly + 11.0) +
               "\" font-family=\"sans-serif\" font-size=\"13\">" + detail::xml_escape(label) +
               "</text>\n";
        ly += 20.0;
    }
    out += "</svg>\n";
    return out;
}

/// Scatter of spots colored by a continuous value (blue low, red high).
inline std::string scatter_continuous(const Matrix& coords, const Vector& values,
                                      const std::string& title) {
    if (coords.rows() != values.size())
        throw LengthMismatch("scatter_continuous: coords vs values length");
    detail::Frame f(coords);
    const double lo = values.minCoeff();
    const double span = std::max(values.maxCoeff() - lo, 1e-12);

    std::string out = detail::header(620.0) + detail::title_text(title);
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        out += "<circle cx=\"" + detail::num(f.x(coords(i, 0))) + "\" cy=\"" +
               detail::num(f.y(coords(i, 1))) + "\" r=\"4\" fill=\"" +
               detail::heat_color((values[i] - lo) / span) + "\"/>\n";
    }
    out += "</svg>\n";
    return out;
}

} // namespace svg
} // namespace stprotein
