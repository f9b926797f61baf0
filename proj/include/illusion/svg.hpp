#pragma once

#include "illusion/conductivity.hpp"
#include "illusion/mesh.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <string>

namespace illusion {

namespace detail {

// Five-stop blue-to-yellow ramp.
inline std::string ramp_color(double t) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const auto i = std::min<std::size_t>(3, static_cast<std::size_t>(t));
    const double w = t - static_cast<double>(i);
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                  static_cast<int>(std::lround(stops[i][0] * (1 - w) + stops[i + 1][0] * w)),
                  static_cast<int>(std::lround(stops[i][1] * (1 - w) + stops[i + 1][1] * w)),
                  static_cast<int>(std::lround(stops[i][2] * (1 - w) + stops[i + 1][2] * w)));
    return buf;
}

} // namespace detail

inline constexpr double glyph_anisotropy_threshold = 1.05;

/// Triangles filled by log10 of the largest eigenvalue of sigma(centroid); a tick along the
/// major principal axis marks triangles whose eigenvalue ratio exceeds 1.05.
inline std::string render_field_svg(const Mesh& mesh, const TensorField& sigma, const std::string& title = "") {
    std::vector<SymmetricEigen> eig;
    eig.reserve(mesh.triangles.size());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        eig.push_back(symmetric_eigen(sigma(mesh.centroid(t))));
        const double v = std::log10(eig.back().max);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo > 1e-12 ? hi - lo : 0.0;

    const double R = mesh.outer_radius;
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.6f %.6f %.6f %.6f\" width=\"800\" height=\"800\">\n",
                  -1.05 * R, -1.05 * R, 2.1 * R, 2.1 * R);
    out += buf;
    std::snprintf(buf, sizeof buf, "<desc>log10 max eigenvalue range [%.6f, %.6f]</desc>\n", lo, hi);
    out += buf;
    if (!title.empty()) {
        std::string escaped;
        for (char c : title) {
            if (c == '&') escaped += "&amp;";
            else if (c == '<') escaped += "&lt;";
            else if (c == '>') escaped += "&gt;";
            else escaped += c;
        }
        out += "<title>" + escaped + "</title>\n";
    }
    out += "<g transform=\"scale(1,-1)\" stroke-width=\"0\">\n";
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& v = mesh.triangles[t].v;
        const double frac = span > 0.0 ? (std::log10(eig[t].max) - lo) / span : 0.5;
        std::snprintf(buf, sizeof buf, "<polygon points=\"%.6f,%.6f %.6f,%.6f %.6f,%.6f\" fill=\"%s\"/>\n",
                      mesh.nodes[v[0]].x(), mesh.nodes[v[0]].y(), mesh.nodes[v[1]].x(), mesh.nodes[v[1]].y(),
                      mesh.nodes[v[2]].x(), mesh.nodes[v[2]].y(), detail::ramp_color(frac).c_str());
        out += buf;
    }
    out += "</g>\n<g transform=\"scale(1,-1)\" stroke=\"#ffffff\" stroke-linecap=\"round\">\n";
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        if (!(eig[t].max > glyph_anisotropy_threshold * eig[t].min)) continue;
        const auto& v = mesh.triangles[t].v;
        const double area = signed_area(mesh.nodes[v[0]], mesh.nodes[v[1]], mesh.nodes[v[2]]);
        const Vec2 c = mesh.centroid(t);
        const Vec2 d = 0.4 * std::sqrt(2.0 * area) * eig[t].max_axis;
        std::snprintf(buf, sizeof buf, "<line x1=\"%.6f\" y1=\"%.6f\" x2=\"%.6f\" y2=\"%.6f\" stroke-width=\"%.6f\"/>\n",
                      c.x() - d.x(), c.y() - d.y(), c.x() + d.x(), c.y() + d.y(), 0.1 * std::sqrt(2.0 * area));
        out += buf;
    }
    out += "</g>\n</svg>\n";
    return out;
}

inline void render_field_svg(const Mesh& mesh, const TensorField& sigma, const std::string& path, const std::string& title) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path);
    out << render_field_svg(mesh, sigma, title);
}

} // namespace illusion
