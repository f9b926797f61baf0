#pragma once

#include "illusion/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace illusion {

struct Triangle {
    std::array<std::size_t, 3> v;
    int region = 0;
};

struct BoundaryNode {
    std::size_t index;
    double theta; // polar angle in [0, 2*pi)
};

/// Interface-fitted triangulation of a disk centred at the origin.
///
/// Region tags: 0 is the annulus outside the largest interface circle, tag i >= 1
/// is the zone between interface_radii[i-2] and interface_radii[i-1], so tag 1 is
/// the innermost disk.
struct Mesh {
    std::vector<Vec2> nodes;
    std::vector<Triangle> triangles;
    std::vector<BoundaryNode> boundary_nodes; // sorted by angle
    std::vector<double> interface_radii;
    double outer_radius = 0.0;
    double h = 0.0;

    double snap_tolerance() const { return 1e-12 * outer_radius; }
    Vec2 centroid(std::size_t t) const {
        const auto& v = triangles[t].v;
        return (nodes[v[0]] + nodes[v[1]] + nodes[v[2]]) / 3.0;
    }
};

struct MeshQuality {
    double min_angle_deg = 0.0;
    double max_aspect_ratio = 0.0; // circumradius / (2 * inradius); 1 for equilateral
    double h = 0.0;
    std::size_t node_count = 0;
    std::size_t triangle_count = 0;
};

inline double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

inline double polar_angle(const Vec2& p) {
    double theta = std::atan2(p.y(), p.x());
    if (theta < 0.0) theta += 2.0 * pi;
    if (theta >= 2.0 * pi) theta = 0.0;
    return theta;
}

namespace detail {

inline int region_of(double radius, const std::vector<double>& interfaces) {
    for (std::size_t i = 0; i < interfaces.size(); ++i)
        if (radius < interfaces[i]) return static_cast<int>(i) + 1;
    return 0;
}

inline double max_edge_length(const Mesh& mesh) {
    double h = 0.0;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e)
            h = std::max(h, (mesh.nodes[t.v[e]] - mesh.nodes[t.v[(e + 1) % 3]]).norm());
    return h;
}

inline void collect_boundary(Mesh& mesh, const std::vector<bool>& on_boundary) {
    mesh.boundary_nodes.clear();
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        if (on_boundary[i]) mesh.boundary_nodes.push_back({i, polar_angle(mesh.nodes[i])});
    std::sort(mesh.boundary_nodes.begin(), mesh.boundary_nodes.end(),
              [](const BoundaryNode& a, const BoundaryNode& b) { return a.theta < b.theta; });
}

inline void add_oriented(Mesh& mesh, std::size_t a, std::size_t b, std::size_t c) {
    if (signed_area(mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]) < 0.0) std::swap(b, c);
    mesh.triangles.push_back({{a, b, c}, 0});
}

struct Ring {
    double radius;
    std::size_t count;
    double offset; // fraction of one angular step
    std::size_t first;
};

// Polar-structured mesh with radial spacing <= spacing; every radius in
// `interfaces` and the outer radius is a node ring.
inline Mesh ring_mesh(double outer_radius, const std::vector<double>& interfaces, double spacing) {
    std::vector<double> stops{0.0};
    stops.insert(stops.end(), interfaces.begin(), interfaces.end());
    stops.push_back(outer_radius);

    std::vector<Ring> rings;
    // Innermost disk: hexagonal rings, ring j carries 6j nodes.
    const auto inner_layers =
        std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(stops[1] / spacing - 1e-9)));
    for (std::size_t j = 1; j <= inner_layers; ++j) {
        const double r = j == inner_layers ? stops[1] : stops[1] * static_cast<double>(j) / inner_layers;
        rings.push_back({r, 6 * j, 0.0, 0});
    }
    for (std::size_t band = 1; band + 1 < stops.size(); ++band) {
        const double gap = stops[band + 1] - stops[band];
        const auto layers = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(gap / spacing - 1e-9)));
        const double dr = gap / static_cast<double>(layers);
        for (std::size_t j = 1; j <= layers; ++j) {
            const double r = j == layers ? stops[band + 1] : stops[band] + dr * static_cast<double>(j);
            const auto count = std::max<std::size_t>(6, static_cast<std::size_t>(std::lround(2.0 * pi * r / dr)));
            rings.push_back({r, count, 0.0, 0});
        }
    }
    for (std::size_t j = 1; j + 1 < rings.size(); ++j)
        if (rings[j].count == rings[j - 1].count) rings[j].offset = rings[j - 1].offset == 0.0 ? 0.5 : 0.0;

    Mesh mesh;
    mesh.outer_radius = outer_radius;
    mesh.interface_radii = interfaces;
    mesh.nodes.emplace_back(0.0, 0.0);
    for (auto& ring : rings) {
        ring.first = mesh.nodes.size();
        for (std::size_t i = 0; i < ring.count; ++i) {
            const double theta = 2.0 * pi * (static_cast<double>(i) + ring.offset) / static_cast<double>(ring.count);
            mesh.nodes.emplace_back(ring.radius * std::cos(theta), ring.radius * std::sin(theta));
        }
    }

    const auto& first = rings.front();
    for (std::size_t i = 0; i < first.count; ++i)
        add_oriented(mesh, 0, first.first + i, first.first + (i + 1) % first.count);

    for (std::size_t j = 0; j + 1 < rings.size(); ++j) {
        const Ring& a = rings[j];
        const Ring& b = rings[j + 1];
        auto node_a = [&](std::size_t i) { return a.first + i % a.count; };
        auto node_b = [&](std::size_t i) { return b.first + i % b.count; };
        std::size_t i = 0, k = 0;
        while (i < a.count || k < b.count) {
            bool advance_inner;
            if (i == a.count) advance_inner = false;
            else if (k == b.count) advance_inner = true;
            else {
                // Shorter diagonal of the quad (a_i, a_i+1, b_k+1, b_k).
                const double diag_inner = (mesh.nodes[node_a(i + 1)] - mesh.nodes[node_b(k)]).norm();
                const double diag_outer = (mesh.nodes[node_a(i)] - mesh.nodes[node_b(k + 1)]).norm();
                advance_inner = diag_inner < diag_outer;
            }
            if (advance_inner) {
                add_oriented(mesh, node_a(i), node_a(i + 1), node_b(k));
                ++i;
            } else {
                add_oriented(mesh, node_a(i), node_b(k + 1), node_b(k));
                ++k;
            }
        }
    }

    for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
        mesh.triangles[t].region = region_of(mesh.centroid(t).norm(), interfaces);

    std::vector<bool> on_boundary(mesh.nodes.size(), false);
    const Ring& outer = rings.back();
    for (std::size_t i = 0; i < outer.count; ++i) on_boundary[outer.first + i] = true;
    collect_boundary(mesh, on_boundary);
    mesh.h = max_edge_length(mesh);
    return mesh;
}

} // namespace detail

inline MeshQuality mesh_quality(const Mesh& mesh) {
    MeshQuality q;
    q.node_count = mesh.nodes.size();
    q.triangle_count = mesh.triangles.size();
    q.min_angle_deg = 180.0;
    for (const auto& t : mesh.triangles) {
        std::array<double, 3> len{};
        for (int e = 0; e < 3; ++e) len[e] = (mesh.nodes[t.v[(e + 1) % 3]] - mesh.nodes[t.v[(e + 2) % 3]]).norm();
        // len[e] is the side opposite vertex e
        for (int e = 0; e < 3; ++e) {
            const double b = len[(e + 1) % 3], c = len[(e + 2) % 3];
            const double cosine = std::clamp((b * b + c * c - len[e] * len[e]) / (2.0 * b * c), -1.0, 1.0);
            q.min_angle_deg = std::min(q.min_angle_deg, std::acos(cosine) * 180.0 / pi);
            q.h = std::max(q.h, len[e]);
        }
        const double area = std::abs(signed_area(mesh.nodes[t.v[0]], mesh.nodes[t.v[1]], mesh.nodes[t.v[2]]));
        const double perimeter = len[0] + len[1] + len[2];
        const double inradius = 2.0 * area / perimeter;
        const double circumradius = len[0] * len[1] * len[2] / (4.0 * area);
        q.max_aspect_ratio = std::max(q.max_aspect_ratio, circumradius / (2.0 * inradius));
    }
    if (mesh.triangles.empty()) q.min_angle_deg = 0.0;
    return q;
}

/// Builds a polar-structured disk mesh whose node rings include every interface radius.
inline Mesh build_disk_mesh(double outer_radius, std::vector<double> interface_radii, double target_h) {
    if (!(outer_radius > 0.0) || !std::isfinite(outer_radius)) throw InvalidArgument("outer radius must be positive");
    if (!(target_h > 0.0) || !std::isfinite(target_h)) throw InvalidArgument("target_h must be positive");
    for (std::size_t i = 0; i < interface_radii.size(); ++i) {
        const double r = interface_radii[i];
        if (!(r > 0.0)) throw InvalidArgument("interface radii must be positive");
        if (!(r < outer_radius)) throw InvalidArgument("interface radius must be smaller than the outer radius");
        if (i > 0 && !(r > interface_radii[i - 1])) throw InvalidArgument("interface radii must be strictly increasing");
        const double next = i + 1 < interface_radii.size() ? interface_radii[i + 1] : outer_radius;
        if (next - r < 2.0 * target_h)
            throw InvalidArgument("interface radii " + std::to_string(r) + " and " + std::to_string(next) +
                                  " are closer than 2*target_h");
    }
    // Zipper diagonals run ~sqrt(2) times the ring spacing; shrink until h <= target_h.
    double factor = 0.7;
    for (int attempt = 0; attempt < 40; ++attempt, factor *= 0.95) {
        Mesh mesh = detail::ring_mesh(outer_radius, interface_radii, target_h * factor);
        if (mesh.h <= target_h) return mesh;
    }
    throw NumericalError("mesh generator could not reach target_h");
}

/// Uniform red refinement; midpoints of edges lying on an interface or the outer
/// circle are projected back onto that circle.
inline Mesh refine(const Mesh& mesh) {
    const double tol = mesh.snap_tolerance();
    std::vector<double> circles = mesh.interface_radii;
    circles.push_back(mesh.outer_radius);
    auto circle_of = [&](const Vec2& p) -> int {
        const double r = p.norm();
        for (std::size_t c = 0; c < circles.size(); ++c)
            if (std::abs(r - circles[c]) <= tol) return static_cast<int>(c);
        return -1;
    };

    Mesh fine;
    fine.outer_radius = mesh.outer_radius;
    fine.interface_radii = mesh.interface_radii;
    fine.nodes = mesh.nodes;
    std::vector<bool> on_boundary(mesh.nodes.size(), false);
    for (const auto& b : mesh.boundary_nodes) on_boundary[b.index] = true;

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> midpoint;
    auto midpoint_of = [&](std::size_t a, std::size_t b) {
        const auto key = std::minmax(a, b);
        if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
        Vec2 m = 0.5 * (mesh.nodes[a] + mesh.nodes[b]);
        const int ca = circle_of(mesh.nodes[a]);
        bool boundary = false;
        if (ca >= 0 && ca == circle_of(mesh.nodes[b])) {
            m *= circles[static_cast<std::size_t>(ca)] / m.norm();
            boundary = on_boundary[a] && on_boundary[b];
        }
        const std::size_t index = fine.nodes.size();
        fine.nodes.push_back(m);
        on_boundary.push_back(boundary);
        midpoint.emplace(key, index);
        return index;
    };

    fine.triangles.reserve(4 * mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
        const auto [a, b, c] = t.v;
        const std::size_t ab = midpoint_of(a, b), bc = midpoint_of(b, c), ca = midpoint_of(c, a);
        fine.triangles.push_back({{a, ab, ca}, t.region});
        fine.triangles.push_back({{ab, b, bc}, t.region});
        fine.triangles.push_back({{ca, bc, c}, t.region});
        fine.triangles.push_back({{ab, bc, ca}, t.region});
    }
    detail::collect_boundary(fine, on_boundary);
    fine.h = detail::max_edge_length(fine);
    return fine;
}

inline Mesh refine(const Mesh& mesh, int times) {
    Mesh out = mesh;
    for (int i = 0; i < times; ++i) out = refine(out);
    return out;
}

inline double total_area(const Mesh& mesh, int region = -1) {
    double area = 0.0;
    for (const auto& t : mesh.triangles)
        if (region < 0 || t.region == region)
            area += signed_area(mesh.nodes[t.v[0]], mesh.nodes[t.v[1]], mesh.nodes[t.v[2]]);
    return area;
}

inline void save_mesh(const Mesh& mesh, std::ostream& out) {
    std::vector<bool> on_boundary(mesh.nodes.size(), false);
    for (const auto& b : mesh.boundary_nodes) on_boundary[b.index] = true;
    out << "NODES " << mesh.nodes.size() << " TRIANGLES " << mesh.triangles.size() << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        out << mesh.nodes[i].x() << ' ' << mesh.nodes[i].y() << ' ' << (on_boundary[i] ? 1 : 0) << '\n';
    for (const auto& t : mesh.triangles)
        out << t.v[0] << ' ' << t.v[1] << ' ' << t.v[2] << ' ' << t.region << '\n';
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot open " + path + " for writing");
    save_mesh(mesh, out);
}

inline Mesh load_mesh(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) throw ParseError(line_no + 1, std::string("unexpected end of file, expected ") + what);
        ++line_no;
    };

    next_line("header");
    std::istringstream header(line);
    std::string nodes_kw, tris_kw;
    long long n = -1, m = -1;
    if (!(header >> nodes_kw >> n >> tris_kw >> m) || nodes_kw != "NODES" || tris_kw != "TRIANGLES" || n < 0 || m < 0)
        throw ParseError(line_no, "expected 'NODES n TRIANGLES m'");

    Mesh mesh;
    std::vector<bool> on_boundary;
    mesh.nodes.reserve(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) {
        next_line("node");
        std::istringstream row(line);
        double x, y;
        int flag;
        std::string extra;
        if (!(row >> x >> y >> flag) || (row >> extra) || (flag != 0 && flag != 1) || !std::isfinite(x) || !std::isfinite(y))
            throw ParseError(line_no, "expected 'x y on_boundary(0/1)'");
        mesh.nodes.emplace_back(x, y);
        on_boundary.push_back(flag == 1);
    }
    for (long long i = 0; i < m; ++i) {
        next_line("triangle");
        std::istringstream row(line);
        long long a, b, c;
        int region;
        std::string extra;
        if (!(row >> a >> b >> c >> region) || (row >> extra) || region < 0)
            throw ParseError(line_no, "expected 'i j k region'");
        for (long long v : {a, b, c})
            if (v < 0 || v >= n) throw ParseError(line_no, "node index " + std::to_string(v) + " out of range");
        Triangle t{{static_cast<std::size_t>(a), static_cast<std::size_t>(b), static_cast<std::size_t>(c)}, region};
        if (!(signed_area(mesh.nodes[t.v[0]], mesh.nodes[t.v[1]], mesh.nodes[t.v[2]]) > 0.0))
            throw ParseError(line_no, "triangle has non-positive signed area");
        mesh.triangles.push_back(t);
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError(line_no, "trailing content");
    }

    detail::collect_boundary(mesh, on_boundary);
    if (mesh.boundary_nodes.empty()) throw ParseError(line_no, "mesh has no boundary nodes");
    mesh.outer_radius = mesh.nodes[mesh.boundary_nodes.front().index].norm();
    for (const auto& b : mesh.boundary_nodes)
        if (std::abs(mesh.nodes[b.index].norm() - mesh.outer_radius) > mesh.snap_tolerance())
            throw ParseError(b.index + 2, "boundary node is not on the outer circle");

    // Interface circles are where region tags change across an edge.
    std::map<std::pair<std::size_t, std::size_t>, int> edge_region;
    std::vector<double> radii;
    for (const auto& t : mesh.triangles)
        for (int e = 0; e < 3; ++e) {
            const auto key = std::minmax(t.v[e], t.v[(e + 1) % 3]);
            auto [it, inserted] = edge_region.emplace(key, t.region);
            if (!inserted && it->second != t.region) radii.push_back(mesh.nodes[key.first].norm());
        }
    std::sort(radii.begin(), radii.end());
    for (double r : radii)
        if (mesh.interface_radii.empty() || r - mesh.interface_radii.back() > mesh.snap_tolerance())
            mesh.interface_radii.push_back(r);
    mesh.h = detail::max_edge_length(mesh);
    return mesh;
}

inline Mesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open mesh file " + path);
    return load_mesh(in);
}

} // namespace illusion
