#include "illusion/fem.hpp"

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

using namespace illusion;
using Catch::Approx;

namespace {

Mesh single_triangle() {
    Mesh m;
    m.nodes = {{0, 0}, {1, 0}, {0, 1}};
    m.triangles = {{{0, 1, 2}, 0}};
    m.boundary_nodes = {{0, 0.0}, {1, 0.0}, {2, pi / 2}};
    m.outer_radius = 1.0;
    return m;
}

Vector boundary_values(const Mesh& mesh, const std::function<double(const Vec2&)>& g) {
    Vector f(static_cast<Eigen::Index>(mesh.boundary_nodes.size()));
    for (std::size_t i = 0; i < mesh.boundary_nodes.size(); ++i) f[static_cast<Eigen::Index>(i)] = g(mesh.nodes[mesh.boundary_nodes[i].index]);
    return f;
}

// Two-layer disk, datum cos(theta): u = g(r) cos(theta) with g = C r inside r0 and A r + B / r outside,
// from g(R) = 1, continuity of g and of (conductivity * g') at r0.
std::function<double(const Vec2&)> layered_cos_solution(double a, double b, double r0, double R) {
    Eigen::Matrix3d m;
    m << 0.0, R, 1.0 / R,                  // g(R) = 1
        r0, -r0, -1.0 / r0,                // C r0 = A r0 + B / r0
        b, -a, a / (r0 * r0);              // b C = a (A - B / r0^2)
    const Eigen::Vector3d c = m.colPivHouseholderQr().solve(Eigen::Vector3d(1.0, 0.0, 0.0));
    return [c, r0](const Vec2& x) {
        const double r = x.norm();
        if (r == 0.0) return 0.0;
        const double g = r < r0 ? c[0] * r : c[1] * r + c[2] / r;
        return g * x.x() / r;
    };
}

double discrete_l2_error(const Mesh& mesh, const Vector& u, const std::function<double(const Vec2&)>& exact) {
    double sum = 0.0;
    for (const auto& t : mesh.triangles) {
        double mean_sq = 0.0;
        for (auto v : t.v) {
            const double e = u[static_cast<Eigen::Index>(v)] - exact(mesh.nodes[v]);
            mean_sq += e * e / 3.0;
        }
        sum += mean_sq * signed_area(mesh.nodes[t.v[0]], mesh.nodes[t.v[1]], mesh.nodes[t.v[2]]);
    }
    return std::sqrt(sum);
}

} // namespace

TEST_CASE("element matrix of the unit right triangle") {
    const Eigen::Matrix3d k = element_stiffness({0, 0}, {1, 0}, {0, 1}, Mat2::Identity());
    Eigen::Matrix3d expected;
    expected << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
    CHECK((k - expected).norm() < 1e-15);

    const Eigen::Matrix3d k2 = element_stiffness({0, 0}, {1, 0}, {0, 1}, 2.0 * Mat2::Identity());
    CHECK(k2 == 2.0 * k);

    const Mesh m = single_triangle();
    const StiffnessSystem sys = assemble(m, identity_field());
    CHECK((Eigen::MatrixXd(sys.K) - expected).norm() < 1e-15);
}

TEST_CASE("assembled stiffness invariants") {
    const Mesh mesh = refine(build_disk_mesh(2.0, {1.0}, 0.2));
    Mat2 b;
    b << 3.0, 0.7, 0.7, 1.0;
    for (const TensorField& sigma : {identity_field(), make_case(4, {iso_const(1.0), aniso_const(b), 1.0})}) {
        const StiffnessSystem sys = assemble(mesh, sigma);
        const StiffnessInvariants inv = check_stiffness_invariants(sys);
        CHECK(inv.symmetry_error <= 1e-14);
        CHECK(inv.row_sum_error <= 1e-10);
        CHECK(inv.min_interior_pivot > 0.0);
        CHECK(sys.interior.size() + sys.boundary.size() == mesh.nodes.size());
        CHECK(sys.K_BB.rows() == static_cast<Eigen::Index>(mesh.boundary_nodes.size()));
    }
    const StiffnessSystem one = assemble(mesh, identity_field());
    const StiffnessSystem two = assemble(mesh, as_field(iso_const(2.0)));
    CHECK((Eigen::MatrixXd(two.K) - 2.0 * Eigen::MatrixXd(one.K)).norm() == 0.0);
}

TEST_CASE("assembly rejects non-SPD conductivity and names the triangle") {
    const Mesh mesh = build_disk_mesh(2.0, {1.0}, 0.5);
    const TensorField bad([](const Vec2& x) { return x.norm() < 1.0 ? Mat2(-Mat2::Identity()) : Mat2(Mat2::Identity()); },
                          FieldTag::case6);
    try {
        assemble(mesh, bad);
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("triangle"));
    }
}

TEST_CASE("constants and linear functions are reproduced") {
    const Mesh mesh = refine(build_disk_mesh(2.0, {1.0}, 0.2));
    const StiffnessSystem sys = assemble(mesh, identity_field());

    const Solution ones = solve_dirichlet(sys, Vector::Ones(static_cast<Eigen::Index>(sys.boundary_size())));
    CHECK((ones.u.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(std::abs(dirichlet_energy(sys, ones)) < 1e-12);

    const Solution lin = solve_dirichlet(sys, boundary_values(mesh, [](const Vec2& x) { return x.x(); }));
    double worst = 0.0;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) worst = std::max(worst, std::abs(lin.u[static_cast<Eigen::Index>(i)] - mesh.nodes[i].x()));
    CHECK(worst < 1e-9);
    CHECK(lin.relative_residual <= solve_tolerance);
    // grad x = e_1, so the energy is the polygon area.
    CHECK(dirichlet_energy(sys, lin) == Approx(total_area(mesh)).epsilon(1e-10));
    CHECK(dirichlet_energy(sys, lin) == Approx(4 * pi).epsilon(2e-3));
}

TEST_CASE("boundary values are copied exactly") {
    const Mesh mesh = build_disk_mesh(2.0, {1.0}, 0.2);
    const StiffnessSystem sys = assemble(mesh, make_case(1, {iso_const(1.0), iso_const(5.0), 1.0}));
    const Vector f = sample_boundary_datum(mesh, 3, Parity::sin);
    const Solution sol = solve_dirichlet(sys, f);
    for (std::size_t i = 0; i < sys.boundary.size(); ++i) CHECK(sol.u[static_cast<Eigen::Index>(sys.boundary[i])] == f[static_cast<Eigen::Index>(i)]);
    CHECK_THROWS_AS(solve_dirichlet(sys, Vector::Ones(3)), InvalidArgument);
    Vector nan_datum = f;
    nan_datum[0] = NAN;
    CHECK_THROWS_AS(solve_dirichlet(sys, nan_datum), InvalidArgument);
}

TEST_CASE("layered disk solution converges at second order") {
    const auto exact = layered_cos_solution(1.0, 2.0, 1.0, 2.0);
    const TensorField sigma = make_case(1, {iso_const(1.0), iso_const(2.0), 1.0});
    Mesh mesh = build_disk_mesh(2.0, {1.0}, 0.2);
    std::vector<double> errors;
    for (int level = 0; level < 3; ++level) {
        const StiffnessSystem sys = assemble(mesh, sigma);
        const Solution sol = solve_dirichlet(sys, sample_boundary_datum(mesh, 1, Parity::cos));
        errors.push_back(discrete_l2_error(mesh, sol.u, exact));
        if (level < 2) mesh = refine(mesh);
    }
    CHECK(errors[0] < 1e-2);
    for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i - 1] / errors[i] == Approx(4.0).epsilon(0.25));
}

TEST_CASE("energy converges monotonically under refinement") {
    // u = (r / R) cos(theta) on R = 2 has energy pi.
    Mesh mesh = build_disk_mesh(2.0, {}, 0.3);
    double previous = std::numeric_limits<double>::infinity();
    for (int level = 0; level < 3; ++level) {
        const StiffnessSystem sys = assemble(mesh, identity_field());
        const double e = dirichlet_energy(sys, solve_dirichlet(sys, sample_boundary_datum(mesh, 1, Parity::cos)));
        CHECK(std::abs(e - pi) < previous);
        previous = std::abs(e - pi);
        mesh = refine(mesh);
    }
    CHECK(previous < 1e-3);
}

TEST_CASE("discrete solution minimizes the energy") {
    const Mesh mesh = build_disk_mesh(2.0, {1.0}, 0.2);
    Mat2 b;
    b << 2.0, 0.5, 0.5, 1.0;
    const StiffnessSystem sys = assemble(mesh, make_case(4, {iso_const(1.0), aniso_const(b), 1.0}));
    const Solution sol = solve_dirichlet(sys, sample_boundary_datum(mesh, 2, Parity::cos));
    const double e0 = dirichlet_energy(sys, sol);
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        Vector v = sol.u;
        for (auto i : sys.interior) v[static_cast<Eigen::Index>(i)] += 0.01 * (2 * unit_uniform(rng) - 1);
        CHECK(dirichlet_energy(sys, v) > e0);
    }
    // Galerkin orthogonality.
    Vector ui(static_cast<Eigen::Index>(sys.interior.size()));
    for (std::size_t i = 0; i < sys.interior.size(); ++i) ui[static_cast<Eigen::Index>(i)] = sol.u[static_cast<Eigen::Index>(sys.interior[i])];
    const Vector kf = sys.K_IB * sol.boundary;
    CHECK((sys.K_II * ui + kf).norm() <= 1e-10 * kf.norm());
}

TEST_CASE("maximum principle for isotropic conductivity") {
    const Mesh mesh = build_disk_mesh(2.0, {1.0}, 0.15);
    const StiffnessSystem sys = assemble(mesh, make_case(1, {iso_const(1.0), iso_const(10.0), 1.0}));
    for (int k = 1; k <= 4; ++k) CHECK(satisfies_maximum_principle(solve_dirichlet(sys, sample_boundary_datum(mesh, k, Parity::cos))));
}

TEST_CASE("Fourier boundary data") {
    const Mesh mesh = build_disk_mesh(2.0, {}, 0.2);
    const Vector ones = sample_boundary_datum(mesh, 0, Parity::cos);
    CHECK((ones.array() == 1.0).all());
    const Vector c1 = sample_boundary_datum(mesh, 1, Parity::cos);
    for (std::size_t i = 0; i < mesh.boundary_nodes.size(); ++i)
        if (mesh.boundary_nodes[i].theta == 0.0) CHECK(c1[static_cast<Eigen::Index>(i)] == 1.0);
    CHECK(mesh.boundary_nodes.front().theta == 0.0);

    // Mass orthogonality of distinct modes, with the P1 trace mass matrix built here from edge lengths.
    auto mass_product = [&](const Mesh& m, const Vector& f, const Vector& g) {
        double s = 0.0;
        const std::size_t n = m.boundary_nodes.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            const double len = (m.nodes[m.boundary_nodes[i].index] - m.nodes[m.boundary_nodes[j].index]).norm();
            const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
            s += len / 6.0 * (2 * f[a] * g[a] + f[a] * g[b] + f[b] * g[a] + 2 * f[b] * g[b]);
        }
        return s;
    };
    double previous = 0.0;
    Mesh m = mesh;
    for (int level = 0; level < 3; ++level) {
        const double cross = std::abs(mass_product(m, sample_boundary_datum(m, 2, Parity::cos), sample_boundary_datum(m, 3, Parity::cos))) +
                             std::abs(mass_product(m, sample_boundary_datum(m, 1, Parity::cos), sample_boundary_datum(m, 1, Parity::sin)));
        const double self = mass_product(m, sample_boundary_datum(m, 2, Parity::cos), sample_boundary_datum(m, 2, Parity::cos));
        CHECK(cross < 1e-2 * self);
        if (level && previous > 1e-10) CHECK(cross < previous);
        previous = cross;
        m = refine(m);
    }
}

TEST_CASE("solution CSV") {
    const Mesh mesh = build_disk_mesh(2.0, {}, 0.5);
    const StiffnessSystem sys = assemble(mesh, identity_field());
    const Solution sol = solve_dirichlet(sys, sample_boundary_datum(mesh, 1, Parity::cos));
    std::ostringstream out;
    write_solution_csv(mesh, sol, out);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "node_index,x,y,u");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == mesh.nodes.size());
}
