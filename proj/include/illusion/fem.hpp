#pragma once

#include "illusion/conductivity.hpp"
#include "illusion/mesh.hpp"
#include "illusion/types.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace illusion {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// P1 element matrix  area * G sigma G^t  for the triangle (p0, p1, p2), counter-clockwise.
inline Eigen::Matrix3d element_stiffness(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Mat2& sigma) {
    const double area = signed_area(p0, p1, p2);
    Eigen::Matrix<double, 3, 2> grad;
    grad.row(0) << p1.y() - p2.y(), p2.x() - p1.x();
    grad.row(1) << p2.y() - p0.y(), p0.x() - p2.x();
    grad.row(2) << p0.y() - p1.y(), p1.x() - p0.x();
    grad /= 2.0 * area;
    return area * grad * sigma * grad.transpose();
}

/// Stiffness matrix with its interior/boundary partition and a factorization of the interior block.
struct StiffnessSystem {
    const Mesh* mesh = nullptr;
    SparseMatrix K;
    std::vector<std::size_t> interior; // global node ids, ascending
    std::vector<std::size_t> boundary; // global node ids, in mesh.boundary_nodes order
    SparseMatrix K_II, K_IB, K_BB;
    std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix>> factor; // of K_II

    std::size_t boundary_size() const { return boundary.size(); }
};

namespace detail {

inline SparseMatrix select_block(const SparseMatrix& K, const std::vector<std::ptrdiff_t>& row_map, std::size_t rows,
                                 const std::vector<std::ptrdiff_t>& col_map, std::size_t cols) {
    std::vector<Eigen::Triplet<double>> entries;
    for (int c = 0; c < K.outerSize(); ++c) {
        if (col_map[static_cast<std::size_t>(c)] < 0) continue;
        for (SparseMatrix::InnerIterator it(K, c); it; ++it)
            if (row_map[static_cast<std::size_t>(it.row())] >= 0)
                entries.emplace_back(static_cast<int>(row_map[static_cast<std::size_t>(it.row())]),
                                     static_cast<int>(col_map[static_cast<std::size_t>(c)]), it.value());
    }
    SparseMatrix block(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    block.setFromTriplets(entries.begin(), entries.end());
    return block;
}

} // namespace detail

/// Assembles the weak form of -div(sigma grad u) with sigma sampled at triangle centroids.
/// Contributions are accumulated in triangle order, so the result is bit-reproducible.
inline StiffnessSystem assemble(const Mesh& mesh, const TensorField& sigma) {
    const std::size_t n = mesh.nodes.size();
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(9 * mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& v = mesh.triangles[t].v;
        const Mat2 s = sigma(mesh.centroid(t));
        if (!s.allFinite() || !(symmetric_eigen(s).min > 0.0))
            throw InvalidArgument("conductivity is not symmetric positive definite at the centroid of triangle " +
                                  std::to_string(t));
        const Eigen::Matrix3d ke = element_stiffness(mesh.nodes[v[0]], mesh.nodes[v[1]], mesh.nodes[v[2]], s);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                entries.emplace_back(static_cast<int>(v[a]), static_cast<int>(v[b]), ke(a, b));
    }

    StiffnessSystem sys;
    sys.mesh = &mesh;
    sys.K.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    sys.K.setFromTriplets(entries.begin(), entries.end());

    std::vector<std::ptrdiff_t> interior_map(n, -1), boundary_map(n, -1);
    for (const auto& b : mesh.boundary_nodes) {
        boundary_map[b.index] = static_cast<std::ptrdiff_t>(sys.boundary.size());
        sys.boundary.push_back(b.index);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (boundary_map[i] < 0) {
            interior_map[i] = static_cast<std::ptrdiff_t>(sys.interior.size());
            sys.interior.push_back(i);
        }
    const std::size_t ni = sys.interior.size(), nb = sys.boundary.size();
    sys.K_II = detail::select_block(sys.K, interior_map, ni, interior_map, ni);
    sys.K_IB = detail::select_block(sys.K, interior_map, ni, boundary_map, nb);
    sys.K_BB = detail::select_block(sys.K, boundary_map, nb, boundary_map, nb);

    auto factor = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>();
    if (ni > 0) {
        factor->compute(sys.K_II);
        if (factor->info() != Eigen::Success)
            throw NumericalError("interior stiffness block is not positive definite");
    }
    sys.factor = std::move(factor);
    return sys;
}

struct StiffnessInvariants {
    double symmetry_error = 0.0; // max |K - K^t| / max |K|
    double row_sum_error = 0.0;  // max |row sum| / max |K|
    double min_interior_pivot = 0.0;
};

inline StiffnessInvariants check_stiffness_invariants(const StiffnessSystem& sys) {
    StiffnessInvariants inv;
    const SparseMatrix diff = SparseMatrix(sys.K.transpose()) - sys.K;
    double kmax = 0.0, dmax = 0.0;
    for (int c = 0; c < sys.K.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(sys.K, c); it; ++it) kmax = std::max(kmax, std::abs(it.value()));
    for (int c = 0; c < diff.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(diff, c); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
    const Vector rows = sys.K * Vector::Ones(sys.K.cols());
    inv.symmetry_error = kmax > 0.0 ? dmax / kmax : 0.0;
    inv.row_sum_error = kmax > 0.0 ? rows.cwiseAbs().maxCoeff() / kmax : 0.0;
    if (sys.K_II.rows() > 0) {
        const SparseMatrix& L = sys.factor->matrixL().nestedExpression();
        inv.min_interior_pivot = std::numeric_limits<double>::infinity();
        for (int c = 0; c < L.outerSize(); ++c)
            for (SparseMatrix::InnerIterator it(L, c); it; ++it)
                if (it.row() == c) inv.min_interior_pivot = std::min(inv.min_interior_pivot, it.value());
    }
    return inv;
}

struct Solution {
    Vector u;        // all nodes
    Vector boundary; // the prescribed datum, in boundary order
    double relative_residual = 0.0;
};

inline constexpr double solve_tolerance = 1e-10;

/// Interior values from K_II u_I = -K_IB f; boundary values copied from f.
inline Solution solve_dirichlet(const StiffnessSystem& sys, const Vector& f) {
    if (static_cast<std::size_t>(f.size()) != sys.boundary.size())
        throw InvalidArgument("boundary datum has " + std::to_string(f.size()) + " values, expected " +
                              std::to_string(sys.boundary.size()));
    if (!f.allFinite()) throw InvalidArgument("boundary datum is not finite");

    Solution sol;
    sol.boundary = f;
    sol.u = Vector::Zero(static_cast<Eigen::Index>(sys.mesh->nodes.size()));
    for (std::size_t i = 0; i < sys.boundary.size(); ++i) sol.u[static_cast<Eigen::Index>(sys.boundary[i])] = f[static_cast<Eigen::Index>(i)];
    if (sys.interior.empty()) return sol;

    const Vector rhs = -(sys.K_IB * f);
    Vector ui = sys.factor->solve(rhs);
    Vector residual = rhs - sys.K_II * ui;
    const double scale = rhs.norm();
    if (scale > 0.0 && residual.norm() > solve_tolerance * scale) {
        ui += sys.factor->solve(residual); // one step of iterative refinement
        residual = rhs - sys.K_II * ui;
    }
    sol.relative_residual = scale > 0.0 ? residual.norm() / scale : residual.norm();
    if (!ui.allFinite() || (scale > 0.0 && sol.relative_residual > solve_tolerance))
        throw NumericalError("Dirichlet solve did not reach the residual bound (relative residual " +
                             std::to_string(sol.relative_residual) + ")");
    for (std::size_t i = 0; i < sys.interior.size(); ++i)
        sol.u[static_cast<Eigen::Index>(sys.interior[i])] = ui[static_cast<Eigen::Index>(i)];
    return sol;
}

/// Quadratic form u^t K u.
inline double dirichlet_energy(const StiffnessSystem& sys, const Vector& u) { return u.dot(sys.K * u); }
inline double dirichlet_energy(const StiffnessSystem& sys, const Solution& sol) { return dirichlet_energy(sys, sol.u); }

enum class Parity { cos, sin };

inline Vector sample_boundary_datum(const Mesh& mesh, int k, Parity parity) {
    Vector f(static_cast<Eigen::Index>(mesh.boundary_nodes.size()));
    for (std::size_t i = 0; i < mesh.boundary_nodes.size(); ++i) {
        const double arg = k * mesh.boundary_nodes[i].theta;
        f[static_cast<Eigen::Index>(i)] = parity == Parity::cos ? std::cos(arg) : std::sin(arg);
    }
    return f;
}

// Discrete maximum principle, min f - slack <= u <= max f + slack.
inline bool satisfies_maximum_principle(const Solution& sol, double slack = 1e-9) {
    if (sol.boundary.size() == 0) return true;
    return sol.u.minCoeff() >= sol.boundary.minCoeff() - slack && sol.u.maxCoeff() <= sol.boundary.maxCoeff() + slack;
}

inline void write_solution_csv(const Mesh& mesh, const Solution& sol, std::ostream& out) {
    out << "node_index,x,y,u\n" << std::setprecision(17);
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
        out << i << ',' << mesh.nodes[i].x() << ',' << mesh.nodes[i].y() << ',' << sol.u[static_cast<Eigen::Index>(i)] << '\n';
}

} // namespace illusion
