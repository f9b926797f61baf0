#pragma once

#include "illusion/fem.hpp"
#include "illusion/mesh.hpp"
#include "illusion/types.hpp"

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace illusion {

/// Discrete Dirichlet-to-Neumann operator on the ordered boundary nodes.
struct DtnMatrix {
    Eigen::MatrixXd lambda;      // weak boundary flux: f^t lambda f is the Dirichlet energy
    SparseMatrix boundary_mass;  // P1 trace mass matrix, cyclic tridiagonal
    std::vector<double> angles;  // boundary node angles
    std::string provenance;

    Eigen::Index size() const { return lambda.rows(); }
};

inline SparseMatrix boundary_mass_matrix(const Mesh& mesh) {
    const std::size_t nb = mesh.boundary_nodes.size();
    std::vector<Eigen::Triplet<double>> entries;
    for (std::size_t i = 0; i < nb; ++i) {
        const std::size_t j = (i + 1) % nb;
        const double len = (mesh.nodes[mesh.boundary_nodes[i].index] - mesh.nodes[mesh.boundary_nodes[j].index]).norm();
        const int a = static_cast<int>(i), b = static_cast<int>(j);
        entries.emplace_back(a, a, len / 3.0);
        entries.emplace_back(b, b, len / 3.0);
        entries.emplace_back(a, b, len / 6.0);
        entries.emplace_back(b, a, len / 6.0);
    }
    SparseMatrix m(static_cast<Eigen::Index>(nb), static_cast<Eigen::Index>(nb));
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
}

// Worker count: ILLUSION_LAB_THREADS if set, otherwise the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("ILLUSION_LAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Schur complement K_BB - K_BI K_II^{-1} K_IB, built from column-block solves.
/// Blocks are independent and are written to disjoint columns, so the result does
/// not depend on the number of workers.
inline DtnMatrix schur_dtn(const StiffnessSystem& sys, std::string provenance = {}) {
    const Eigen::Index nb = static_cast<Eigen::Index>(sys.boundary.size());
    DtnMatrix dtn;
    dtn.lambda = Eigen::MatrixXd(sys.K_BB);
    dtn.boundary_mass = boundary_mass_matrix(*sys.mesh);
    for (const auto& b : sys.mesh->boundary_nodes) dtn.angles.push_back(b.theta);
    dtn.provenance = std::move(provenance);
    if (sys.interior.empty()) return dtn;

    const SparseMatrix K_BI = sys.K_IB.transpose();
    constexpr Eigen::Index block = 32;
    const Eigen::Index n_blocks = (nb + block - 1) / block;
    auto run_block = [&](Eigen::Index blk) {
        const Eigen::Index first = blk * block, width = std::min(block, nb - first);
        const Eigen::MatrixXd rhs = Eigen::MatrixXd(sys.K_IB.middleCols(first, width));
        const Eigen::MatrixXd x = sys.factor->solve(rhs);
        dtn.lambda.middleCols(first, width) -= K_BI * x;
    };
    const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(n_blocks));
    if (workers <= 1) {
        for (Eigen::Index b = 0; b < n_blocks; ++b) run_block(b);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (Eigen::Index b = w; b < n_blocks; b += workers) run_block(b);
            });
    }
    if (!dtn.lambda.allFinite()) throw NumericalError("Schur complement produced non-finite entries");
    return dtn;
}

inline DtnMatrix schur_dtn(const Mesh& mesh, const TensorField& sigma, std::string provenance = {}) {
    return schur_dtn(assemble(mesh, sigma), std::move(provenance));
}

/// Rayleigh quotient f^t Lambda f / f^t M f averaged over the cos(k theta) and sin(k theta) probes.
inline double dtn_eigenvalue_estimate(const DtnMatrix& dtn, const Mesh& mesh, int k) {
    double sum = 0.0;
    int used = 0;
    for (Parity p : {Parity::cos, Parity::sin}) {
        const Vector f = sample_boundary_datum(mesh, k, p);
        const double mass = f.dot(dtn.boundary_mass * f);
        if (mass <= 1e-12 * dtn.boundary_mass.diagonal().sum()) continue;
        sum += f.dot(dtn.lambda * f) / mass;
        ++used;
    }
    return used ? sum / used : 0.0;
}

/// Continuum eigenvalue |k| / R of the unit-conductivity disk.
inline double oracle_homogeneous(int k, double outer_radius) {
    if (!(outer_radius > 0.0)) throw InvalidArgument("oracle_homogeneous: R must be positive");
    return std::abs(k) / outer_radius;
}

/// k-th eigenvalue of the two-layer disk with conductivity b on r < r0 and a outside.
/// With u = c r^k inside, u = alpha r^k + beta r^-k outside, continuity of u and a du/dr
/// at r0 gives  lambda = (a k / R) (1 + t) / (1 - t),  t = (b - a)/(b + a) (r0 / R)^(2k).
inline double oracle_layered(int k, double a, double b, double r0, double outer_radius) {
    if (k < 1) throw InvalidArgument("oracle_layered: k must be >= 1");
    if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("oracle_layered: conductivities must be positive");
    if (!(r0 > 0.0 && r0 < outer_radius)) throw InvalidArgument("oracle_layered: need 0 < r0 < R");
    const double t = (b - a) / (b + a) * std::pow(r0 / outer_radius, 2 * k);
    return a * k / outer_radius * (1.0 + t) / (1.0 - t);
}

inline constexpr int default_probe_depth = 16;

struct ProbeDistance {
    int k;
    Parity parity;
    double value;
};

inline void require_same_boundary(const DtnMatrix& a, const DtnMatrix& b) {
    if (a.size() != b.size() || a.angles.size() != b.angles.size())
        throw InvalidArgument("DtN maps are defined on different boundary node sets");
    for (std::size_t i = 0; i < a.angles.size(); ++i)
        if (std::abs(a.angles[i] - b.angles[i]) > 1e-12) throw InvalidArgument("DtN maps have different boundary nodes");
}

/// Per-probe ||(L1 - L2) f||_{M^-1} / ||f||_M for k = 0..K and both parities.
inline std::vector<ProbeDistance> dtn_distance_profile(const DtnMatrix& d1, const DtnMatrix& d2, const Mesh& mesh,
                                                       int probes = default_probe_depth) {
    require_same_boundary(d1, d2);
    if (static_cast<std::size_t>(d1.size()) != mesh.boundary_nodes.size())
        throw InvalidArgument("mesh does not match the DtN boundary");
    Eigen::SimplicialLDLT<SparseMatrix> mass(d1.boundary_mass);
    if (mass.info() != Eigen::Success) throw NumericalError("boundary mass matrix factorization failed");
    const Eigen::MatrixXd diff = d1.lambda - d2.lambda;
    std::vector<ProbeDistance> out;
    for (int k = 0; k <= probes; ++k)
        for (Parity p : {Parity::cos, Parity::sin}) {
            if (k == 0 && p == Parity::sin) continue;
            const Vector f = sample_boundary_datum(mesh, k, p);
            const double fm = f.dot(d1.boundary_mass * f);
            const Vector g = diff * f;
            const double gm = g.dot(mass.solve(g));
            out.push_back({k, p, std::sqrt(std::max(0.0, gm) / fm)});
        }
    return out;
}

/// Fourier-probe pseudometric between two DtN maps on the same boundary.
inline double dtn_distance(const DtnMatrix& d1, const DtnMatrix& d2, const Mesh& mesh, int probes = default_probe_depth) {
    double best = 0.0;
    for (const auto& p : dtn_distance_profile(d1, d2, mesh, probes)) best = std::max(best, p.value);
    return best;
}

struct DtnInvariants {
    double symmetry_error = 0.0;     // max |L - L^t| / max |L|
    double conservation_error = 0.0; // ||L 1||_inf / max |L|
    double min_mean_zero_eigenvalue = 0.0;
};

inline DtnInvariants check_dtn_invariants(const DtnMatrix& dtn) {
    DtnInvariants inv;
    const double scale = dtn.lambda.cwiseAbs().maxCoeff();
    inv.symmetry_error = (dtn.lambda - dtn.lambda.transpose()).cwiseAbs().maxCoeff() / scale;
    inv.conservation_error = (dtn.lambda * Vector::Ones(dtn.size())).cwiseAbs().maxCoeff() / scale;
    const Eigen::MatrixXd sym = 0.5 * (dtn.lambda + dtn.lambda.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
    // The smallest eigenvalue belongs to the constants; the next one bounds the mean-zero subspace.
    inv.min_mean_zero_eigenvalue = dtn.size() > 1 ? eig.eigenvalues()[1] : 0.0;
    return inv;
}

inline void write_dtn_csv(const DtnMatrix& dtn, std::ostream& out) {
    out << std::setprecision(17);
    for (std::size_t i = 0; i < dtn.angles.size(); ++i) out << (i ? "," : "") << dtn.angles[i];
    out << '\n';
    for (Eigen::Index r = 0; r < dtn.size(); ++r) {
        for (Eigen::Index c = 0; c < dtn.size(); ++c) out << (c ? "," : "") << dtn.lambda(r, c);
        out << '\n';
    }
}

struct EigenvalueRow {
    int k;
    double estimate;
    double oracle;
    double rel_error;
};

inline void write_eigenvalue_csv(const std::vector<EigenvalueRow>& rows, std::ostream& out) {
    out << "k,estimate,oracle,rel_error\n" << std::setprecision(17);
    for (const auto& r : rows) out << r.k << ',' << r.estimate << ',' << r.oracle << ',' << r.rel_error << '\n';
}

} // namespace illusion
