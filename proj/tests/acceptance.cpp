// Acceptance gate: one PASS/FAIL line per criterion, tolerances fixed below.

#include "illusion/illusion.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <string>

using namespace illusion;

namespace {

constexpr double oracle_rel_tol = 0.02;
constexpr double min_error_reduction = 2.0;
constexpr double runtime_limit_s = 120.0;
constexpr double oracle_limit_tol = 1e-9;
constexpr double invariance_factor = 3.0;
constexpr double separation_factor = 10.0;
constexpr double oracle_gap_rel_tol = 0.05;
constexpr double property_gap_floor = 0.05;
constexpr double det_preservation_tol = 1e-9;
constexpr double min_slope = 1.5;
constexpr double functoriality_tol = 1e-10;
constexpr double det_identity_tol = 1e-10;
constexpr double jacobian_fd_tol = 1e-6;
constexpr double round_trip_tol = 1e-12;
constexpr double stiffness_symmetry_tol = 1e-14;
constexpr double row_sum_tol = 1e-10;
constexpr double dtn_symmetry_tol = 1e-12;
constexpr double conservation_tol = 1e-9;
constexpr double energy_identity_tol = 1e-9;
constexpr int min_refinements = 2;

struct Gate {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

int failures = 0;

void report_line(int id, const std::string& title, const Gate& g, const std::string& info) {
    std::cout << (g.ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << "  [" << info << "]";
    if (!g.ok) std::cout << "  failed: " << g.detail;
    std::cout << std::endl;
    if (!g.ok) ++failures;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

ExperimentConfig defaults(const std::string& scenario) {
    ExperimentConfig c;
    c.scenario = scenario;
    c.write_dtn = false;
    return c;
}

std::vector<double> column(const json& levels, const char* key) {
    std::vector<double> out;
    for (const auto& l : levels) out.push_back(l.at(key).get<double>());
    return out;
}

// distance <= 3 cal at every level, monotone shrink, and the per-probe energy gap under the same bound.
void invariance_checks(Gate& g, const ExperimentReport& r, bool require_decrease, std::string& info) {
    const auto d = column(r.data["levels"], "distance");
    const auto cal = column(r.data["levels"], "calibrated_error");
    const auto gap = column(r.data["levels"], "max_energy_gap");
    const auto disc = column(r.data["levels"], "oracle_max_rel_error_k8");
    g.require(static_cast<int>(d.size()) >= min_refinements + 1, "too few refinement levels");
    for (std::size_t l = 0; l < d.size(); ++l) {
        g.require(d[l] <= invariance_factor * cal[l], "distance above bound at level " + std::to_string(l));
        g.require(gap[l] <= invariance_factor * cal[l], "energy gap above bound at level " + std::to_string(l));
        g.require(disc[l] < 0.05, "calibration discipline at level " + std::to_string(l));
        if (require_decrease && l) g.require(d[l] < d[l - 1] || (d[l] == 0.0 && d[l - 1] == 0.0), "distance not decreasing");
        info += (l ? ", " : "") + std::string("L") + std::to_string(l) + " d/cal=" + fmt(d[l] / cal[l]);
    }
}

template <class F>
double timed(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

int main() {
    std::cout << "acceptance: workers=" << worker_count() << std::endl;

    // 1 and 2: oracle convergence study.
    ExperimentReport conv;
    const double conv_seconds = timed([&] { conv = run_experiment(defaults("convergence_study")); });
    {
        Gate g;
        const auto& levels = conv.data["levels"];
        g.require(static_cast<int>(levels.size()) >= min_refinements + 1, "fewer than 2 refinements");
        double worst = 0.0, min_ratio = 1e300;
        for (const auto& row : levels.back()["homogeneous"]) {
            g.require(row["oracle"].get<double>() == row["k"].get<int>() / 2.0, "homogeneous oracle is not k/2");
            worst = std::max(worst, row["rel_error"].get<double>());
        }
        g.require(levels.back()["homogeneous"].size() == 8, "k = 1..8 not covered");
        g.require(worst < oracle_rel_tol, "relative error " + fmt(worst));
        for (std::size_t l = 0; l + 1 < levels.size(); ++l)
            for (std::size_t k = 0; k < 8; ++k) {
                const auto err = [&](std::size_t lv) {
                    const auto& row = levels[lv]["homogeneous"][k];
                    return row["rel_error"].get<double>() * row["oracle"].get<double>();
                };
                min_ratio = std::min(min_ratio, err(l) / err(l + 1));
            }
        g.require(min_ratio >= min_error_reduction, "error reduction " + fmt(min_ratio));
        g.require(conv_seconds < runtime_limit_s, "runtime " + fmt(conv_seconds) + " s");
        report_line(1, "homogeneous-disk oracle", g,
                    "max rel err " + fmt(worst) + ", min reduction " + fmt(min_ratio) + ", study " + fmt(conv_seconds) + " s");
    }
    {
        Gate g;
        double worst = 0.0;
        for (const auto& row : conv.data["levels"].back()["layered"]) {
            const double oracle = oracle_layered(row["k"].get<int>(), 1.0, 2.0, 1.0, 2.0);
            g.require(row["oracle"].get<double>() == oracle, "layered oracle mismatch");
            worst = std::max(worst, row["rel_error"].get<double>());
        }
        g.require(worst < oracle_rel_tol, "relative error " + fmt(worst));
        double collapse = 0.0, vanish = 0.0;
        for (int k = 1; k <= 8; ++k) {
            collapse = std::max(collapse, std::abs(oracle_layered(k, 1.0, 1.0, 1.0, 2.0) - k / 2.0));
            vanish = std::max(vanish, std::abs(oracle_layered(k, 1.0, 2.0, 1e-6, 2.0) - k / 2.0));
        }
        g.require(collapse <= oracle_limit_tol, "b = a collapse " + fmt(collapse));
        g.require(vanish <= oracle_limit_tol, "r0 -> 0 limit " + fmt(vanish));
        report_line(2, "layered-disk oracle", g,
                    "max rel err " + fmt(worst) + ", collapse " + fmt(collapse) + ", r0->0 " + fmt(vanish));
    }

    // 3: push-forward invariance.
    {
        const ExperimentReport r = run_experiment(defaults("prop2_invariance"));
        Gate g;
        std::string info;
        invariance_checks(g, r, true, info);
        g.require(r.data["diffeo"]["kind"] == "cloak", "not the cloak map");
        report_line(3, "push-forward invariance", g, info);
    }

    // 4: distinguishability.
    {
        const ExperimentReport r = run_experiment(defaults("domain_distinguish"));
        Gate g;
        const auto d = column(r.data["levels"], "distance");
        const auto cal = column(r.data["levels"], "calibrated_error");
        g.require(static_cast<int>(d.size()) >= min_refinements + 1, "too few refinement levels");
        const double change = std::abs(d.back() - d[d.size() - 2]) / d.back();
        g.require(change <= 0.05, "distance not mesh-converged");
        g.require(d.back() >= separation_factor * cal.back(), "separation " + fmt(d.back() / cal.back()) + "x");
        const double gap = r.data["oracle_gap"].get<double>();
        g.require(std::abs(d.back() - gap) / gap <= oracle_gap_rel_tol, "oracle gap mismatch");
        g.require(r.data["jump_gap_D1"].get<double>() > jump_gap_threshold, "jump condition D1");
        g.require(r.data["jump_gap_D2"].get<double>() > jump_gap_threshold, "jump condition D2");
        // Informational only: the same separation measured with 16 probes.
        ExperimentConfig deep = defaults("domain_distinguish");
        deep.probes = 16;
        const ExperimentReport r16 = run_experiment(deep);
        const double ratio16 = r16.data["levels"].back()["distance"].get<double>() /
                               r16.data["levels"].back()["calibrated_error"].get<double>();
        report_line(4, "domain distinguishability", g,
                    "distance " + fmt(d.back()) + ", " + fmt(d.back() / cal.back()) + "x calibrated (K=" +
                        std::to_string(r.config["probes"].get<int>()) + "), oracle gap " + fmt(gap) +
                        "; K=16 gives " + fmt(ratio16) + "x");
    }

    // 5: full push-forward illusion.
    {
        const ExperimentReport r = run_experiment(defaults("full_pushforward_illusion"));
        Gate g;
        std::string info;
        invariance_checks(g, r, true, info);
        const double aniso = r.data["background_max_anisotropy"].get<double>();
        g.require(aniso > 1.0, "background is isotropic");
        report_line(5, "full push-forward illusion", g, info + ", anisotropy " + fmt(aniso));
    }

    // 6: property illusion.
    {
        const ExperimentReport r = run_experiment(defaults("property_illusion"));
        Gate g;
        std::string info;
        invariance_checks(g, r, false, info);
        const double gap = r.data["max_pointwise_relative_gap"].get<double>();
        const double det = r.data["determinant_preservation_error"].get<double>();
        g.require(gap > property_gap_floor, "B2 too close to B1");
        g.require(det <= det_preservation_tol, "determinant error " + fmt(det));
        report_line(6, "property illusion", g, info + ", pointwise gap " + fmt(gap) + ", det err " + fmt(det));
    }

    // 7: near-cloak trend.
    {
        const ExperimentReport r = run_experiment(defaults("small_inclusion_trend"));
        Gate g;
        const auto eps = r.data["eps"].get<std::vector<double>>();
        const auto d = r.data["distances"].get<std::vector<double>>();
        g.require(eps == std::vector<double>({0.8, 0.4, 0.2, 0.1}), "unexpected eps list");
        for (std::size_t i = 1; i < d.size(); ++i) g.require(d[i] < d[i - 1], "not strictly decreasing");
        const double slope = r.data["fitted_slope"].get<double>();
        g.require(slope >= min_slope, "slope " + fmt(slope));
        report_line(7, "near-cloak trend", g, "fitted slope " + fmt(slope));
    }

    // 8: algebraic properties.
    {
        Gate g;
        const double R = 2.0;
        const RadialDiffeo f = make_cloak_map(0.5, 1.0, R);
        const RadialDiffeo h = make_interior_diffeo(0.3, 1.0, R);
        const RadialDiffeo id = make_identity_diffeo(R);
        Mat2 bm;
        bm << 3.0, 0.5, 0.5, 1.5;
        const TensorField sigma = make_case(5, {radial_poly({1.0, 0.25}), aniso_const(bm), 1.0});
        const TensorField p_id = pushforward(id, sigma);
        const TensorField p_comp = pushforward(compose(f, h), sigma);
        const TensorField p_seq = pushforward(f, pushforward(h, sigma));
        const TensorField p_f = pushforward(f, sigma);

        std::mt19937_64 rng(2024);
        double e_id = 0, e_comp = 0, e_det = 0, e_fd = 0, e_rt = 0;
        int samples = 0;
        while (samples < 1000) {
            const Vec2 y(R * (2 * unit_uniform(rng) - 1), R * (2 * unit_uniform(rng) - 1));
            const double r = y.norm();
            if (r >= R - 1e-5 || r < 1e-3 || std::abs(r - 1.0) < 1e-4 || std::abs(r - 0.5) < 1e-4) continue;
            ++samples;
            e_id = std::max(e_id, (p_id(y) - sigma(y)).norm() / sigma(y).norm());
            e_comp = std::max(e_comp, (p_comp(y) - p_seq(y)).norm() / p_seq(y).norm());
            const double ds = sigma(f.inverse_apply(y)).determinant();
            e_det = std::max(e_det, std::abs(p_f(y).determinant() - ds) / ds);
            for (const RadialDiffeo* m : {&f, &h}) {
                const Mat2 j = m->jacobian(y);
                e_fd = std::max(e_fd, (j - jacobian_fd(*m, y)).norm() / j.norm());
                e_rt = std::max(e_rt, (m->inverse_apply(m->apply(y)) - y).norm() / R);
            }
        }
        g.require(e_id <= functoriality_tol, "identity functoriality");
        g.require(e_comp <= functoriality_tol, "composition functoriality");
        g.require(e_det <= det_identity_tol, "determinant preservation");
        g.require(e_fd <= jacobian_fd_tol, "Jacobian vs finite differences");
        g.require(e_rt <= round_trip_tol, "round trip");

        const Mesh mesh = refine(build_disk_mesh(R, {0.5, 1.0}, 0.1));
        const StiffnessSystem sys = assemble(mesh, p_f);
        const StiffnessInvariants si = check_stiffness_invariants(sys);
        g.require(si.symmetry_error <= stiffness_symmetry_tol, "stiffness symmetry");
        g.require(si.row_sum_error <= row_sum_tol, "stiffness row sums");
        g.require(si.min_interior_pivot > 0.0, "interior block not positive definite");
        const DtnMatrix dtn = schur_dtn(sys);
        const DtnInvariants di = check_dtn_invariants(dtn);
        g.require(di.symmetry_error <= dtn_symmetry_tol, "DtN symmetry");
        g.require(di.conservation_error <= conservation_tol, "DtN conservation");
        g.require(di.min_mean_zero_eigenvalue > 0.0, "DtN not positive on mean-zero data");
        double e_energy = 0.0;
        for (int t = 0; t < 5; ++t) {
            Vector datum(dtn.size());
            for (Eigen::Index i = 0; i < datum.size(); ++i) datum[i] = 2 * unit_uniform(rng) - 1;
            const double energy = dirichlet_energy(sys, solve_dirichlet(sys, datum));
            e_energy = std::max(e_energy, std::abs(datum.dot(dtn.lambda * datum) - energy) / energy);
        }
        g.require(e_energy <= energy_identity_tol, "energy identity");
        report_line(8, "algebraic property suite", g,
                    "functoriality " + fmt(std::max(e_id, e_comp)) + ", det " + fmt(e_det) + ", fd " + fmt(e_fd) +
                        ", round trip " + fmt(e_rt) + ", K sym " + fmt(si.symmetry_error) + ", DtN sym " +
                        fmt(di.symmetry_error) + ", energy " + fmt(e_energy));
    }

    std::cout << (failures ? "acceptance: FAIL" : "acceptance: PASS") << " (" << 8 - failures << "/8)" << std::endl;
    return failures ? 1 : 0;
}
