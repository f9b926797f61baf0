#pragma once

#include "illusion/config.hpp"
#include "illusion/conductivity.hpp"
#include "illusion/diffeo.hpp"
#include "illusion/dtn.hpp"
#include "illusion/fem.hpp"
#include "illusion/mesh.hpp"
#include "illusion/svg.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace illusion {

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"prop2_invariance",  "domain_distinguish",    "full_pushforward_illusion",
                                                "small_inclusion_trend", "property_illusion", "convergence_study"};
    return names;
}

struct ExperimentConfig {
    std::string scenario = "prop2_invariance";
    double outer_radius = 2.0;
    double inclusion_radius = 1.0; // r_D; also r_1 for domain_distinguish and r0 for convergence_study
    double second_radius = 0.5;    // r_2 for domain_distinguish
    double eps = 0.5;
    std::vector<double> eps_list{0.8, 0.4, 0.2, 0.1};
    double interior_c = 0.3;
    double target_h = 0.1;
    int refinements = 2;
    std::optional<int> probes;
    int max_k = 8;
    std::uint64_t seed = 42;
    json background = {{"kind", "iso_const"}, {"value", 1.0}};
    json inclusion = {{"kind", "iso_const"}, {"value", 2.0}};
    std::optional<json> sigma;  // prop2_invariance base conductivity override
    std::optional<json> diffeo; // prop2_invariance diffeo override
    bool write_dtn = true;       // per-level dtn_*.csv

    // Distinguishability compares against the k <= 8 band the calibration discipline trusts.
    int probe_depth() const { return probes.value_or(scenario == "domain_distinguish" ? 8 : default_probe_depth); }

    void validate() const {
        if (std::find(scenario_names().begin(), scenario_names().end(), scenario) == scenario_names().end())
            throw InvalidArgument("unknown scenario \"" + scenario + "\"");
        if (!(0.0 < inclusion_radius && inclusion_radius < outer_radius)) throw InvalidArgument("need 0 < r_D < R");
        if (!(0.0 < second_radius && second_radius < outer_radius)) throw InvalidArgument("need 0 < r_2 < R");
        if (!(0.0 < eps && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
        for (double e : eps_list)
            if (!(0.0 < e && e < 1.0)) throw InvalidArgument("eps_list entries must lie in (0, 1)");
        if (scenario == "small_inclusion_trend" && eps_list.size() < 2) throw InvalidArgument("eps_list needs >= 2 entries");
        if (!(std::abs(interior_c) < 1.0)) throw InvalidArgument("c must satisfy |c| < 1");
        if (!(target_h > 0.0)) throw InvalidArgument("target_h must be positive");
        if (refinements < 0 || refinements > 5) throw InvalidArgument("refinements must be in 0..5");
        if (probe_depth() < 1) throw InvalidArgument("probes must be >= 1");
        if (max_k < 1) throw InvalidArgument("max_k must be >= 1");
    }
};

inline ExperimentConfig experiment_config_from_json(const json& j) {
    if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
    static const std::vector<std::string> known{"scenario", "R", "r_D", "r_2", "eps", "eps_list", "c", "target_h",
                                                "refinements", "probes", "max_k", "seed", "background", "inclusion",
                                                "sigma", "diffeo", "write_dtn"};
    for (const auto& [key, value] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw InvalidArgument("unknown config key \"" + key + "\"");
    const std::string ctx = "experiment config";
    ExperimentConfig c;
    c.scenario = detail::require<std::string>(j, "scenario", ctx);
    c.outer_radius = detail::optional_value(j, "R", c.outer_radius, ctx);
    c.inclusion_radius = detail::optional_value(j, "r_D", c.inclusion_radius, ctx);
    c.second_radius = detail::optional_value(j, "r_2", c.second_radius, ctx);
    c.eps = detail::optional_value(j, "eps", c.eps, ctx);
    c.eps_list = detail::optional_value(j, "eps_list", c.eps_list, ctx);
    c.interior_c = detail::optional_value(j, "c", c.interior_c, ctx);
    c.target_h = detail::optional_value(j, "target_h", c.target_h, ctx);
    c.refinements = detail::optional_value(j, "refinements", c.refinements, ctx);
    if (j.contains("probes")) c.probes = detail::require<int>(j, "probes", ctx);
    c.max_k = detail::optional_value(j, "max_k", c.max_k, ctx);
    c.seed = detail::optional_value<std::uint64_t>(j, "seed", c.seed, ctx);
    if (j.contains("background")) c.background = j.at("background");
    if (j.contains("inclusion")) c.inclusion = j.at("inclusion");
    if (j.contains("sigma")) c.sigma = j.at("sigma");
    if (j.contains("diffeo")) c.diffeo = j.at("diffeo");
    c.write_dtn = detail::optional_value(j, "write_dtn", c.write_dtn, ctx);
    c.validate();
    return c;
}

inline json to_json(const ExperimentConfig& c) {
    json j{{"scenario", c.scenario}, {"R", c.outer_radius},   {"r_D", c.inclusion_radius}, {"r_2", c.second_radius},
           {"eps", c.eps},           {"eps_list", c.eps_list}, {"c", c.interior_c},        {"target_h", c.target_h},
           {"refinements", c.refinements}, {"probes", c.probe_depth()}, {"max_k", c.max_k}, {"seed", c.seed},
           {"background", c.background}, {"inclusion", c.inclusion}, {"write_dtn", c.write_dtn}};
    if (c.sigma) j["sigma"] = *c.sigma;
    if (c.diffeo) j["diffeo"] = *c.diffeo;
    return j;
}

/// One pass/fail check. The verdict is a pure function of (op, lhs, rhs).
struct Criterion {
    std::string name;
    std::string op; // le | lt | ge | gt (elementwise) | strictly_decreasing | monotone_decreasing
    std::vector<double> lhs;
    std::vector<double> rhs;
    bool passed = false;
};

inline bool evaluate_criterion(const std::string& op, const std::vector<double>& lhs, const std::vector<double>& rhs) {
    if (lhs.empty()) return false;
    for (double v : lhs)
        if (!std::isfinite(v)) return false;
    if (op == "strictly_decreasing" || op == "monotone_decreasing") {
        for (std::size_t i = 1; i < lhs.size(); ++i) {
            const bool ok = lhs[i] < lhs[i - 1] || (op == "monotone_decreasing" && lhs[i] == 0.0 && lhs[i - 1] == 0.0);
            if (!ok) return false;
        }
        return true;
    }
    if (lhs.size() != rhs.size()) return false;
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        const double a = lhs[i], b = rhs[i];
        bool ok;
        if (op == "le") ok = a <= b;
        else if (op == "lt") ok = a < b;
        else if (op == "ge") ok = a >= b;
        else if (op == "gt") ok = a > b;
        else return false;
        if (!ok) return false;
    }
    return true;
}

struct ExperimentReport {
    std::string scenario;
    json config;
    json data = json::object(); // per-level tables and scenario-specific records
    std::vector<Criterion> criteria;
    std::vector<std::pair<std::string, double>> timings; // seconds; kept out of report.json
    std::vector<std::pair<std::string, DtnMatrix>> dtn_tables;
    std::vector<std::pair<std::string, std::vector<EigenvalueRow>>> eigenvalue_tables;
    std::vector<std::pair<std::string, std::string>> svgs;

    bool passed() const {
        return !criteria.empty() && std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.passed; });
    }

    const Criterion& criterion(const std::string& name) const {
        for (const auto& c : criteria)
            if (c.name == name) return c;
        throw InvalidArgument("no criterion named " + name);
    }

    void add(std::string name, std::string op, std::vector<double> lhs, std::vector<double> rhs = {}) {
        Criterion c{std::move(name), std::move(op), std::move(lhs), std::move(rhs), false};
        c.passed = evaluate_criterion(c.op, c.lhs, c.rhs);
        criteria.push_back(std::move(c));
    }
};

inline json report_to_json(const ExperimentReport& r) {
    json j{{"scenario", r.scenario}, {"config", r.config}};
    for (const auto& [key, value] : r.data.items()) j[key] = value;
    json crit = json::array();
    for (const auto& c : r.criteria)
        crit.push_back({{"name", c.name}, {"op", c.op}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"passed", c.passed}});
    j["criteria"] = crit;
    j["verdict"] = r.passed() ? "pass" : "fail";
    return j;
}

struct VerdictCheck {
    bool consistent = true; // recomputed verdicts equal the recorded ones
    bool passed = false;
    std::vector<std::string> lines;
};

/// Recomputes every criterion of a persisted report.json from its recorded numbers.
inline VerdictCheck recheck_report(const json& report) {
    VerdictCheck out;
    if (!report.is_object() || !report.contains("criteria") || !report.contains("verdict"))
        throw InvalidArgument("not an experiment report");
    bool all = !report.at("criteria").empty();
    for (const auto& c : report.at("criteria")) {
        const auto name = c.at("name").get<std::string>();
        std::vector<double> lhs, rhs;
        for (const auto& v : c.at("lhs")) lhs.push_back(v.is_number() ? v.get<double>() : std::nan(""));
        for (const auto& v : c.at("rhs")) rhs.push_back(v.is_number() ? v.get<double>() : std::nan(""));
        const bool recomputed = evaluate_criterion(c.at("op").get<std::string>(), lhs, rhs);
        const bool recorded = c.at("passed").get<bool>();
        if (recomputed != recorded) out.consistent = false;
        all = all && recomputed;
        out.lines.push_back((recomputed ? "PASS " : "FAIL ") + name + (recomputed != recorded ? "  (recorded verdict differs)" : ""));
    }
    out.passed = all;
    if ((report.at("verdict").get<std::string>() == "pass") != all) out.consistent = false;
    return out;
}

namespace detail {

class StageTimer {
public:
    explicit StageTimer(ExperimentReport& report) : report_(report) {}
    void lap(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        report_.timings.emplace_back(stage, std::chrono::duration<double>(now - last_).count());
        last_ = now;
    }

private:
    ExperimentReport& report_;
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::vector<double> merge_radii(std::vector<double> radii, double outer_radius) {
    std::vector<double> out;
    std::sort(radii.begin(), radii.end());
    for (double r : radii)
        if (r > 0.0 && r < outer_radius * (1.0 - 1e-12) && (out.empty() || r - out.back() > 1e-12 * outer_radius))
            out.push_back(r);
    return out;
}

inline std::vector<Mesh> mesh_levels(const ExperimentConfig& c, const std::vector<double>& interfaces) {
    std::vector<Mesh> levels{build_disk_mesh(c.outer_radius, merge_radii(interfaces, c.outer_radius), c.target_h)};
    for (int i = 0; i < c.refinements; ++i) levels.push_back(refine(levels.back()));
    return levels;
}

struct Calibration {
    double scale = 0.0;             // max_k<=K |lambda_k^h - k/R|
    double max_rel_error_low = 0.0; // max_{1<=k<=8} relative error
    std::vector<EigenvalueRow> rows;
};

inline constexpr int calibration_band = 8;

inline Calibration calibrate(const Mesh& mesh, int probes) {
    const DtnMatrix homogeneous = schur_dtn(mesh, identity_field(), "homogeneous");
    Calibration cal;
    for (int k = 0; k <= std::max(probes, calibration_band); ++k) {
        const double est = dtn_eigenvalue_estimate(homogeneous, mesh, k);
        const double oracle = oracle_homogeneous(k, mesh.outer_radius);
        const double err = std::abs(est - oracle);
        const double rel = k ? err / oracle : err;
        cal.rows.push_back({k, est, oracle, rel});
        if (k <= probes) cal.scale = std::max(cal.scale, err);
        if (k >= 1 && k <= calibration_band) cal.max_rel_error_low = std::max(cal.max_rel_error_low, rel);
    }
    return cal;
}

inline std::vector<double> scaled(const std::vector<double>& v, double factor) {
    std::vector<double> out;
    for (double x : v) out.push_back(factor * x);
    return out;
}

// Relative gap |f^t L f - E(u_f)| / E(u_f) between the DtN quadratic form and the Dirichlet energy.
inline double energy_identity_error(const StiffnessSystem& sys, const DtnMatrix& dtn, std::uint64_t seed, int samples = 5) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        Vector f(dtn.size());
        for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = 2.0 * unit_uniform(rng) - 1.0;
        const double energy = dirichlet_energy(sys, solve_dirichlet(sys, f));
        worst = std::max(worst, std::abs(f.dot(dtn.lambda * f) - energy) / energy);
    }
    return worst;
}

struct InvarianceRun {
    std::vector<double> distances, calibrated, energy_gaps, energy_gaps_relative, rel_error_low;
    double energy_identity = 0.0;
};

inline constexpr double invariance_factor = 3.0;

// Shared refinement loop for the scenarios asserting equality of two DtN maps.
inline InvarianceRun run_invariance(const std::vector<Mesh>& levels, const TensorField& first, const TensorField& second,
                                    const std::string& first_name, const std::string& second_name,
                                    const ExperimentConfig& config, ExperimentReport& report, std::ostream* log) {
    InvarianceRun run;
    const int probes = config.probe_depth();
    json table = json::array();
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const Mesh& mesh = levels[l];
        if (log) *log << "  level " << l << ": " << mesh.nodes.size() << " nodes, " << mesh.boundary_nodes.size() << " boundary\n";
        const StiffnessSystem sys1 = assemble(mesh, first);
        const DtnMatrix d1 = schur_dtn(sys1, first_name);
        const DtnMatrix d2 = schur_dtn(mesh, second, second_name);
        const Calibration cal = calibrate(mesh, probes);

        const auto profile = dtn_distance_profile(d1, d2, mesh, probes);
        double distance = 0.0;
        for (const auto& p : profile) distance = std::max(distance, p.value);
        double gap = 0.0, gap_rel = 0.0;
        for (int k = 1; k <= probes; ++k)
            for (Parity p : {Parity::cos, Parity::sin}) {
                const Vector f = sample_boundary_datum(mesh, k, p);
                const double q1 = f.dot(d1.lambda * f), q2 = f.dot(d2.lambda * f);
                gap = std::max(gap, std::abs(q1 - q2) / f.dot(d1.boundary_mass * f));
                gap_rel = std::max(gap_rel, std::abs(q1 - q2) / q1);
            }
        run.distances.push_back(distance);
        run.calibrated.push_back(cal.scale);
        run.energy_gaps.push_back(gap);
        run.energy_gaps_relative.push_back(gap_rel);
        run.rel_error_low.push_back(cal.max_rel_error_low);

        json probe_values = json::array();
        for (const auto& p : profile)
            probe_values.push_back({{"k", p.k}, {"parity", p.parity == Parity::cos ? "cos" : "sin"}, {"value", p.value}});
        table.push_back({{"level", l},
                         {"h", mesh.h},
                         {"nodes", mesh.nodes.size()},
                         {"boundary_nodes", mesh.boundary_nodes.size()},
                         {"distance", distance},
                         {"calibrated_error", cal.scale},
                         {"max_energy_gap", gap},
                         {"max_energy_gap_relative", gap_rel},
                         {"oracle_max_rel_error_k8", cal.max_rel_error_low},
                         {"probe_distances", probe_values}});
        if (config.write_dtn) {
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_" + first_name, d1);
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_" + second_name, d2);
        }
        if (l + 1 == levels.size()) {
            report.eigenvalue_tables.emplace_back("eigenvalues.csv", cal.rows);
            run.energy_identity = energy_identity_error(sys1, d1, config.seed);
        }
    }
    report.data["levels"] = table;
    report.data["calibrated_error"] = run.calibrated;
    return run;
}

inline void add_invariance_criteria(ExperimentReport& report, const InvarianceRun& run, bool require_decrease) {
    report.add("distance_within_calibrated", "le", run.distances, scaled(run.calibrated, invariance_factor));
    if (require_decrease) report.add("distance_decreasing", "monotone_decreasing", run.distances);
    report.add("energy_gap_within_calibrated", "le", run.energy_gaps, scaled(run.calibrated, invariance_factor));
    report.add("calibration_discipline", "lt", run.rel_error_low, std::vector<double>(run.rel_error_low.size(), 0.05));
    report.add("energy_identity", "le", {run.energy_identity}, {1e-9});
}

inline TensorField inclusion_field(const MatrixFunction& background, const MatrixFunction& inclusion, double radius) {
    int case_id = 5;
    if (background.constant && inclusion.constant) case_id = background.scalar && inclusion.scalar ? 1 : 4;
    return make_case(case_id, {background, inclusion, radius});
}

// Max over samples of (largest / smallest eigenvalue).
inline double max_anisotropy(const TensorField& field, const std::vector<Vec2>& samples) {
    double worst = 1.0;
    for (const Vec2& x : samples) {
        const auto e = symmetric_eigen(field(x));
        worst = std::max(worst, e.max / e.min);
    }
    return worst;
}

inline std::vector<Vec2> centroids_where(const Mesh& mesh, const std::function<bool(double)>& keep_radius) {
    std::vector<Vec2> out;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const Vec2 c = mesh.centroid(t);
        if (keep_radius(c.norm())) out.push_back(c);
    }
    return out;
}

inline ExperimentReport run_prop2(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    const TensorField sigma = c.sigma ? conductivity_from_json(*c.sigma)
                                      : inclusion_field(matrix_function_from_json(c.background),
                                                        matrix_function_from_json(c.inclusion), c.inclusion_radius);
    const RadialDiffeo f = c.diffeo ? diffeo_from_json(*c.diffeo, c.outer_radius)
                                    : make_cloak_map(c.eps, c.inclusion_radius, c.outer_radius);
    if (f.outer_radius() != c.outer_radius) throw InvalidArgument("diffeo radius differs from R");
    const DiffeoReport valid = validate_diffeo(f);
    if (!valid.passed) {
        std::string msg = "diffeo validation failed:";
        for (const auto& s : valid.failures) msg += " " + s + ";";
        throw InvalidArgument(msg);
    }
    const TensorField pushed = pushforward(f, sigma);
    std::vector<double> interfaces = sigma.inclusion_radii();
    interfaces.insert(interfaces.end(), pushed.inclusion_radii().begin(), pushed.inclusion_radii().end());
    const auto levels = mesh_levels(c, interfaces);
    timer.lap("mesh");

    const InvarianceRun run = run_invariance(levels, sigma, pushed, "sigma", "pushed", c, report, log);
    timer.lap("dtn");
    report.data["diffeo"] = {{"kind", f.kind()}, {"max_jacobian_norm", valid.max_jacobian_norm}, {"min_abs_det", valid.min_abs_det}};
    add_invariance_criteria(report, run, true);
    report.svgs.emplace_back("sigma_base.svg", render_field_svg(levels.front(), sigma, "base conductivity"));
    report.svgs.emplace_back("sigma_pushed.svg", render_field_svg(levels.front(), pushed, "push-forward conductivity"));
    timer.lap("render");
    return report;
}

inline ExperimentReport run_full_pushforward(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    const double r = c.inclusion_radius, image_radius = c.eps * c.inclusion_radius;
    const MatrixFunction b1 = matrix_function_from_json(c.inclusion);
    const TensorField sigma1 = inclusion_field(iso_const(1.0), b1, r);
    const RadialDiffeo f = make_cloak_map(c.eps, r, c.outer_radius);

    // sigma_3 = A_3 outside U_eps, B_3 inside, assembled from the two pushed pieces.
    const TensorField background3 = pushforward(f, identity_field());
    const TensorField inclusion3 = pushforward(f, as_field(b1));
    const TensorField sigma3 = piecewise_field(inclusion3, background3, image_radius, FieldTag::pushed);
    const auto levels = mesh_levels(c, {image_radius, r});
    timer.lap("mesh");

    const TensorField lazy = pushforward(f, sigma1);
    const auto all = triangle_centroids(levels.front());
    double mismatch = 0.0;
    for (const Vec2& y : all) mismatch = std::max(mismatch, (sigma3(y) - lazy(y)).norm() / lazy(y).norm());

    const auto annulus = centroids_where(levels.front(), [&](double s) { return s > image_radius; });
    double product_error = 0.0;
    for (const Vec2& y : annulus) {
        const auto e = symmetric_eigen(background3(y));
        product_error = std::max(product_error, std::abs(e.min * e.max - 1.0));
    }
    const double anisotropy = max_anisotropy(background3, annulus);

    const InvarianceRun run = run_invariance(levels, sigma1, sigma3, "sigma1", "sigma3", c, report, log);
    timer.lap("dtn");
    report.data["background_max_anisotropy"] = anisotropy;
    report.data["background_eigen_product_error"] = product_error;
    report.data["sigma3_vs_pushforward_mismatch"] = mismatch;
    add_invariance_criteria(report, run, true);
    report.add("sigma3_matches_pushforward", "le", {mismatch}, {1e-12});
    report.add("background_eigen_product_one", "le", {product_error}, {1e-10});
    report.add("background_anisotropic", "gt", {anisotropy}, {1.0});
    report.svgs.emplace_back("sigma_1.svg", render_field_svg(levels.front(), sigma1, "sigma_1"));
    report.svgs.emplace_back("sigma_3.svg", render_field_svg(levels.front(), sigma3, "sigma_3 illusion"));
    timer.lap("render");
    return report;
}

inline ExperimentReport run_property_illusion(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    const double r = c.inclusion_radius;
    const MatrixFunction b1 = matrix_function_from_json(c.inclusion);
    const RadialDiffeo g = make_interior_diffeo(c.interior_c, r, c.outer_radius);
    const DiffeoReport valid = validate_diffeo(g);
    if (!valid.passed) throw InvalidArgument("interior diffeo failed validation");
    const TensorField field_b1 = as_field(b1);
    const TensorField field_b2 = pushforward(g, field_b1);
    const TensorField sigma1 = inclusion_field(iso_const(1.0), b1, r);
    const TensorField sigma2 = piecewise_field(field_b2, identity_field(), r, FieldTag::case5);
    const auto levels = mesh_levels(c, {r});
    timer.lap("mesh");

    const auto inside = centroids_where(levels.front(), [&](double s) { return s < r; });
    double pointwise_gap = 0.0, det_error = 0.0;
    for (const Vec2& y : inside) {
        const Mat2 m1 = field_b1(y), m2 = field_b2(y);
        pointwise_gap = std::max(pointwise_gap, (m2 - m1).norm() / m1.norm());
        const double d1 = field_b1(g.inverse_apply(y)).determinant();
        det_error = std::max(det_error, std::abs(m2.determinant() - d1) / std::abs(d1));
    }
    const auto ring = circle_samples(r, 64);
    const JumpReport jump1 = check_jump_condition(identity_field(), field_b1, ring);
    // B_2 is evaluated just inside the interface circle, where it differs from B_1.
    std::vector<Vec2> inner_ring;
    for (const Vec2& x : ring) inner_ring.push_back(x * (1.0 - 1e-9));
    const JumpReport jump2 = check_jump_condition(identity_field(), field_b2, inner_ring);

    const InvarianceRun run = run_invariance(levels, sigma1, sigma2, "sigma1", "sigma2", c, report, log);
    timer.lap("dtn");
    report.data["max_pointwise_relative_gap"] = pointwise_gap;
    report.data["determinant_preservation_error"] = det_error;
    report.data["jump_gap_B1"] = jump1.min_relative_gap;
    report.data["jump_gap_B2"] = jump2.min_relative_gap;
    add_invariance_criteria(report, run, false);
    report.add("property_differs", "gt", {pointwise_gap}, {0.05});
    report.add("determinant_preserved", "le", {det_error}, {1e-9});
    report.add("jump_condition_B1", "gt", {jump1.min_relative_gap}, {jump_gap_threshold});
    report.add("jump_condition_B2", "gt", {jump2.min_relative_gap}, {jump_gap_threshold});
    report.svgs.emplace_back("sigma_1.svg", render_field_svg(levels.front(), sigma1, "sigma_1"));
    report.svgs.emplace_back("sigma_2.svg", render_field_svg(levels.front(), sigma2, "sigma_2 property illusion"));
    timer.lap("render");
    return report;
}

inline ExperimentReport run_domain_distinguish(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    const MatrixFunction a = matrix_function_from_json(c.background);
    const MatrixFunction b = matrix_function_from_json(c.inclusion);
    const double r1 = c.inclusion_radius, r2 = c.second_radius;
    const TensorField sigma1 = inclusion_field(a, b, r1);
    const TensorField sigma2 = inclusion_field(a, b, r2);
    const JumpReport jump1 = check_jump_condition(as_field(a), as_field(b), circle_samples(r1, 64));
    const JumpReport jump2 = check_jump_condition(as_field(a), as_field(b), circle_samples(r2, 64));
    const auto levels = mesh_levels(c, {r1, r2});
    timer.lap("mesh");

    const int probes = c.probe_depth();
    std::vector<double> distances, calibrated, rel_low;
    json table = json::array();
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const Mesh& mesh = levels[l];
        if (log) *log << "  level " << l << ": " << mesh.nodes.size() << " nodes\n";
        const DtnMatrix d1 = schur_dtn(mesh, sigma1, "sigma1");
        const DtnMatrix d2 = schur_dtn(mesh, sigma2, "sigma2");
        const Calibration cal = calibrate(mesh, probes);
        distances.push_back(dtn_distance(d1, d2, mesh, probes));
        calibrated.push_back(cal.scale);
        rel_low.push_back(cal.max_rel_error_low);
        table.push_back({{"level", l}, {"h", mesh.h}, {"nodes", mesh.nodes.size()}, {"boundary_nodes", mesh.boundary_nodes.size()},
                         {"distance", distances.back()}, {"calibrated_error", cal.scale},
                         {"oracle_max_rel_error_k8", cal.max_rel_error_low}});
        if (c.write_dtn) {
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_sigma1", d1);
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_sigma2", d2);
        }
        if (l + 1 == levels.size()) report.eigenvalue_tables.emplace_back("eigenvalues.csv", cal.rows);
    }
    timer.lap("dtn");
    report.data["levels"] = table;
    report.data["calibrated_error"] = calibrated;
    report.data["jump_gap_D1"] = jump1.min_relative_gap;
    report.data["jump_gap_D2"] = jump2.min_relative_gap;

    const double final_distance = distances.back();
    report.add("jump_condition_D1", "gt", {jump1.min_relative_gap}, {jump_gap_threshold});
    report.add("jump_condition_D2", "gt", {jump2.min_relative_gap}, {jump_gap_threshold});
    report.add("separation", "ge", {final_distance}, {10.0 * calibrated.back()});
    report.add("calibration_discipline", "lt", rel_low, std::vector<double>(rel_low.size(), 0.05));
    if (distances.size() >= 2) {
        const double change = std::abs(final_distance - distances[distances.size() - 2]) / final_distance;
        report.data["last_relative_change"] = change;
        report.add("mesh_converged", "le", {change}, {0.05});
    }
    if (a.iso_value && b.iso_value) {
        double gap = 0.0;
        for (int k = 1; k <= probes; ++k)
            gap = std::max(gap, std::abs(oracle_layered(k, *a.iso_value, *b.iso_value, r1, c.outer_radius) -
                                         oracle_layered(k, *a.iso_value, *b.iso_value, r2, c.outer_radius)));
        const double rel = std::abs(final_distance - gap) / gap;
        report.data["oracle_gap"] = gap;
        report.data["oracle_gap_relative_error"] = rel;
        report.add("oracle_gap_agreement", "le", {rel}, {0.05});
    }
    report.svgs.emplace_back("sigma_1.svg", render_field_svg(levels.front(), sigma1, "D_1"));
    report.svgs.emplace_back("sigma_2.svg", render_field_svg(levels.front(), sigma2, "D_2"));
    timer.lap("render");
    return report;
}

inline ExperimentReport run_small_inclusion_trend(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    std::vector<double> eps = c.eps_list;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    const MatrixFunction b = matrix_function_from_json(c.inclusion);
    const int probes = c.probe_depth();

    std::vector<double> distances;
    json table = json::array();
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const double radius = eps[i] * c.inclusion_radius;
        const RadialDiffeo f = make_cloak_map(eps[i], c.inclusion_radius, c.outer_radius);
        // Apparent object 1 + (F_* B - 1) chi_{U_eps}.
        const TensorField apparent = piecewise_field(pushforward(f, as_field(b)), identity_field(), radius, FieldTag::case5);
        Mesh mesh = refine(build_disk_mesh(c.outer_radius, {radius}, c.target_h), c.refinements);
        if (log) *log << "  eps " << eps[i] << ": " << mesh.nodes.size() << " nodes\n";
        const DtnMatrix d_eps = schur_dtn(mesh, apparent, "apparent");
        const DtnMatrix d_hom = schur_dtn(mesh, identity_field(), "homogeneous");
        distances.push_back(dtn_distance(d_eps, d_hom, mesh, probes));
        table.push_back({{"eps", eps[i]}, {"h", mesh.h}, {"nodes", mesh.nodes.size()}, {"distance", distances.back()}});
        if (c.write_dtn) report.dtn_tables.emplace_back("dtn_eps" + std::to_string(i) + "_apparent", d_eps);
        if (i == 0 || i + 1 == eps.size())
            report.svgs.emplace_back("sigma_eps" + std::to_string(i) + ".svg",
                                     render_field_svg(build_disk_mesh(c.outer_radius, {radius}, c.target_h), apparent,
                                                      "apparent object"));
    }
    timer.lap("dtn");

    std::vector<double> slopes;
    for (std::size_t i = 1; i < eps.size(); ++i)
        slopes.push_back(distances[i] > 0.0 && distances[i - 1] > 0.0
                             ? std::log(distances[i - 1] / distances[i]) / std::log(eps[i - 1] / eps[i])
                             : 0.0);
    // Least-squares slope of log(distance) against log(eps).
    double fitted = 0.0;
    if (std::all_of(distances.begin(), distances.end(), [](double d) { return d > 0.0; })) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(eps.size());
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const double x = std::log(eps[i]), y = std::log(distances[i]);
            sx += x, sy += y, sxx += x * x, sxy += x * y;
        }
        fitted = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    report.data["eps"] = eps;
    report.data["distances"] = distances;
    report.data["table"] = table;
    report.data["consecutive_slopes"] = slopes;
    report.data["fitted_slope"] = fitted;
    report.add("distance_strictly_decreasing", "strictly_decreasing", distances);
    report.add("consecutive_slope", "ge", slopes, std::vector<double>(slopes.size(), 1.5));
    report.add("fitted_slope", "ge", {fitted}, {1.5});
    return report;
}

inline ExperimentReport run_convergence_study(const ExperimentConfig& c, std::ostream* log) {
    ExperimentReport report;
    StageTimer timer(report);
    const MatrixFunction a = matrix_function_from_json(c.background);
    const MatrixFunction b = matrix_function_from_json(c.inclusion);
    if (!a.iso_value || !b.iso_value) throw InvalidArgument("convergence_study needs iso_const background and inclusion");
    const double av = *a.iso_value, bv = *b.iso_value, r0 = c.inclusion_radius, R = c.outer_radius;
    const TensorField layered = make_case(1, {a, b, r0});
    const auto levels = mesh_levels(c, {r0});
    timer.lap("mesh");

    const int kmax = c.max_k;
    std::vector<std::vector<double>> hom_err(levels.size()), lay_err(levels.size());
    std::vector<double> hom_rel_final, lay_rel_final;
    json table = json::array();
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const Mesh& mesh = levels[l];
        if (log) *log << "  level " << l << ": " << mesh.nodes.size() << " nodes\n";
        const DtnMatrix dh = schur_dtn(mesh, identity_field(), "homogeneous");
        const DtnMatrix dl = schur_dtn(mesh, layered, "layered");
        std::vector<EigenvalueRow> hrows, lrows;
        for (int k = 1; k <= kmax; ++k) {
            const double eh = dtn_eigenvalue_estimate(dh, mesh, k), oh = oracle_homogeneous(k, R);
            const double el = dtn_eigenvalue_estimate(dl, mesh, k), ol = oracle_layered(k, av, bv, r0, R);
            hrows.push_back({k, eh, oh, std::abs(eh - oh) / oh});
            lrows.push_back({k, el, ol, std::abs(el - ol) / ol});
            hom_err[l].push_back(std::abs(eh - oh));
            lay_err[l].push_back(std::abs(el - ol));
        }
        json hom = json::array(), lay = json::array();
        for (std::size_t i = 0; i < hrows.size(); ++i) {
            hom.push_back({{"k", hrows[i].k}, {"estimate", hrows[i].estimate}, {"oracle", hrows[i].oracle}, {"rel_error", hrows[i].rel_error}});
            lay.push_back({{"k", lrows[i].k}, {"estimate", lrows[i].estimate}, {"oracle", lrows[i].oracle}, {"rel_error", lrows[i].rel_error}});
        }
        table.push_back({{"level", l}, {"h", mesh.h}, {"nodes", mesh.nodes.size()}, {"boundary_nodes", mesh.boundary_nodes.size()},
                         {"homogeneous", hom}, {"layered", lay}});
        if (c.write_dtn) {
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_homogeneous", dh);
            report.dtn_tables.emplace_back("dtn_L" + std::to_string(l) + "_layered", dl);
        }
        if (l + 1 == levels.size()) {
            for (const auto& r : hrows) hom_rel_final.push_back(r.rel_error);
            for (const auto& r : lrows) lay_rel_final.push_back(r.rel_error);
            report.eigenvalue_tables.emplace_back("eigenvalues.csv", hrows);
            report.eigenvalue_tables.emplace_back("eigenvalues_layered.csv", lrows);
        }
    }
    timer.lap("dtn");

    // Error reduction per refinement and least-squares rates, per k.
    std::vector<double> reductions, rates;
    auto fit_rate = [&](const std::vector<std::vector<double>>& err, std::size_t k) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double n = static_cast<double>(err.size());
        for (std::size_t l = 0; l < err.size(); ++l) {
            const double x = static_cast<double>(l), y = std::log2(err[l][k]);
            sx += x, sy += y, sxx += x * x, sxy += x * y;
        }
        return -(n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    json rate_table = json::array();
    for (std::size_t k = 0; k < static_cast<std::size_t>(kmax); ++k) {
        for (std::size_t l = 0; l + 1 < levels.size(); ++l) reductions.push_back(hom_err[l][k] / hom_err[l + 1][k]);
        if (levels.size() >= 2) {
            const double rh = fit_rate(hom_err, k), rl = fit_rate(lay_err, k);
            rates.push_back(rh);
            rates.push_back(rl);
            rate_table.push_back({{"k", k + 1}, {"homogeneous_rate", rh}, {"layered_rate", rl}});
        }
    }
    double collapse = 0.0;
    for (int k = 1; k <= kmax; ++k) {
        collapse = std::max(collapse, std::abs(oracle_layered(k, av, av, r0, R) - av * k / R));
        collapse = std::max(collapse, std::abs(oracle_layered(k, av, bv, 1e-6 * R, R) - av * k / R));
    }
    report.data["levels"] = table;
    report.data["rates"] = rate_table;
    report.data["oracle_limit_error"] = collapse;
    report.add("homogeneous_within_2pct", "lt", hom_rel_final, std::vector<double>(hom_rel_final.size(), 0.02));
    report.add("layered_within_2pct", "lt", lay_rel_final, std::vector<double>(lay_rel_final.size(), 0.02));
    report.add("oracle_limits", "le", {collapse}, {1e-9});
    if (levels.size() >= 2) {
        report.add("homogeneous_error_reduction", "ge", reductions, std::vector<double>(reductions.size(), 2.0));
        report.add("observed_rate", "ge", rates, std::vector<double>(rates.size(), 1.5));
    }
    report.svgs.emplace_back("sigma_layered.svg", render_field_svg(levels.front(), layered, "layered disk"));
    timer.lap("render");
    return report;
}

} // namespace detail

/// Runs one named scenario. Deterministic for a fixed config.
inline ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr) {
    config.validate();
    if (log) *log << "scenario " << config.scenario << '\n';
    ExperimentReport report;
    if (config.scenario == "prop2_invariance") report = detail::run_prop2(config, log);
    else if (config.scenario == "domain_distinguish") report = detail::run_domain_distinguish(config, log);
    else if (config.scenario == "full_pushforward_illusion") report = detail::run_full_pushforward(config, log);
    else if (config.scenario == "small_inclusion_trend") report = detail::run_small_inclusion_trend(config, log);
    else if (config.scenario == "property_illusion") report = detail::run_property_illusion(config, log);
    else report = detail::run_convergence_study(config, log);
    report.scenario = config.scenario;
    report.config = to_json(config);
    return report;
}

/// Writes report.json, timings.json, eigenvalue and DtN CSVs, and SVGs into `dir`.
inline void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw InvalidArgument("cannot write " + (dir / name).string());
        return out;
    };
    open("report.json") << report_to_json(report).dump(2) << '\n';
    json timings = json::object();
    for (const auto& [stage, seconds] : report.timings) timings[stage] = seconds;
    open("timings.json") << timings.dump(2) << '\n';
    for (const auto& [name, rows] : report.eigenvalue_tables) {
        auto out = open(name);
        write_eigenvalue_csv(rows, out);
    }
    for (const auto& [name, dtn] : report.dtn_tables) {
        auto out = open(name + ".csv");
        write_dtn_csv(dtn, out);
    }
    for (const auto& [name, svg] : report.svgs) open(name) << svg;
}

} // namespace illusion
