// illusion_lab: meshes, forward solves, DtN maps, push-forwards and the experiment scenarios.

#include "illusion/illusion.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace illusion;

namespace {

enum ExitCode { exit_pass = 0, exit_fail = 1, exit_usage = 2, exit_numerical = 3 };

struct Options {
    std::string config;
    std::string out = ".";
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> refinements;
    std::optional<int> probes;
    bool verbose = false;
};

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    return out;
}

fs::path prepare_out(const Options& o) {
    fs::create_directories(o.out);
    return o.out;
}

// Mesh block shared by mesh/solve/dtn/pushforward: {"R", "radii", "target_h", "refinements"}.
Mesh mesh_from_json(const json& j, const Options& o, std::vector<double> extra_radii = {}) {
    const std::string ctx = "mesh config";
    const double R = detail::optional_value(j, "R", 2.0, ctx);
    auto radii = detail::optional_value(j, "radii", std::vector<double>{}, ctx);
    radii.insert(radii.end(), extra_radii.begin(), extra_radii.end());
    const double h = detail::optional_value(j, "target_h", 0.1, ctx);
    const int refinements = o.refinements.value_or(detail::optional_value(j, "refinements", 0, ctx));
    if (refinements < 0 || refinements > 5) throw InvalidArgument("refinements must be in 0..5");
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    return refine(build_disk_mesh(R, radii, h), refinements);
}

std::vector<double> interface_radii_of(const json& sigma) {
    if (sigma.is_object() && sigma.contains("r_D")) return {detail::require<double>(sigma, "r_D", "conductivity")};
    return {};
}

int cmd_mesh(const Options& o) {
    const json cfg = read_json_file(o.config);
    const Mesh mesh = mesh_from_json(cfg, o);
    const fs::path dir = prepare_out(o);
    save_mesh(mesh, (dir / "mesh.txt").string());
    const MeshQuality q = mesh_quality(mesh);
    const json summary{{"nodes", q.node_count},          {"triangles", q.triangle_count},
                       {"boundary_nodes", mesh.boundary_nodes.size()}, {"h", q.h},
                       {"min_angle_deg", q.min_angle_deg}, {"max_aspect_ratio", q.max_aspect_ratio},
                       {"interface_radii", mesh.interface_radii}};
    open_output(dir / "mesh_quality.json") << summary.dump(2) << '\n';
    std::cout << "mesh: " << q.node_count << " nodes, " << q.triangle_count << " triangles, min angle "
              << q.min_angle_deg << " deg\n";
    return exit_pass;
}

// {"sigma": conductivity, "k": 1, "parity": "cos", mesh keys...}
int cmd_solve(const Options& o) {
    const json cfg = read_json_file(o.config);
    const json sigma_cfg = cfg.value("sigma", json{{"case", 3}, {"field", {{"kind", "iso_const"}, {"value", 1.0}}}});
    const TensorField sigma = conductivity_from_json(sigma_cfg);
    const Mesh mesh = mesh_from_json(cfg, o, interface_radii_of(sigma_cfg));
    const int k = detail::optional_value(cfg, "k", 1, "solve config");
    const auto parity_name = detail::optional_value<std::string>(cfg, "parity", "cos", "solve config");
    if (parity_name != "cos" && parity_name != "sin") throw InvalidArgument("parity must be cos or sin");
    const Parity parity = parity_name == "cos" ? Parity::cos : Parity::sin;

    const StiffnessSystem sys = assemble(mesh, sigma);
    const Solution sol = solve_dirichlet(sys, sample_boundary_datum(mesh, k, parity));
    const fs::path dir = prepare_out(o);
    auto csv = open_output(dir / "solution.csv");
    write_solution_csv(mesh, sol, csv);
    const json summary{{"nodes", mesh.nodes.size()},
                       {"k", k},
                       {"parity", parity_name},
                       {"energy", dirichlet_energy(sys, sol)},
                       {"relative_residual", sol.relative_residual},
                       {"maximum_principle", satisfies_maximum_principle(sol)}};
    open_output(dir / "solve.json") << summary.dump(2) << '\n';
    std::cout << "solve: energy " << summary["energy"].get<double>() << ", residual " << sol.relative_residual << '\n';
    return exit_pass;
}

// Oracle for the eigenvalue table: layered for piecewise isotropic constants, homogeneous for a single one.
std::function<double(int, double)> oracle_for(const json& sigma_cfg) {
    auto iso = [&](const char* key) -> std::optional<double> {
        if (!sigma_cfg.contains(key)) return std::nullopt;
        return matrix_function_from_json(sigma_cfg.at(key)).iso_value;
    };
    const auto a = iso("background");
    const auto b = sigma_cfg.contains("field") ? iso("field") : iso("inclusion");
    if (a && b && sigma_cfg.contains("r_D")) {
        const double r0 = sigma_cfg.at("r_D").get<double>();
        return [a = *a, b = *b, r0](int k, double R) { return oracle_layered(k, a, b, r0, R); };
    }
    if (!a && b) return [b = *b](int k, double R) { return b * oracle_homogeneous(k, R); };
    return [](int, double) { return std::numeric_limits<double>::quiet_NaN(); };
}

// Conductivity config plus optional mesh keys and "max_k".
int cmd_dtn(const Options& o) {
    const json cfg = read_json_file(o.config);
    const json sigma_cfg = cfg.contains("sigma") ? cfg.at("sigma") : cfg;
    const TensorField sigma = conductivity_from_json(sigma_cfg);
    const Mesh mesh = mesh_from_json(cfg, o, interface_radii_of(sigma_cfg));
    const int max_k = o.probes.value_or(detail::optional_value(cfg, "max_k", 8, "dtn config"));
    const StiffnessSystem sys = assemble(mesh, sigma);
    const DtnMatrix dtn = schur_dtn(sys, to_string(sigma.tag()));
    const auto oracle = oracle_for(sigma_cfg);

    std::vector<EigenvalueRow> rows;
    for (int k = 1; k <= max_k; ++k) {
        const double est = dtn_eigenvalue_estimate(dtn, mesh, k);
        const double ref = oracle(k, mesh.outer_radius);
        rows.push_back({k, est, ref, std::abs(est - ref) / std::abs(ref)});
    }
    const DtnInvariants inv = check_dtn_invariants(dtn);
    const fs::path dir = prepare_out(o);
    auto eig = open_output(dir / "eigenvalues.csv");
    write_eigenvalue_csv(rows, eig);
    auto mat = open_output(dir / "dtn.csv");
    write_dtn_csv(dtn, mat);
    const json summary{{"boundary_nodes", dtn.size()},
                       {"symmetry_error", inv.symmetry_error},
                       {"conservation_error", inv.conservation_error},
                       {"min_mean_zero_eigenvalue", inv.min_mean_zero_eigenvalue}};
    open_output(dir / "dtn.json") << summary.dump(2) << '\n';
    for (const auto& r : rows)
        std::cout << "k=" << r.k << "  estimate " << r.estimate << "  oracle " << r.oracle << "  rel_error " << r.rel_error << '\n';
    return exit_pass;
}

// {"sigma": conductivity, "diffeo": diffeo, mesh keys...}
int cmd_pushforward(const Options& o) {
    const json cfg = read_json_file(o.config);
    if (!cfg.contains("sigma") || !cfg.contains("diffeo")) throw InvalidArgument("pushforward config needs \"sigma\" and \"diffeo\"");
    const TensorField sigma = conductivity_from_json(cfg.at("sigma"));
    const double R = detail::optional_value(cfg, "R", 2.0, "pushforward config");
    const RadialDiffeo f = diffeo_from_json(cfg.at("diffeo"), R);
    if (f.outer_radius() != R) throw InvalidArgument("diffeo radius differs from the mesh radius");
    const DiffeoReport valid = validate_diffeo(f);
    const fs::path dir = prepare_out(o);
    json report{{"diffeo_valid", valid.passed},
                {"boundary_error", valid.boundary_error},
                {"min_derivative", valid.min_derivative},
                {"max_jacobian_norm", valid.max_jacobian_norm},
                {"min_abs_det", valid.min_abs_det},
                {"failures", valid.failures}};
    if (!valid.passed) {
        open_output(dir / "pushforward.json") << report.dump(2) << '\n';
        for (const auto& msg : valid.failures) std::cerr << "diffeo: " << msg << '\n';
        return exit_usage;
    }
    const TensorField pushed = pushforward(f, sigma);
    std::vector<double> radii = sigma.inclusion_radii();
    radii.insert(radii.end(), pushed.inclusion_radii().begin(), pushed.inclusion_radii().end());
    std::erase_if(radii, [&](double r) { return r >= R; });
    const Mesh mesh = mesh_from_json(cfg, o, radii);
    const EllipticityReport ell = check_ellipticity(pushed, mesh);
    report["ellipticity_passed"] = ell.passed;
    report["min_eigenvalue"] = ell.min_eigenvalue;
    report["max_eigenvalue"] = ell.max_eigenvalue;
    open_output(dir / "pushforward.json") << report.dump(2) << '\n';
    render_field_svg(mesh, sigma, (dir / "sigma_base.svg").string(), "base conductivity");
    render_field_svg(mesh, pushed, (dir / "sigma_pushed.svg").string(), "push-forward conductivity");
    std::cout << "pushforward: eigenvalues in [" << ell.min_eigenvalue << ", " << ell.max_eigenvalue << "]\n";
    return ell.passed ? exit_pass : exit_fail;
}

int cmd_experiment(const Options& o) {
    ExperimentConfig cfg = experiment_config_from_json(read_json_file(o.config));
    if (o.seed) cfg.seed = *o.seed;
    if (o.refinements) cfg.refinements = *o.refinements;
    if (o.probes) cfg.probes = *o.probes;
    cfg.validate();
    const fs::path dir = o.out;
    if (fs::exists(dir / "report.json") && !o.force)
        throw InvalidArgument((dir / "report.json").string() + " exists; pass --force to overwrite");
    const ExperimentReport report = run_experiment(cfg, o.verbose ? &std::cerr : nullptr);
    write_report(report, dir);
    for (const auto& c : report.criteria) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << '\n';
    std::cout << report.scenario << ": " << (report.passed() ? "pass" : "fail") << '\n';
    return report.passed() ? exit_pass : exit_fail;
}

// Re-derives every verdict in an existing report.json.
int cmd_report(const Options& o) {
    fs::path path = o.config;
    if (fs::is_directory(path)) path /= "report.json";
    const VerdictCheck check = recheck_report(read_json_file(path.string()));
    for (const auto& line : check.lines) std::cout << line << '\n';
    if (!check.consistent) {
        std::cerr << "recorded verdicts differ from the recomputed ones\n";
        return exit_fail;
    }
    std::cout << (check.passed ? "pass" : "fail") << '\n';
    return check.passed ? exit_pass : exit_fail;
}

void write_error_json(const Options& o, const std::string& kind, const std::string& message, int code) {
    if (o.out.empty()) return;
    std::error_code ec;
    fs::create_directories(o.out, ec);
    std::ofstream out(fs::path(o.out) / "error.json", std::ios::binary);
    if (out) out << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"illusion_lab: DtN maps, push-forward conductivities and cloaking experiments"};
    app.require_subcommand(1, 1);
    Options o;
    std::string which;

    auto add = [&](const std::string& name, const std::string& help, bool out_required) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, name == "report" ? "report.json or its directory" : "config JSON")->required();
        auto* out = sub->add_option("--out", o.out, "output directory");
        if (out_required) out->required();
        sub->add_flag("--force", o.force, "overwrite an existing report.json");
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--refinements", o.refinements, "uniform refinements (0..5)");
        sub->add_option("--probes", o.probes, "Fourier probe depth K");
        sub->add_flag("-v,--verbose", o.verbose, "progress on stderr");
        sub->callback([&which, name] { which = name; });
    };
    add("mesh", "build an interface-fitted disk mesh", false);
    add("solve", "solve the Dirichlet problem for one Fourier datum", false);
    add("dtn", "Schur-complement DtN matrix and eigenvalue table", false);
    add("pushforward", "push a conductivity forward and render both", false);
    add("experiment", "run a named scenario", false);
    add("report", "recompute verdicts of a report.json", false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_pass : exit_usage;
    }

    try {
        if (which == "mesh") return cmd_mesh(o);
        if (which == "solve") return cmd_solve(o);
        if (which == "dtn") return cmd_dtn(o);
        if (which == "pushforward") return cmd_pushforward(o);
        if (which == "experiment") return cmd_experiment(o);
        o.out.clear();
        return cmd_report(o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        write_error_json(o, "numerical", e.what(), exit_numerical);
        return exit_numerical;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        if (fs::exists(o.config)) write_error_json(o, "config", e.what(), exit_usage);
        return exit_usage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
}
