#pragma once

#include "illusion/mesh.hpp"
#include "illusion/types.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace illusion {

/// A named closed-form matrix function x -> M(x), the building block of every conductivity case.
struct MatrixFunction {
    std::string kind;
    bool scalar = true;   // M(x) is a multiple of the identity
    bool constant = true; // M(x) independent of x
    std::function<Mat2(const Vec2&)> eval;
    std::optional<double> iso_value; // set only for iso_const

    Mat2 operator()(const Vec2& x) const { return eval(x); }
};

namespace detail {

inline void require_spd(const Mat2& m, const std::string& what) {
    if (!m.allFinite()) throw InvalidArgument(what + ": non-finite entries");
    if (m(0, 1) != m(1, 0)) throw InvalidArgument(what + ": matrix is not symmetric");
    if (!(symmetric_eigen(m).min > 0.0)) throw InvalidArgument(what + ": matrix is not positive definite");
}

inline double horner(const std::vector<double>& coeffs, double r) {
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * r + *it;
    return v;
}

} // namespace detail

inline MatrixFunction iso_const(double value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw InvalidArgument("iso_const: value must be positive");
    const Mat2 m = value * Mat2::Identity();
    return {"iso_const", true, true, [m](const Vec2&) { return m; }, value};
}

inline MatrixFunction aniso_const(const Mat2& m) {
    detail::require_spd(m, "aniso_const");
    return {"aniso_const", false, true, [m](const Vec2&) { return m; }, std::nullopt};
}

// R(angle) diag(values) R(angle)^t
inline MatrixFunction rotated_diag(double major, double minor, double angle) {
    const Eigen::Rotation2Dd rot(angle);
    Mat2 m = rot.toRotationMatrix() * Vec2(major, minor).asDiagonal() * rot.toRotationMatrix().transpose();
    m(1, 0) = m(0, 1);
    detail::require_spd(m, "rotated_diag");
    return {"rotated_diag", false, true, [m](const Vec2&) { return m; }, std::nullopt};
}

// (c0 + c1 |x| + c2 |x|^2 + ...) I
inline MatrixFunction radial_poly(std::vector<double> coeffs) {
    if (coeffs.empty()) throw InvalidArgument("radial_poly: no coefficients");
    return {"radial_poly", true, false, [c = std::move(coeffs)](const Vec2& x) {
                return detail::horner(c, x.norm()) * Mat2::Identity();
            }, std::nullopt};
}

// (c0 + c1 |x| + ...) M
inline MatrixFunction aniso_radial(const Mat2& m, std::vector<double> coeffs) {
    detail::require_spd(m, "aniso_radial");
    if (coeffs.empty()) throw InvalidArgument("aniso_radial: no coefficients");
    return {"aniso_radial", false, false, [m, c = std::move(coeffs)](const Vec2& x) {
                return Mat2(detail::horner(c, x.norm()) * m);
            }, std::nullopt};
}

enum class FieldTag { case1 = 1, case2, case3, case4, case5, case6, pushed };

inline std::string to_string(FieldTag tag) {
    return tag == FieldTag::pushed ? std::string("pushed") : "case" + std::to_string(static_cast<int>(tag));
}

/// Position-dependent symmetric 2x2 conductivity. Immutable; evaluation is pure.
class TensorField {
public:
    using Evaluator = std::function<Mat2(const Vec2&)>;

    TensorField(Evaluator eval, FieldTag tag, std::vector<double> inclusion_radii = {})
        : eval_(std::move(eval)), tag_(tag), radii_(std::move(inclusion_radii)) {}

    Mat2 operator()(const Vec2& x) const { return eval_(x); }
    FieldTag tag() const { return tag_; }
    // Circles across which the field may jump.
    const std::vector<double>& inclusion_radii() const { return radii_; }

private:
    Evaluator eval_;
    FieldTag tag_;
    std::vector<double> radii_;
};

struct CaseParams {
    std::optional<MatrixFunction> background; // a, a(x), A, A(x)
    std::optional<MatrixFunction> inclusion;  // b, b(x), B, B(x); the whole-domain field for cases 3 and 6
    std::optional<double> inclusion_radius;
};

/// Builds one of the six conductivity cases; the inclusion is the open disk |x| < r_D.
inline TensorField make_case(int case_id, const CaseParams& p) {
    if (case_id < 1 || case_id > 6) throw InvalidArgument("case must be in 1..6");
    const bool piecewise = case_id != 3 && case_id != 6;
    const std::string name = "case " + std::to_string(case_id);
    if (!p.inclusion) throw InvalidArgument(name + ": inclusion field required");

    const bool need_scalar = case_id <= 3;
    const bool need_constant = case_id == 1 || case_id == 4;
    auto check = [&](const MatrixFunction& f, const char* role) {
        if (need_scalar && !f.scalar) throw InvalidArgument(name + ": " + role + " must be a scalar conductivity, got " + f.kind);
        if (need_constant && !f.constant) throw InvalidArgument(name + ": " + role + " must be constant, got " + f.kind);
    };
    check(*p.inclusion, "inclusion");

    const auto tag = static_cast<FieldTag>(case_id);
    if (!piecewise) {
        if (p.background || p.inclusion_radius) throw InvalidArgument(name + ": takes a single field, no background or radius");
        return TensorField(p.inclusion->eval, tag);
    }
    if (!p.background) throw InvalidArgument(name + ": background field required");
    if (!p.inclusion_radius) throw InvalidArgument(name + ": inclusion radius required");
    check(*p.background, "background");
    const double r = *p.inclusion_radius;
    if (!(r > 0.0)) throw InvalidArgument(name + ": inclusion radius must be positive");
    return TensorField(
        [outer = p.background->eval, inner = p.inclusion->eval, r](const Vec2& x) {
            return x.norm() < r ? inner(x) : outer(x);
        },
        tag, {r});
}

inline TensorField identity_field() {
    return TensorField([](const Vec2&) { return Mat2(Mat2::Identity()); }, FieldTag::case4);
}

// inner on |x| < radius, outer elsewhere.
inline TensorField piecewise_field(const TensorField& inner, const TensorField& outer, double radius, FieldTag tag) {
    std::vector<double> radii = outer.inclusion_radii();
    for (double r : inner.inclusion_radii())
        if (r < radius) radii.push_back(r);
    radii.push_back(radius);
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    return TensorField([inner, outer, radius](const Vec2& x) { return x.norm() < radius ? inner(x) : outer(x); }, tag,
                       std::move(radii));
}

inline std::vector<Vec2> triangle_centroids(const Mesh& mesh) {
    std::vector<Vec2> out;
    out.reserve(mesh.triangles.size());
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) out.push_back(mesh.centroid(t));
    return out;
}

inline std::vector<Vec2> circle_samples(double radius, std::size_t count) {
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double theta = 2.0 * pi * static_cast<double>(i) / static_cast<double>(count);
        out.emplace_back(radius * std::cos(theta), radius * std::sin(theta));
    }
    return out;
}

struct EllipticityReport {
    bool passed = false;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    Vec2 argmin = Vec2::Zero();
    Vec2 argmax = Vec2::Zero();
};

inline constexpr double default_lower_bound = 1e-3;
inline constexpr double default_upper_bound = 1e3;

/// Checks L < eigenvalues(sigma(x)) < U at every sample.
inline EllipticityReport check_ellipticity(const TensorField& field, std::span<const Vec2> samples,
                                           double lower = default_lower_bound, double upper = default_upper_bound) {
    if (samples.empty()) throw InvalidArgument("check_ellipticity: empty sample set");
    if (!(0.0 < lower && lower < upper)) throw InvalidArgument("check_ellipticity: need 0 < L < U");
    EllipticityReport report;
    report.min_eigenvalue = std::numeric_limits<double>::infinity();
    report.max_eigenvalue = -std::numeric_limits<double>::infinity();
    for (const Vec2& x : samples) {
        const Mat2 s = field(x);
        if (!s.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite conductivity at (" << x.x() << ", " << x.y() << ")";
            throw NumericalError(msg.str());
        }
        const auto e = symmetric_eigen(s);
        if (e.min < report.min_eigenvalue) report.min_eigenvalue = e.min, report.argmin = x;
        if (e.max > report.max_eigenvalue) report.max_eigenvalue = e.max, report.argmax = x;
    }
    report.passed = lower < report.min_eigenvalue && report.max_eigenvalue < upper;
    return report;
}

inline EllipticityReport check_ellipticity(const TensorField& field, const Mesh& mesh,
                                           double lower = default_lower_bound, double upper = default_upper_bound) {
    const auto samples = triangle_centroids(mesh);
    return check_ellipticity(field, samples, lower, upper);
}

struct JumpReport {
    bool passed = false;
    double min_relative_gap = 0.0; // min over samples of |det B - det A| / max(|det A|, |det B|)
    Vec2 worst = Vec2::Zero();
};

inline constexpr double jump_gap_threshold = 1e-9;

/// The two-dimensional jump hypothesis det B(x) != det A(x) on the interface samples.
inline JumpReport check_jump_condition(const TensorField& background, const TensorField& inclusion,
                                       std::span<const Vec2> interface_samples) {
    JumpReport report;
    report.min_relative_gap = std::numeric_limits<double>::infinity();
    for (const Vec2& x : interface_samples) {
        const double da = background(x).determinant();
        const double db = inclusion(x).determinant();
        const double scale = std::max(std::abs(da), std::abs(db));
        const double gap = scale > 0.0 ? std::abs(db - da) / scale : 0.0;
        if (gap < report.min_relative_gap) report.min_relative_gap = gap, report.worst = x;
    }
    report.passed = !interface_samples.empty() && report.min_relative_gap > jump_gap_threshold;
    return report;
}

inline TensorField as_field(const MatrixFunction& f, FieldTag tag = FieldTag::case6) { return TensorField(f.eval, tag); }

} // namespace illusion
