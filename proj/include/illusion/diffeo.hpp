#pragma once

#include "illusion/conductivity.hpp"
#include "illusion/types.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace illusion {

/// Radial profile rho: [0, R] -> [0, R] of a map F(x) = rho(|x|) x / |x|.
class RadialProfile {
public:
    virtual ~RadialProfile() = default;
    virtual double value(double r) const = 0;
    virtual double derivative(double r) const = 0; // one-sided from the right at breakpoints
    virtual double inverse(double s) const = 0;
    virtual std::vector<double> breakpoints() const = 0; // interior radii where rho' may jump
};

struct ProfileSegment {
    double lo;
    double hi;
    std::vector<double> coeffs; // rho(r) = sum coeffs[i] r^i on [lo, hi]
};

namespace detail {

inline double poly_derivative(const std::vector<double>& c, double r) {
    double v = 0.0;
    for (std::size_t i = c.size(); i-- > 1;) v = v * r + static_cast<double>(i) * c[i];
    return v;
}

class PiecewisePolynomial final : public RadialProfile {
public:
    explicit PiecewisePolynomial(std::vector<ProfileSegment> segments) : segments_(std::move(segments)) {
        if (segments_.empty()) throw InvalidArgument("profile needs at least one segment");
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const auto& s = segments_[i];
            if (s.coeffs.empty() || !(s.lo < s.hi)) throw InvalidArgument("malformed profile segment");
            if (i == 0 ? s.lo != 0.0 : s.lo != segments_[i - 1].hi)
                throw InvalidArgument("profile segments must tile [0, R] contiguously");
        }
    }

    double value(double r) const override { return horner(segment_at(r).coeffs, r); }
    double derivative(double r) const override { return poly_derivative(segment_at(r).coeffs, r); }

    double inverse(double s) const override {
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const auto& seg = segments_[i];
            const double v_hi = horner(seg.coeffs, seg.hi);
            if (s <= v_hi || i + 1 == segments_.size()) return solve_segment(seg, s);
        }
        throw DomainError("profile value " + std::to_string(s) + " has no preimage");
    }

    std::vector<double> breakpoints() const override {
        std::vector<double> out;
        for (std::size_t i = 1; i < segments_.size(); ++i) out.push_back(segments_[i].lo);
        return out;
    }

private:
    const ProfileSegment& segment_at(double r) const {
        for (std::size_t i = 0; i + 1 < segments_.size(); ++i)
            if (r < segments_[i].hi) return segments_[i];
        return segments_.back();
    }

    static double solve_segment(const ProfileSegment& seg, double s) {
        const auto& c = seg.coeffs;
        std::size_t degree = c.size() - 1;
        while (degree > 0 && c[degree] == 0.0) --degree;
        if (degree == 0) throw DomainError("constant profile segment is not invertible");
        if (degree == 1) return (s - c[0]) / c[1];
        const double mid = 0.5 * (seg.lo + seg.hi);
        if (degree == 2) {
            // c2 r^2 + c1 r + (c0 - s) = 0 without cancellation; keep the root nearest the segment.
            const double a = c[2], b = c[1], q0 = c[0] - s;
            const double q = -0.5 * (b + std::copysign(std::sqrt(std::max(0.0, b * b - 4.0 * a * q0)), b));
            const double r1 = q / a;
            const double r2 = q != 0.0 ? q0 / q : r1;
            return std::abs(r1 - mid) <= std::abs(r2 - mid) ? r1 : r2;
        }
        // Safeguarded Newton on a monotone piece.
        double lo = seg.lo, hi = seg.hi, r = mid;
        const bool increasing = horner(c, hi) >= horner(c, lo);
        for (int it = 0; it < 200; ++it) {
            const double f = horner(c, r) - s;
            if (f == 0.0) return r;
            if ((f > 0.0) == increasing) hi = r; else lo = r;
            const double d = poly_derivative(c, r);
            double next = d != 0.0 ? r - f / d : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - r) <= 1e-16 * std::max(1.0, std::abs(r))) return next;
            r = next;
        }
        return r;
    }

    std::vector<ProfileSegment> segments_;
};

class ComposedProfile final : public RadialProfile {
public:
    ComposedProfile(std::shared_ptr<const RadialProfile> outer, std::shared_ptr<const RadialProfile> inner)
        : outer_(std::move(outer)), inner_(std::move(inner)) {}

    double value(double r) const override { return outer_->value(inner_->value(r)); }
    double derivative(double r) const override { return outer_->derivative(inner_->value(r)) * inner_->derivative(r); }
    double inverse(double s) const override { return inner_->inverse(outer_->inverse(s)); }
    std::vector<double> breakpoints() const override {
        std::vector<double> out = inner_->breakpoints();
        for (double b : outer_->breakpoints()) out.push_back(inner_->inverse(b));
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    std::shared_ptr<const RadialProfile> outer_, inner_;
};

class InverseProfile final : public RadialProfile {
public:
    explicit InverseProfile(std::shared_ptr<const RadialProfile> base) : base_(std::move(base)) {}

    double value(double r) const override { return base_->inverse(r); }
    double derivative(double r) const override { return 1.0 / base_->derivative(base_->inverse(r)); }
    double inverse(double s) const override { return base_->value(s); }
    std::vector<double> breakpoints() const override {
        std::vector<double> out;
        for (double b : base_->breakpoints()) out.push_back(base_->value(b));
        return out;
    }

private:
    std::shared_ptr<const RadialProfile> base_;
};

} // namespace detail

/// Radial diffeomorphism F(x) = rho(|x|) x / |x| of the disk |x| <= R.
class RadialDiffeo {
public:
    RadialDiffeo(double outer_radius, std::shared_ptr<const RadialProfile> profile, std::string kind)
        : radius_(outer_radius), profile_(std::move(profile)), kind_(std::move(kind)) {}

    double outer_radius() const { return radius_; }
    const RadialProfile& profile() const { return *profile_; }
    std::shared_ptr<const RadialProfile> profile_ptr() const { return profile_; }
    const std::string& kind() const { return kind_; }

    double rho(double r) const { return profile_->value(r); }
    double rho_prime(double r) const { return profile_->derivative(r); }
    std::vector<double> breakpoints() const { return profile_->breakpoints(); }

    Vec2 apply(const Vec2& x) const {
        const double r = checked_radius(x);
        return r == 0.0 ? Vec2::Zero() : Vec2(x * (profile_->value(r) / r));
    }

    Vec2 inverse_apply(const Vec2& y) const {
        const double s = checked_radius(y);
        return s == 0.0 ? Vec2::Zero() : Vec2(y * (profile_->inverse(s) / s));
    }

    /// DF(x) = rho'(r) P_r + (rho(r)/r) P_t. Undefined on breakpoint circles.
    Mat2 jacobian(const Vec2& x) const {
        const double r = checked_radius(x);
        for (double b : profile_->breakpoints())
            if (std::abs(r - b) <= 1e-12 * radius_)
                throw DomainError("jacobian requested on breakpoint circle |x| = " + std::to_string(b) +
                                  "; perturb the evaluation point");
        const double d = profile_->derivative(r);
        if (r == 0.0) return d * Mat2::Identity();
        const double t = profile_->value(r) / r;
        if (t == d) return d * Mat2::Identity();
        const Vec2 e = x / r;
        const Mat2 radial = e * e.transpose();
        return d * radial + t * (Mat2::Identity() - radial);
    }

private:
    double checked_radius(const Vec2& x) const {
        const double r = x.norm();
        if (!std::isfinite(r) || r > radius_ * (1.0 + 1e-12))
            throw DomainError("point outside the disk of radius " + std::to_string(radius_));
        return std::min(r, radius_);
    }

    double radius_;
    std::shared_ptr<const RadialProfile> profile_;
    std::string kind_;
};

/// Unchecked constructor for arbitrary piecewise-polynomial profiles; see validate_diffeo.
inline RadialDiffeo make_piecewise_diffeo(double outer_radius, std::vector<ProfileSegment> segments,
                                          std::string kind = "piecewise") {
    if (!(outer_radius > 0.0)) throw InvalidArgument("outer radius must be positive");
    return RadialDiffeo(outer_radius, std::make_shared<detail::PiecewisePolynomial>(std::move(segments)),
                        std::move(kind));
}

inline RadialDiffeo make_identity_diffeo(double outer_radius) {
    return make_piecewise_diffeo(outer_radius, {{0.0, outer_radius, {0.0, 1.0}}}, "identity");
}

/// rho(r) = eps r inside r_D, affine from (r_D, eps r_D) to (R, R) outside.
inline RadialDiffeo make_cloak_map(double eps, double inclusion_radius, double outer_radius) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("cloak map needs eps in (0, 1)");
    if (!(inclusion_radius > 0.0 && inclusion_radius < outer_radius))
        throw InvalidArgument("cloak map needs 0 < r_D < R");
    const double slope = (outer_radius - eps * inclusion_radius) / (outer_radius - inclusion_radius);
    const double intercept = outer_radius - slope * outer_radius;
    return make_piecewise_diffeo(outer_radius,
                                 {{0.0, inclusion_radius, {0.0, eps}},
                                  {inclusion_radius, outer_radius, {intercept, slope}}},
                                 "cloak");
}

/// rho(r) = r + c r (1 - r / r_D) inside r_D, identity outside.
inline RadialDiffeo make_interior_diffeo(double c, double inclusion_radius, double outer_radius) {
    if (!(std::abs(c) < 1.0)) throw InvalidArgument("interior diffeo needs |c| < 1");
    if (!(inclusion_radius > 0.0 && inclusion_radius < outer_radius))
        throw InvalidArgument("interior diffeo needs 0 < r_D < R");
    return make_piecewise_diffeo(outer_radius,
                                 {{0.0, inclusion_radius, {0.0, 1.0 + c, -c / inclusion_radius}},
                                  {inclusion_radius, outer_radius, {0.0, 1.0}}},
                                 "interior");
}

/// compose(F, G) = F o G.
inline RadialDiffeo compose(const RadialDiffeo& f, const RadialDiffeo& g) {
    if (f.outer_radius() != g.outer_radius()) throw InvalidArgument("compose: maps live on different disks");
    return RadialDiffeo(f.outer_radius(), std::make_shared<detail::ComposedProfile>(f.profile_ptr(), g.profile_ptr()),
                        "composed");
}

inline RadialDiffeo inverse(const RadialDiffeo& f) {
    return RadialDiffeo(f.outer_radius(), std::make_shared<detail::InverseProfile>(f.profile_ptr()), "inverse");
}

/// Central-difference Jacobian; a test oracle for RadialDiffeo::jacobian.
inline Mat2 jacobian_fd(const RadialDiffeo& f, const Vec2& x, double step = 1e-6) {
    Mat2 j;
    for (int c = 0; c < 2; ++c) {
        Vec2 dx = Vec2::Zero();
        dx[c] = step;
        j.col(c) = (f.apply(x + dx) - f.apply(x - dx)) / (2.0 * step);
    }
    return j;
}

/// Push-forward (DF sigma DF^t / det DF) evaluated at y through the preimage x = F^{-1}(y).
inline TensorField pushforward(const RadialDiffeo& f, const TensorField& sigma) {
    std::vector<double> radii;
    for (double r : sigma.inclusion_radii())
        if (r < f.outer_radius()) radii.push_back(f.rho(r));
    for (double b : f.breakpoints()) radii.push_back(f.rho(b));
    std::sort(radii.begin(), radii.end());
    radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
    return TensorField(
        [f, sigma](const Vec2& y) {
            const Vec2 x = f.inverse_apply(y);
            const Mat2 j = f.jacobian(x);
            const double det = j.determinant();
            if (!(det > 0.0) || !std::isfinite(det))
                throw NumericalError("push-forward: det DF = " + std::to_string(det) + " at preimage");
            Mat2 s = j * sigma(x) * j.transpose() / det;
            const double off = 0.5 * (s(0, 1) + s(1, 0));
            s(0, 1) = s(1, 0) = off;
            return s;
        },
        FieldTag::pushed, std::move(radii));
}

struct DiffeoReport {
    bool passed = false;
    double boundary_error = 0.0; // max |F(x) - x| on |x| = R
    double origin_value = 0.0;   // rho(0)
    bool monotone = false;
    double min_derivative = 0.0;
    double max_jacobian_norm = 0.0;
    double min_abs_det = 0.0;
    std::vector<std::string> failures;
};

inline constexpr double diffeo_det_floor = 1e-8;
inline constexpr double diffeo_norm_ceiling = 1e8;

/// Samples the defining conditions of a diffeomorphism of the disk onto itself.
inline DiffeoReport validate_diffeo(const RadialDiffeo& f, std::size_t n_samples = 1000) {
    if (n_samples < 2) throw InvalidArgument("validate_diffeo needs at least 2 samples");
    const double R = f.outer_radius();
    DiffeoReport rep;
    for (const Vec2& x : circle_samples(R, 64)) rep.boundary_error = std::max(rep.boundary_error, (f.apply(x) - x).norm());
    rep.origin_value = f.rho(0.0);

    rep.monotone = true;
    rep.min_derivative = std::numeric_limits<double>::infinity();
    rep.min_abs_det = std::numeric_limits<double>::infinity();
    const auto breaks = f.breakpoints();
    double previous = rep.origin_value;
    for (std::size_t i = 0; i < n_samples; ++i) {
        double r = R * (static_cast<double>(i) + 0.5) / static_cast<double>(n_samples);
        for (double b : breaks)
            if (std::abs(r - b) <= 1e-9 * R) r += 1e-6 * R;
        const double value = f.rho(r);
        if (!(value > previous)) rep.monotone = false;
        previous = value;
        rep.min_derivative = std::min(rep.min_derivative, f.rho_prime(r));
        const Vec2 x(r * std::cos(0.3), r * std::sin(0.3));
        const Mat2 j = f.jacobian(x);
        rep.max_jacobian_norm = std::max(rep.max_jacobian_norm, symmetric_eigen(j).max);
        rep.min_abs_det = std::min(rep.min_abs_det, std::abs(j.determinant()));
    }
    if (!(f.rho(R) > previous)) rep.monotone = false;

    if (!(rep.boundary_error <= 1e-12 * R)) rep.failures.push_back("not identity on the outer boundary (∂Ω)");
    if (!(std::abs(rep.origin_value) <= 1e-12 * R)) rep.failures.push_back("origin is not fixed");
    if (!rep.monotone || !(rep.min_derivative > 0.0)) rep.failures.push_back("profile is not strictly increasing");
    if (!(rep.max_jacobian_norm < diffeo_norm_ceiling) || !std::isfinite(rep.max_jacobian_norm))
        rep.failures.push_back("Jacobian is unbounded");
    if (!(rep.min_abs_det >= diffeo_det_floor)) rep.failures.push_back("Jacobian determinant vanishes");
    rep.passed = rep.failures.empty();
    return rep;
}

} // namespace illusion
