#ifndef SNNLAB_ACTIVATION_HPP
#define SNNLAB_ACTIVATION_HPP

#include <cmath>
#include <stdexcept>
#include <string>

namespace snnlab {

enum class ActivationKind { sigmoid, tanh };

inline std::string to_string(ActivationKind k) {
    return k == ActivationKind::sigmoid ? "sigmoid" : "tanh";
}

inline ActivationKind activation_from_string(const std::string& s) {
    if (s == "sigmoid") return ActivationKind::sigmoid;
    if (s == "tanh") return ActivationKind::tanh;
    throw std::invalid_argument("unknown activation: " + s);
}

// A twice-differentiable scalar activation together with certified global
// bounds on |phi|, |phi'| and |phi''|.
struct ActivationSpec {
    ActivationKind kind;
    double b_phi;   // bound on |phi(u)|
    double b_phi1;  // bound on |phi'(u)|
    double b_phi2;  // bound on |phi''(u)|

    double eval(double u) const;
    double deriv(double u) const;
    double deriv2(double u) const;
};

namespace detail {

inline void require_finite(double u) {
    if (!std::isfinite(u)) throw std::domain_error("activation input must be finite");
}

inline double sigmoid(double u) {
    // split to avoid overflow in exp for large |u|
    if (u >= 0.0) {
        return 1.0 / (1.0 + std::exp(-u));
    }
    const double e = std::exp(u);
    return e / (1.0 + e);
}

}  // namespace detail

inline double ActivationSpec::eval(double u) const {
    detail::require_finite(u);
    switch (kind) {
        case ActivationKind::sigmoid: return detail::sigmoid(u);
        case ActivationKind::tanh: return std::tanh(u);
    }
    throw std::logic_error("unreachable");
}

inline double ActivationSpec::deriv(double u) const {
    detail::require_finite(u);
    switch (kind) {
        case ActivationKind::sigmoid: {
            const double s = detail::sigmoid(u);
            return s * (1.0 - s);
        }
        case ActivationKind::tanh: {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        }
    }
    throw std::logic_error("unreachable");
}

inline double ActivationSpec::deriv2(double u) const {
    detail::require_finite(u);
    switch (kind) {
        case ActivationKind::sigmoid: {
            const double s = detail::sigmoid(u);
            return s * (1.0 - s) * (1.0 - 2.0 * s);
        }
        case ActivationKind::tanh: {
            const double t = std::tanh(u);
            return -2.0 * t * (1.0 - t * t);
        }
    }
    throw std::logic_error("unreachable");
}

// Returns the spec with the tightest known analytic derivative bounds,
// validated against a dense grid maximization over [-50, 50] before being
// returned.  Both activations' derivatives vanish beyond that range at
// double precision.
namespace detail {

inline ActivationSpec certify_bounds_uncached(ActivationKind kind) {
    ActivationSpec spec{kind, 0.0, 0.0, 0.0};
    switch (kind) {
        case ActivationKind::sigmoid:
            spec.b_phi = 1.0;
            spec.b_phi1 = 0.25;                        // at u = 0
            spec.b_phi2 = 1.0 / (6.0 * std::sqrt(3.0));  // |sigma''| extremum
            break;
        case ActivationKind::tanh:
            spec.b_phi = 1.0;
            spec.b_phi1 = 1.0;                         // at u = 0
            spec.b_phi2 = 4.0 / (3.0 * std::sqrt(3.0));  // at u = artanh(1/sqrt(3))
            break;
        default:
            throw std::invalid_argument("unsupported activation kind");
    }

    constexpr int kGridPoints = 1000000;
    constexpr double kLo = -50.0, kHi = 50.0;
    const double step = (kHi - kLo) / (kGridPoints - 1);
    // 1e-12 headroom for rounding in the analytic extrema
    const double tol = 1e-12;
    for (int i = 0; i < kGridPoints; ++i) {
        const double u = kLo + i * step;
        if (std::abs(spec.eval(u)) > spec.b_phi + tol ||
            std::abs(spec.deriv(u)) > spec.b_phi1 + tol ||
            std::abs(spec.deriv2(u)) > spec.b_phi2 + tol) {
            throw std::logic_error("activation bound certification failed");
        }
    }
    return spec;
}

}  // namespace detail

inline ActivationSpec certify_bounds(ActivationKind kind) {
    // the validation sweep is pure, so run it once per kind per process
    static const ActivationSpec sigmoid_spec =
        detail::certify_bounds_uncached(ActivationKind::sigmoid);
    static const ActivationSpec tanh_spec = detail::certify_bounds_uncached(ActivationKind::tanh);
    switch (kind) {
        case ActivationKind::sigmoid: return sigmoid_spec;
        case ActivationKind::tanh: return tanh_spec;
    }
    throw std::invalid_argument("unsupported activation kind");
}

}  // namespace snnlab

#endif  // SNNLAB_ACTIVATION_HPP
