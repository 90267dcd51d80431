#include <doctest.h>

#include <cmath>
#include <limits>

#include "snnlab/activation.hpp"
#include "snnlab/rng.hpp"

using namespace snnlab;

namespace {

// independent long-double evaluations used as oracles
long double sigmoid_ld(long double u) { return 1.0L / (1.0L + std::exp(-u)); }
long double tanh_ld(long double u) {
    return (std::exp(u) - std::exp(-u)) / (std::exp(u) + std::exp(-u));
}

double fd_deriv(const ActivationSpec& a, double u) {
    const double h = 1e-6;
    return (a.eval(u + h) - a.eval(u - h)) / (2.0 * h);
}

double fd_deriv2(const ActivationSpec& a, double u) {
    const double h = 1e-4;
    return (a.eval(u + h) - 2.0 * a.eval(u) + a.eval(u - h)) / (h * h);
}

}  // namespace

TEST_CASE("tanh matches the high-precision oracle") {
    const auto a = certify_bounds(ActivationKind::tanh);
    CHECK(a.eval(1.0) == doctest::Approx(0.7615941559).epsilon(1e-9));
    rng::Stream s(1);
    for (int i = 0; i < 500; ++i) {
        const double u = 10.0 * (s.uniform() - 0.5);
        CHECK(a.eval(u) == doctest::Approx(static_cast<double>(tanh_ld(u))).epsilon(1e-12));
    }
}

TEST_CASE("sigmoid matches the high-precision oracle") {
    const auto a = certify_bounds(ActivationKind::sigmoid);
    rng::Stream s(2);
    for (int i = 0; i < 500; ++i) {
        const double u = 10.0 * (s.uniform() - 0.5);
        CHECK(a.eval(u) == doctest::Approx(static_cast<double>(sigmoid_ld(u))).epsilon(1e-12));
    }
}

TEST_CASE("derivatives match finite differences") {
    for (const auto kind : {ActivationKind::tanh, ActivationKind::sigmoid}) {
        const auto a = certify_bounds(kind);
        rng::Stream s(3);
        for (int i = 0; i < 200; ++i) {
            const double u = 6.0 * (s.uniform() - 0.5);
            CHECK(std::abs(a.deriv(u) - fd_deriv(a, u)) < 1e-8);
            CHECK(std::abs(a.deriv2(u) - fd_deriv2(a, u)) < 1e-5);
        }
    }
}

TEST_CASE("certified bounds dominate a dense grid and are tight") {
    for (const auto kind : {ActivationKind::tanh, ActivationKind::sigmoid}) {
        const auto a = certify_bounds(kind);
        double max_v = 0.0, max_d1 = 0.0, max_d2 = 0.0;
        for (int i = 0; i <= 200000; ++i) {
            const double u = -20.0 + 40.0 * i / 200000.0;
            max_v = std::max(max_v, std::abs(a.eval(u)));
            max_d1 = std::max(max_d1, std::abs(a.deriv(u)));
            max_d2 = std::max(max_d2, std::abs(a.deriv2(u)));
        }
        CHECK(max_v <= a.b_phi * (1.0 + 1e-12));
        CHECK(max_d1 <= a.b_phi1 * (1.0 + 1e-12));
        CHECK(max_d2 <= a.b_phi2 * (1.0 + 1e-12));
        // tightness: the grid should get within 0.1% of the certified value
        CHECK(max_d1 >= 0.999 * a.b_phi1);
        CHECK(max_d2 >= 0.999 * a.b_phi2);
    }
}

TEST_CASE("certified second-derivative bounds match their analytic values") {
    const auto t = certify_bounds(ActivationKind::tanh);
    CHECK(t.b_phi2 == doctest::Approx(4.0 / (3.0 * std::sqrt(3.0))).epsilon(1e-12));
    // |tanh''| peaks at artanh(1/sqrt(3))
    const double ustar = std::atanh(1.0 / std::sqrt(3.0));
    CHECK(std::abs(t.deriv2(ustar)) == doctest::Approx(t.b_phi2).epsilon(1e-12));
    CHECK(t.deriv2(ustar) == doctest::Approx(-0.7698).epsilon(1e-4));
    const auto s = certify_bounds(ActivationKind::sigmoid);
    CHECK(s.b_phi2 == doctest::Approx(1.0 / (6.0 * std::sqrt(3.0))).epsilon(1e-12));
    CHECK(s.b_phi1 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("non-finite preactivations are rejected") {
    const auto a = certify_bounds(ActivationKind::tanh);
    CHECK_THROWS_AS(a.eval(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
    CHECK_THROWS_AS(a.deriv(std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST_CASE("activation names round-trip") {
    CHECK(activation_from_string("tanh") == ActivationKind::tanh);
    CHECK(activation_from_string("sigmoid") == ActivationKind::sigmoid);
    CHECK(to_string(ActivationKind::tanh) == "tanh");
    CHECK_THROWS(activation_from_string("relu"));
}
