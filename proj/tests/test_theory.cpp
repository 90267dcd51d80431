#include <doctest.h>

#include <cmath>
#include <vector>

#include "snnlab/config.hpp"
#include "snnlab/theory.hpp"

using namespace snnlab;

namespace {

// Independent long-double re-evaluations of every closed-form quantity,
// written from the formulas rather than the implementation.
constexpr long double kE = 2.718281828459045235360287471352662498L;

struct OracleConsts {
    long double rho, b_tilde, b_prime;
};

OracleConsts oracle_constants(long double cx, long double cy, long double c0, long double bphi,
                              long double bphi1, long double bphi2, long double m) {
    OracleConsts o;
    o.rho = cx * cx * (bphi1 * bphi1 + bphi2 * bphi + bphi2 * cy / std::sqrt(m));
    o.b_tilde = cx * cx * bphi2 * (bphi1 * cx + c0);
    o.b_prime = cx * cx * bphi2 * (cx * bphi1 + std::sqrt(2.0L * c0));
    return o;
}

bool six_digits(double value, long double oracle) {
    return std::abs(static_cast<long double>(value) - oracle) <=
           5e-7L * std::max<long double>(std::abs(oracle), 1e-300L);
}

theory::TheoryConstants worked_constants(double m = 100.0) {
    DataBounds bounds;  // c_x = c_y = 1, c_0 = 0.5
    return theory::constants(certify_bounds(ActivationKind::tanh), bounds, m);
}

theory::RegularizedReference fake_reference(double dist, double lambda = 0.1,
                                            double risk = 0.0) {
    theory::RegularizedReference ref;
    ref.lambda = lambda;
    ref.dist_to_init = dist;
    ref.surrogate_risk = risk;
    ref.l_wstar = 0.0;
    return ref;
}

}  // namespace

TEST_CASE("constants match the long-double oracle and the worked arithmetic") {
    const long double b2 = 4.0L / (3.0L * std::sqrt(3.0L));
    const auto o = oracle_constants(1.0L, 1.0L, 0.5L, 1.0L, 1.0L, b2, 100.0L);
    const auto c = worked_constants();
    CHECK(six_digits(c.rho, o.rho));
    CHECK(six_digits(c.b_tilde, o.b_tilde));
    CHECK(six_digits(c.b_prime, o.b_prime));
    CHECK(c.rho == doctest::Approx(1.8468).epsilon(2e-4));
    CHECK(c.b_prime == doctest::Approx(1.5396).epsilon(1e-4));
    CHECK(c.b_prime == doctest::Approx(static_cast<double>(b2 * 2.0L)).epsilon(1e-12));
}

TEST_CASE("uniform GD stability bound reproduces the worked 0.334 instance") {
    const auto c = worked_constants();
    const double value = theory::gd_stability_bound_uniform(c, 1000.0, 0.1, 100.0);
    const long double rho = static_cast<long double>(c.rho);
    const long double oracle =
        2.0L * 0.1L * kE * 100.0L * std::sqrt(2.0L * 0.5L * rho * (rho * 10.0L + 2.0L)) / 1000.0L;
    CHECK(six_digits(value, oracle));
    CHECK(value == doctest::Approx(0.334).epsilon(2e-3));
}

TEST_CASE("iterate-cap threshold reproduces the worked 607 instance") {
    const auto c = worked_constants();
    const auto thresholds = theory::overparam_thresholds(c, 1000.0, 0.02, 100.0, fake_reference(0.0));
    const double required = thresholds.at("lemma_d1").required_m;
    const long double bp = static_cast<long double>(c.b_prime);
    CHECK(six_digits(required, 64.0L * 0.5L * bp * bp * 8.0L));
    CHECK(required == doctest::Approx(607.0).epsilon(2e-3));
}

TEST_CASE("width threshold reproduces the worked 1.85e3 instance") {
    const auto c = worked_constants();
    const auto thresholds = theory::overparam_thresholds(c, 1000.0, 0.1, 100.0, fake_reference(0.0));
    const long double rho = static_cast<long double>(c.rho);
    const long double inner =
        2.0L / 1000.0L * std::sqrt(rho * (rho * 10.0L + 2.0L)) * 1.0L * 1.0L *
            (1.0L + 0.1L * rho) * 0.1L * kE * 100.0L +
        1.0L;
    const long double b2 = 4.0L / (3.0L * std::sqrt(3.0L));
    const long double oracle = 32.0L * 0.5L * 0.01L * 10000.0L * b2 * b2 * inner * inner;
    CHECK(six_digits(thresholds.at("m_bound").required_m, oracle));
    CHECK(thresholds.at("m_bound").required_m == doctest::Approx(1850.0).epsilon(2e-2));
    CHECK_FALSE(thresholds.at("m_bound").satisfied);  // m = 100 here
}

TEST_CASE("remaining thresholds match their long-double oracles") {
    const auto c = worked_constants(512.0);
    const double n = 64.0, eta = 0.1, T = 20.0, dist = 0.8;
    const auto th = theory::overparam_thresholds(c, n, eta, T, fake_reference(dist));
    const long double rho = static_cast<long double>(c.rho);
    const long double bt = static_cast<long double>(c.b_tilde);
    const long double bp = static_cast<long double>(c.b_prime);
    const long double etaT = 2.0L;

    {
        const long double inner = std::sqrt(2.0L * etaT * 0.5L) + 0.8L;
        CHECK(six_digits(th.at("m_bound_optimization").required_m,
                         4.0L * bt * bt * etaT * etaT * inner * inner));
    }
    {
        const long double rate = 8.0L * kE * kE * rho * rho * 0.001L * 400.0L / (64.0L * 64.0L) +
                                 8.0L * kE * 0.01L * 20.0L * rho / 64.0L;
        const long double inner = bt * 20.0L * (0.8L + std::sqrt(2.0L * etaT * 0.5L));
        CHECK(six_digits(th.at("m_condition_sum").required_m, 4.0L * rate * rate * inner * inner));
    }
    const long double rtp = std::max(2.0L * std::sqrt(20.0L * 0.1L * 0.5L), 0.8L);
    {
        const long double base = etaT * bp * rtp * (1.0L + 2.0L * 0.1L * rho);
        CHECK(six_digits(th.at("m_bound_sgd").required_m, 16.0L * base * base));
    }
    {
        const long double factor = 1.0L +
                                   4.0L * kE * kE * 0.1L * rho * 20.0L * (1.0L + 20.0L / 64.0L) / 64.0L +
                                   4.0L * kE * std::sqrt(20.0L) * std::sqrt(1.0L + 20.0L / 64.0L) /
                                       std::sqrt(64.0L);
        const long double base = 8.0L * bp * 20.0L * rho * 0.01L * rtp;
        const long double second = 4.0L * base * base * factor * factor;
        CHECK(six_digits(th.at("m_bound_sgd_2").required_m,
                         std::max(static_cast<long double>(th.at("m_bound_sgd").required_m), second)));
    }
}

TEST_CASE("GD generalization bound matches the worked instance formula") {
    const auto c = worked_constants();
    std::vector<double> risks(51, 10.0 / 50.0);  // sum over j < 50 equals 10
    const double value = theory::gd_generalization_bound(c, 64.0, 0.1, 50, risks);
    const long double rho = static_cast<long double>(c.rho);
    const long double factor =
        4.0L * kE * kE * 0.01L * rho * rho * 50.0L / 4096.0L + 4.0L * kE * 0.1L * rho / 64.0L;
    CHECK(six_digits(value, factor * 10.0L));
    CHECK(value == doctest::Approx(0.43692).epsilon(1e-3));
}

TEST_CASE("GD on-average squared stability bound matches its oracle") {
    const auto c = worked_constants();
    std::vector<double> risks(11, 0.3);
    const double value = theory::gd_stability_sq_bound(c, 32.0, 0.05, 10, risks);
    const long double rho = static_cast<long double>(c.rho);
    CHECK(six_digits(value, 8.0L * kE * kE * 0.0025L * rho * 11.0L / 1024.0L * 3.3L));
}

TEST_CASE("SGD stability bound reproduces the worked 0.0853 instance") {
    const auto c = worked_constants();
    std::vector<double> risks(129, 20.0 / 129.0);  // sum over j <= 128 equals 20
    const double value = theory::sgd_stability_bound(c, 128.0, 0.05, 128, risks);
    const long double rho = static_cast<long double>(c.rho);
    const long double oracle = 8.0L * kE * kE * rho * 2.0L * 0.0025L / 128.0L * 20.0L;
    CHECK(six_digits(value, oracle));
    CHECK(value == doctest::Approx(0.0853).epsilon(2e-3));
}

TEST_CASE("SGD generalization bound matches its oracle") {
    const auto c = worked_constants();
    std::vector<double> risks(129, 20.0 / 129.0);
    risks[128] = 0.05;
    const double value = theory::sgd_generalization_bound(c, 128.0, 0.05, 128, risks);
    long double sum = 0.0L;
    for (int j = 0; j <= 128; ++j) sum += static_cast<long double>(risks[j]);
    const long double rho = static_cast<long double>(c.rho);
    const long double occ = 2.0L;
    const long double oracle = 4.0L * kE * kE * rho * rho * occ * 0.0025L / 128.0L * sum +
                               4.0L * kE * rho * 0.05L * std::sqrt(occ * 0.05L * sum / 128.0L);
    CHECK(six_digits(value, oracle));
}

TEST_CASE("GD iterate and optimization bounds match their oracles") {
    const auto c = worked_constants(4096.0);
    std::vector<double> risks(51, 0.2);
    const auto ref = fake_reference(1.0, 0.2, 0.01);
    const double rt = theory::gd_iterate_bound_rt(c, 64.0, 0.1, 50, risks, ref);
    const long double rho = static_cast<long double>(c.rho);
    const long double factor = 8.0L * kE * kE * rho * rho * 0.001L * 2500.0L / 4096.0L +
                               8.0L * kE * 0.01L * 50.0L * rho / 64.0L;
    const long double rt_oracle = factor * 10.0L + 2.0L;
    CHECK(six_digits(rt, rt_oracle));

    const double opt = theory::gd_optimization_bound(c, 64.0, 0.1, 50, risks, ref);
    const long double bt = static_cast<long double>(c.b_tilde);
    const long double opt_oracle =
        0.01L + 0.2L * 1.0L +
        bt * rt_oracle * (1.0L + std::sqrt(2.0L * 0.1L * 50.0L * 0.5L)) / std::sqrt(4096.0L);
    CHECK(six_digits(opt, opt_oracle));
}

TEST_CASE("SGD optimization and risk-sum bounds match their oracles") {
    const auto c = worked_constants(1024.0);
    std::vector<double> risks(40, 0.1);
    const auto ref = fake_reference(0.5, 0.5, 0.02);
    const long double rho = static_cast<long double>(c.rho);
    const long double bp = static_cast<long double>(c.b_prime);
    const long double rtp = std::max(2.0L * std::sqrt(40.0L * 0.05L * 0.5L), 0.5L);

    const double opt = theory::sgd_optimization_bound(c, 0.05, 40, 0.3, risks, ref);
    const long double opt_oracle = 0.25L + 2.0L * rho * 0.0025L * 4.0L +
                                   2.0L * 40.0L * 0.05L * bp * rtp * 0.3L / 32.0L;
    CHECK(six_digits(opt, opt_oracle));

    const double rs = theory::sgd_risk_sum_bound(c, 0.05, 40, ref);
    const long double rs_oracle =
        4.0L * 40.0L * 0.02L + 2.0L * (20.0L + 4.0L * bp * 40.0L * rtp / 32.0L) * 0.25L;
    CHECK(six_digits(rs, rs_oracle));
}

TEST_CASE("curvature report bounds hold and both eigen paths agree") {
    ExperimentConfig cfg;
    cfg.d = 3;
    cfg.m = 12;
    const auto dist = make_distribution(cfg);
    Dataset set = sample_dataset(dist, 8, 3);
    ModelState s = make_student(cfg);
    certify_c0(set, s);
    const auto c = theory::constants(s.activation, set.bounds, static_cast<double>(s.width()));
    rng::Stream stream(0xcafe);
    for (int inst = 0; inst < 25; ++inst) {
        for (Eigen::Index col = 0; col < s.weights.cols(); ++col)
            for (Eigen::Index r = 0; r < s.weights.rows(); ++r)
                s.weights(r, col) = 1.5 * stream.normal();
        const Example& z = set.examples[static_cast<std::size_t>(stream.uniform_int(set.size()))];
        const auto rep = theory::check_curvature(s, z, c);
        CHECK(rep.dense_path);
        CHECK(rep.lambda_min >= rep.bound_residual - 1e-8);
        CHECK(rep.lambda_min >= rep.bound_init - 1e-8);
        CHECK(rep.lambda_min >= rep.bound_radius - 1e-8);
        CHECK(rep.lambda_min <= c.rho + 1e-8);
        const double power = theory::lambda_min_power(s, z, c.rho, 3000, 1e-12);
        CHECK(power == doctest::Approx(rep.lambda_min).epsilon(1e-5).scale(1e-4));
    }
}

TEST_CASE("lemma margins are nonnegative on random pairs") {
    ExperimentConfig cfg;
    cfg.d = 4;
    cfg.m = 64;
    const auto dist = make_distribution(cfg);
    Dataset set = sample_dataset(dist, 16, 9);
    ModelState a = make_student(cfg), b = make_student(cfg);
    certify_c0(set, a);
    const auto c = theory::constants(a.activation, set.bounds, static_cast<double>(a.width()));
    rng::Stream stream(0xbead);
    for (int inst = 0; inst < 500; ++inst) {
        for (Eigen::Index col = 0; col < a.weights.cols(); ++col)
            for (Eigen::Index r = 0; r < a.weights.rows(); ++r) {
                a.weights(r, col) = 2.0 * stream.normal();
                b.weights(r, col) = 2.0 * stream.normal();
            }
        const Example& z = set.examples[static_cast<std::size_t>(stream.uniform_int(set.size()))];
        CHECK(theory::smoothness_margin(a, b, z, c.rho) >= -1e-8);
        CHECK(theory::selfbounding_margin(a, z, c.rho) >= -1e-8);
        CHECK(theory::weak_convexity_margin(a, b, z, c) >= -1e-8);
    }
}

TEST_CASE("epsilon_t grows with the coupled distance and gates the sequence") {
    const auto c = worked_constants(1024.0);
    CHECK(theory::epsilon_t(0.0, 0.1, c) > 0.0);
    CHECK(theory::epsilon_t(1.0, 0.1, c) > theory::epsilon_t(0.1, 0.1, c));
    // small distances, small eta: the condition 2 eta eps_t <= 1/(t+1) holds
    std::vector<double> distances(11, 0.01);
    CHECK(theory::epsilon_sequence_ok(distances, 0.01, c));
    // gigantic width-normalized epsilon fails at late t
    const auto tiny = worked_constants(4.0);
    std::vector<double> far(200, 10.0);
    CHECK_FALSE(theory::epsilon_sequence_ok(far, 0.25, tiny));
}

TEST_CASE("regularized reference is realizable-consistent") {
    ExperimentConfig cfg;
    cfg.d = 3;
    cfg.m = 16;
    cfg.teacher_scale = 0.5;
    const auto dist = make_distribution(cfg);
    const ModelState init = make_student(cfg);
    const auto ref = theory::build_regularized_reference(dist, 1.0, init, 10000, 500, 20000, 42);
    CHECK(ref.lambda == 1.0);
    CHECK(ref.dist_to_init >= 0.0);
    CHECK(ref.surrogate_risk >= 0.0);
    CHECK(ref.l_wstar == 0.0);  // noiseless teacher
    CHECK(ref.regularity_value >= 0.0);
    // with a noisy teacher the floor is tau^2 / 2
    ExperimentConfig noisy = cfg;
    noisy.noise_std = 0.2;
    CHECK(theory::l_wstar_surrogate(make_distribution(noisy)) == doctest::Approx(0.02));
}
