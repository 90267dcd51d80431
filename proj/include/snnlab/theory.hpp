#ifndef SNNLAB_THEORY_HPP
#define SNNLAB_THEORY_HPP

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "snnlab/data.hpp"
#include "snnlab/model.hpp"
#include "snnlab/optim.hpp"

namespace snnlab::theory {

inline constexpr double kEulerE = 2.718281828459045235;

// All constants from the bound formulas, evaluated for one configuration.
struct TheoryConstants {
    double rho = 0.0;      // smoothness constant
    double b_tilde = 0.0;  // Cx^2 Bphi'' (Bphi' Cx + C0)
    double b_prime = 0.0;  // Cx^2 Bphi'' (Cx Bphi' + sqrt(2 C0))
    double c_x = 0.0, c_y = 0.0, c_0 = 0.0;
    double b_phi = 0.0, b_phi1 = 0.0, b_phi2 = 0.0;
    double m = 0.0;
};

inline TheoryConstants constants(const ActivationSpec& a, const DataBounds& bounds, double m) {
    if (m <= 0.0 || bounds.c_x <= 0.0 || bounds.c_y <= 0.0 || bounds.c_0 <= 0.0)
        throw std::invalid_argument("theory constants need positive inputs");
    TheoryConstants c;
    c.c_x = bounds.c_x;
    c.c_y = bounds.c_y;
    c.c_0 = bounds.c_0;
    c.b_phi = a.b_phi;
    c.b_phi1 = a.b_phi1;
    c.b_phi2 = a.b_phi2;
    c.m = m;
    const double cx2 = c.c_x * c.c_x;
    c.rho = cx2 * (c.b_phi1 * c.b_phi1 + c.b_phi2 * c.b_phi + c.b_phi2 * c.c_y / std::sqrt(m));
    c.b_tilde = cx2 * c.b_phi2 * (c.b_phi1 * c.c_x + c.c_0);
    c.b_prime = cx2 * c.b_phi2 * (c.c_x * c.b_phi1 + std::sqrt(2.0 * c.c_0));
    return c;
}

// Numerical surrogate for the population-regularized reference W*_lambda,
// fitted by GD on a large held-out sample (the population object itself is
// not computable).
struct RegularizedReference {
    double lambda = 0.0;
    ModelState weights;
    double surrogate_risk = 0.0;   // Monte-Carlo L(W*_lambda)
    double surrogate_risk_se = 0.0;
    double dist_to_init = 0.0;     // ||W*_lambda - W0||_2
    double l_wstar = 0.0;          // L(W*) surrogate (0 in realizable runs)
    double regularity_value = 0.0; // Lambda_lambda estimate
    bool converged = false;
    double final_grad_norm = 0.0;
};

// L(W*) surrogate: the teacher is exactly optimal when noise_std = 0;
// otherwise the analytic Gaussian noise floor tau^2/2 (approximate once
// labels are clipped, negligible for tau << C_y).
inline double l_wstar_surrogate(const TeacherDistribution& dist) {
    return 0.5 * dist.noise_std * dist.noise_std;
}

inline RegularizedReference build_regularized_reference(
    const TeacherDistribution& dist, double lambda, const ModelState& init,
    std::size_t surrogate_n = 20000, std::size_t max_steps = 5000,
    std::size_t n_mc = 100000, std::uint64_t seed = 0x5ef) {
    if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
    if (surrogate_n < 10000) throw std::invalid_argument("surrogate sample must be >= 1e4");

    Dataset heldout = sample_dataset(dist, surrogate_n, rng::derive(seed, {0xf00d}));
    const double rho = smoothness_rho(init.activation, heldout.bounds.c_x, heldout.bounds.c_y,
                                      static_cast<double>(init.width()));
    const double step = 1.0 / (2.0 * (rho + 2.0 * lambda));

    const auto batch = detail::BatchData::from(heldout, init.input_dim());
    RegularizedReference ref;
    ref.lambda = lambda;
    ref.weights = init;
    Matrix w = init.init_weights;
    double grad_norm = 0.0;
    for (std::size_t t = 0; t < max_steps; ++t) {
        auto eval = detail::batch_eval(w, init.signs, init.activation, batch);
        Matrix grad = eval.gradient + 2.0 * lambda * (w - init.init_weights);
        grad_norm = grad.norm();
        if (grad_norm <= 1e-6) {
            ref.converged = true;
            break;
        }
        w.noalias() -= step * grad;
    }
    ref.weights.weights = w;
    ref.final_grad_norm = grad_norm;
    ref.converged = ref.converged || grad_norm <= 1e-6;
    ref.dist_to_init = (w - init.init_weights).norm();
    const auto mc = population_risk_mc(ref.weights, dist, n_mc, rng::derive(seed, {0xbeef}));
    ref.surrogate_risk = mc.estimate;
    ref.surrogate_risk_se = mc.std_error;
    ref.l_wstar = l_wstar_surrogate(dist);
    ref.regularity_value =
        ref.surrogate_risk - ref.l_wstar + lambda * ref.dist_to_init * ref.dist_to_init;
    return ref;
}

// --- overparameterization thresholds -----------------------------------

struct Threshold {
    double required_m = 0.0;
    bool satisfied = false;
};

using ThresholdMap = std::map<std::string, Threshold>;

inline double r_t_prime(const TheoryConstants& c, double eta, double horizon, double dist_to_init) {
    return std::max(2.0 * std::sqrt(horizon * eta * c.c_0), dist_to_init);
}

inline ThresholdMap overparam_thresholds(const TheoryConstants& c, double n, double eta,
                                         double horizon, const RegularizedReference& ref) {
    const double e = kEulerE;
    const double T = horizon;
    const double eta_t = eta * T;
    const double dist = ref.dist_to_init;
    const double cx2 = c.c_x * c.c_x;
    ThresholdMap out;
    auto put = [&](const std::string& name, double required) {
        out[name] = Threshold{required, c.m >= required};
    };

    {
        const double inner = 2.0 / n * std::sqrt(c.rho * (c.rho * eta_t + 2.0)) * c.b_phi1 * c.c_x *
                                 (1.0 + eta * c.rho) * eta * e * T +
                             1.0;
        put("m_bound", 32.0 * c.c_0 * eta * eta * T * T * cx2 * cx2 * c.b_phi2 * c.b_phi2 * inner * inner);
    }
    {
        const double inner = std::sqrt(2.0 * eta_t * c.c_0) + dist;
        put("m_bound_optimization", 4.0 * c.b_tilde * c.b_tilde * eta_t * eta_t * inner * inner);
    }
    {
        const double rate = 8.0 * e * e * c.rho * c.rho * eta * eta * eta * T * T / (n * n) +
                            8.0 * e * eta * eta * T * c.rho / n;
        const double inner = c.b_tilde * T * (dist + std::sqrt(2.0 * eta_t * c.c_0));
        put("m_condition_sum", 4.0 * rate * rate * inner * inner);
    }
    const double rtp = r_t_prime(c, eta, T, dist);
    {
        const double base = eta * T * c.b_prime * rtp * (1.0 + 2.0 * eta * c.rho);
        put("m_bound_sgd", 16.0 * base * base);
    }
    {
        const double first = out["m_bound_sgd"].required_m;
        const double factor = 1.0 + 4.0 * e * e * eta * c.rho * T * (1.0 + T / n) / n +
                              4.0 * e * std::sqrt(T) * std::sqrt(1.0 + T / n) / std::sqrt(n);
        const double base = 8.0 * c.b_prime * T * c.rho * eta * eta * rtp;
        put("m_bound_sgd_2", std::max(first, 4.0 * base * base * factor * factor));
    }
    put("lemma_d1", 64.0 * c.c_0 * c.b_prime * c.b_prime * eta_t * eta_t * eta_t);
    return out;
}

// --- bound calculators -------------------------------------------------
// risk_sums holds the measured (or across-seed mean) E[L_S(W_j)] per step.

inline double partial_sum(const std::vector<double>& risks, std::size_t count) {
    if (risks.size() < count) throw std::invalid_argument("risk sequence shorter than requested");
    return std::accumulate(risks.begin(), risks.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
}

// Generalization gap bound of GD at step t:
// (4 e^2 eta^2 rho^2 t / n^2 + 4 e eta rho / n) * sum_{j<t} E[L_S(W_j)]
inline double gd_generalization_bound(const TheoryConstants& c, double n, double eta, std::size_t t,
                                      const std::vector<double>& risk_sums) {
    const double e = kEulerE;
    const double td = static_cast<double>(t);
    const double factor =
        4.0 * e * e * eta * eta * c.rho * c.rho * td / (n * n) + 4.0 * e * eta * c.rho / n;
    return factor * partial_sum(risk_sums, t);
}

// Uniform per-realization stability of GD: 2 eta e T sqrt(2 C0 rho (rho eta T + 2)) / n
inline double gd_stability_bound_uniform(const TheoryConstants& c, double n, double eta,
                                         double horizon) {
    return 2.0 * eta * kEulerE * horizon *
           std::sqrt(2.0 * c.c_0 * c.rho * (c.rho * eta * horizon + 2.0)) / n;
}

// On-average squared stability of GD at step t+1:
// (8 e^2 eta^2 rho (1 + t) / n^2) * sum_{j<=t} E[L_S(W_j)]
inline double gd_stability_sq_bound(const TheoryConstants& c, double n, double eta, std::size_t t,
                                    const std::vector<double>& risk_sums) {
    const double e = kEulerE;
    return 8.0 * e * e * eta * eta * c.rho * (1.0 + static_cast<double>(t)) / (n * n) *
           partial_sum(risk_sums, t + 1);
}

// On-average squared stability of SGD at step t+1:
// (8 e^2 rho (1 + t/n) eta^2 / n) * sum_{j<=t} E[L_S(W_j)]
inline double sgd_stability_bound(const TheoryConstants& c, double n, double eta, std::size_t t,
                                  const std::vector<double>& risk_sums) {
    const double e = kEulerE;
    return 8.0 * e * e * c.rho * (1.0 + static_cast<double>(t) / n) * eta * eta / n *
           partial_sum(risk_sums, t + 1);
}

// Generalization gap bound of SGD at step t, including the square-root
// cross term with L_S(W_t).
inline double sgd_generalization_bound(const TheoryConstants& c, double n, double eta, std::size_t t,
                                       const std::vector<double>& risk_sums) {
    const double e = kEulerE;
    const double occupancy = 1.0 + static_cast<double>(t) / n;
    const double sum = partial_sum(risk_sums, t + 1);
    const double risk_t = risk_sums[t];
    return 4.0 * e * e * c.rho * c.rho * occupancy * eta * eta / n * sum +
           4.0 * e * c.rho * eta * std::sqrt(occupancy * risk_t * sum / n);
}

// R_T of the GD iterate bound:
// (8 e^2 rho^2 eta^3 T^2 / n^2 + 8 e eta^2 T rho / n) sum_{j<T} E[L_S(W_j)] + 2 dist^2
inline double gd_iterate_bound_rt(const TheoryConstants& c, double n, double eta, std::size_t horizon,
                                  const std::vector<double>& risk_sums,
                                  const RegularizedReference& ref) {
    const double e = kEulerE;
    const double T = static_cast<double>(horizon);
    const double factor = 8.0 * e * e * c.rho * c.rho * eta * eta * eta * T * T / (n * n) +
                          8.0 * e * eta * eta * T * c.rho / n;
    return factor * partial_sum(risk_sums, horizon) + 2.0 * ref.dist_to_init * ref.dist_to_init;
}

// Last-iterate optimization bound of GD:
// L(W*_lambda) + lambda dist^2 + b~ R_T (dist + sqrt(2 eta T C0)) / sqrt(m)
inline double gd_optimization_bound(const TheoryConstants& c, double n, double eta,
                                    std::size_t horizon, const std::vector<double>& risk_sums,
                                    const RegularizedReference& ref) {
    const double T = static_cast<double>(horizon);
    const double rt = gd_iterate_bound_rt(c, n, eta, horizon, risk_sums, ref);
    return ref.surrogate_risk + ref.lambda * ref.dist_to_init * ref.dist_to_init +
           c.b_tilde * rt * (ref.dist_to_init + std::sqrt(2.0 * eta * T * c.c_0)) / std::sqrt(c.m);
}

// RHS of the SGD optimization inequality for 2 eta sum_t E[L_S(W_t) - L_S(W*_lambda)]:
// dist^2 + 2 rho eta^2 sum_t E[L_S(W_t)] + 2 T eta b' R'_T Delta_T / sqrt(m)
inline double sgd_optimization_bound(const TheoryConstants& c, double eta, std::size_t horizon,
                                     double delta_t, const std::vector<double>& risk_sums,
                                     const RegularizedReference& ref) {
    const double T = static_cast<double>(horizon);
    const double rtp = r_t_prime(c, eta, T, ref.dist_to_init);
    return ref.dist_to_init * ref.dist_to_init +
           2.0 * c.rho * eta * eta * partial_sum(risk_sums, horizon) +
           2.0 * T * eta * c.b_prime * rtp * delta_t / std::sqrt(c.m);
}

// Bound on sum_t E[L_S(W_t)] for SGD:
// 4 T L(W*_lambda) + 2 (1/eta + 4 b' T R'_T / sqrt(m)) dist^2
inline double sgd_risk_sum_bound(const TheoryConstants& c, double eta, std::size_t horizon,
                                 const RegularizedReference& ref) {
    const double T = static_cast<double>(horizon);
    const double rtp = r_t_prime(c, eta, T, ref.dist_to_init);
    return 4.0 * T * ref.surrogate_risk +
           2.0 * (1.0 / eta + 4.0 * c.b_prime * T * rtp / std::sqrt(c.m)) * ref.dist_to_init *
               ref.dist_to_init;
}

// --- Hessian spectrum --------------------------------------------------

struct CurvatureReport {
    double lambda_min = 0.0;
    double bound_residual = 0.0;  // -(Cx^2 Bphi'' / sqrt(m)) |f_W(x) - y|
    double bound_init = 0.0;      // -(Cx^2 Bphi'' / sqrt(m)) (Cx Bphi' ||W-W0|| + sqrt(2 l(W0;z)))
    double bound_radius = 0.0;    // -(b' / sqrt(m)) (||W-W0|| v 1)
    bool dense_path = false;
};

inline double lambda_min_dense(const ModelState& state, const Example& z) {
    const Matrix h = dense_hessian(state, z);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("dense eigensolver failed to converge");
    return solver.eigenvalues().minCoeff();
}

// Shifted Lanczos: lambda_max <= rho, so rho I - H is PSD and its top
// eigenvalue is rho - lambda_min(H).  Lanczos (with full
// reorthogonalization) resolves the tightly clustered shifted spectrum
// where plain power iteration stalls.
inline double lambda_min_power(const ModelState& state, const Example& z, double rho,
                               std::size_t max_iters = 200, double tol = 1e-10) {
    const Eigen::Index d = state.input_dim();
    const Eigen::Index m = state.width();
    const Eigen::Index dim = d * m;
    const std::size_t steps = std::min<std::size_t>(max_iters, static_cast<std::size_t>(dim));

    auto apply = [&](const Vector& flat) {
        const Matrix v = Eigen::Map<const Matrix>(flat.data(), d, m);
        const Matrix av = rho * v - hvp(state, z, v);
        return Vector(Eigen::Map<const Vector>(av.data(), dim));
    };

    Vector q(dim);
    rng::Stream init_stream(0x9d2c5680);
    for (Eigen::Index j = 0; j < dim; ++j) q[j] = init_stream.normal();
    q /= q.norm();

    std::vector<Vector> basis;
    std::vector<double> alphas, betas;  // tridiagonal entries
    basis.push_back(q);
    for (std::size_t k = 0; k < steps; ++k) {
        Vector w = apply(basis[k]);
        const double alpha = basis[k].dot(w);
        alphas.push_back(alpha);
        w -= alpha * basis[k];
        if (k > 0) w -= betas[k - 1] * basis[k - 1];
        for (const Vector& b : basis) w -= b.dot(w) * b;  // reorthogonalize
        const double beta = w.norm();
        if (beta <= tol * std::max(1.0, std::abs(alpha))) break;  // invariant subspace
        betas.push_back(beta);
        basis.push_back(w / beta);
    }

    const Eigen::Index k = static_cast<Eigen::Index>(alphas.size());
    Matrix tri = Matrix::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        tri(i, i) = alphas[static_cast<std::size_t>(i)];
        if (i + 1 < k) {
            tri(i, i + 1) = betas[static_cast<std::size_t>(i)];
            tri(i + 1, i) = betas[static_cast<std::size_t>(i)];
        }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(tri, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("lanczos tridiagonal eigensolver failed");
    return rho - solver.eigenvalues().maxCoeff();
}

inline CurvatureReport check_curvature(const ModelState& state, const Example& z,
                                       const TheoryConstants& c) {
    CurvatureReport rep;
    const Eigen::Index dim = state.input_dim() * state.width();
    rep.dense_path = dim <= kDenseHessianLimit;
    rep.lambda_min = rep.dense_path ? lambda_min_dense(state, z)
                                    : lambda_min_power(state, z, c.rho);
    const double sqrt_m = std::sqrt(c.m);
    const double cx2b2 = c.c_x * c.c_x * c.b_phi2;
    const double residual = std::abs(forward(state, z.x) - z.y);
    const double dist = (state.weights - state.init_weights).norm();
    ModelState at_init = state;
    at_init.weights = state.init_weights;
    const double loss0 = loss(at_init, z);
    rep.bound_residual = -cx2b2 / sqrt_m * residual;
    rep.bound_init = -cx2b2 / sqrt_m * (c.c_x * c.b_phi1 * dist + std::sqrt(2.0 * loss0));
    rep.bound_radius = -c.b_prime / sqrt_m * std::max(dist, 1.0);
    return rep;
}

// --- lemma inequality margins (nonnegative margin = inequality holds) ---

// rho-smoothness of the loss gradient: rho ||W - W'|| - ||grad - grad'||
inline double smoothness_margin(const ModelState& a, const ModelState& b, const Example& z,
                                double rho) {
    const double lhs = (grad_loss(a, z) - grad_loss(b, z)).norm();
    return rho * (a.weights - b.weights).norm() - lhs;
}

// self-bounding of smooth nonnegative losses: 2 rho l - ||grad l||^2
inline double selfbounding_margin(const ModelState& state, const Example& z, double rho) {
    return 2.0 * rho * loss(state, z) - grad_loss(state, z).squaredNorm();
}

// weak convexity: l(W) - l(W') - <W - W', grad l(W')> + (b' R / sqrt(m)) ||W - W'||^2
inline double weak_convexity_margin(const ModelState& a, const ModelState& b, const Example& z,
                                    const TheoryConstants& c) {
    const Matrix diff = a.weights - b.weights;
    const double radius = std::max({1.0, (a.weights - a.init_weights).norm(),
                                    (b.weights - b.init_weights).norm()});
    const double lhs = loss(a, z) - loss(b, z) - (diff.array() * grad_loss(b, z).array()).sum();
    return lhs + c.b_prime * radius / std::sqrt(c.m) * diff.squaredNorm();
}

// epsilon'_t of the almost co-coercivity lemma
inline double epsilon_t_prime(double dist_a, double dist_b, double eta,
                              const TheoryConstants& c) {
    return c.c_x * c.c_x * c.b_phi2 / std::sqrt(c.m) *
           (c.b_phi1 * c.c_x * (1.0 + 2.0 * eta * c.rho) * std::max(dist_a, dist_b) +
            std::sqrt(2.0 * c.c_0));
}

// almost co-coercivity of the gradient operator along a coupled pair
inline double cococoercivity_margin(const ModelState& a, const ModelState& b, const Example& z,
                                    double eta, const TheoryConstants& c) {
    if (eta > (1.0 + 1e-12) / (2.0 * c.rho))
        throw std::invalid_argument("co-coercivity check requires eta <= 1/(2 rho)");
    const Matrix diff = a.weights - b.weights;
    const Matrix grad_diff = grad_loss(a, z) - grad_loss(b, z);
    const double eps = epsilon_t_prime((a.weights - a.init_weights).norm(),
                                       (b.weights - b.init_weights).norm(), eta, c);
    const double lhs = (diff.array() * grad_diff.array()).sum();
    const double rhs = 2.0 * eta * (1.0 - eta * c.rho / 2.0) * grad_diff.squaredNorm() -
                       eps * (diff - eta * grad_diff).squaredNorm();
    return lhs - rhs;
}

// epsilon_t of the GD one-step stability recursion, from a measured
// coupled distance.
inline double epsilon_t(double coupled_distance, double eta, const TheoryConstants& c) {
    return c.c_x * c.c_x * c.b_phi2 / std::sqrt(c.m) *
           (c.b_phi1 * c.c_x * (1.0 + eta * c.rho) * coupled_distance +
            2.0 * std::sqrt(2.0 * c.c_0));
}

// Check 2 eta epsilon_t <= 1/(t+1) along a coupled distance trace.
inline bool epsilon_sequence_ok(const std::vector<double>& distances, double eta,
                                const TheoryConstants& c) {
    // the recursion consumes epsilon_t only for t < T
    for (std::size_t t = 0; t + 1 < distances.size(); ++t) {
        const double eps = epsilon_t(distances[t], eta, c);
        if (2.0 * eta * eps > 1.0 / (static_cast<double>(t) + 1.0)) return false;
    }
    return true;
}

}  // namespace snnlab::theory

#endif  // SNNLAB_THEORY_HPP
