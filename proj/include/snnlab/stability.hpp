#ifndef SNNLAB_STABILITY_HPP
#define SNNLAB_STABILITY_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>
#include <vector>

#include "snnlab/data.hpp"
#include "snnlab/model.hpp"
#include "snnlab/optim.hpp"
#include "snnlab/theory.hpp"

namespace snnlab {

// Empirical on-average model stability for one configuration, averaged
// over (S, S', stream) seed triples.
struct StabilityReport {
    std::vector<double> per_index_sq_distance;  // mean over replicates, per i
    double on_average_sq = 0.0;                 // (1/n) sum_i of the above
    double on_average_sq_se = 0.0;              // SE across replicates
    std::vector<double> per_step_trace;         // mean squared distance per t
    std::vector<double> mean_risks;             // across-replicate E[L_S(W_t)]
    std::size_t replicates = 0;
    std::size_t n = 0;
    double bound_gd_uniform = 0.0;   // Lemma-B.1-style per-realization value
    double bound_sgd_on_avg = 0.0;   // stability bound with measured risks
    double max_coupled_distance = 0.0;
};

namespace detail {

// Full per-step weight trail of one run; memory-guarded by the caller.
struct RecordedRun {
    std::vector<Matrix> weights;  // length T+1
    std::vector<double> risks;    // length T+1
};

template <typename View>
RecordedRun run_recorded(const View& view, const TrainConfig& config, const ModelState& init,
                         const IndexStream* stream, const DataBounds& bounds) {
    const double rho = smoothness_rho(init.activation, bounds.c_x, bounds.c_y,
                                      static_cast<double>(init.width()));
    check_step_size(config, rho);
    const BatchData batch = BatchData::from(view, init.input_dim());
    RecordedRun run;
    run.weights.reserve(config.horizon + 1);
    run.risks.reserve(config.horizon + 1);
    Matrix w = init.init_weights;
    for (std::size_t t = 0;; ++t) {
        const auto eval = batch_eval(w, init.signs, init.activation, batch);
        run.weights.push_back(w);
        run.risks.push_back(eval.risk);
        if (t == config.horizon) break;
        if (config.algorithm == Algorithm::gd) {
            w.noalias() -= config.eta * eval.gradient;
        } else {
            w.noalias() -= config.eta * example_gradient(w, init.signs, init.activation, batch,
                                                         stream->indices[t]);
        }
        check_finite(w, t + 1);
    }
    return run;
}

// Advance the neighbor run alone against a cached base trail.
template <typename View>
std::vector<double> distances_vs_recorded(const View& view, const TrainConfig& config,
                                          const ModelState& init, const IndexStream* stream,
                                          const RecordedRun& base) {
    const BatchData batch = BatchData::from(view, init.input_dim());
    std::vector<double> distances;
    distances.reserve(config.horizon + 1);
    Matrix w = init.init_weights;
    distances.push_back(0.0);
    for (std::size_t t = 0; t < config.horizon; ++t) {
        if (config.algorithm == Algorithm::gd) {
            w.noalias() -=
                config.eta * batch_eval(w, init.signs, init.activation, batch).gradient;
        } else {
            w.noalias() -= config.eta * example_gradient(w, init.signs, init.activation, batch,
                                                         stream->indices[t]);
        }
        check_finite(w, t + 1);
        distances.push_back((w - base.weights[t + 1]).norm());
    }
    return distances;
}

}  // namespace detail

// For each replicate: draw S, run the base trajectory once, run the n
// coupled neighbor trajectories, then average squared final distances over
// replicates and indices.  Deterministic function of base_seed.
inline StabilityReport estimate_on_average_stability(const TeacherDistribution& dist, std::size_t n,
                                                     const TrainConfig& config,
                                                     const ModelState& init, std::size_t replicates,
                                                     std::uint64_t base_seed) {
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (n < 2) throw std::invalid_argument("stability estimation needs n >= 2");

    const std::size_t T = config.horizon;
    StabilityReport report;
    report.n = n;
    report.replicates = replicates;
    report.per_index_sq_distance.assign(n, 0.0);
    report.per_step_trace.assign(T + 1, 0.0);
    report.mean_risks.assign(T + 1, 0.0);
    std::vector<double> replicate_on_avg(replicates, 0.0);

    DataBounds bounds;
    for (std::size_t r = 0; r < replicates; ++r) {
        const std::uint64_t seed_r = rng::derive(base_seed, {0xab, r});
        Dataset base_set = sample_dataset(dist, n, rng::derive(seed_r, {1}));
        certify_c0(base_set, init);
        bounds = base_set.bounds;
        IndexStream stream;
        if (config.algorithm == Algorithm::sgd)
            stream = IndexStream::make(rng::derive(seed_r, {2}), T, n);
        const IndexStream* stream_ptr = config.algorithm == Algorithm::sgd ? &stream : nullptr;

        const auto base_run =
            detail::run_recorded(base_set, config, init, stream_ptr, base_set.bounds);
        for (std::size_t t = 0; t <= T; ++t) report.mean_risks[t] += base_run.risks[t];

        double on_avg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const NeighborSet neighbor =
                make_neighbor(base_set, dist, i, rng::derive(seed_r, {3, i}));
            const auto distances =
                detail::distances_vs_recorded(neighbor, config, init, stream_ptr, base_run);
            const double final_d = distances.back();
            report.per_index_sq_distance[i] += final_d * final_d;
            on_avg += final_d * final_d;
            for (std::size_t t = 0; t <= T; ++t) {
                report.per_step_trace[t] += distances[t] * distances[t];
                report.max_coupled_distance = std::max(report.max_coupled_distance, distances[t]);
            }
        }
        replicate_on_avg[r] = on_avg / static_cast<double>(n);
    }

    const double rn = static_cast<double>(replicates);
    for (double& v : report.per_index_sq_distance) v /= rn;
    for (double& v : report.per_step_trace) v /= rn * static_cast<double>(n);
    for (double& v : report.mean_risks) v /= rn;

    double mean = 0.0;
    for (double v : replicate_on_avg) mean += v;
    mean /= rn;
    report.on_average_sq = mean;
    if (replicates > 1) {
        double var = 0.0;
        for (double v : replicate_on_avg) var += (v - mean) * (v - mean);
        var /= rn - 1.0;
        report.on_average_sq_se = std::sqrt(var / rn);
    }

    const auto consts = theory::constants(init.activation, bounds, static_cast<double>(init.width()));
    report.bound_gd_uniform =
        theory::gd_stability_bound_uniform(consts, static_cast<double>(n), config.eta,
                                           static_cast<double>(T));
    if (T > 0)
        report.bound_sgd_on_avg = theory::sgd_stability_bound(consts, static_cast<double>(n),
                                                              config.eta, T - 1, report.mean_risks);
    return report;
}

// Generalization gap L(W) - L_S(W) with the Monte-Carlo standard error.
inline MonteCarloEstimate empirical_generalization_gap(const ModelState& state, const Dataset& set,
                                                       const TeacherDistribution& dist,
                                                       std::size_t n_mc, std::uint64_t seed) {
    const auto pop = population_risk_mc(state, dist, n_mc, seed);
    return {pop.estimate - empirical_risk(state, set.examples), pop.std_error};
}

// --- scaling sweep -----------------------------------------------------

struct SweepRow {
    std::size_t n = 0;
    double epsilon_hat = 0.0;  // root on-average stability
    double epsilon_se = 0.0;
    double bound = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    double slope = 0.0;  // fitted log-log slope of epsilon_hat vs n
};

inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t k = xs.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double kd = static_cast<double>(k);
    return (kd * sxy - sx * sy) / (kd * sxx - sx * sx);
}

// One stability estimate per n with eta*T held fixed; also fits the
// log-log slope of the empirical root stability against n.
inline SweepResult stability_scaling_sweep(const TeacherDistribution& dist,
                                           const std::vector<std::size_t>& n_grid,
                                           const TrainConfig& config, const ModelState& init,
                                           std::size_t replicates, std::uint64_t base_seed,
                                           double step_budget = 2e9) {
    if (n_grid.size() < 3) throw std::invalid_argument("sweep grid needs at least 3 points");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1])
            throw std::invalid_argument("sweep grid must be strictly increasing");

    SweepResult result;
    std::vector<double> xs, ys;
    for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
        const std::size_t n = n_grid[gi];
        // optimizer steps: base run plus n coupled neighbors, per replicate
        const double cost = static_cast<double>(replicates) * static_cast<double>(n + 1) *
                            static_cast<double>(config.horizon);
        if (cost > step_budget)
            throw std::invalid_argument("sweep grid point n=" + std::to_string(n) +
                                        " exceeds the step budget");
        const auto rep = estimate_on_average_stability(dist, n, config, init, replicates,
                                                       rng::derive(base_seed, {0x5e, gi}));
        SweepRow row;
        row.n = n;
        row.epsilon_hat = std::sqrt(rep.on_average_sq);
        row.epsilon_se = rep.on_average_sq_se > 0.0 && row.epsilon_hat > 0.0
                             ? rep.on_average_sq_se / (2.0 * row.epsilon_hat)
                             : 0.0;
        row.bound = config.algorithm == Algorithm::gd ? rep.bound_gd_uniform
                                                      : std::sqrt(rep.bound_sgd_on_avg);
        result.rows.push_back(row);
        xs.push_back(static_cast<double>(n));
        ys.push_back(row.epsilon_hat);
    }
    result.slope = fit_loglog_slope(xs, ys);
    return result;
}

// --- CSV emission ------------------------------------------------------

inline void export_per_index_csv(const StabilityReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "i,mean_sq_distance\n" << std::setprecision(17);
    for (std::size_t i = 0; i < report.per_index_sq_distance.size(); ++i)
        out << (i + 1) << "," << report.per_index_sq_distance[i] << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void export_sweep_csv(const SweepResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "n,epsilon_hat,epsilon_se,bound,slope\n" << std::setprecision(17);
    for (const auto& row : result.rows)
        out << row.n << "," << row.epsilon_hat << "," << row.epsilon_se << "," << row.bound << ","
            << result.slope << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace snnlab

#endif  // SNNLAB_STABILITY_HPP
