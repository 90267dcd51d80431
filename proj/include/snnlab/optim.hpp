#ifndef SNNLAB_OPTIM_HPP
#define SNNLAB_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snnlab/data.hpp"
#include "snnlab/model.hpp"
#include "snnlab/rng.hpp"

namespace snnlab {

enum class Algorithm { gd, sgd };

struct TrainConfig {
    double eta = 0.1;
    std::size_t horizon = 100;  // T
    Algorithm algorithm = Algorithm::gd;
    std::uint64_t seed = 0;  // drives the SGD index stream
    std::size_t checkpoint_stride = 0;  // 0 disables weight snapshots
    bool record_scalars = true;
    bool strict_mode = true;  // assert eta <= 1/(2 rho) at run start
};

// The SGD index sequence {i_t}: i_t uniform on [n], fully reproducible.
struct IndexStream {
    std::uint64_t seed = 0;
    std::vector<std::size_t> indices;

    static IndexStream make(std::uint64_t seed, std::size_t length, std::size_t n) {
        IndexStream s;
        s.seed = seed;
        s.indices.reserve(length);
        rng::Stream stream(rng::derive(seed, {0x1d}));
        for (std::size_t t = 0; t < length; ++t)
            s.indices.push_back(static_cast<std::size_t>(stream.uniform_int(n)));
        return s;
    }
};

struct ScalarRecord {
    double empirical_risk = 0.0;
    double grad_norm = 0.0;
    double dist_to_init = 0.0;
};

struct Trajectory {
    std::map<std::size_t, Matrix> checkpoints;  // step -> weights snapshot
    std::vector<ScalarRecord> scalars;          // length T+1 when recorded
    ModelState final_state;
};

// Raised when a non-finite weight entry shows up; carries the failing step.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::size_t step, const std::string& what)
        : std::runtime_error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

namespace detail {

// Column-cached dataset for fast full-batch gradients.
struct BatchData {
    Matrix x;  // d x n
    Vector y;  // n

    template <typename View>
    static BatchData from(const View& view, Eigen::Index d) {
        BatchData b;
        const Eigen::Index n = static_cast<Eigen::Index>(view.size());
        b.x.resize(d, n);
        b.y.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Example& z = view_at(view, static_cast<std::size_t>(i));
            b.x.col(i) = z.x;
            b.y[i] = z.y;
        }
        return b;
    }

    static const Example& view_at(const Dataset& set, std::size_t i) { return set.examples[i]; }
    static const Example& view_at(const NeighborSet& set, std::size_t i) { return set.at(i); }
};

// Residuals, empirical risk, and full-batch gradient in one pass.
struct BatchEval {
    double risk = 0.0;
    Matrix gradient;  // d x m
};

inline BatchEval batch_eval(const Matrix& weights, const Vector& signs,
                            const ActivationSpec& activation, const BatchData& data) {
    const Eigen::Index n = data.x.cols();
    const Eigen::Index m = weights.cols();
    const Matrix pre = weights.transpose() * data.x;  // m x n
    Matrix coeff(n, m);
    double risk = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double f = 0.0;
        for (Eigen::Index k = 0; k < m; ++k)
            f += signs[k] * activation.eval(pre(k, i));
        const double r = f - data.y[i];
        risk += 0.5 * r * r;
        const double scale = r / static_cast<double>(n);
        for (Eigen::Index k = 0; k < m; ++k)
            coeff(i, k) = scale * signs[k] * activation.deriv(pre(k, i));
    }
    BatchEval eval;
    eval.risk = risk / static_cast<double>(n);
    eval.gradient = data.x * coeff;
    return eval;
}

// Per-example loss gradient for SGD steps, reusing cached columns.
inline Matrix example_gradient(const Matrix& weights, const Vector& signs,
                               const ActivationSpec& activation, const BatchData& data,
                               std::size_t index) {
    const Eigen::Index i = static_cast<Eigen::Index>(index);
    const Vector pre = weights.transpose() * data.x.col(i);
    const Eigen::Index m = weights.cols();
    double f = 0.0;
    Vector scale(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        f += signs[k] * activation.eval(pre[k]);
        scale[k] = signs[k] * activation.deriv(pre[k]);
    }
    return (f - data.y[i]) * (data.x.col(i) * scale.transpose());
}

inline void check_finite(const Matrix& weights, std::size_t step) {
    if (!weights.allFinite())
        throw DivergenceError(step, "non-finite weights at step " + std::to_string(step));
}

inline void check_step_size(const TrainConfig& config, double rho) {
    if (config.strict_mode && config.eta > (1.0 + 1e-12) / (2.0 * rho))
        throw std::invalid_argument("strict_mode: eta exceeds 1/(2 rho)");
}

}  // namespace detail

// Smoothness constant of the loss for a given width and data bounds; the
// step-size restriction of every trajectory result is eta <= 1/(2 rho).
inline double smoothness_rho(const ActivationSpec& a, double c_x, double c_y, double m) {
    return c_x * c_x * (a.b_phi1 * a.b_phi1 + a.b_phi2 * a.b_phi + a.b_phi2 * c_y / std::sqrt(m));
}

namespace detail {

template <typename View>
Trajectory run_loop(const View& data_view, const TrainConfig& config, const ModelState& init,
                    const IndexStream* stream, const DataBounds& bounds) {
    const double rho = smoothness_rho(init.activation, bounds.c_x, bounds.c_y,
                                      static_cast<double>(init.width()));
    check_step_size(config, rho);
    if (config.algorithm == Algorithm::sgd) {
        if (stream == nullptr) throw std::invalid_argument("sgd_run requires an index stream");
        if (stream->indices.size() < config.horizon)
            throw std::invalid_argument("index stream shorter than horizon");
    }

    const BatchData batch = BatchData::from(data_view, init.input_dim());
    Trajectory traj;
    traj.final_state = init;
    Matrix w = init.init_weights;
    check_finite(w, 0);

    auto record = [&](std::size_t t, const Matrix& weights) {
        if (config.record_scalars) {
            ScalarRecord rec;
            const auto eval = batch_eval(weights, init.signs, init.activation, batch);
            rec.empirical_risk = eval.risk;
            rec.grad_norm = eval.gradient.norm();
            rec.dist_to_init = (weights - init.init_weights).norm();
            traj.scalars.push_back(rec);
        }
        if (config.checkpoint_stride > 0 && t % config.checkpoint_stride == 0)
            traj.checkpoints.emplace(t, weights);
    };

    record(0, w);
    for (std::size_t t = 0; t < config.horizon; ++t) {
        if (config.algorithm == Algorithm::gd) {
            const auto eval = batch_eval(w, init.signs, init.activation, batch);
            w.noalias() -= config.eta * eval.gradient;
        } else {
            const std::size_t i = stream->indices[t];
            w.noalias() -= config.eta *
                           example_gradient(w, init.signs, init.activation, batch, i);
        }
        check_finite(w, t + 1);
        record(t + 1, w);
    }
    traj.final_state.weights = w;
    return traj;
}

}  // namespace detail

// GD: W_{t+1} = W_t - eta * grad L_S(W_t), deterministic.
inline Trajectory gd_run(const Dataset& data, const TrainConfig& config, const ModelState& init) {
    if (config.algorithm != Algorithm::gd)
        throw std::invalid_argument("gd_run called with non-gd config");
    return detail::run_loop(data, config, init, nullptr, data.bounds);
}

// SGD: W_{t+1} = W_t - eta * grad l(W_t; z_{i_t}).
inline Trajectory sgd_run(const Dataset& data, const TrainConfig& config, const ModelState& init,
                          const IndexStream& stream) {
    TrainConfig cfg = config;
    cfg.algorithm = Algorithm::sgd;
    return detail::run_loop(data, cfg, init, &stream, data.bounds);
}

// Per-step distances ||W_t - W_t^(i)||_2 from lock-step runs on S and S^(i).
struct DistanceTrace {
    std::vector<double> distances;  // length T+1, distances[0] == 0
    double max_distance = 0.0;
    double final_distance = 0.0;
};

// Advances the two runs in lock step; for SGD both replay the SAME index
// stream, the coupling under which the stability recursion applies.
inline DistanceTrace coupled_run(const Dataset& base, const NeighborSet& neighbor,
                                 const TrainConfig& config, const ModelState& init,
                                 const IndexStream* stream = nullptr) {
    if (neighbor.size() != base.size())
        throw std::invalid_argument("coupled_run: mismatched dataset sizes");
    const double rho = smoothness_rho(init.activation, base.bounds.c_x, base.bounds.c_y,
                                      static_cast<double>(init.width()));
    detail::check_step_size(config, rho);
    const bool sgd = config.algorithm == Algorithm::sgd;
    if (sgd) {
        if (stream == nullptr) throw std::invalid_argument("coupled_run: sgd needs an index stream");
        if (stream->indices.size() < config.horizon)
            throw std::invalid_argument("index stream shorter than horizon");
    }

    const detail::BatchData batch_a = detail::BatchData::from(base, init.input_dim());
    const detail::BatchData batch_b = detail::BatchData::from(neighbor, init.input_dim());
    Matrix wa = init.init_weights;
    Matrix wb = init.init_weights;

    DistanceTrace trace;
    trace.distances.reserve(config.horizon + 1);
    trace.distances.push_back(0.0);
    for (std::size_t t = 0; t < config.horizon; ++t) {
        if (sgd) {
            const std::size_t i = stream->indices[t];
            wa.noalias() -= config.eta *
                            detail::example_gradient(wa, init.signs, init.activation, batch_a, i);
            wb.noalias() -= config.eta *
                            detail::example_gradient(wb, init.signs, init.activation, batch_b, i);
        } else {
            wa.noalias() -= config.eta *
                            detail::batch_eval(wa, init.signs, init.activation, batch_a).gradient;
            wb.noalias() -= config.eta *
                            detail::batch_eval(wb, init.signs, init.activation, batch_b).gradient;
        }
        detail::check_finite(wa, t + 1);
        detail::check_finite(wb, t + 1);
        trace.distances.push_back((wa - wb).norm());
    }
    for (double d : trace.distances) trace.max_distance = std::max(trace.max_distance, d);
    trace.final_distance = trace.distances.back();
    return trace;
}

// Trajectory scalar export: step,empirical_risk,grad_norm,dist_to_init.
inline void export_scalars_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "step,empirical_risk,grad_norm,dist_to_init\n";
    out << std::setprecision(17);
    for (std::size_t t = 0; t < traj.scalars.size(); ++t) {
        const auto& rec = traj.scalars[t];
        out << t << "," << rec.empirical_risk << "," << rec.grad_norm << ","
            << rec.dist_to_init << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace snnlab

#endif  // SNNLAB_OPTIM_HPP
