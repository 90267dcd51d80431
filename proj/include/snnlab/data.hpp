#ifndef SNNLAB_DATA_HPP
#define SNNLAB_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snnlab/model.hpp"
#include "snnlab/rng.hpp"

namespace snnlab {

enum class InputLaw { sphere, truncated_gaussian };

// Synthetic data law: labels come from a ground-truth teacher network, with
// optional additive Gaussian noise.  Inputs live in the ball ||x||_2 <= c_x.
struct TeacherDistribution {
    ModelState teacher;
    InputLaw input_law = InputLaw::sphere;
    double sphere_radius = 1.0;  // for InputLaw::sphere, must be <= c_x
    double noise_std = 0.0;
    bool clip_labels = true;  // clip y to [-c_y, c_y] after noise
    double c_x = 1.0;
    double c_y = 1.0;
};

struct DataBounds {
    double c_x = 1.0;
    double c_y = 1.0;
    double c_0 = 0.5;  // bound on loss at the experiment's W0
};

struct Dataset {
    std::vector<Example> examples;
    std::uint64_t seed = 0;
    DataBounds bounds;

    std::size_t size() const { return examples.size(); }
};

// Replace-one-example view: differs from base in exactly one position.
struct NeighborSet {
    const Dataset* base = nullptr;
    std::size_t replacement_index = 0;  // zero-based
    Example replacement;

    const Example& at(std::size_t i) const {
        return i == replacement_index ? replacement : base->examples[i];
    }
    std::size_t size() const { return base->size(); }
};

namespace detail {

inline Vector sample_input(const TeacherDistribution& dist, rng::Stream& stream) {
    const Eigen::Index d = dist.teacher.input_dim();
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = stream.normal();
    const double norm = x.norm();
    switch (dist.input_law) {
        case InputLaw::sphere:
            if (norm == 0.0) return sample_input(dist, stream);
            return x * (dist.sphere_radius / norm);
        case InputLaw::truncated_gaussian: {
            const double scale = dist.c_x / std::sqrt(static_cast<double>(d));
            x *= scale;
            if (x.norm() > dist.c_x) x *= dist.c_x / x.norm();
            return x;
        }
    }
    throw std::logic_error("unreachable");
}

inline Example sample_example(const TeacherDistribution& dist, rng::Stream& stream) {
    Example z;
    z.x = sample_input(dist, stream);
    z.y = forward(dist.teacher, z.x);
    if (dist.noise_std > 0.0) z.y += dist.noise_std * stream.normal();
    if (dist.clip_labels) z.y = std::clamp(z.y, -dist.c_y, dist.c_y);
    return z;
}

inline void validate_example(const TeacherDistribution& dist, const Example& z) {
    if (z.x.norm() > dist.c_x * (1.0 + 1e-12))
        throw std::logic_error("sampled input violates ||x|| <= C_x");
    if (std::abs(z.y) > dist.c_y && dist.clip_labels)
        throw std::logic_error("sampled label violates |y| <= C_y");
}

}  // namespace detail

// Deterministic function of (dist, n, seed); each example gets its own
// derived stream so that sampling is schedule-independent.
inline Dataset sample_dataset(const TeacherDistribution& dist, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::domain_error("dataset size must be >= 1");
    if (dist.input_law == InputLaw::sphere && dist.sphere_radius > dist.c_x)
        throw std::invalid_argument("sphere radius exceeds C_x");
    Dataset set;
    set.seed = seed;
    set.bounds.c_x = dist.c_x;
    set.bounds.c_y = dist.c_y;
    set.bounds.c_0 = 0.5 * dist.c_y * dist.c_y;  // valid for zero-output W0
    set.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        rng::Stream stream(rng::derive(seed, {0xda7a, i}));
        Example z = detail::sample_example(dist, stream);
        detail::validate_example(dist, z);
        set.examples.push_back(std::move(z));
    }
    return set;
}

// Tightens (or raises) c_0 to max_i loss(init; z_i) for a concrete W0.
inline double certify_c0(Dataset& set, const ModelState& init) {
    double worst = 0.0;
    ModelState at_init = init;
    at_init.weights = init.init_weights;
    for (const Example& z : set.examples) worst = std::max(worst, loss(at_init, z));
    set.bounds.c_0 = std::max(set.bounds.c_0, worst);
    return worst;
}

// Draws z'_i from the same law, independent of the base dataset's stream.
inline NeighborSet make_neighbor(const Dataset& base, const TeacherDistribution& dist,
                                 std::size_t index, std::uint64_t seed) {
    if (index >= base.size()) throw std::out_of_range("neighbor index out of range");
    NeighborSet neighbor;
    neighbor.base = &base;
    neighbor.replacement_index = index;
    rng::Stream stream(rng::derive(seed, {0x9e1, index}));
    neighbor.replacement = detail::sample_example(dist, stream);
    detail::validate_example(dist, neighbor.replacement);
    return neighbor;
}

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo surrogate for the population risk L(W).
inline MonteCarloEstimate population_risk_mc(const ModelState& state, const TeacherDistribution& dist,
                                             std::size_t n_mc, std::uint64_t seed) {
    if (n_mc < 1000) throw std::invalid_argument("population_risk_mc requires n_mc >= 1000");
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        rng::Stream stream(rng::derive(seed, {0x3c, i}));
        const Example z = detail::sample_example(dist, stream);
        const double l = loss(state, z);
        sum += l;
        sum_sq += l * l;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - mean * mean);
    return {mean, std::sqrt(var / n)};
}

// --- CSV export/import: header x_0,...,x_{d-1},y at full round-trip precision ---

inline void export_dataset_csv(const Dataset& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const Eigen::Index d = set.examples.front().x.size();
    for (Eigen::Index j = 0; j < d; ++j) out << "x_" << j << ",";
    out << "y\n";
    out << std::setprecision(17);
    for (const Example& z : set.examples) {
        for (Eigen::Index j = 0; j < d; ++j) out << z.x[j] << ",";
        out << z.y << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Dataset import_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
    const Eigen::Index d = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ','));
    Dataset set;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        Example z;
        z.x.resize(d);
        std::string cell;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!std::getline(row, cell, ',')) throw std::runtime_error("short row in " + path);
            z.x[j] = std::stod(cell);
        }
        if (!std::getline(row, cell)) throw std::runtime_error("missing label in " + path);
        z.y = std::stod(cell);
        set.examples.push_back(std::move(z));
    }
    if (set.examples.empty()) throw std::runtime_error("no examples in " + path);
    return set;
}

}  // namespace snnlab

#endif  // SNNLAB_DATA_HPP
