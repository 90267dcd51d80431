#ifndef SNNLAB_MODEL_HPP
#define SNNLAB_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "snnlab/activation.hpp"
#include "snnlab/rng.hpp"

namespace snnlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One sample z = (x, y) with ||x||_2 <= C_x and |y| <= C_y.
struct Example {
    Vector x;
    double y = 0.0;
};

// The shallow network f_W(x) = sum_k mu_k phi(<w_k, x>) with fixed output
// signs mu_k = +-1/sqrt(m) and a frozen initialization W0.
struct ModelState {
    Matrix weights;       // d x m, column k is w_k
    Matrix init_weights;  // d x m, frozen W0
    Vector signs;         // length m, entries +-1/sqrt(m)
    ActivationSpec activation;

    Eigen::Index input_dim() const { return weights.rows(); }
    Eigen::Index width() const { return weights.cols(); }
};

enum class SignPattern { alternating, random };
enum class InitPolicy { zeros, gaussian };

// Only the magnitudes 1/sqrt(m) are fixed, not the sign pattern; default is
// alternating, which is balanced for even m.
inline Vector make_signs(Eigen::Index m, SignPattern pattern, std::uint64_t seed = 0) {
    const double mag = 1.0 / std::sqrt(static_cast<double>(m));
    Vector signs(m);
    if (pattern == SignPattern::alternating) {
        for (Eigen::Index k = 0; k < m; ++k) signs[k] = (k % 2 == 0) ? mag : -mag;
    } else {
        rng::Stream stream(seed);
        for (Eigen::Index k = 0; k < m; ++k) signs[k] = stream.uniform() < 0.5 ? mag : -mag;
    }
    return signs;
}

inline ModelState make_model(Eigen::Index d, Eigen::Index m, const ActivationSpec& activation,
                             SignPattern pattern = SignPattern::alternating,
                             InitPolicy init = InitPolicy::zeros, double init_scale = 0.0,
                             std::uint64_t seed = 0) {
    ModelState state;
    state.signs = make_signs(m, pattern, rng::derive(seed, {0x51}));
    if (init == InitPolicy::zeros) {
        state.init_weights = Matrix::Zero(d, m);
    } else {
        rng::Stream stream(rng::derive(seed, {0x57}));
        state.init_weights.resize(d, m);
        for (Eigen::Index k = 0; k < m; ++k)
            for (Eigen::Index j = 0; j < d; ++j)
                state.init_weights(j, k) = init_scale * stream.normal();
    }
    state.weights = state.init_weights;
    state.activation = activation;
    return state;
}

namespace detail {

inline void check_input(const ModelState& state, const Vector& x) {
    if (x.size() != state.input_dim())
        throw std::invalid_argument("input dimension mismatch");
}

inline void check_shape(const ModelState& state, const Matrix& v) {
    if (v.rows() != state.weights.rows() || v.cols() != state.weights.cols())
        throw std::invalid_argument("matrix shape mismatch");
}

}  // namespace detail

inline double forward(const ModelState& state, const Vector& x) {
    detail::check_input(state, x);
    const Vector pre = state.weights.transpose() * x;
    double out = 0.0;
    for (Eigen::Index k = 0; k < pre.size(); ++k)
        out += state.signs[k] * state.activation.eval(pre[k]);
    return out;
}

inline double loss(const ModelState& state, const Example& z) {
    const double r = forward(state, z.x) - z.y;
    return 0.5 * r * r;
}

template <typename Range>
inline double empirical_risk(const ModelState& state, const Range& examples) {
    if (examples.empty()) throw std::domain_error("empirical risk of empty dataset");
    double sum = 0.0;
    for (const Example& z : examples) sum += loss(state, z);
    return sum / static_cast<double>(examples.size());
}

// Gradient of f_W at x: column k is mu_k phi'(<w_k, x>) x.
inline Matrix network_gradient(const ModelState& state, const Vector& x) {
    detail::check_input(state, x);
    const Vector pre = state.weights.transpose() * x;
    Vector scale(pre.size());
    for (Eigen::Index k = 0; k < pre.size(); ++k)
        scale[k] = state.signs[k] * state.activation.deriv(pre[k]);
    return x * scale.transpose();
}

// Gradient of the per-example loss; column k is
// (f_W(x) - y) mu_k phi'(<w_k, x>) x.
inline Matrix grad_loss(const ModelState& state, const Example& z) {
    detail::check_input(state, z.x);
    const Vector pre = state.weights.transpose() * z.x;
    double f = 0.0;
    Vector scale(pre.size());
    for (Eigen::Index k = 0; k < pre.size(); ++k) {
        f += state.signs[k] * state.activation.eval(pre[k]);
        scale[k] = state.signs[k] * state.activation.deriv(pre[k]);
    }
    return (f - z.y) * (z.x * scale.transpose());
}

// Full-batch gradient of L_S, evaluated as one d x n by n x m product.
template <typename Range>
inline Matrix grad_empirical_risk(const ModelState& state, const Range& examples) {
    const Eigen::Index n = static_cast<Eigen::Index>(examples.size());
    if (n == 0) throw std::domain_error("gradient of empty dataset");
    const Eigen::Index d = state.input_dim();
    const Eigen::Index m = state.width();
    Matrix X(d, n);
    for (Eigen::Index i = 0; i < n; ++i) X.col(i) = examples[static_cast<std::size_t>(i)].x;
    const Matrix pre = state.weights.transpose() * X;  // m x n
    Matrix coeff(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double f = 0.0;
        for (Eigen::Index k = 0; k < m; ++k)
            f += state.signs[k] * state.activation.eval(pre(k, i));
        const double r = (f - examples[static_cast<std::size_t>(i)].y) / static_cast<double>(n);
        for (Eigen::Index k = 0; k < m; ++k)
            coeff(i, k) = r * state.signs[k] * state.activation.deriv(pre(k, i));
    }
    return X * coeff;
}

// Hessian-vector product of the per-example loss:
//   <G, V> G + (f_W(x) - y) D(V),
// where G is the network gradient and D(V) has column k equal to
// mu_k phi''(<w_k, x>) <x, v_k> x.
inline Matrix hvp(const ModelState& state, const Example& z, const Matrix& v) {
    detail::check_shape(state, v);
    const Vector pre = state.weights.transpose() * z.x;
    const Eigen::Index m = state.width();
    double f = 0.0;
    Vector g_scale(m), d_scale(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        f += state.signs[k] * state.activation.eval(pre[k]);
        g_scale[k] = state.signs[k] * state.activation.deriv(pre[k]);
        d_scale[k] = state.signs[k] * state.activation.deriv2(pre[k]);
    }
    const Vector xv = v.transpose() * z.x;  // <x, v_k>
    const double residual = f - z.y;
    // <G, V> = sum_k g_scale[k] <x, v_k>
    const double gv = g_scale.dot(xv);
    Vector col_scale(m);
    for (Eigen::Index k = 0; k < m; ++k)
        col_scale[k] = gv * g_scale[k] + residual * d_scale[k] * xv[k];
    return z.x * col_scale.transpose();
}

constexpr Eigen::Index kDenseHessianLimit = 2500;  // guard on d*m

// Dense Hessian on the vectorized weight space (column-major vec).
// Oracle for eigenvalue checks; refuses to materialize beyond the guard.
inline Matrix dense_hessian(const ModelState& state, const Example& z) {
    const Eigen::Index d = state.input_dim();
    const Eigen::Index m = state.width();
    const Eigen::Index dim = d * m;
    if (dim > kDenseHessianLimit)
        throw std::length_error("dense_hessian: d*m exceeds capacity guard");
    Matrix h(dim, dim);
    Matrix basis = Matrix::Zero(d, m);
    for (Eigen::Index j = 0; j < dim; ++j) {
        basis(j % d, j / d) = 1.0;
        const Matrix col = hvp(state, z, basis);
        h.col(j) = Eigen::Map<const Vector>(col.data(), dim);
        basis(j % d, j / d) = 0.0;
    }
    // symmetrize away rounding noise
    return 0.5 * (h + h.transpose());
}

// --- checkpoint serialization (row-major float64 plus a small header) ---

inline void save_model(const ModelState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const char magic[4] = {'S', 'N', 'N', 'W'};
    out.write(magic, 4);
    const std::int64_t d = state.input_dim(), m = state.width();
    const std::int64_t kind = static_cast<std::int64_t>(state.activation.kind);
    out.write(reinterpret_cast<const char*>(&d), 8);
    out.write(reinterpret_cast<const char*>(&m), 8);
    out.write(reinterpret_cast<const char*>(&kind), 8);
    auto write_matrix = [&](const Matrix& mat) {
        for (Eigen::Index r = 0; r < mat.rows(); ++r)
            for (Eigen::Index c = 0; c < mat.cols(); ++c) {
                const double v = mat(r, c);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
    };
    write_matrix(state.signs.transpose());
    write_matrix(state.init_weights);
    write_matrix(state.weights);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline ModelState load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "SNNW")
        throw std::runtime_error("bad checkpoint header: " + path);
    std::int64_t d = 0, m = 0, kind = 0;
    in.read(reinterpret_cast<char*>(&d), 8);
    in.read(reinterpret_cast<char*>(&m), 8);
    in.read(reinterpret_cast<char*>(&kind), 8);
    ModelState state;
    state.activation = certify_bounds(static_cast<ActivationKind>(kind));
    auto read_matrix = [&](Matrix& mat, Eigen::Index rows, Eigen::Index cols) {
        mat.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                double v;
                in.read(reinterpret_cast<char*>(&v), 8);
                mat(r, c) = v;
            }
    };
    Matrix signs;
    read_matrix(signs, 1, m);
    state.signs = signs.transpose();
    read_matrix(state.init_weights, d, m);
    read_matrix(state.weights, d, m);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    return state;
}

}  // namespace snnlab

#endif  // SNNLAB_MODEL_HPP
