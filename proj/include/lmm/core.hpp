#pragma once

#include "lmm/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace lmm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Lower bound on every linear scale; keeps the plus/minus sign pattern that
// the fragility formulas divide by.
inline constexpr double kScaleFloor = 1e-6;

// Branch i of the linear layer reads pixel i / 2. Even branches carry +K x_p,
// odd branches carry -K x_p.
constexpr Index branch_pixel(Index branch) noexcept { return branch / 2; }
constexpr bool is_plus_branch(Index branch) noexcept { return branch % 2 == 0; }
constexpr Index plus_branch(Index pixel) noexcept { return 2 * pixel; }
constexpr Index minus_branch(Index pixel) noexcept { return 2 * pixel + 1; }

/// Weights of a Linear-Min-Max-Plus classifier.
///
/// `k` holds the 2P linear scales as (K+_p, K-_p) pairs, `w1` is the
/// 2P x H1 min-plus bias matrix (one column per hidden neuron) and `w2` the
/// H1 x C max-plus bias matrix. `temperature` only affects the softmax head.
template <typename Scalar>
struct LmmParams {
    Vector<Scalar> k;
    Matrix<Scalar> w1;
    Matrix<Scalar> w2;
    Scalar temperature = Scalar(1);

    LmmParams() = default;

    // Unit scales and zero biases.
    LmmParams(Index pixels, Index hidden, Index classes)
        : k(Vector<Scalar>::Ones(2 * pixels)),
          w1(Matrix<Scalar>::Zero(2 * pixels, hidden)),
          w2(Matrix<Scalar>::Zero(hidden, classes)) {
        validate();
    }

    Index pixels() const noexcept { return k.size() / 2; }
    Index hidden() const noexcept { return w1.cols(); }
    Index classes() const noexcept { return w2.cols(); }

    Scalar k_plus(Index pixel) const { return k(plus_branch(pixel)); }
    Scalar k_minus(Index pixel) const { return k(minus_branch(pixel)); }

    // 2P + 2P*H1 + H1*C; the temperature is calibrated, not trained.
    Index parameter_count() const noexcept { return k.size() + w1.size() + w2.size(); }

    void validate_shape() const {
        if (k.size() < 2 || k.size() % 2 != 0) {
            throw DimensionError("linear scale vector must have even length 2P >= 2, got " +
                                 std::to_string(k.size()));
        }
        if (w1.rows() != k.size() || w1.cols() < 1) {
            throw DimensionError("min-plus weights must be 2P x H1 with H1 >= 1");
        }
        if (w2.rows() != w1.cols()) {
            throw DimensionError("max-plus weights must have H1 rows");
        }
        if (w2.cols() < 2) {
            throw DimensionError("at least two classes are required");
        }
    }

    void validate() const {
        validate_shape();
        if (!(k.minCoeff() >= Scalar(kScaleFloor))) {
            throw ParameterError("linear scales must be >= 1e-6");
        }
        if (!(temperature > Scalar(0)) || !std::isfinite(static_cast<double>(temperature))) {
            throw ParameterError("softmax temperature must be positive and finite");
        }
        if (!k.allFinite() || !w1.allFinite() || !w2.allFinite()) {
            throw NumericError("network weights must be finite");
        }
    }
};

/// Per-layer values of one forward pass together with the winning branch of
/// every min-plus neuron and the winning neuron of every class.
template <typename Scalar>
struct ForwardTrace {
    Vector<Scalar> lambda;
    Vector<Scalar> g;
    std::vector<Index> argmin;  // size H1, branch index in [0, 2P)
    Vector<Scalar> z;
    std::vector<Index> argmax;  // size C, neuron index in [0, H1)
    Index predicted = 0;
    Vector<Scalar> probs;
};

// max(b, max_i (x_i + w_i))
template <typename DerivedX, typename DerivedW>
typename DerivedX::Scalar morphological_perceptron(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedW>& w,
                                                   typename DerivedX::Scalar bias) {
    if (x.size() != w.size()) {
        throw DimensionError("perceptron input and weight lengths differ");
    }
    auto activation = bias;
    for (Index i = 0; i < x.size(); ++i) {
        const auto term = x(i) + w(i);
        if (term > activation) {
            activation = term;
        }
    }
    return activation;
}

template <typename Scalar, typename Derived>
Vector<Scalar> linear_layer(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x) {
    const Index pixels = params.pixels();
    if (x.size() != pixels) {
        throw DimensionError("input has " + std::to_string(x.size()) + " pixels, network expects " +
                             std::to_string(pixels));
    }
    Vector<Scalar> out(2 * pixels);
    for (Index p = 0; p < pixels; ++p) {
        out(plus_branch(p)) = params.k(plus_branch(p)) * x(p);
        out(minus_branch(p)) = -(params.k(minus_branch(p)) * x(p));
    }
    return out;
}

/// Softmax of z / temperature, computed with max subtraction.
template <typename Derived>
Vector<typename Derived::Scalar> softmax_t(const Eigen::MatrixBase<Derived>& z,
                                           typename Derived::Scalar temperature) {
    using Scalar = typename Derived::Scalar;
    if (!(temperature > Scalar(0))) {
        throw ParameterError("softmax temperature must be positive");
    }
    if (z.size() == 0) {
        return Vector<Scalar>();
    }
    const Scalar top = z.maxCoeff();
    Vector<Scalar> e = ((z.array() - top) / temperature).exp().matrix();
    return e / e.sum();
}

// Winner of column h of the min-plus layer; lowest branch index on ties.
template <typename Scalar, typename DerivedL>
std::pair<Scalar, Index> min_plus_neuron(const LmmParams<Scalar>& params,
                                         const Eigen::MatrixBase<DerivedL>& lambda, Index h) {
    const Index branches = lambda.size();
    Scalar best = lambda(0) + params.w1(0, h);
    Index winner = 0;
    for (Index i = 1; i < branches; ++i) {
        const Scalar term = lambda(i) + params.w1(i, h);
        if (term < best) {
            best = term;
            winner = i;
        }
    }
    return {best, winner};
}

// Winner of class d in the max-plus layer; lowest neuron index on ties.
template <typename Scalar, typename DerivedG>
std::pair<Scalar, Index> max_plus_class(const LmmParams<Scalar>& params,
                                        const Eigen::MatrixBase<DerivedG>& g, Index d) {
    Scalar best = g(0) + params.w2(0, d);
    Index winner = 0;
    for (Index h = 1; h < g.size(); ++h) {
        const Scalar term = g(h) + params.w2(h, d);
        if (term > best) {
            best = term;
            winner = h;
        }
    }
    return {best, winner};
}

// argmax with lowest index on ties.
template <typename Derived>
Index argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) {
            best = i;
        }
    }
    return best;
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x) {
    params.validate_shape();
    if (x.size() != params.pixels()) {
        throw DimensionError("input has " + std::to_string(x.size()) + " pixels, network expects " +
                             std::to_string(params.pixels()));
    }
    if (!x.allFinite()) {
        throw NumericError("input contains non-finite values");
    }

    ForwardTrace<Scalar> trace;
    trace.lambda = linear_layer(params, x);

    const Index hidden = params.hidden();
    trace.g.resize(hidden);
    trace.argmin.resize(static_cast<std::size_t>(hidden));
    for (Index h = 0; h < hidden; ++h) {
        const auto [value, winner] = min_plus_neuron(params, trace.lambda, h);
        trace.g(h) = value;
        trace.argmin[static_cast<std::size_t>(h)] = winner;
    }

    const Index classes = params.classes();
    trace.z.resize(classes);
    trace.argmax.resize(static_cast<std::size_t>(classes));
    for (Index d = 0; d < classes; ++d) {
        const auto [value, winner] = max_plus_class(params, trace.g, d);
        trace.z(d) = value;
        trace.argmax[static_cast<std::size_t>(d)] = winner;
    }

    trace.predicted = argmax_lowest(trace.z);
    trace.probs = softmax_t(trace.z, params.temperature);
    return trace;
}

// Logits only, skipping the softmax head.
template <typename Scalar, typename Derived>
Vector<Scalar> logits(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x) {
    return forward(params, x).z;
}

}  // namespace lmm
