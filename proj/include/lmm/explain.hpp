#pragma once

#include "lmm/core.hpp"
#include "lmm/evaluator.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lmm {

// Which direction of a score means "more important".
enum class Ordering { ascending, descending };

enum class Method { fragility, intgrad, shapley };

Method parse_method(const std::string& name);
std::string to_string(Method method);

/// One importance score per pixel. Fragility maps rank ascending (small
/// fragility = important); attribution maps rank by descending |score|.
struct ImportanceMap {
    Vector<double> scores;
    Ordering ordering = Ordering::descending;
    Method method = Method::intgrad;
    Index image_index = -1;
};

/// Neuron types: d(h) = argmax_d W2(h, d) (lowest index on ties), split into
/// neurons of the predicted class and the rest.
struct NeuronClassing {
    std::vector<Index> d_of_h;
    std::vector<Index> same_class;
    std::vector<Index> other_class;
};

template <typename Scalar>
NeuronClassing classify_neurons(const LmmParams<Scalar>& params, Index predicted) {
    NeuronClassing out;
    out.d_of_h.resize(static_cast<std::size_t>(params.hidden()));
    for (Index h = 0; h < params.hidden(); ++h) {
        const Index d = argmax_lowest(params.w2.row(h).transpose());
        out.d_of_h[static_cast<std::size_t>(h)] = d;
        (d == predicted ? out.same_class : out.other_class).push_back(h);
    }
    return out;
}

/// Distance a single pixel can move before one of its two branch terms in
/// neuron h drops to the current activation g_h:
/// min(x_p - (g_h - W1+)/K+, (W1- - g_h)/K- - x_p).
template <typename Scalar, typename Derived>
Scalar sensitivity(const LmmParams<Scalar>& params, const ForwardTrace<Scalar>& trace,
                   const Eigen::MatrixBase<Derived>& x, Index pixel, Index neuron) {
    const Scalar g = trace.g(neuron);
    const Scalar w_plus = params.w1(plus_branch(pixel), neuron);
    const Scalar w_minus = params.w1(minus_branch(pixel), neuron);
    const Scalar down = x(pixel) - (g - w_plus) / params.k_plus(pixel);
    const Scalar up = (w_minus - g) / params.k_minus(pixel) - x(pixel);
    return std::min(down, up);
}

// z_c - g_h - W2(h, d(h)); non-negative when c is the predicted class.
template <typename Scalar>
Scalar slack(const LmmParams<Scalar>& params, const ForwardTrace<Scalar>& trace, Index neuron, Index cls) {
    const Index own_class = argmax_lowest(params.w2.row(neuron).transpose());
    // z_c >= z_{d(h)} >= fl(g_h + W2), so this grouping is never negative.
    return trace.z(cls) - (trace.g(neuron) + params.w2(neuron, own_class));
}

/// Sensitivity with the activation level shifted by the slack s = s_{h,c}:
/// min(x_p - (g_h - s - W1+)/K+, (s + W1- - g_h)/K- - x_p).
template <typename Scalar, typename Derived>
Scalar extended_sensitivity(const LmmParams<Scalar>& params, const ForwardTrace<Scalar>& trace,
                            const Eigen::MatrixBase<Derived>& x, Index pixel, Index neuron, Index cls) {
    const Scalar s = slack(params, trace, neuron, cls);
    const Scalar g = trace.g(neuron);
    const Scalar w_plus = params.w1(plus_branch(pixel), neuron);
    const Scalar w_minus = params.w1(minus_branch(pixel), neuron);
    const Scalar down = x(pixel) - (g - s - w_plus) / params.k_plus(pixel);
    const Scalar up = (s + w_minus - g) / params.k_minus(pixel) - x(pixel);
    return std::min(down, up);
}

/// F_p = min over neurons typed with the non-predicted class of the extended
/// sensitivity. +inf when there is no such neuron. Binary classifiers only.
template <typename Scalar, typename Derived>
ImportanceMap pixel_fragility(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                              Index image_index = -1) {
    if (params.classes() != 2) {
        throw UnsupportedError("pixel fragility is defined for two classes, network has " +
                               std::to_string(params.classes()));
    }
    const auto trace = forward(params, x);
    const auto classing = classify_neurons(params, trace.predicted);

    ImportanceMap map;
    map.method = Method::fragility;
    map.ordering = Ordering::ascending;
    map.image_index = image_index;
    map.scores = Vector<double>::Constant(params.pixels(), std::numeric_limits<double>::infinity());
    for (Index p = 0; p < params.pixels(); ++p) {
        for (const Index h : classing.other_class) {
            const auto value = static_cast<double>(extended_sensitivity(params, trace, x, p, h, trace.predicted));
            map.scores(p) = std::min(map.scores(p), value);
        }
    }
    return map;
}

/// Smallest |v| on a uniform grid over [-2, 2] such that adding v to pixel p
/// changes the predicted class. Diagnostic companion to pixel_fragility.
template <typename Scalar, typename Derived>
std::optional<Scalar> fragility_bruteforce_flip(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                                Index pixel, Index grid) {
    if (grid < 100) {
        throw ParameterError("flip scan needs at least 100 grid points");
    }
    if (pixel < 0 || pixel >= params.pixels()) {
        throw DimensionError("pixel index out of range");
    }
    std::vector<Scalar> offsets(static_cast<std::size_t>(grid));
    for (Index k = 0; k < grid; ++k) {
        offsets[static_cast<std::size_t>(k)] = Scalar(-2) + Scalar(4) * Scalar(k) / Scalar(grid - 1);
    }
    std::stable_sort(offsets.begin(), offsets.end(),
                     [](Scalar a, Scalar b) { return std::abs(a) < std::abs(b); });

    PixelUpdateEvaluator<Scalar> eval(params, x);
    const Index original = eval.predicted();
    const Scalar base = x(pixel);
    for (const Scalar v : offsets) {
        eval.set_pixel(pixel, base + v);
        if (eval.predicted() != original) {
            return v;
        }
    }
    return std::nullopt;
}

/// Riemann (midpoint) integrated gradients of the predicted-class logit along
/// the straight path from `baseline` to x. The derivative at each point
/// follows the active path: +-K of the winning branch of the winning neuron.
template <typename Scalar, typename Derived>
ImportanceMap integrated_gradients(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                   const Vector<Scalar>& baseline, Index steps = 50, Index image_index = -1) {
    if (steps < 1) {
        throw ParameterError("integrated gradients needs at least one step");
    }
    if (baseline.size() != x.size()) {
        throw DimensionError("baseline length differs from input length");
    }
    const Index cls = forward(params, x).predicted;
    const Vector<Scalar> delta = x - baseline;

    Vector<Scalar> grad_sum = Vector<Scalar>::Zero(params.pixels());
    for (Index k = 1; k <= steps; ++k) {
        const Scalar alpha = (Scalar(k) - Scalar(0.5)) / Scalar(steps);
        const Vector<Scalar> point = baseline + alpha * delta;
        const auto trace = forward(params, point);
        const Index neuron = trace.argmax[static_cast<std::size_t>(cls)];
        const Index branch = trace.argmin[static_cast<std::size_t>(neuron)];
        grad_sum(branch_pixel(branch)) += is_plus_branch(branch) ? params.k(branch) : -params.k(branch);
    }

    ImportanceMap map;
    map.method = Method::intgrad;
    map.ordering = Ordering::descending;
    map.image_index = image_index;
    map.scores = (delta.cwiseProduct(grad_sum) / Scalar(steps)).template cast<double>();
    return map;
}

/// Marginal contributions of one permutation: pixels are switched from
/// baseline to x in `order`, and each pixel receives the change of logit `cls`.
template <typename Scalar, typename Derived>
Vector<Scalar> shapley_permutation_contributions(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                                                 const Vector<Scalar>& baseline, const std::vector<Index>& order,
                                                 Index cls) {
    PixelUpdateEvaluator<Scalar> eval(params, baseline);
    Vector<Scalar> out = Vector<Scalar>::Zero(params.pixels());
    Scalar previous = eval.logit(cls);
    for (const Index p : order) {
        eval.set_pixel(p, x(p));
        const Scalar current = eval.logit(cls);
        out(p) += current - previous;
        previous = current;
    }
    return out;
}

/// Monte-Carlo permutation estimate of Shapley values of the predicted-class
/// logit, with absent pixels held at `baseline`.
template <typename Scalar, typename Derived>
ImportanceMap shapley_sampling(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x,
                               const Vector<Scalar>& baseline, Index permutations = 200, std::uint64_t seed = 0,
                               Index image_index = -1) {
    if (permutations < 1) {
        throw ParameterError("shapley sampling needs at least one permutation");
    }
    if (baseline.size() != x.size()) {
        throw DimensionError("baseline length differs from input length");
    }
    const Index cls = forward(params, x).predicted;
    std::vector<Index> order(static_cast<std::size_t>(params.pixels()));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);

    Vector<Scalar> total = Vector<Scalar>::Zero(params.pixels());
    for (Index r = 0; r < permutations; ++r) {
        std::shuffle(order.begin(), order.end(), rng);
        total += shapley_permutation_contributions(params, x, baseline, order, cls);
    }

    ImportanceMap map;
    map.method = Method::shapley;
    map.ordering = Ordering::descending;
    map.image_index = image_index;
    map.scores = (total / Scalar(permutations)).template cast<double>();
    return map;
}

}  // namespace lmm
