#pragma once

#include "lmm/core.hpp"
#include "lmm/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lmm {

/// Training samples chosen as prototypes, one per hidden neuron.
template <typename Scalar>
struct MedoidSet {
    Matrix<Scalar> medoids;  // H1 x P, one medoid per row
    std::vector<Index> labels;
    std::vector<Index> source_indices;
    Index num_classes = 0;

    Index size() const noexcept { return medoids.rows(); }
};

enum class MedoidStrategy { random, greedy_kmedoids };

MedoidStrategy parse_medoid_strategy(const std::string& name);
std::string to_string(MedoidStrategy strategy);

// Chebyshev distance.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar linf_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

/// Per-class neuron budget: proportional to class frequency, at least one
/// neuron per class, never more neurons than samples in a class. Leftover
/// neurons go to the largest classes first.
std::vector<Index> allocate_neurons(const std::vector<Index>& class_counts, Index hidden);

/// Picks `hidden` medoids from `train`.
///
/// `random` draws uniformly without replacement inside each class.
/// `greedy_kmedoids` runs the greedy BUILD step of PAM per class with the
/// L-infinity distance: each new medoid is the class member that minimises
/// the summed distance from all members to their nearest chosen medoid.
/// Ties go to the lowest sample index.
MedoidSet<double> select_medoids(const Dataset& train, Index hidden, MedoidStrategy strategy,
                                 std::uint64_t seed);

/// Network whose untrained output is the nearest-medoid rule:
/// K = k0 everywhere, W1_{i,h} = -lambda_i(medoid_h), W2_{h,label_h} = k0 and
/// W2_{h,d} = -k0 otherwise, temperature 1.
template <typename Scalar>
LmmParams<Scalar> init_params(const MedoidSet<Scalar>& medoids, Scalar k0) {
    if (!(k0 >= Scalar(kScaleFloor))) {
        throw ParameterError("k0 must be >= 1e-6");
    }
    const Index hidden = medoids.size();
    const Index pixels = medoids.medoids.cols();
    const Index classes = medoids.num_classes;
    if (hidden < 1 || pixels < 1) {
        throw ParameterError("medoid set is empty");
    }
    if (static_cast<Index>(medoids.labels.size()) != hidden) {
        throw DimensionError("medoid label count differs from medoid count");
    }

    LmmParams<Scalar> params(pixels, hidden, classes);
    params.k.setConstant(k0);
    for (Index h = 0; h < hidden; ++h) {
        for (Index p = 0; p < pixels; ++p) {
            const Scalar value = medoids.medoids(h, p);
            params.w1(plus_branch(p), h) = -(k0 * value);
            params.w1(minus_branch(p), h) = k0 * value;
        }
        const Index label = medoids.labels[static_cast<std::size_t>(h)];
        if (label < 0 || label >= classes) {
            throw DataError("medoid label out of range");
        }
        for (Index d = 0; d < classes; ++d) {
            params.w2(h, d) = d == label ? k0 : -k0;
        }
    }
    return params;
}

// Label of the closest medoid in L-infinity; lowest medoid index on ties.
template <typename Scalar, typename Derived>
Index nearest_medoid_predict(const MedoidSet<Scalar>& medoids, const Eigen::MatrixBase<Derived>& x) {
    if (x.size() != medoids.medoids.cols()) {
        throw DimensionError("input length differs from medoid length");
    }
    if (medoids.size() == 0) {
        throw ParameterError("medoid set is empty");
    }
    Index best = 0;
    Scalar best_distance = linf_distance(medoids.medoids.row(0).transpose(), x);
    for (Index h = 1; h < medoids.size(); ++h) {
        const Scalar distance = linf_distance(medoids.medoids.row(h).transpose(), x);
        if (distance < best_distance) {
            best_distance = distance;
            best = h;
        }
    }
    return medoids.labels[static_cast<std::size_t>(best)];
}

}  // namespace lmm
