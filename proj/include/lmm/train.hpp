#pragma once

#include "lmm/core.hpp"
#include "lmm/dataset.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace lmm {

struct TrainConfig {
    Index epochs = 100;
    Index batch_size = 32;
    double lr0 = 0.05;
    double lr_decay = 1e-3;  // step size lr0 / sqrt(1 + lr_decay * t), t = update count
    std::uint64_t seed = 0;
    double k_min = kScaleFloor;
    bool shuffle = true;
    int threads = 1;

    void validate() const;
};

/// One active-path contribution to the cross-entropy subgradient.
///
/// For class `cls` the logit is g_neuron + W2(neuron, cls) and g_neuron is
/// lambda_branch + W1(branch, neuron), so `residual` (probs - onehot) lands on
/// W2(neuron, cls) and W1(branch, neuron), and `k_coef` = residual * (+-x_p)
/// on k(branch).
struct GradTerm {
    Index cls = 0;
    Index neuron = 0;
    Index branch = 0;
    double residual = 0.0;
    double k_coef = 0.0;
};

struct SparseGrad {
    std::vector<GradTerm> terms;  // one per class
};

/// Dense view of a gradient, mainly for tests and finite-difference checks.
struct DenseGrad {
    Vector<double> k;
    Matrix<double> w1;
    Matrix<double> w2;

    static DenseGrad zeros_like(const LmmParams<double>& params);
    void add(const SparseGrad& grad, double scale = 1.0);
};

// -log softmax(z)_y at temperature 1.
double cross_entropy(const LmmParams<double>& params, const Vector<double>& x, Index y);

SparseGrad sparse_subgradient(const LmmParams<double>& params, const Vector<double>& x, Index y);

struct EpochStats {
    Index epoch = 0;
    double train_loss = 0.0;      // mean over the epoch, measured before each update
    double train_accuracy = 0.0;  // same pass
    double val_accuracy = 0.0;    // after the epoch
};

struct TrainResult {
    LmmParams<double> params;  // best validation accuracy (initial weights included)
    std::vector<EpochStats> history;
    Index best_epoch = 0;       // 0 means the initial weights
    double best_val_accuracy = 0.0;
};

/// Minibatch subgradient descent on the mean cross-entropy.
///
/// After each update every K entry is clamped to >= cfg.k_min. Per-sample
/// subgradients are computed against the pre-update weights (optionally in
/// parallel) and applied in sample order, so results do not depend on the
/// thread count.
TrainResult train(LmmParams<double> params, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochStats&)>& on_epoch = {});

double mean_confidence(const std::vector<Vector<double>>& logits, double temperature);

/// Finds T with mean predicted-class probability == target (within 1e-4) by
/// bisection on log T over [-20, 20] and stores it in params.temperature.
double calibrate_temperature(LmmParams<double>& params, const Dataset& data, double target = 0.8);

}  // namespace lmm
