#include "lmm/train.hpp"

#include "lmm/evalx.hpp"
#include "lmm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lmm {

void TrainConfig::validate() const {
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (batch_size < 1) throw ParameterError("batch size must be >= 1");
    if (!(lr0 > 0.0)) throw ParameterError("lr0 must be positive");
    if (!(lr_decay >= 0.0)) throw ParameterError("lr_decay must be non-negative");
    if (!(k_min >= kScaleFloor)) throw ParameterError("k_min must be >= 1e-6");
    if (threads < 1) throw ParameterError("threads must be >= 1");
}

DenseGrad DenseGrad::zeros_like(const LmmParams<double>& params) {
    return {Vector<double>::Zero(params.k.size()), Matrix<double>::Zero(params.w1.rows(), params.w1.cols()),
            Matrix<double>::Zero(params.w2.rows(), params.w2.cols())};
}

void DenseGrad::add(const SparseGrad& grad, double scale) {
    for (const auto& t : grad.terms) {
        w2(t.neuron, t.cls) += scale * t.residual;
        w1(t.branch, t.neuron) += scale * t.residual;
        k(t.branch) += scale * t.k_coef;
    }
}

namespace {

double log_sum_exp(const Vector<double>& z) {
    const double top = z.maxCoeff();
    return top + std::log((z.array() - top).exp().sum());
}

void check_label(const LmmParams<double>& params, Index y) {
    if (y < 0 || y >= params.classes()) {
        throw ParameterError("class label " + std::to_string(y) + " out of range");
    }
}

SparseGrad subgradient_from_trace(const LmmParams<double>& params, const ForwardTrace<double>& trace,
                                  const Vector<double>& x, Index y) {
    const Vector<double> probs = softmax_t(trace.z, 1.0);
    SparseGrad grad;
    grad.terms.reserve(static_cast<std::size_t>(params.classes()));
    for (Index d = 0; d < params.classes(); ++d) {
        GradTerm t;
        t.cls = d;
        t.neuron = trace.argmax[static_cast<std::size_t>(d)];
        t.branch = trace.argmin[static_cast<std::size_t>(t.neuron)];
        t.residual = probs(d) - (d == y ? 1.0 : 0.0);
        const double xp = x(branch_pixel(t.branch));
        t.k_coef = t.residual * (is_plus_branch(t.branch) ? xp : -xp);
        grad.terms.push_back(t);
    }
    return grad;
}

}  // namespace

double cross_entropy(const LmmParams<double>& params, const Vector<double>& x, Index y) {
    check_label(params, y);
    const auto trace = forward(params, x);
    return log_sum_exp(trace.z) - trace.z(y);
}

SparseGrad sparse_subgradient(const LmmParams<double>& params, const Vector<double>& x, Index y) {
    check_label(params, y);
    return subgradient_from_trace(params, forward(params, x), x, y);
}

TrainResult train(LmmParams<double> params, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const std::function<void(const EpochStats&)>& on_epoch) {
    cfg.validate();
    params.validate();
    train_set.validate();
    if (train_set.pixels() != params.pixels()) {
        throw DimensionError("training images have " + std::to_string(train_set.pixels()) +
                             " pixels, network expects " + std::to_string(params.pixels()));
    }
    if (train_set.num_classes > params.classes()) {
        throw DimensionError("training set has more classes than the network");
    }
    const bool has_val = val_set.size() > 0;
    if (has_val && val_set.pixels() != params.pixels()) {
        throw DimensionError("validation images have the wrong pixel count");
    }

    TrainResult result;
    result.params = params;
    result.best_val_accuracy = has_val ? accuracy(params, val_set, cfg.threads) : 0.0;

    const Index n = train_set.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(cfg.seed);

    std::vector<SparseGrad> grads;
    std::vector<double> losses(static_cast<std::size_t>(n));
    std::vector<char> hits(static_cast<std::size_t>(n));
    std::int64_t step = 0;

    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (Index start = 0; start < n; start += cfg.batch_size) {
            const Index count = std::min(cfg.batch_size, n - start);
            grads.assign(static_cast<std::size_t>(count), SparseGrad{});
            parallel_for(count, cfg.threads, [&](Index j) {
                const Index sample = order[static_cast<std::size_t>(start + j)];
                const Vector<double> x = train_set.image(sample);
                const Index y = train_set.label(sample);
                const auto trace = forward(params, x);
                losses[static_cast<std::size_t>(start + j)] = log_sum_exp(trace.z) - trace.z(y);
                hits[static_cast<std::size_t>(start + j)] = trace.predicted == y;
                grads[static_cast<std::size_t>(j)] = subgradient_from_trace(params, trace, x, y);
            });

            const double lr = cfg.lr0 / std::sqrt(1.0 + cfg.lr_decay * static_cast<double>(step));
            const double scale = lr / static_cast<double>(count);
            for (const auto& grad : grads) {
                for (const auto& t : grad.terms) {
                    params.w2(t.neuron, t.cls) -= scale * t.residual;
                    params.w1(t.branch, t.neuron) -= scale * t.residual;
                    params.k(t.branch) -= scale * t.k_coef;
                }
            }
            params.k = params.k.cwiseMax(cfg.k_min);
            ++step;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = pairwise_sum(losses.begin(), losses.end()) / static_cast<double>(n);
        if (!std::isfinite(stats.train_loss)) {
            throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch) +
                               " (try a smaller lr0)");
        }
        stats.train_accuracy =
            static_cast<double>(std::count(hits.begin(), hits.end(), char{1})) / static_cast<double>(n);
        stats.val_accuracy = has_val ? accuracy(params, val_set, cfg.threads) : stats.train_accuracy;
        result.history.push_back(stats);
        if (on_epoch) {
            on_epoch(stats);
        }

        if (!has_val || stats.val_accuracy > result.best_val_accuracy) {
            result.params = params;
            result.best_epoch = epoch;
            result.best_val_accuracy = stats.val_accuracy;
        }
    }
    return result;
}

double mean_confidence(const std::vector<Vector<double>>& logits, double temperature) {
    std::vector<double> top(logits.size());
    for (std::size_t n = 0; n < logits.size(); ++n) {
        top[n] = softmax_t(logits[n], temperature).maxCoeff();
    }
    return pairwise_sum(top.begin(), top.end()) / static_cast<double>(logits.size());
}

double calibrate_temperature(LmmParams<double>& params, const Dataset& data, double target) {
    const double floor = 1.0 / static_cast<double>(params.classes());
    if (!(target > floor && target < 1.0)) {
        throw ParameterError("calibration target must lie in (1/C, 1)");
    }
    data.validate();

    std::vector<Vector<double>> z(static_cast<std::size_t>(data.size()));
    for (Index n = 0; n < data.size(); ++n) {
        z[static_cast<std::size_t>(n)] = forward(params, data.image(n)).z;
    }

    double lo = -20.0;
    double hi = 20.0;
    const double sharpest = mean_confidence(z, std::exp(lo));
    const double flattest = mean_confidence(z, std::exp(hi));
    if (sharpest < target || flattest > target) {
        throw CalibrationError("mean confidence spans [" + std::to_string(flattest) + ", " +
                               std::to_string(sharpest) + "] over T in [e^-20, e^20]; target " +
                               std::to_string(target) + " is unreachable");
    }
    // Mean confidence decreases with T.
    for (int iter = 0; iter < 200 && hi - lo > 1e-14; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mean_confidence(z, std::exp(mid)) > target) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double temperature = std::exp(0.5 * (lo + hi));
    if (std::abs(mean_confidence(z, temperature) - target) > 1e-4) {
        throw CalibrationError("bisection did not reach the calibration target");
    }
    params.temperature = temperature;
    return temperature;
}

}  // namespace lmm
