#pragma once

#include "lmm/core.hpp"

namespace lmm {

/// Re-evaluates the network while single pixels change.
///
/// Keeps the linear layer and every min-plus winner cached. Changing pixel p
/// touches two branches per neuron, so an update costs O(H1) unless the old
/// winner of a neuron got larger, in which case that neuron is rescanned.
/// Results are bitwise identical to `forward`, including lowest-index ties.
///
/// The evaluator borrows `params`; they must outlive it.
template <typename Scalar>
class PixelUpdateEvaluator {
public:
    template <typename Derived>
    PixelUpdateEvaluator(const LmmParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x)
        : params_(&params), x_(x) {
        const auto trace = forward(params, x_);
        lambda_ = trace.lambda;
        g_ = trace.g;
        argmin_ = trace.argmin;
    }

    const Vector<Scalar>& input() const noexcept { return x_; }
    const Vector<Scalar>& activations() const noexcept { return g_; }

    void set_pixel(Index pixel, Scalar value) {
        if (pixel < 0 || pixel >= x_.size()) {
            throw DimensionError("pixel index out of range");
        }
        if (!std::isfinite(static_cast<double>(value))) {
            throw NumericError("pixel value must be finite");
        }
        x_(pixel) = value;
        const Index plus = plus_branch(pixel);
        const Index minus = minus_branch(pixel);
        lambda_(plus) = params_->k(plus) * value;
        lambda_(minus) = -(params_->k(minus) * value);

        for (Index h = 0; h < g_.size(); ++h) {
            auto& winner = argmin_[static_cast<std::size_t>(h)];
            if (winner == plus || winner == minus) {
                const Scalar own = lambda_(winner) + params_->w1(winner, h);
                if (own > g_(h)) {
                    const auto [value_h, winner_h] = min_plus_neuron(*params_, lambda_, h);
                    g_(h) = value_h;
                    winner = winner_h;
                    continue;
                }
                g_(h) = own;
            }
            for (const Index branch : {plus, minus}) {
                const Scalar term = lambda_(branch) + params_->w1(branch, h);
                if (term < g_(h) || (term == g_(h) && branch < winner)) {
                    g_(h) = term;
                    winner = branch;
                }
            }
        }
    }

    Scalar logit(Index d) const { return max_plus_class(*params_, g_, d).first; }

    Vector<Scalar> logits() const {
        Vector<Scalar> z(params_->classes());
        for (Index d = 0; d < z.size(); ++d) {
            z(d) = logit(d);
        }
        return z;
    }

    Index predicted() const { return argmax_lowest(logits()); }

    Vector<Scalar> probs() const { return softmax_t(logits(), params_->temperature); }

private:
    const LmmParams<Scalar>* params_;
    Vector<Scalar> x_;
    Vector<Scalar> lambda_;
    Vector<Scalar> g_;
    std::vector<Index> argmin_;
};

}  // namespace lmm
