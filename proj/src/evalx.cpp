#include "lmm/evalx.hpp"

#include "lmm/evaluator.hpp"
#include "lmm/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

namespace lmm {

ConfusionMatrix confusion_matrix(const LmmParams<double>& params, const Dataset& data, int threads) {
    if (data.pixels() != params.pixels()) {
        throw DimensionError("dataset pixel count differs from the network");
    }
    std::vector<Index> predicted(static_cast<std::size_t>(data.size()));
    parallel_for(data.size(), threads, [&](Index n) {
        predicted[static_cast<std::size_t>(n)] = forward(params, data.image(n)).predicted;
    });
    ConfusionMatrix confusion = ConfusionMatrix::Zero(params.classes(), params.classes());
    for (Index n = 0; n < data.size(); ++n) {
        const Index truth = data.label(n);
        if (truth < 0 || truth >= params.classes()) {
            throw DataError("label " + std::to_string(truth) + " outside the network's classes");
        }
        ++confusion(truth, predicted[static_cast<std::size_t>(n)]);
    }
    return confusion;
}

double accuracy(const ConfusionMatrix& confusion) {
    const Index total = confusion.sum();
    return total == 0 ? 0.0 : static_cast<double>(confusion.trace()) / static_cast<double>(total);
}

double accuracy(const LmmParams<double>& params, const Dataset& data, int threads) {
    return accuracy(confusion_matrix(params, data, threads));
}

Explainer make_explainer(Method method, const ExplainerOptions& options) {
    switch (method) {
        case Method::fragility:
            return [](const LmmParams<double>& params, const Vector<double>& x, Index index) {
                return pixel_fragility(params, x, index);
            };
        case Method::intgrad:
            return [options](const LmmParams<double>& params, const Vector<double>& x, Index index) {
                const Vector<double> baseline = Vector<double>::Constant(x.size(), options.baseline);
                return integrated_gradients(params, x, baseline, options.ig_steps, index);
            };
        case Method::shapley:
            return [options](const LmmParams<double>& params, const Vector<double>& x, Index index) {
                const Vector<double> baseline = Vector<double>::Constant(x.size(), options.baseline);
                return shapley_sampling(params, x, baseline, options.permutations,
                                        options.seed + static_cast<std::uint64_t>(std::max<Index>(index, 0)), index);
            };
    }
    throw ParameterError("unknown explanation method");
}

std::vector<Index> importance_ranking(const ImportanceMap& map) {
    const Index pixels = map.scores.size();
    std::vector<Index> order(static_cast<std::size_t>(pixels));
    std::iota(order.begin(), order.end(), Index{0});
    if (map.ordering == Ordering::ascending) {
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            const double sa = map.scores(a);
            const double sb = map.scores(b);
            const bool fa = std::isfinite(sa);
            const bool fb = std::isfinite(sb);
            if (fa != fb) return fa;
            return fa && sa < sb;
        });
    } else {
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            const double sa = std::abs(map.scores(a));
            const double sb = std::abs(map.scores(b));
            const bool fa = std::isfinite(sa);
            const bool fb = std::isfinite(sb);
            if (fa != fb) return fa;
            return fa && sa > sb;
        });
    }
    return order;
}

double fidelity(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data,
                const FidelityOptions& options) {
    if (options.steps < 1 || options.steps > params.pixels()) {
        throw ParameterError("fidelity steps must lie in [1, P]");
    }
    if (data.size() == 0) {
        throw DataError("fidelity needs at least one image");
    }
    const Index pixels = params.pixels();
    std::vector<double> per_image(static_cast<std::size_t>(data.size()));
    parallel_for(data.size(), options.threads, [&](Index n) {
        const Vector<double> x = data.image(n);
        const auto ranking = importance_ranking(explainer(params, x, n));
        PixelUpdateEvaluator<double> eval(params, x);
        const Index cls = eval.predicted();
        std::vector<double> probs;
        probs.reserve(static_cast<std::size_t>(options.steps));
        Index deleted = 0;
        for (Index k = 1; k <= options.steps; ++k) {
            const Index target = k * pixels / options.steps;
            for (; deleted < target; ++deleted) {
                eval.set_pixel(ranking[static_cast<std::size_t>(deleted)], options.fill);
            }
            probs.push_back(eval.probs()(cls));
        }
        per_image[static_cast<std::size_t>(n)] =
            pairwise_sum(probs.begin(), probs.end()) / static_cast<double>(options.steps);
    });
    return pairwise_sum(per_image.begin(), per_image.end()) / static_cast<double>(data.size());
}

Vector<double> normalized_scores(const ImportanceMap& map) {
    Vector<double> v = map.scores.unaryExpr([](double s) { return std::isfinite(s) ? s : 0.0; });
    const double norm = v.norm();
    return norm > 0.0 ? Vector<double>(v / norm) : Vector<double>(Vector<double>::Zero(v.size()));
}

double stability(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data,
                 const StabilityOptions& options) {
    if (!(options.sigma > 0.0)) {
        throw ParameterError("stability sigma must be positive");
    }
    if (options.m < 1) {
        throw ParameterError("stability needs at least one perturbation");
    }
    if (data.size() == 0) {
        throw DataError("stability needs at least one image");
    }
    std::vector<double> per_image(static_cast<std::size_t>(data.size()));
    parallel_for(data.size(), options.threads, [&](Index n) {
        std::seed_seq seq{static_cast<std::uint64_t>(options.seed), static_cast<std::uint64_t>(n)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> noise(0.0, options.sigma);

        const Vector<double> x = data.image(n);
        const Vector<double> reference = normalized_scores(explainer(params, x, n));
        std::vector<double> ratios;
        ratios.reserve(static_cast<std::size_t>(options.m));
        for (Index j = 0; j < options.m; ++j) {
            Vector<double> moved = x;
            for (Index p = 0; p < moved.size(); ++p) {
                moved(p) = std::clamp(moved(p) + noise(rng), 0.0, 1.0);
            }
            const double input_change = (moved - x).norm();
            if (input_change == 0.0) {
                ratios.push_back(0.0);
                continue;
            }
            const Vector<double> other = normalized_scores(explainer(params, moved, n));
            ratios.push_back((other - reference).norm() / input_change);
        }
        per_image[static_cast<std::size_t>(n)] =
            pairwise_sum(ratios.begin(), ratios.end()) / static_cast<double>(options.m);
    });
    return pairwise_sum(per_image.begin(), per_image.end()) / static_cast<double>(data.size());
}

double timing(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data, Index n) {
    if (n < 1) {
        throw ParameterError("timing needs at least one image");
    }
    n = std::min(n, data.size());
    const auto start = std::chrono::steady_clock::now();
    double sink = 0.0;
    for (Index i = 0; i < n; ++i) {
        sink += explainer(params, data.image(i), i).scores(0);
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    static_cast<void>(sink);
    return elapsed.count() / static_cast<double>(n);
}

std::string format_table(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    out << "split " << report.split << ": " << report.images << " images, accuracy ";
    std::snprintf(line, sizeof line, "%.4f, temperature %.6g\n", report.accuracy, report.temperature);
    out << line;
    out << "confusion (rows = true, cols = predicted):\n";
    for (Index r = 0; r < report.confusion.rows(); ++r) {
        out << "  [";
        for (Index c = 0; c < report.confusion.cols(); ++c) {
            std::snprintf(line, sizeof line, "%s%6lld", c ? " " : "", static_cast<long long>(report.confusion(r, c)));
            out << line;
        }
        out << " ]\n";
    }
    if (!report.methods.empty()) {
        std::snprintf(line, sizeof line, "%-12s %10s %10s %14s\n", "method", "fidelity", "stability", "time(s/img)");
        out << line;
        for (const auto& m : report.methods) {
            std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %14.6f\n", to_string(m.method).c_str(), m.fidelity,
                          m.stability, m.seconds_per_image);
            out << line;
        }
    }
    return out.str();
}

std::string format_key_values(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    auto put = [&](const std::string& key, double value) {
        std::snprintf(line, sizeof line, "%s = %.17g\n", key.c_str(), value);
        out << line;
    };
    out << "split.name = " << report.split << "\n";
    out << "images.count = " << report.images << "\n";
    put("accuracy.model", report.accuracy);
    put("temperature.model", report.temperature);
    for (Index r = 0; r < report.confusion.rows(); ++r) {
        for (Index c = 0; c < report.confusion.cols(); ++c) {
            out << "confusion.true" << r << "_pred" << c << " = " << report.confusion(r, c) << "\n";
        }
    }
    for (const auto& m : report.methods) {
        put("fidelity." + to_string(m.method), m.fidelity);
        put("stability." + to_string(m.method), m.stability);
        if (m.seconds_per_image > 0.0) {
            put("seconds_per_image." + to_string(m.method), m.seconds_per_image);
        }
    }
    return out.str();
}

}  // namespace lmm
