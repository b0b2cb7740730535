#pragma once

#include "lmm/core.hpp"
#include "lmm/dataset.hpp"
#include "lmm/explain.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lmm {

using ConfusionMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

// Rows are true classes, columns predicted classes.
ConfusionMatrix confusion_matrix(const LmmParams<double>& params, const Dataset& data, int threads = 1);
double accuracy(const ConfusionMatrix& confusion);
double accuracy(const LmmParams<double>& params, const Dataset& data, int threads = 1);

using Explainer = std::function<ImportanceMap(const LmmParams<double>&, const Vector<double>&, Index)>;

struct ExplainerOptions {
    double baseline = 0.5;
    Index ig_steps = 50;
    Index permutations = 200;
    std::uint64_t seed = 0;  // shapley uses seed + image index
};

Explainer make_explainer(Method method, const ExplainerOptions& options = {});

/// Pixels from most to least important, ties by pixel index. Non-finite
/// fragility scores sort last.
std::vector<Index> importance_ranking(const ImportanceMap& map);

struct FidelityOptions {
    double fill = 0.5;
    Index steps = 28;
    int threads = 1;
};

/// Deletion fidelity: per image, the top floor(k P / steps) ranked pixels
/// (k = 1..steps) are set to `fill` and the calibrated probability of the
/// clean prediction is recorded. Returns the mean over images and k.
double fidelity(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data,
                const FidelityOptions& options = {});

struct StabilityOptions {
    double sigma = 0.05;
    Index m = 10;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Mean over images and m Gaussian perturbations x' = clip(x + N(0, sigma^2))
/// of ||e(x') - e(x)|| / ||x' - x||, where e is the importance map scaled
/// to unit L2 norm. Non-finite scores count as 0; a zero map stays zero.
double stability(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data,
                 const StabilityOptions& options = {});

// Unit-norm copy of the map with non-finite entries zeroed.
Vector<double> normalized_scores(const ImportanceMap& map);

/// Mean wall-clock seconds per image of the explainer over the first n
/// images, single-threaded.
double timing(const LmmParams<double>& params, const Explainer& explainer, const Dataset& data, Index n);

struct MethodMetrics {
    Method method = Method::fragility;
    double fidelity = 0.0;
    double stability = 0.0;
    double seconds_per_image = 0.0;
};

struct MetricsReport {
    std::string split;
    Index images = 0;
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    double temperature = 1.0;
    std::vector<MethodMetrics> methods;
};

std::string format_table(const MetricsReport& report);

// `metric.method = value` lines.
std::string format_key_values(const MetricsReport& report);

}  // namespace lmm
