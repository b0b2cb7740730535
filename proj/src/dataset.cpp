#include "lmm/dataset.hpp"

#include <algorithm>
#include <random>

namespace lmm {

std::vector<Index> Dataset::class_counts() const {
    std::vector<Index> counts(static_cast<std::size_t>(num_classes), 0);
    for (const Index label : labels) {
        if (label >= 0 && label < num_classes) {
            ++counts[static_cast<std::size_t>(label)];
        }
    }
    return counts;
}

void Dataset::validate() const {
    const std::string name = split.empty() ? std::string("dataset") : split;
    if (size() == 0) {
        throw DataError(name + ": no samples");
    }
    if (static_cast<Index>(labels.size()) != size()) {
        throw DataError(name + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(size()) +
                        " images");
    }
    if (!images.allFinite() || images.minCoeff() < 0.0 || images.maxCoeff() > 1.0) {
        throw DataError(name + ": pixel values must lie in [0,1]");
    }
    for (const Index label : labels) {
        if (label < 0 || label >= num_classes) {
            throw DataError(name + ": label " + std::to_string(label) + " outside [0, " +
                            std::to_string(num_classes) + ")");
        }
    }
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.split = split;
    out.num_classes = num_classes;
    out.images.resize(static_cast<Index>(rows.size()), pixels());
    out.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] < 0 || rows[r] >= size()) {
            throw DimensionError("subset row out of range");
        }
        out.images.row(static_cast<Index>(r)) = images.row(rows[r]);
        out.labels.push_back(label(rows[r]));
    }
    return out;
}

const Dataset& DatasetSplits::by_name(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ParameterError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset synth_dataset(Index pixels, Index per_class, const Matrix<double>& centers, double noise_sigma,
                      std::uint64_t seed) {
    if (centers.cols() != pixels) {
        throw DimensionError("centers must have one column per pixel");
    }
    if (centers.rows() < 2 || per_class < 1) {
        throw ParameterError("need at least two classes and one sample per class");
    }
    if (centers.minCoeff() < 0.0 || centers.maxCoeff() > 1.0) {
        throw ParameterError("centers must lie in [0,1]");
    }
    if (!(noise_sigma >= 0.0)) {
        throw ParameterError("noise sigma must be non-negative");
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);

    Dataset data;
    data.split = "synthetic";
    data.num_classes = centers.rows();
    data.images.resize(centers.rows() * per_class, pixels);
    data.labels.reserve(static_cast<std::size_t>(data.images.rows()));
    Index row = 0;
    for (Index c = 0; c < centers.rows(); ++c) {
        for (Index n = 0; n < per_class; ++n, ++row) {
            for (Index p = 0; p < pixels; ++p) {
                const double jitter = noise_sigma > 0.0 ? noise(rng) : 0.0;
                data.images(row, p) = std::clamp(centers(c, p) + jitter, 0.0, 1.0);
            }
            data.labels.push_back(c);
        }
    }
    return data;
}

}  // namespace lmm
