#pragma once

#include "lmm/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lmm {

/// Flattened images in [0,1]^P, one row per sample, with class labels.
struct Dataset {
    using ImageMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    ImageMatrix images;
    std::vector<Index> labels;
    std::string split;
    Index num_classes = 0;

    Index size() const noexcept { return images.rows(); }
    Index pixels() const noexcept { return images.cols(); }

    auto image(Index n) const { return images.row(n).transpose(); }
    Index label(Index n) const { return labels[static_cast<std::size_t>(n)]; }

    std::vector<Index> class_counts() const;

    // Throws DataError when a pixel leaves [0,1], a label is out of range,
    // the label count differs from the image count or the set is empty.
    void validate() const;

    // Rows listed in `rows`, in that order.
    Dataset subset(const std::vector<Index>& rows) const;
};

struct DatasetSplits {
    Dataset train;
    Dataset val;
    Dataset test;

    const Dataset& by_name(const std::string& name) const;
};

/// Gaussian blobs around `centers` (one row per class), clipped to [0,1].
Dataset synth_dataset(Index pixels, Index per_class, const Matrix<double>& centers, double noise_sigma,
                      std::uint64_t seed);

}  // namespace lmm
