#pragma once

#include "lmm/core.hpp"
#include "lmm/dataset.hpp"
#include "lmm/explain.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lmm {

using Bytes = std::vector<std::uint8_t>;

// ---- NPY / NPZ -------------------------------------------------------------

struct NpyArray {
    std::string descr;  // e.g. "|u1"
    bool fortran_order = false;
    std::vector<std::size_t> shape;
    Bytes payload;

    std::size_t element_count() const;
};

// Parses one .npy blob. `member` only labels error messages.
NpyArray parse_npy(const Bytes& blob, const std::string& member);
Bytes encode_npy_u8(const std::vector<std::size_t>& shape, const Bytes& values);

// Every member of a ZIP archive, keyed by file name. Stored and deflate
// entries are supported; CRCs are checked.
std::map<std::string, Bytes> read_zip(const Bytes& archive);
Bytes write_zip(const std::map<std::string, Bytes>& members, bool deflate);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& bytes);

/// Reads a MedMNIST-style archive with members train_images, train_labels,
/// val_images, val_labels, test_images, test_labels (uint8). Images are
/// N x H x W (or N x P) and are flattened row-major and scaled by 1/255.
DatasetSplits load_npz_dataset(const std::string& path);

// Inverse of load_npz_dataset; pixels are rounded to the nearest 1/255.
void save_npz_dataset(const DatasetSplits& splits, const std::string& path, bool deflate = true);

// ---- model files -----------------------------------------------------------

// "LMMP", u32 version = 1, u32 P, u32 H1, u32 C, f64 T, f64 K[2P],
// f64 W1[2P*H1] (neuron by neuron), f64 W2[H1*C] (neuron by neuron).
// Everything little-endian.
inline constexpr std::uint32_t kModelVersion = 1;

Bytes encode_model(const LmmParams<double>& params);
LmmParams<double> decode_model(const Bytes& bytes);
std::size_t model_file_size(Index pixels, Index hidden, Index classes);

void save_model(const LmmParams<double>& params, const std::string& path);
LmmParams<double> load_model(const std::string& path);

// ---- importance map export -------------------------------------------------

enum class MapFormat { pgm, csv };

/// Binary P5 image, side x side, maxval 255. Brightest = most important;
/// +inf scores are black and a constant map is uniform 128.
Bytes render_pgm(const ImportanceMap& map);
std::string render_csv(const ImportanceMap& map);
Vector<double> parse_csv_scores(const std::string& text);

void export_map(const ImportanceMap& map, const std::string& path, MapFormat format);

}  // namespace lmm
