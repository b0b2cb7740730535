#include "lmm/io.hpp"

#include <bit>
#include <cstring>

namespace lmm {

namespace {

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint64_t get_le(const Bytes& in, std::size_t offset, int width) {
    std::uint64_t v = 0;
    for (int i = width - 1; i >= 0; --i) v = (v << 8) | in[offset + static_cast<std::size_t>(i)];
    return v;
}

constexpr std::size_t kHeaderBytes = 4 + 4 * 4 + 8;

}  // namespace

std::size_t model_file_size(Index pixels, Index hidden, Index classes) {
    const auto p = static_cast<std::size_t>(pixels);
    const auto h = static_cast<std::size_t>(hidden);
    const auto c = static_cast<std::size_t>(classes);
    return kHeaderBytes + 8 * (2 * p + 2 * p * h + h * c);
}

Bytes encode_model(const LmmParams<double>& params) {
    params.validate();
    Bytes out;
    out.reserve(model_file_size(params.pixels(), params.hidden(), params.classes()));
    for (const char c : {'L', 'M', 'M', 'P'}) out.push_back(static_cast<std::uint8_t>(c));
    put_u32(out, kModelVersion);
    put_u32(out, static_cast<std::uint32_t>(params.pixels()));
    put_u32(out, static_cast<std::uint32_t>(params.hidden()));
    put_u32(out, static_cast<std::uint32_t>(params.classes()));
    put_f64(out, params.temperature);
    for (Index i = 0; i < params.k.size(); ++i) put_f64(out, params.k(i));
    for (Index h = 0; h < params.hidden(); ++h) {
        for (Index i = 0; i < params.w1.rows(); ++i) put_f64(out, params.w1(i, h));
    }
    for (Index h = 0; h < params.hidden(); ++h) {
        for (Index d = 0; d < params.classes(); ++d) put_f64(out, params.w2(h, d));
    }
    return out;
}

LmmParams<double> decode_model(const Bytes& bytes) {
    if (bytes.size() < kHeaderBytes) {
        throw FormatError("model file truncated (" + std::to_string(bytes.size()) + " bytes)");
    }
    if (std::memcmp(bytes.data(), "LMMP", 4) != 0) {
        throw FormatError("not a model file (bad magic)");
    }
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
    if (version != kModelVersion) {
        throw FormatError("unsupported model file version " + std::to_string(version));
    }
    const auto pixels = static_cast<Index>(get_le(bytes, 8, 4));
    const auto hidden = static_cast<Index>(get_le(bytes, 12, 4));
    const auto classes = static_cast<Index>(get_le(bytes, 16, 4));
    if (pixels < 1 || hidden < 1 || classes < 2) {
        throw FormatError("model file has invalid dimensions");
    }
    const std::size_t expected = model_file_size(pixels, hidden, classes);
    if (bytes.size() != expected) {
        throw FormatError("model file has " + std::to_string(bytes.size()) + " bytes, layout requires " +
                          std::to_string(expected) + (bytes.size() < expected ? " (truncated)" : ""));
    }

    std::size_t offset = 20;
    auto next = [&]() {
        const double v = std::bit_cast<double>(get_le(bytes, offset, 8));
        offset += 8;
        return v;
    };
    LmmParams<double> params;
    params.temperature = next();
    params.k.resize(2 * pixels);
    params.w1.resize(2 * pixels, hidden);
    params.w2.resize(hidden, classes);
    for (Index i = 0; i < params.k.size(); ++i) params.k(i) = next();
    for (Index h = 0; h < hidden; ++h) {
        for (Index i = 0; i < params.w1.rows(); ++i) params.w1(i, h) = next();
    }
    for (Index h = 0; h < hidden; ++h) {
        for (Index d = 0; d < classes; ++d) params.w2(h, d) = next();
    }
    try {
        params.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("model file holds invalid parameters: ") + e.what());
    }
    return params;
}

void save_model(const LmmParams<double>& params, const std::string& path) { write_file(path, encode_model(params)); }

LmmParams<double> load_model(const std::string& path) { return decode_model(read_file(path)); }

}  // namespace lmm
