#include "lmm/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace lmm {

namespace {

constexpr std::uint32_t kLocalHeaderSig = 0x04034b50;
constexpr std::uint32_t kCentralHeaderSig = 0x02014b50;
constexpr std::uint32_t kEndOfCentralSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;

// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
public:
    ByteReader(const Bytes& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    void require(std::size_t offset, std::size_t count) const {
        if (offset > bytes_.size() || count > bytes_.size() - offset) {
            throw FormatError(what_ + ": truncated");
        }
    }

    std::uint64_t uint(std::size_t offset, int width) const {
        require(offset, static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = width - 1; i >= 0; --i) {
            v = (v << 8) | bytes_[offset + static_cast<std::size_t>(i)];
        }
        return v;
    }

    std::uint16_t u16(std::size_t offset) const { return static_cast<std::uint16_t>(uint(offset, 2)); }
    std::uint32_t u32(std::size_t offset) const { return static_cast<std::uint32_t>(uint(offset, 4)); }
    std::uint64_t u64(std::size_t offset) const { return uint(offset, 8); }

    std::string text(std::size_t offset, std::size_t count) const {
        require(offset, count);
        return std::string(bytes_.begin() + static_cast<std::ptrdiff_t>(offset),
                           bytes_.begin() + static_cast<std::ptrdiff_t>(offset + count));
    }

private:
    const Bytes& bytes_;
    std::string what_;
};

void put_le(Bytes& out, std::uint64_t value, int width) {
    for (int i = 0; i < width; ++i) {
        out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
    }
}

Bytes inflate_raw(const std::uint8_t* data, std::size_t size, std::size_t expected, const std::string& member) {
    // One spare byte so zlib always has room to report the stream end.
    Bytes out(expected + 1);
    z_stream stream{};
    if (inflateInit2(&stream, -MAX_WBITS) != Z_OK) {
        throw FormatError(member + ": cannot initialise inflate");
    }
    stream.next_in = const_cast<Bytef*>(data);
    stream.avail_in = static_cast<uInt>(size);
    stream.next_out = out.data();
    stream.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&stream, Z_FINISH);
    const auto produced = stream.total_out;
    inflateEnd(&stream);
    if (rc != Z_STREAM_END || produced != expected) {
        throw FormatError(member + ": corrupt deflate stream");
    }
    out.resize(expected);
    return out;
}

Bytes deflate_raw(const Bytes& data) {
    z_stream stream{};
    if (deflateInit2(&stream, Z_BEST_COMPRESSION, Z_DEFLATED, -MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error("cannot initialise deflate");
    }
    Bytes out(deflateBound(&stream, static_cast<uLong>(data.size())));
    stream.next_in = const_cast<Bytef*>(data.data());
    stream.avail_in = static_cast<uInt>(data.size());
    stream.next_out = out.data();
    stream.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&stream, Z_FINISH);
    out.resize(stream.total_out);
    deflateEnd(&stream);
    if (rc != Z_STREAM_END) {
        throw Error("deflate failed");
    }
    return out;
}

std::uint32_t crc_of(const Bytes& data) {
    return static_cast<std::uint32_t>(crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

// Value of `key` in a Python dict literal such as
// {'descr': '|u1', 'fortran_order': False, 'shape': (3, 28, 28), }
std::string dict_value(const std::string& header, const std::string& key, const std::string& member) {
    const std::string quoted = "'" + key + "'";
    auto pos = header.find(quoted);
    if (pos == std::string::npos) {
        throw FormatError(member + ": NPY header lacks '" + key + "'");
    }
    pos = header.find(':', pos + quoted.size());
    if (pos == std::string::npos) {
        throw FormatError(member + ": malformed NPY header");
    }
    ++pos;
    while (pos < header.size() && header[pos] == ' ') ++pos;
    if (pos >= header.size()) {
        throw FormatError(member + ": malformed NPY header");
    }
    std::size_t end = pos;
    if (header[pos] == '\'') {
        end = header.find('\'', pos + 1);
        if (end == std::string::npos) throw FormatError(member + ": malformed NPY header");
        return header.substr(pos + 1, end - pos - 1);
    }
    if (header[pos] == '(') {
        end = header.find(')', pos);
        if (end == std::string::npos) throw FormatError(member + ": malformed NPY header");
        return header.substr(pos, end - pos + 1);
    }
    end = header.find_first_of(",}", pos);
    return header.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

std::vector<std::size_t> parse_shape(const std::string& tuple, const std::string& member) {
    std::vector<std::size_t> shape;
    std::size_t pos = 1;
    while (pos < tuple.size()) {
        while (pos < tuple.size() && (tuple[pos] == ' ' || tuple[pos] == ',')) ++pos;
        if (pos >= tuple.size() || tuple[pos] == ')') break;
        std::size_t used = 0;
        unsigned long long value = 0;
        try {
            value = std::stoull(tuple.substr(pos), &used);
        } catch (const std::exception&) {
            throw FormatError(member + ": malformed shape " + tuple);
        }
        shape.push_back(static_cast<std::size_t>(value));
        pos += used;
    }
    return shape;
}

bool is_u8(const std::string& descr) { return descr == "|u1" || descr == "<u1" || descr == ">u1" || descr == "u1"; }

const Bytes& member_bytes(const std::map<std::string, Bytes>& members, const std::string& name) {
    auto it = members.find(name + ".npy");
    if (it == members.end()) {
        it = members.find(name);
    }
    if (it == members.end()) {
        throw FormatError("archive member '" + name + "' is missing");
    }
    return it->second;
}

Dataset decode_split(const std::map<std::string, Bytes>& members, const std::string& split) {
    const std::string image_name = split + "_images";
    const std::string label_name = split + "_labels";
    const NpyArray images = parse_npy(member_bytes(members, image_name), image_name);
    const NpyArray labels = parse_npy(member_bytes(members, label_name), label_name);

    if (!is_u8(images.descr)) throw FormatError(image_name + ": dtype " + images.descr + ", expected uint8");
    if (!is_u8(labels.descr)) throw FormatError(label_name + ": dtype " + labels.descr + ", expected uint8");
    if (images.fortran_order) throw FormatError(image_name + ": Fortran-ordered arrays are not supported");
    if (images.shape.size() != 3 && images.shape.size() != 2) {
        throw FormatError(image_name + ": expected shape (N, H, W) or (N, P)");
    }
    const std::size_t count = images.shape[0];
    std::size_t pixels = 1;
    for (std::size_t i = 1; i < images.shape.size(); ++i) pixels *= images.shape[i];
    const bool label_shape_ok = (labels.shape.size() == 1 && labels.shape[0] == count) ||
                                (labels.shape.size() == 2 && labels.shape[0] == count && labels.shape[1] == 1);
    if (!label_shape_ok) {
        throw FormatError(label_name + ": expected shape (" + std::to_string(count) + ", 1)");
    }
    if (count == 0 || pixels == 0) {
        throw FormatError(image_name + ": empty array");
    }

    Dataset data;
    data.split = split;
    data.images.resize(static_cast<Index>(count), static_cast<Index>(pixels));
    for (std::size_t n = 0; n < count; ++n) {
        for (std::size_t p = 0; p < pixels; ++p) {
            data.images(static_cast<Index>(n), static_cast<Index>(p)) = images.payload[n * pixels + p] / 255.0;
        }
    }
    data.labels.assign(labels.payload.begin(), labels.payload.end());
    return data;
}

}  // namespace

std::size_t NpyArray::element_count() const {
    std::size_t n = 1;
    for (const auto s : shape) n *= s;
    return n;
}

NpyArray parse_npy(const Bytes& blob, const std::string& member) {
    ByteReader in(blob, member);
    if (in.text(0, 6) != "\x93NUMPY") {
        throw FormatError(member + ": not an NPY array (bad magic)");
    }
    const auto major = in.uint(6, 1);
    std::size_t header_len = 0;
    std::size_t header_start = 0;
    if (major == 1) {
        header_len = in.u16(8);
        header_start = 10;
    } else if (major == 2 || major == 3) {
        header_len = in.u32(8);
        header_start = 12;
    } else {
        throw FormatError(member + ": unsupported NPY version " + std::to_string(major));
    }
    const std::string header = in.text(header_start, header_len);

    NpyArray out;
    out.descr = dict_value(header, "descr", member);
    const std::string fortran = dict_value(header, "fortran_order", member);
    out.fortran_order = fortran.find("True") != std::string::npos;
    out.shape = parse_shape(dict_value(header, "shape", member), member);

    std::size_t item = 0;
    if (!out.descr.empty()) {
        const auto digits = out.descr.find_first_of("0123456789");
        if (digits != std::string::npos) item = std::stoul(out.descr.substr(digits));
    }
    if (item == 0) {
        throw FormatError(member + ": unsupported dtype " + out.descr);
    }
    const std::size_t data_start = header_start + header_len;
    const std::size_t data_size = out.element_count() * item;
    in.require(data_start, data_size);
    if (blob.size() != data_start + data_size) {
        throw FormatError(member + ": payload size does not match shape");
    }
    out.payload.assign(blob.begin() + static_cast<std::ptrdiff_t>(data_start), blob.end());
    return out;
}

Bytes encode_npy_u8(const std::vector<std::size_t>& shape, const Bytes& values) {
    std::string dict = "{'descr': '|u1', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        dict += std::to_string(shape[i]) + (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
    }
    dict += "), }";
    // magic(6) + version(2) + len(2) + header, padded with spaces to 64 bytes, newline-terminated.
    const std::size_t unpadded = 10 + dict.size() + 1;
    dict.append((64 - unpadded % 64) % 64, ' ');
    dict.push_back('\n');

    Bytes out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
    put_le(out, dict.size(), 2);
    out.insert(out.end(), dict.begin(), dict.end());
    out.insert(out.end(), values.begin(), values.end());
    return out;
}

std::map<std::string, Bytes> read_zip(const Bytes& archive) {
    ByteReader in(archive, "zip archive");
    if (archive.size() < 22) {
        throw FormatError("zip archive: truncated (no end-of-central-directory record)");
    }
    std::size_t eocd = std::string::npos;
    const std::size_t lowest = archive.size() >= 22 + 65535 ? archive.size() - 22 - 65535 : 0;
    for (std::size_t pos = archive.size() - 22 + 1; pos-- > lowest;) {
        if (in.u32(pos) == kEndOfCentralSig) {
            eocd = pos;
            break;
        }
    }
    if (eocd == std::string::npos) {
        throw FormatError("zip archive: truncated or not a zip file (no end-of-central-directory record)");
    }

    std::uint64_t entries = in.u16(eocd + 10);
    std::uint64_t cd_offset = in.u32(eocd + 16);
    if ((entries == 0xFFFF || cd_offset == 0xFFFFFFFF) && eocd >= 20 && in.u32(eocd - 20) == kZip64LocatorSig) {
        const auto z64 = static_cast<std::size_t>(in.u64(eocd - 20 + 8));
        if (in.u32(z64) != kZip64EndSig) {
            throw FormatError("zip archive: bad zip64 end record");
        }
        entries = in.u64(z64 + 32);
        cd_offset = in.u64(z64 + 48);
    }

    std::map<std::string, Bytes> members;
    auto pos = static_cast<std::size_t>(cd_offset);
    for (std::uint64_t e = 0; e < entries; ++e) {
        if (in.u32(pos) != kCentralHeaderSig) {
            throw FormatError("zip archive: corrupt central directory");
        }
        const auto method = in.u16(pos + 10);
        const auto crc = in.u32(pos + 16);
        std::uint64_t csize = in.u32(pos + 20);
        std::uint64_t usize = in.u32(pos + 24);
        const auto name_len = in.u16(pos + 28);
        const auto extra_len = in.u16(pos + 30);
        const auto comment_len = in.u16(pos + 32);
        std::uint64_t local = in.u32(pos + 42);
        const std::string name = in.text(pos + 46, name_len);

        // Zip64 extended information replaces saturated 32-bit fields.
        std::size_t extra = pos + 46 + name_len;
        const std::size_t extra_end = extra + extra_len;
        while (extra + 4 <= extra_end) {
            const auto id = in.u16(extra);
            const auto size = in.u16(extra + 2);
            if (id == 0x0001) {
                std::size_t field = extra + 4;
                if (usize == 0xFFFFFFFF) { usize = in.u64(field); field += 8; }
                if (csize == 0xFFFFFFFF) { csize = in.u64(field); field += 8; }
                if (local == 0xFFFFFFFF) { local = in.u64(field); }
            }
            extra += 4 + size;
        }
        pos = extra_end + comment_len;

        const auto lh = static_cast<std::size_t>(local);
        if (in.u32(lh) != kLocalHeaderSig) {
            throw FormatError(name + ": corrupt local header");
        }
        const std::size_t data_start = lh + 30 + in.u16(lh + 26) + in.u16(lh + 28);
        ByteReader member_in(archive, name);
        member_in.require(data_start, static_cast<std::size_t>(csize));
        const std::uint8_t* data = archive.data() + data_start;

        Bytes content;
        if (method == 0) {
            if (csize != usize) throw FormatError(name + ": stored entry size mismatch");
            content.assign(data, data + csize);
        } else if (method == 8) {
            content = inflate_raw(data, static_cast<std::size_t>(csize), static_cast<std::size_t>(usize), name);
        } else {
            throw FormatError(name + ": unsupported compression method " + std::to_string(method));
        }
        if (crc_of(content) != crc) {
            throw FormatError(name + ": CRC mismatch");
        }
        members.emplace(name, std::move(content));
    }
    return members;
}

Bytes write_zip(const std::map<std::string, Bytes>& members, bool deflate) {
    Bytes out;
    Bytes central;
    for (const auto& [name, content] : members) {
        const Bytes packed = deflate ? deflate_raw(content) : content;
        const std::uint32_t crc = crc_of(content);
        const std::uint16_t method = deflate ? 8 : 0;
        const auto offset = out.size();
        if (offset > 0xFFFFFFFFull || packed.size() > 0xFFFFFFFFull || content.size() > 0xFFFFFFFFull) {
            throw Error("archive too large for a plain zip file");
        }

        put_le(out, kLocalHeaderSig, 4);
        put_le(out, 20, 2);  // version needed
        put_le(out, 0, 2);   // flags
        put_le(out, method, 2);
        put_le(out, 0, 2);   // time
        put_le(out, 0x21, 2);  // date 1980-01-01
        put_le(out, crc, 4);
        put_le(out, packed.size(), 4);
        put_le(out, content.size(), 4);
        put_le(out, name.size(), 2);
        put_le(out, 0, 2);
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), packed.begin(), packed.end());

        put_le(central, kCentralHeaderSig, 4);
        put_le(central, 20, 2);  // version made by
        put_le(central, 20, 2);
        put_le(central, 0, 2);
        put_le(central, method, 2);
        put_le(central, 0, 2);
        put_le(central, 0x21, 2);
        put_le(central, crc, 4);
        put_le(central, packed.size(), 4);
        put_le(central, content.size(), 4);
        put_le(central, name.size(), 2);
        put_le(central, 0, 2);  // extra
        put_le(central, 0, 2);  // comment
        put_le(central, 0, 2);  // disk
        put_le(central, 0, 2);  // internal attributes
        put_le(central, 0, 4);  // external attributes
        put_le(central, offset, 4);
        central.insert(central.end(), name.begin(), name.end());
    }
    const auto cd_offset = out.size();
    out.insert(out.end(), central.begin(), central.end());
    put_le(out, kEndOfCentralSig, 4);
    put_le(out, 0, 2);
    put_le(out, 0, 2);
    put_le(out, members.size(), 2);
    put_le(out, members.size(), 2);
    put_le(out, central.size(), 4);
    put_le(out, cd_offset, 4);
    put_le(out, 0, 2);
    return out;
}

Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("write to '" + path + "' failed");
    }
}

DatasetSplits load_npz_dataset(const std::string& path) {
    const auto members = read_zip(read_file(path));
    DatasetSplits splits;
    splits.train = decode_split(members, "train");
    splits.val = decode_split(members, "val");
    splits.test = decode_split(members, "test");
    if (splits.val.pixels() != splits.train.pixels() || splits.test.pixels() != splits.train.pixels()) {
        throw FormatError("splits disagree on the image size");
    }

    Index classes = 2;
    for (const Dataset* d : {&splits.train, &splits.val, &splits.test}) {
        for (const Index label : d->labels) classes = std::max(classes, label + 1);
    }
    for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
        d->num_classes = classes;
        d->validate();
    }
    return splits;
}

void save_npz_dataset(const DatasetSplits& splits, const std::string& path, bool deflate) {
    std::map<std::string, Bytes> members;
    const std::pair<const char*, const Dataset*> named[] = {
        {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
    for (const auto& [split, d] : named) {
        d->validate();
        const auto n = static_cast<std::size_t>(d->size());
        const auto pixels = static_cast<std::size_t>(d->pixels());
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
        Bytes image_bytes(n * pixels);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < pixels; ++p) {
                image_bytes[i * pixels + p] = static_cast<std::uint8_t>(
                    std::lround(d->images(static_cast<Index>(i), static_cast<Index>(p)) * 255.0));
            }
        }
        Bytes label_bytes(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (d->labels[i] > 255) throw DataError("labels above 255 cannot be stored as uint8");
            label_bytes[i] = static_cast<std::uint8_t>(d->labels[i]);
        }
        const std::vector<std::size_t> image_shape =
            side * side == pixels ? std::vector<std::size_t>{n, side, side} : std::vector<std::size_t>{n, pixels};
        members[std::string(split) + "_images.npy"] = encode_npy_u8(image_shape, image_bytes);
        members[std::string(split) + "_labels.npy"] = encode_npy_u8({n, 1}, label_bytes);
    }
    write_file(path, write_zip(members, deflate));
}

}  // namespace lmm
