#include "lmm/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace lmm {

Bytes render_pgm(const ImportanceMap& map) {
    const Index pixels = map.scores.size();
    const auto side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(pixels))));
    if (pixels == 0 || side * side != pixels) {
        throw ParameterError("PGM export needs a square image, got " + std::to_string(pixels) + " pixels");
    }

    // Importance grows with brightness: |score| for attributions, -score for
    // fragility.
    Vector<double> importance(pixels);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Index p = 0; p < pixels; ++p) {
        const double s = map.scores(p);
        importance(p) = map.ordering == Ordering::ascending ? -s : std::abs(s);
        if (std::isfinite(importance(p))) {
            lo = std::min(lo, importance(p));
            hi = std::max(hi, importance(p));
        }
    }

    const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    Bytes out(header.begin(), header.end());
    for (Index p = 0; p < pixels; ++p) {
        std::uint8_t level = 0;
        if (std::isfinite(importance(p))) {
            level = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (importance(p) - lo) / (hi - lo))) : 128;
        }
        out.push_back(level);
    }
    return out;
}

std::string render_csv(const ImportanceMap& map) {
    std::ostringstream out;
    char line[64];
    for (Index p = 0; p < map.scores.size(); ++p) {
        std::snprintf(line, sizeof line, "%lld,%.17g\n", static_cast<long long>(p), map.scores(p));
        out << line;
    }
    return out.str();
}

Vector<double> parse_csv_scores(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError("CSV line without comma: " + line);
        }
        const auto index = std::strtoll(line.c_str(), nullptr, 10);
        if (index != static_cast<long long>(values.size())) {
            throw FormatError("CSV rows out of order at index " + std::to_string(index));
        }
        values.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
    }
    return Eigen::Map<const Vector<double>>(values.data(), static_cast<Index>(values.size()));
}

void export_map(const ImportanceMap& map, const std::string& path, MapFormat format) {
    if (format == MapFormat::pgm) {
        write_file(path, render_pgm(map));
    } else {
        const std::string text = render_csv(map);
        write_file(path, Bytes(text.begin(), text.end()));
    }
}

}  // namespace lmm
