#include "lmm/init.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace lmm {

MedoidStrategy parse_medoid_strategy(const std::string& name) {
    if (name == "random") return MedoidStrategy::random;
    if (name == "greedy-kmedoids") return MedoidStrategy::greedy_kmedoids;
    throw ParameterError("unknown medoid strategy '" + name + "' (expected random or greedy-kmedoids)");
}

std::string to_string(MedoidStrategy strategy) {
    return strategy == MedoidStrategy::random ? "random" : "greedy-kmedoids";
}

std::vector<Index> allocate_neurons(const std::vector<Index>& class_counts, Index hidden) {
    const auto classes = static_cast<Index>(class_counts.size());
    if (hidden < classes) {
        throw ParameterError("H1 = " + std::to_string(hidden) + " is smaller than the class count " +
                             std::to_string(classes));
    }
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        if (class_counts[c] <= 0) {
            throw DataError("class " + std::to_string(c) + " has no training samples");
        }
    }
    const Index total = std::accumulate(class_counts.begin(), class_counts.end(), Index{0});
    if (hidden > total) {
        throw ParameterError("H1 = " + std::to_string(hidden) + " exceeds the training set size " +
                             std::to_string(total));
    }

    // Classes by decreasing size, ties by class index.
    std::vector<std::size_t> by_size(class_counts.size());
    std::iota(by_size.begin(), by_size.end(), std::size_t{0});
    std::stable_sort(by_size.begin(), by_size.end(),
                     [&](std::size_t a, std::size_t b) { return class_counts[a] > class_counts[b]; });

    std::vector<Index> alloc(class_counts.size());
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        const Index share = hidden * class_counts[c] / total;
        alloc[c] = std::min(std::max<Index>(share, 1), class_counts[c]);
    }
    Index assigned = std::accumulate(alloc.begin(), alloc.end(), Index{0});

    // Minimum-one bumps can overshoot; take back from the largest classes.
    while (assigned > hidden) {
        for (const std::size_t c : by_size) {
            if (assigned > hidden && alloc[c] > 1) {
                --alloc[c];
                --assigned;
            }
        }
    }
    while (assigned < hidden) {
        for (const std::size_t c : by_size) {
            if (assigned < hidden && alloc[c] < class_counts[c]) {
                ++alloc[c];
                ++assigned;
            }
        }
    }
    return alloc;
}

namespace {

std::vector<Index> random_pick(const std::vector<Index>& members, Index count, std::mt19937_64& rng) {
    std::vector<Index> pool = members;
    for (Index i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(count));
    return pool;
}

std::vector<Index> greedy_build(const Dataset& train, const std::vector<Index>& members, Index count) {
    const auto n = static_cast<Index>(members.size());
    if (count >= n) {
        return members;
    }

    Matrix<double> distance(n, n);
    for (Index a = 0; a < n; ++a) {
        distance(a, a) = 0.0;
        const auto row_a = train.images.row(members[static_cast<std::size_t>(a)]);
        for (Index b = a + 1; b < n; ++b) {
            const double d = (row_a - train.images.row(members[static_cast<std::size_t>(b)])).cwiseAbs().maxCoeff();
            distance(a, b) = d;
            distance(b, a) = d;
        }
    }

    Vector<double> nearest = Vector<double>::Constant(n, std::numeric_limits<double>::infinity());
    std::vector<bool> chosen(static_cast<std::size_t>(n), false);
    std::vector<Index> picked;
    picked.reserve(static_cast<std::size_t>(count));
    for (Index step = 0; step < count; ++step) {
        Index best = -1;
        double best_cost = std::numeric_limits<double>::infinity();
        for (Index candidate = 0; candidate < n; ++candidate) {
            if (chosen[static_cast<std::size_t>(candidate)]) {
                continue;
            }
            const double cost = nearest.cwiseMin(distance.col(candidate)).sum();
            if (best < 0 || cost < best_cost) {
                best = candidate;
                best_cost = cost;
            }
        }
        chosen[static_cast<std::size_t>(best)] = true;
        nearest = nearest.cwiseMin(distance.col(best));
        picked.push_back(members[static_cast<std::size_t>(best)]);
    }
    return picked;
}

}  // namespace

MedoidSet<double> select_medoids(const Dataset& train, Index hidden, MedoidStrategy strategy,
                                 std::uint64_t seed) {
    train.validate();
    const Index classes = train.num_classes;
    const auto alloc = allocate_neurons(train.class_counts(), hidden);

    std::vector<std::vector<Index>> members(static_cast<std::size_t>(classes));
    for (Index n = 0; n < train.size(); ++n) {
        members[static_cast<std::size_t>(train.label(n))].push_back(n);
    }

    std::mt19937_64 rng(seed);
    MedoidSet<double> out;
    out.num_classes = classes;
    out.medoids.resize(hidden, train.pixels());
    Index row = 0;
    for (Index c = 0; c < classes; ++c) {
        const auto& pool = members[static_cast<std::size_t>(c)];
        const Index count = alloc[static_cast<std::size_t>(c)];
        const auto picked = strategy == MedoidStrategy::random ? random_pick(pool, count, rng)
                                                               : greedy_build(train, pool, count);
        for (const Index source : picked) {
            out.medoids.row(row++) = train.images.row(source);
            out.labels.push_back(c);
            out.source_indices.push_back(source);
        }
    }
    return out;
}

}  // namespace lmm
