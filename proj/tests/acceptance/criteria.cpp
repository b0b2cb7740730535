#include "criteria.hpp"

#include "../support/oracles.hpp"
#include "lmm/evalx.hpp"
#include "lmm/explain.hpp"
#include "lmm/init.hpp"
#include "lmm/io.hpp"
#include "lmm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

namespace lmm::acceptance {

namespace {

struct Verdict {
    bool passed = false;
    std::string detail;
};

Outcome timed(int id, std::string title, double budget, const std::function<Verdict()>& body) {
    Outcome out;
    out.id = id;
    out.title = std::move(title);
    out.budget_seconds = budget;
    const auto start = std::chrono::steady_clock::now();
    try {
        const Verdict v = body();
        out.status = v.passed ? Status::pass : Status::fail;
        out.detail = v.detail;
    } catch (const std::exception& e) {
        out.status = Status::fail;
        out.detail = std::string("exception: ") + e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (out.status == Status::pass && budget > 0.0 && out.seconds > budget) {
        out.status = Status::fail;
        out.detail += " (over the time budget)";
    }
    return out;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

MedoidSet<double> random_medoids(std::mt19937_64& rng, Index pixels, Index count, Index classes) {
    MedoidSet<double> m;
    m.num_classes = classes;
    m.medoids = Matrix<double>(count, pixels);
    std::uniform_real_distribution<double> value(0.0, 1.0);
    std::uniform_int_distribution<Index> label(0, classes - 1);
    for (Index h = 0; h < count; ++h) {
        for (Index p = 0; p < pixels; ++p) m.medoids(h, p) = value(rng);
        m.labels.push_back(h < classes ? h : label(rng));
        m.source_indices.push_back(h);
    }
    std::shuffle(m.labels.begin(), m.labels.end(), rng);
    return m;
}

// Two 1-D clusters at 0.1 and 0.9 with sigma 0.02.
Dataset two_cluster_task(Index per_class, std::uint64_t seed, const std::string& split) {
    Matrix<double> centers(2, 1);
    centers << 0.1, 0.9;
    Dataset d = synth_dataset(1, per_class, centers, 0.02, seed);
    d.split = split;
    return d;
}

}  // namespace

Outcome parameter_count() {
    return timed(1, "parameter count for P=784, H1=25, C=2", 1.0, [] {
        const LmmParams<double> params(784, 25, 2);
        const Index count = params.parameter_count();
        return Verdict{count == 40818, "counted " + std::to_string(count) + ", expected 40818"};
    });
}

Outcome init_matches_nearest_medoid(Scale scale) {
    return timed(2, "medoid init predicts the L-inf nearest medoid", 10.0, [scale] {
        std::mt19937_64 rng(2024);
        const Index inputs = scale == Scale::full ? 1000 : 200;
        Index checked = 0;
        Index mismatches = 0;
        for (const Index pixels : {Index{2}, Index{8}, Index{784}}) {
            for (const double k0 : {0.1, 1.0, 10.0}) {
                MedoidSet<double> medoids;
                LmmParams<double> params;
                for (Index n = 0; n < inputs; ++n) {
                    if (n % 10 == 0) {
                        std::uniform_int_distribution<Index> count(2, 12);
                        std::uniform_int_distribution<Index> classes(2, 3);
                        const Index c = classes(rng);
                        medoids = random_medoids(rng, pixels, std::max(count(rng), c), c);
                        params = init_params(medoids, k0);
                    }
                    const Vector<double> x = oracle::random_input(rng, pixels);
                    ++checked;
                    if (forward(params, x).predicted != nearest_medoid_predict(medoids, x)) ++mismatches;
                }
            }
        }
        return Verdict{mismatches == 0, std::to_string(checked - mismatches) + "/" + std::to_string(checked) +
                                            " inputs agree (P in {2,8,784}, K0 in {0.1,1,10})"};
    });
}

Outcome forward_matches_enumeration(Scale scale) {
    return timed(3, "forward equals exhaustive min/max evaluation", 5.0, [scale] {
        std::mt19937_64 rng(7);
        const int trials = scale == Scale::full ? 1000 : 200;
        double worst = 0.0;
        int index_mismatch = 0;
        for (int t = 0; t < trials; ++t) {
            const auto shape = oracle::random_shape(rng, 4, 4, 3);
            const auto params = oracle::random_params(rng, shape);
            const Vector<double> x = oracle::random_input(rng, shape.pixels, -1.0, 2.0);
            const auto trace = forward(params, x);
            const auto brute = oracle::brute_forward(params, x);
            worst = std::max({worst, (trace.lambda - brute.lambda).cwiseAbs().maxCoeff(),
                              (trace.g - brute.g).cwiseAbs().maxCoeff(), (trace.z - brute.z).cwiseAbs().maxCoeff()});
            if (trace.argmin != brute.argmin || trace.argmax != brute.argmax || trace.predicted != brute.predicted) {
                ++index_mismatch;
            }
        }
        return Verdict{worst <= 1e-12 && index_mismatch == 0,
                       fmt("%g random instances, max |diff| = %.3g, winner mismatches = %g", trials, worst,
                           index_mismatch)};
    });
}

Outcome subgradient_matches_finite_differences(Scale scale) {
    return timed(4, "sparse subgradient matches central differences", 30.0, [scale] {
        std::mt19937_64 rng(11);
        const int points = scale == Scale::full ? 500 : 100;
        const double step = 1e-6;
        int accepted = 0;
        int failures = 0;
        double worst_rel = 0.0;
        double worst_zero = 0.0;
        while (accepted < points) {
            const auto shape = oracle::random_shape(rng, 4, 4, 3);
            const auto params = oracle::random_params(rng, shape);
            const Vector<double> x = oracle::random_input(rng, shape.pixels);
            if (oracle::winner_margin(params, x) <= 1e-3) continue;
            ++accepted;
            std::uniform_int_distribution<Index> label(0, shape.classes - 1);
            const Index y = label(rng);

            DenseGrad analytic = DenseGrad::zeros_like(params);
            analytic.add(sparse_subgradient(params, x, y));
            const DenseGrad numeric = oracle::finite_difference_gradient(params, x, y, step);

            // Entries the sparse gradient touches are the nonzero ones.
            DenseGrad touched = DenseGrad::zeros_like(params);
            for (const auto& t : sparse_subgradient(params, x, y).terms) {
                touched.w2(t.neuron, t.cls) = 1.0;
                touched.w1(t.branch, t.neuron) = 1.0;
                touched.k(t.branch) = 1.0;
            }
            const double scale_ref = std::max({1.0, numeric.k.cwiseAbs().maxCoeff(),
                                               numeric.w1.cwiseAbs().maxCoeff(), numeric.w2.cwiseAbs().maxCoeff()});
            bool ok = true;
            auto check = [&](double a, double n, bool nonzero) {
                if (nonzero) {
                    const double denom = std::max(std::abs(a), std::abs(n));
                    const double rel = denom == 0.0 ? 0.0 : std::abs(a - n) / denom;
                    if (denom < 1e-7 * scale_ref) return;  // analytically cancelled entry
                    worst_rel = std::max(worst_rel, rel);
                    if (rel > 1e-5) ok = false;
                } else {
                    worst_zero = std::max(worst_zero, std::abs(n) / scale_ref);
                    if (a != 0.0 || std::abs(n) >= 1e-7 * scale_ref) ok = false;
                }
            };
            for (Index i = 0; i < params.k.size(); ++i) check(analytic.k(i), numeric.k(i), touched.k(i) != 0.0);
            for (Index h = 0; h < params.hidden(); ++h)
                for (Index i = 0; i < params.w1.rows(); ++i)
                    check(analytic.w1(i, h), numeric.w1(i, h), touched.w1(i, h) != 0.0);
            for (Index h = 0; h < params.hidden(); ++h)
                for (Index d = 0; d < params.classes(); ++d)
                    check(analytic.w2(h, d), numeric.w2(h, d), touched.w2(h, d) != 0.0);
            if (!ok) ++failures;
        }
        return Verdict{failures == 0, fmt("%g points, worst relative error %.3g, worst |FD|/scale on zero entries %.3g",
                                          points, worst_rel, worst_zero) +
                                          ", failing points: " + std::to_string(failures)};
    });
}

Outcome fragility_formula_suite(Scale scale) {
    return timed(5, "fragility formulas: slack >= 0, S-bar >= S, F = min S-bar, interval scan", 60.0, [scale] {
        std::mt19937_64 rng(5);
        const int nets = scale == Scale::full ? 1000 : 100;
        const Index grid = 10000;
        int slack_bad = 0, order_bad = 0, min_bad = 0, interval_bad = 0;
        for (int t = 0; t < nets; ++t) {
            auto shape = oracle::random_shape(rng, 4, 4, 2);
            shape.classes = 2;
            const auto params = oracle::random_params(rng, shape);
            const Vector<double> x = oracle::random_input(rng, shape.pixels);
            const auto trace = forward(params, x);
            const Index c = trace.predicted;

            const auto map = pixel_fragility(params, x);
            const Vector<double> reference = oracle::fragility_reference(params, x);
            for (Index p = 0; p < shape.pixels; ++p) {
                const double a = map.scores(p);
                const double b = reference(p);
                if (!(a == b || std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)))) ++min_bad;
            }
            for (Index h = 0; h < shape.hidden; ++h) {
                if (slack(params, trace, h, c) < 0.0) ++slack_bad;
                for (Index p = 0; p < shape.pixels; ++p) {
                    const double s = sensitivity(params, trace, x, p, h);
                    const double sbar = extended_sensitivity(params, trace, x, p, h, c);
                    if (sbar < s) ++order_bad;

                    // Interval of pixel offsets keeping both branch terms >= g_h.
                    const double g = trace.g(h);
                    const double w_plus = params.w1(plus_branch(p), h);
                    const double w_minus = params.w1(minus_branch(p), h);
                    const double lo = (g - w_plus) / params.k_plus(p) - x(p);
                    const double hi = (w_minus - g) / params.k_minus(p) - x(p);
                    if (!(hi > lo)) continue;
                    const bool other_branch_wins = branch_pixel(trace.argmin[static_cast<std::size_t>(h)]) != p;
                    for (Index k = 0; k < grid; ++k) {
                        const double v = lo + (static_cast<double>(k) + 0.5) / static_cast<double>(grid) * (hi - lo);
                        const double xp = x(p) + v;
                        const double plus_term = params.k_plus(p) * xp + w_plus;
                        const double minus_term = -params.k_minus(p) * xp + w_minus;
                        if (plus_term < g - 1e-12 || minus_term < g - 1e-12) {
                            ++interval_bad;
                            break;
                        }
                        if (other_branch_wins) {
                            double gh = std::numeric_limits<double>::infinity();
                            for (Index i = 0; i < params.w1.rows(); ++i) {
                                const double xi = branch_pixel(i) == p ? xp : x(branch_pixel(i));
                                const double lam = is_plus_branch(i) ? params.k(i) * xi : -params.k(i) * xi;
                                gh = std::min(gh, lam + params.w1(i, h));
                            }
                            if (std::abs(gh - g) > 1e-12) {
                                ++interval_bad;
                                break;
                            }
                        }
                    }
                }
            }
        }
        std::ostringstream detail;
        detail << nets << " nets: slack<0: " << slack_bad << ", S-bar<S: " << order_bad
               << ", F != min S-bar: " << min_bad << ", interval violations: " << interval_bad;
        return Verdict{slack_bad == 0 && order_bad == 0 && min_bad == 0 && interval_bad == 0, detail.str()};
    });
}

Outcome synthetic_training(Scale scale) {
    return timed(6, "two-cluster 1-D task reaches 100% train accuracy in 20 epochs", 30.0, [scale] {
        const int seeds = scale == Scale::full ? 10 : 3;
        int perfect = 0;
        for (int s = 0; s < seeds; ++s) {
            const Dataset train_set = two_cluster_task(100, 100 + static_cast<std::uint64_t>(s), "train");
            const Dataset val_set = two_cluster_task(50, 900 + static_cast<std::uint64_t>(s), "val");
            const auto medoids = select_medoids(train_set, 2, MedoidStrategy::greedy_kmedoids, s);
            TrainConfig cfg;
            cfg.epochs = 20;
            cfg.seed = static_cast<std::uint64_t>(s);
            const auto result = train(init_params(medoids, 1.0), train_set, val_set, cfg);
            if (accuracy(result.params, train_set) == 1.0) ++perfect;
        }
        const int needed = scale == Scale::full ? 9 : 3;
        return Verdict{perfect >= needed, std::to_string(perfect) + "/" + std::to_string(seeds) +
                                              " seeds perfect (need " + std::to_string(needed) + ")"};
    });
}

Outcome calibration_on_synthetic_images(Scale scale) {
    return timed(8, "temperature calibration hits mean confidence 0.800 +- 0.005 (synthetic 28x28 split)", 10.0,
                 [scale] {
                     const Index per_class = scale == Scale::full ? 150 : 60;
                     const Dataset train_set = oracle::synthetic_image_task(per_class, 0.25, 31, "train");
                     const Dataset val_set = oracle::synthetic_image_task(per_class / 2, 0.25, 32, "val");
                     const auto medoids = select_medoids(train_set, 10, MedoidStrategy::greedy_kmedoids, 0);
                     TrainConfig cfg;
                     cfg.epochs = 5;
                     auto params = train(init_params(medoids, 1.0), train_set, val_set, cfg).params;
                     const double t = calibrate_temperature(params, val_set, 0.8);
                     std::vector<Vector<double>> z;
                     for (Index n = 0; n < val_set.size(); ++n) z.push_back(forward(params, val_set.image(n)).z);
                     const double mean = mean_confidence(z, params.temperature);
                     return Verdict{std::abs(mean - 0.8) <= 0.005,
                                    fmt("T = %.6g, mean predicted-class probability = %.6f", t, mean)};
                 });
}

Outcome shapley_efficiency(Scale scale) {
    return timed(10, "Shapley permutation contributions telescope to z_c(x) - z_c(baseline)", 10.0, [scale] {
        std::mt19937_64 rng(10);
        const int cases = scale == Scale::full ? 100 : 30;
        double worst = 0.0;
        int bad = 0;
        for (int t = 0; t < cases; ++t) {
            const auto shape = oracle::random_shape(rng, 16, 6, 3);
            const auto params = oracle::random_params(rng, shape);
            const Vector<double> x = oracle::random_input(rng, shape.pixels);
            const Vector<double> baseline = Vector<double>::Constant(shape.pixels, 0.5);
            const Index c = oracle::brute_forward(params, x).predicted;
            const double target = oracle::brute_forward(params, x).z(c) - oracle::brute_forward(params, baseline).z(c);

            std::vector<Index> order(static_cast<std::size_t>(shape.pixels));
            std::iota(order.begin(), order.end(), Index{0});
            for (int r = 0; r < 5; ++r) {
                std::shuffle(order.begin(), order.end(), rng);
                const Vector<double> contrib = shapley_permutation_contributions(params, x, baseline, order, c);
                const double gap = std::abs(contrib.sum() - target);
                const double tol = 1e-12 * std::max(1.0, contrib.cwiseAbs().sum());
                worst = std::max(worst, gap);
                if (gap > tol) ++bad;
            }
            const auto map = shapley_sampling(params, x, baseline, 20, static_cast<std::uint64_t>(t));
            const double gap = std::abs(map.scores.sum() - target);
            worst = std::max(worst, gap);
            if (gap > 1e-12 * std::max(1.0, map.scores.cwiseAbs().sum())) ++bad;
        }
        return Verdict{bad == 0, fmt("%g cases, max |sum - target| = %.3g, violations = %g", cases, worst, bad)};
    });
}

Outcome serialization_round_trip() {
    return timed(11, "model file round trip is bit-exact; (784,25,2) file is 326,572 bytes", 2.0, [] {
        std::mt19937_64 rng(3);
        auto params = oracle::random_params(rng, {784, 25, 2});
        params.temperature = 0.7213475204444817;
        const auto path = std::filesystem::temp_directory_path() / ("lmm_acceptance_" + std::to_string(::getpid()) + ".lmmp");
        save_model(params, path.string());
        const auto size = std::filesystem::file_size(path);
        const auto loaded = load_model(path.string());
        std::filesystem::remove(path);

        const bool same = loaded.temperature == params.temperature &&
                          std::memcmp(loaded.k.data(), params.k.data(), sizeof(double) * params.k.size()) == 0 &&
                          std::memcmp(loaded.w1.data(), params.w1.data(), sizeof(double) * params.w1.size()) == 0 &&
                          std::memcmp(loaded.w2.data(), params.w2.data(), sizeof(double) * params.w2.size()) == 0;
        // 4-byte magic + four u32 fields + f64 temperature + 40,818 f64 weights.
        const std::uintmax_t expected = 4 + 4 * 4 + 8 + 8 * 40818;
        return Verdict{same && size == expected && expected == 326572,
                       std::string(same ? "bitwise identical" : "MISMATCH") + ", file size " + std::to_string(size) +
                           " bytes (layout requires " + std::to_string(expected) + ")"};
    });
}

std::vector<Outcome> run_core_suite(Scale scale) {
    return {parameter_count(),
            init_matches_nearest_medoid(scale),
            forward_matches_enumeration(scale),
            subgradient_matches_finite_differences(scale),
            fragility_formula_suite(scale),
            synthetic_training(scale),
            calibration_on_synthetic_images(scale),
            shapley_efficiency(scale),
            serialization_round_trip()};
}

std::vector<Outcome> run_pneumonia_suite(const std::string& archive_path, int threads) {
    const std::vector<std::pair<int, std::string>> titles = {
        {7, "PneumoniaMNIST test accuracy >= 0.72 (H1 = 25, default training)"},
        {8, "PneumoniaMNIST calibration: mean confidence 0.800 +- 0.005 on val"},
        {9, "PneumoniaMNIST fidelity: fragility < intgrad, shapley < intgrad, fragility <= 0.62"}};
    std::vector<Outcome> out;
    if (archive_path.empty() || !std::filesystem::exists(archive_path)) {
        for (const auto& [id, title] : titles) {
            Outcome o;
            o.id = id;
            o.title = title;
            o.status = Status::skip;
            o.detail = "archive not found (set LMM_PNEUMONIA_NPZ to pneumoniamnist.npz)";
            out.push_back(o);
        }
        return out;
    }

    DatasetSplits splits;
    LmmParams<double> params;
    out.push_back(timed(7, titles[0].second, 900.0, [&] {
        splits = load_npz_dataset(archive_path);
        const auto medoids = select_medoids(splits.train, 25, MedoidStrategy::greedy_kmedoids, 0);
        TrainConfig cfg;
        cfg.threads = threads;
        const auto result = train(init_params(medoids, 1.0), splits.train, splits.val, cfg);
        params = result.params;
        const auto confusion = confusion_matrix(params, splits.test, threads);
        const double acc = accuracy(confusion);
        std::ostringstream detail;
        detail << "splits " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
               << ", best epoch " << result.best_epoch << ", test confusion [[" << confusion(0, 0) << ","
               << confusion(0, 1) << "],[" << confusion(1, 0) << "," << confusion(1, 1) << "]], accuracy "
               << fmt("%.4f", acc);
        return Verdict{acc >= 0.72, detail.str()};
    }));
    const bool trained = out.back().detail.rfind("exception", 0) != 0;

    out.push_back(timed(8, titles[1].second, 10.0, [&] {
        if (!trained) return Verdict{false, "no trained model"};
        calibrate_temperature(params, splits.val, 0.8);
        std::vector<Vector<double>> z;
        for (Index n = 0; n < splits.val.size(); ++n) z.push_back(forward(params, splits.val.image(n)).z);
        const double mean = mean_confidence(z, params.temperature);
        return Verdict{std::abs(mean - 0.8) <= 0.005, fmt("T = %.6g, mean confidence %.6f", params.temperature, mean)};
    }));

    out.push_back(timed(9, titles[2].second, 600.0, [&] {
        if (!trained) return Verdict{false, "no trained model"};
        FidelityOptions options;
        options.threads = threads;
        const double frag = fidelity(params, make_explainer(Method::fragility), splits.test, options);
        const double ig = fidelity(params, make_explainer(Method::intgrad), splits.test, options);
        const double shap = fidelity(params, make_explainer(Method::shapley), splits.test, options);
        return Verdict{frag < ig && shap < ig && frag <= 0.62,
                       fmt("fidelity fragility %.4f, shapley %.4f, intgrad %.4f", frag, shap, ig)};
    }));
    return out;
}

std::string format_outcome(const Outcome& o) {
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::skip ? "SKIP" : "FAIL";
    char head[64];
    std::snprintf(head, sizeof head, "[%s] AC-%02d ", tag, o.id);
    char tail[64];
    std::snprintf(tail, sizeof tail, " (%.2f s)", o.seconds);
    return std::string(head) + o.title + ": " + o.detail + tail;
}

bool report(const std::vector<Outcome>& outcomes) {
    bool ok = true;
    for (const auto& o : outcomes) {
        std::cout << format_outcome(o) << std::endl;
        ok = ok && o.status != Status::fail;
    }
    return ok;
}

}  // namespace lmm::acceptance
