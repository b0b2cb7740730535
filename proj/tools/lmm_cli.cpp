#include "acceptance/criteria.hpp"
#include "lmm/error.hpp"
#include "lmm/evalx.hpp"
#include "lmm/explain.hpp"
#include "lmm/init.hpp"
#include "lmm/io.hpp"
#include "lmm/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<lmm::Method> parse_methods(const std::string& list) {
    std::vector<lmm::Method> out;
    std::stringstream in(list);
    std::string name;
    while (std::getline(in, name, ',')) {
        if (!name.empty()) out.push_back(lmm::parse_method(name));
    }
    if (out.empty()) throw lmm::ParameterError("--methods: no method given");
    return out;
}

std::string format_confusion(const lmm::ConfusionMatrix& confusion) {
    std::ostringstream out;
    out << "  true\\pred";
    for (lmm::Index d = 0; d < confusion.cols(); ++d) out << '\t' << d;
    out << '\n';
    for (lmm::Index r = 0; r < confusion.rows(); ++r) {
        out << "  " << r;
        for (lmm::Index d = 0; d < confusion.cols(); ++d) out << '\t' << confusion(r, d);
        out << '\n';
    }
    return out.str();
}

struct TrainArgs {
    std::string data;
    std::string out;
    lmm::Index h1 = 25;
    std::string strategy = "greedy-kmedoids";
    double k0 = 1.0;
    double target = 0.8;
    lmm::TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
    const auto splits = lmm::load_npz_dataset(a.data);
    const auto medoids = lmm::select_medoids(splits.train, a.h1, lmm::parse_medoid_strategy(a.strategy), a.cfg.seed);
    const auto result = lmm::train(lmm::init_params(medoids, a.k0), splits.train, splits.val, a.cfg,
                                   [](const lmm::EpochStats& s) {
                                       std::printf("epoch %3lld  loss %.6f  train_acc %.4f  val_acc %.4f\n",
                                                   static_cast<long long>(s.epoch), s.train_loss, s.train_accuracy,
                                                   s.val_accuracy);
                                   });
    auto params = result.params;
    const double t = lmm::calibrate_temperature(params, splits.val, a.target);
    lmm::save_model(params, a.out);
    std::printf("best epoch %lld  val_acc %.4f  temperature %.9g\nwrote %s\n",
                static_cast<long long>(result.best_epoch), result.best_val_accuracy, t, a.out.c_str());
    return kOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path, int threads) {
    const auto params = lmm::load_model(model_path);
    const auto splits = lmm::load_npz_dataset(data_path);
    std::printf("temperature %.9g\n", params.temperature);
    for (const char* name : {"train", "val", "test"}) {
        const auto& data = splits.by_name(name);
        if (data.size() == 0) continue;
        const auto confusion = lmm::confusion_matrix(params, data, threads);
        std::printf("%s (%lld images)  accuracy %.4f\n%s", name, static_cast<long long>(data.size()),
                    lmm::accuracy(confusion), format_confusion(confusion).c_str());
    }
    return kOk;
}

struct ExplainArgs {
    std::string model;
    std::string data;
    std::string split = "test";
    lmm::Index index = 0;
    std::string method = "fragility";
    std::string out;
    std::string csv;
    lmm::ExplainerOptions options;
};

int cmd_explain(const ExplainArgs& a) {
    const auto params = lmm::load_model(a.model);
    const auto splits = lmm::load_npz_dataset(a.data);
    const auto& data = splits.by_name(a.split);
    if (a.index < 0 || a.index >= data.size()) {
        throw lmm::ParameterError("--index " + std::to_string(a.index) + " is outside the " + a.split + " split (" +
                                  std::to_string(data.size()) + " images)");
    }
    const auto explainer = lmm::make_explainer(lmm::parse_method(a.method), a.options);
    const auto map = explainer(params, data.image(a.index), a.index);
    if (!a.out.empty()) lmm::export_map(map, a.out, lmm::MapFormat::pgm);
    if (!a.csv.empty()) lmm::export_map(map, a.csv, lmm::MapFormat::csv);
    const auto trace = lmm::forward(params, lmm::Vector<double>(data.image(a.index)));
    std::printf("image %lld  label %lld  predicted %lld  p %.6f\n", static_cast<long long>(a.index),
                static_cast<long long>(data.label(a.index)), static_cast<long long>(trace.predicted),
                trace.probs(trace.predicted));
    return kOk;
}

struct MetricsArgs {
    std::string model;
    std::string data;
    std::string split = "test";
    std::string methods = "fragility,intgrad,shapley";
    std::string out;
    lmm::Index limit = 0;
    lmm::Index timing_images = 20;
    bool with_timing = false;
    lmm::FidelityOptions fidelity;
    lmm::StabilityOptions stability;
    lmm::ExplainerOptions explainer;
};

int cmd_metrics(MetricsArgs a, int threads) {
    const auto params = lmm::load_model(a.model);
    const auto splits = lmm::load_npz_dataset(a.data);
    lmm::Dataset data = splits.by_name(a.split);
    if (a.limit > 0 && a.limit < data.size()) {
        std::vector<lmm::Index> rows(static_cast<std::size_t>(a.limit));
        for (lmm::Index n = 0; n < a.limit; ++n) rows[static_cast<std::size_t>(n)] = n;
        data = data.subset(rows);
    }
    a.fidelity.threads = threads;
    a.stability.threads = threads;
    a.explainer.seed = a.stability.seed;

    lmm::MetricsReport report;
    report.split = a.split;
    report.images = data.size();
    report.confusion = lmm::confusion_matrix(params, data, threads);
    report.accuracy = lmm::accuracy(report.confusion);
    report.temperature = params.temperature;
    for (const auto method : parse_methods(a.methods)) {
        const auto explainer = lmm::make_explainer(method, a.explainer);
        lmm::MethodMetrics m;
        m.method = method;
        m.fidelity = lmm::fidelity(params, explainer, data, a.fidelity);
        m.stability = lmm::stability(params, explainer, data, a.stability);
        m.seconds_per_image = lmm::timing(params, explainer, data, std::min(a.timing_images, data.size()));
        report.methods.push_back(m);
    }
    std::cout << lmm::format_table(report);

    if (!a.out.empty()) {
        // Wall-clock timings would break byte-identical reports, so they are opt-in.
        lmm::MetricsReport saved = report;
        if (!a.with_timing) {
            for (auto& m : saved.methods) m.seconds_per_image = 0.0;
        }
        std::ofstream file(a.out, std::ios::binary);
        if (!file) throw lmm::DataError("cannot write --out file '" + a.out + "'");
        file << lmm::format_key_values(saved);
        if (!file) throw lmm::DataError("failed writing '" + a.out + "'");
    }
    return kOk;
}

int cmd_selftest() {
    const auto outcomes = lmm::acceptance::run_core_suite(lmm::acceptance::Scale::quick);
    return lmm::acceptance::report(outcomes) ? kOk : kNumeric;
}

struct SynthArgs {
    std::string out;
    lmm::Index per_class = 100;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

// Two-class 28x28 toy archive with class-specific bright bands.
int cmd_synth(const SynthArgs& a) {
    constexpr lmm::Index side = 28;
    lmm::Matrix<double> centers = lmm::Matrix<double>::Constant(2, side * side, 0.3);
    for (lmm::Index r = 6; r < 22; ++r) {
        for (lmm::Index c = 4; c < 12; ++c) centers(0, r * side + c) = 0.75;
        for (lmm::Index c = 16; c < 24; ++c) centers(1, r * side + c) = 0.75;
    }
    lmm::DatasetSplits splits;
    splits.train = lmm::synth_dataset(side * side, a.per_class, centers, a.noise, a.seed);
    splits.val = lmm::synth_dataset(side * side, std::max<lmm::Index>(1, a.per_class / 4), centers, a.noise, a.seed + 1);
    splits.test = lmm::synth_dataset(side * side, std::max<lmm::Index>(1, a.per_class / 4), centers, a.noise, a.seed + 2);
    lmm::save_npz_dataset(splits, a.out);
    std::printf("wrote %s\n", a.out.c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear-Min-Max-Plus classifiers: training, evaluation and pixel-fragility explanations"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a model, calibrate it on the val split and save it");
    train->add_option("--data", train_args.data, "MedMNIST-style .npz archive")->required()->check(CLI::ExistingFile);
    train->add_option("--out", train_args.out, "Output model file")->required();
    train->add_option("--h1", train_args.h1, "Hidden min-plus neurons");
    train->add_option("--strategy", train_args.strategy, "Medoid selection: random | greedy-kmedoids");
    train->add_option("--k0", train_args.k0, "Initial linear-layer scale");
    train->add_option("--epochs", train_args.cfg.epochs, "Training epochs");
    train->add_option("--batch", train_args.cfg.batch_size, "Minibatch size");
    train->add_option("--lr0", train_args.cfg.lr0, "Initial step size");
    train->add_option("--lr-decay", train_args.cfg.lr_decay, "Step size decay");
    train->add_option("--seed", train_args.cfg.seed, "Random seed");
    train->add_option("--target", train_args.target, "Calibration target confidence");

    std::string model_path;
    std::string data_path;
    auto* evaluate = app.add_subcommand("evaluate", "Print confusion matrices and accuracy for every split");
    evaluate->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--data", data_path, ".npz archive")->required()->check(CLI::ExistingFile);

    ExplainArgs explain_args;
    auto* explain = app.add_subcommand("explain", "Write the importance map of one image");
    explain->add_option("--model", explain_args.model, "Model file")->required()->check(CLI::ExistingFile);
    explain->add_option("--data", explain_args.data, ".npz archive")->required()->check(CLI::ExistingFile);
    explain->add_option("--split", explain_args.split, "train | val | test");
    explain->add_option("--index", explain_args.index, "Image index within the split")->required();
    explain->add_option("--method", explain_args.method, "fragility | intgrad | shapley");
    explain->add_option("--out", explain_args.out, "PGM output");
    explain->add_option("--csv", explain_args.csv, "CSV output");
    explain->add_option("--baseline", explain_args.options.baseline, "Baseline pixel value");
    explain->add_option("--ig-steps", explain_args.options.ig_steps, "Integrated gradients steps");
    explain->add_option("--permutations", explain_args.options.permutations, "Shapley permutations");
    explain->add_option("--seed", explain_args.options.seed, "Shapley seed");

    MetricsArgs metrics_args;
    auto* metrics = app.add_subcommand("metrics", "Fidelity, stability and timing per explainer");
    metrics->add_option("--model", metrics_args.model, "Model file")->required()->check(CLI::ExistingFile);
    metrics->add_option("--data", metrics_args.data, ".npz archive")->required()->check(CLI::ExistingFile);
    metrics->add_option("--split", metrics_args.split, "train | val | test");
    metrics->add_option("--methods", metrics_args.methods, "Comma-separated explainers");
    metrics->add_option("--steps", metrics_args.fidelity.steps, "Deletion steps");
    metrics->add_option("--fill", metrics_args.fidelity.fill, "Value of deleted pixels");
    metrics->add_option("--sigma", metrics_args.stability.sigma, "Stability noise level");
    metrics->add_option("--m", metrics_args.stability.m, "Perturbations per image");
    metrics->add_option("--seed", metrics_args.stability.seed, "Random seed");
    metrics->add_option("--limit", metrics_args.limit, "Use only the first N images");
    metrics->add_option("--ig-steps", metrics_args.explainer.ig_steps, "Integrated gradients steps");
    metrics->add_option("--permutations", metrics_args.explainer.permutations, "Shapley permutations");
    metrics->add_option("--timing-images", metrics_args.timing_images, "Images timed per method");
    metrics->add_option("--out", metrics_args.out, "Report file (metric.method = value lines)");
    metrics->add_flag("--with-timing", metrics_args.with_timing, "Also write timings to the report file");

    auto* selftest = app.add_subcommand("selftest", "Run the oracle and property suites at small scale");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Write a synthetic two-class 28x28 archive");
    synth->add_option("--out", synth_args.out, "Output .npz")->required();
    synth->add_option("--per-class", synth_args.per_class, "Training images per class");
    synth->add_option("--noise", synth_args.noise, "Gaussian noise sigma");
    synth->add_option("--seed", synth_args.seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        train_args.cfg.threads = threads;
        if (*train) return cmd_train(train_args);
        if (*evaluate) return cmd_evaluate(model_path, data_path, threads);
        if (*explain) return cmd_explain(explain_args);
        if (*metrics) return cmd_metrics(metrics_args, threads);
        if (*selftest) return cmd_selftest();
        if (*synth) return cmd_synth(synth_args);
    } catch (const lmm::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    } catch (const lmm::NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumeric;
    } catch (const lmm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
