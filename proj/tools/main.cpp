// qmr: dataset generation, regressor training, prediction, evaluation and
// benchmark reports from the command line.
//
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "qmr/benchmark.hpp"
#include "qmr/error.hpp"
#include "qmr/eval.hpp"
#include "qmr/modifiers.hpp"
#include "qmr/parallel.hpp"
#include "qmr/regressor.hpp"
#include "qmr/rng.hpp"
#include "qmr/sr.hpp"
#include "qmr/synthetic.hpp"
#include "run_context.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using namespace qmr;
using cli::RunContext;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    int threads = default_threads();
    std::string out;
    std::string log_level = "info";
};

// Score convention overrides: --<metric>-range/-objective/-weight.
struct ConventionOptions {
    ScoreConvention convention = ScoreConvention::defaults();

    void add_to(CLI::App* app) {
        for (auto& [kind, c] : convention.metrics) {
            const std::string m(to_string(kind));
            app->add_option("--" + m + "-range", c.range, "score range of " + m)->group("Score convention");
            app->add_option("--" + m + "-objective", c.objective, "score objective of " + m)->group("Score convention");
            app->add_option("--" + m + "-weight", c.weight, "score weight of " + m)->group("Score convention");
        }
    }
};

json convention_json(const ScoreConvention& c) {
    json j = json::object();
    for (const auto& [kind, m] : c.metrics)
        j[std::string(to_string(kind))] = {{"range", m.range}, {"objective", m.objective}, {"weight", m.weight}};
    return j;
}

json conventions(const ScoreConvention& c) {
    return {{"score", convention_json(c)},
            {"pixels", "luma in [0, 1] for networks; native range elsewhere"},
            {"rng", "mt19937_64 streams keyed by SplitMix64(seed, tags)"}};
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string fixed(double v, int decimals) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(decimals);
    os << (v == 0.0 ? 0.0 : v);
    return os.str();
}

std::vector<QmrNet> load_models(const std::vector<std::string>& paths) {
    std::vector<QmrNet> out;
    for (const auto& p : paths) out.push_back(load_model(p));
    return out;
}

std::vector<const QmrNet*> pointers(const std::vector<QmrNet>& nets) {
    std::vector<const QmrNet*> out;
    for (const auto& n : nets) out.push_back(&n);
    return out;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
    int count = 8;
    int width = 96;
    int height = 96;
};

json cmd_synth(RunContext& run, const Globals& g, const SynthOptions& o) {
    if (o.count < 1 || o.width < 8 || o.height < 8) throw UsageError("synth: count >= 1 and sizes >= 8 required");
    for (int i = 0; i < o.count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "images/scene_%03d.png", i);
        save_image(synthetic::textured_scene(o.width, o.height, derive_seed(g.seed, {0x5e, static_cast<std::uint64_t>(i)})),
                   run.path(name));
        run.add_output(name);
    }
    spdlog::info("wrote {} scenes to {}", o.count, run.path("images").string());
    return {{"images", o.count}};
}

// ---------------------------------------------------------------------------
// modify

struct GridOptions {
    std::optional<int> n;
    std::optional<double> lo, hi;

    void add_to(CLI::App* app) {
        app->add_option("--n", n, "number of grid intervals (default: per modifier)");
        app->add_option("--lo", lo, "lowest grid value");
        app->add_option("--hi", hi, "highest grid value");
    }
    ParamGrid grid(ModifierKind kind) const {
        const ParamGrid d = ParamGrid::defaults(kind);
        return ParamGrid(kind, n.value_or(d.n), lo.value_or(d.lo), hi.value_or(d.hi));
    }
    bool any() const { return n || lo || hi; }
};

struct ModifyOptions {
    std::string input;
    std::string modifier;
    GridOptions grid;
    int side = 64;
    int crops = 8;
};

json cmd_modify(RunContext& run, const Globals& g, const ModifyOptions& o) {
    const auto images = list_images(o.input);
    if (images.empty()) throw UsageError("modify: no PNG or TIFF images in " + o.input);
    const ParamGrid grid = o.grid.grid(parse_modifier(o.modifier));
    const auto manifest = generate_annotated_dataset(images, grid, o.side, o.crops, g.seed, run.path("dataset"), g.threads);
    manifest.save(run.path("dataset/manifest.jsonl"));
    run.add_output("dataset/manifest.jsonl");
    for (const auto& e : manifest.entries) run.add_output("dataset/" + e.output);
    spdlog::info("{} crops from {} images ({} skipped)", manifest.entries.size(), images.size(),
                 manifest.skipped.size());
    return {{"crops", manifest.entries.size()}, {"grid", grid_json(grid)}};
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string manifest;
    std::string input;
    std::vector<std::string> modifiers{"blur"};
    std::string topology = "single";
    GridOptions grid;
    RegressorConfig config;
};

json cmd_train(RunContext& run, const Globals& g, TrainOptions o) {
    if (o.manifest.empty() == o.input.empty()) throw UsageError("train: give exactly one of --manifest or --input");
    RegressorConfig c = o.config;
    c.topology = parse_topology(o.topology);
    auto log_epoch = [](const EpochLog& e) {
        spdlog::info("epoch {:3d} loss {:.4f} medR {:.2f} R@1 {:.1f} R@5 {:.1f}", e.epoch, e.loss, e.med_r, e.r_at_1,
                     e.r_at_5);
    };
    auto run_training = [&]() -> TrainResult {
        if (!o.manifest.empty()) {
            const auto manifest = DatasetManifest::load(o.manifest);
            if (o.grid.any()) c.grids = {o.grid.grid(manifest.grid.kind)};
            return train_from_manifest(manifest, fs::path(o.manifest).parent_path(), c, g.seed, log_epoch);
        }
        if (o.grid.any() && o.modifiers.size() != 1) throw UsageError("train: --n/--lo/--hi need a single --modifier");
        for (const auto& m : o.modifiers) c.grids.push_back(o.grid.grid(parse_modifier(m)));
        if (c.grids.size() > 1 && c.topology == Topology::SingleHead) c.topology = Topology::MultiHead;
        std::vector<Image> images;
        for (const auto& ni : load_image_dir(o.input)) images.push_back(ni.image);
        return train_regressor(images, c, g.seed, g.threads, log_epoch);
    };
    const TrainResult r = run_training();
    const json meta = {{"seed", g.seed},
                       {"best_epoch", r.best_epoch},
                       {"train_sources", r.train_sources},
                       {"val_sources", r.val_sources}};
    save_model(r.best, run.path("model.json"), meta);
    run.add_output("model.json");
    run.write_text("train_log.csv", epoch_log_csv(r.log));
    const auto& best = r.log.at(r.best_epoch - 1);
    std::cout << "best epoch " << r.best_epoch << ": medR " << fixed(best.med_r, 2) << " R@1 " << fixed(best.r_at_1, 1)
              << " R@5 " << fixed(best.r_at_5, 1) << "\n";
    return {{"regressor", r.best.config().to_json()}, {"best_epoch", r.best_epoch}};
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
    std::vector<std::string> models;
    std::string input;
    int crops = 8;
};

json cmd_predict(RunContext& run, const Globals& g, const PredictOptions& o) {
    const auto nets = load_models(o.models);
    const auto images = load_image_dir(o.input);
    std::vector<std::string> lines(images.size());
    parallel_for(images.size(), g.threads, [&](std::size_t i) {
        std::string block;
        for (const auto& net : nets) {
            for (const auto& hp : predict(net, images[i].image, o.crops, derive_seed(g.seed, {0x9d, i}))) {
                std::string labels, probs;
                for (std::size_t k = 0; k < hp.labels.size(); ++k) labels += (k ? ";" : "") + std::to_string(hp.labels[k]);
                for (std::size_t k = 0; k < hp.probabilities.size(); ++k)
                    probs += (k ? ";" : "") + fixed(hp.probabilities[k], 6);
                block += images[i].name + "," + std::string(to_string(hp.grid.kind)) + "," + std::to_string(hp.argmax) +
                         "," + fixed(hp.value, 6) + "," + labels + "," + probs + "\n";
            }
        }
        lines[i] = block;
    });
    std::string csv = "image,modifier,class,value,labels,probabilities\n";
    for (const auto& l : lines) csv += l;
    run.write_text("predictions.csv", csv);
    return {{"images", images.size()}, {"crops", o.crops}};
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    std::string pairs;
    int classes = 0;
    std::string model;
    std::string manifest;
    int crops = 8;
    std::vector<int> k{1, 5, 10};
    double soft_threshold = 0.3;
};

EvalPairs read_pairs(const std::string& path, int classes, double threshold) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParameterError(path + ": empty file");
    const auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "target" || header[1] != "predicted")
        throw ParameterError(path + ": header must start with target,predicted");
    EvalPairs p;
    p.n_classes = classes;
    p.soft_threshold = threshold;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size()) throw ParameterError(path + ":" + std::to_string(row) + ": wrong field count");
        std::vector<double> probs;
        try {
            for (std::size_t i = 2; i < f.size(); ++i) probs.push_back(std::stod(f[i]));
            p.add(std::stoi(f[0]), std::stoi(f[1]), std::move(probs));
        } catch (const std::logic_error&) {
            throw ParameterError(path + ":" + std::to_string(row) + ": not a number");
        }
    }
    return p;
}

json metrics_json(const EvalPairs& p, const std::vector<int>& ks) {
    json j = {{"pairs", p.pairs.size()}, {"classes", p.n_classes}, {"medR", med_r(p)}};
    for (int k : ks) {
        const Prf prf = prf_at_k(p, k);
        j["R@" + std::to_string(k)] = recall_at_k(p, k);
        j["prf@" + std::to_string(k)] = {
            {"precision", prf.precision}, {"recall", prf.recall}, {"accuracy", prf.accuracy}, {"f", prf.f_score}};
    }
    const bool has_probs = std::all_of(p.pairs.begin(), p.pairs.end(), [](const EvalPair& e) { return !e.probabilities.empty(); });
    try {
        j["macro_auc"] = has_probs ? json(macro_auc(p)) : json(nullptr);
    } catch (const DegenerateInputError&) {
        j["macro_auc"] = nullptr;
    }
    return j;
}

json cmd_evaluate(RunContext& run, const Globals& g, const EvaluateOptions& o) {
    EvalPairs pairs;
    if (!o.pairs.empty()) {
        if (!o.model.empty() || !o.manifest.empty()) throw UsageError("evaluate: --pairs excludes --model/--manifest");
        if (o.classes < 2) throw UsageError("evaluate: --classes >= 2 required with --pairs");
        pairs = read_pairs(o.pairs, o.classes, o.soft_threshold);
    } else {
        if (o.model.empty() || o.manifest.empty()) throw UsageError("evaluate: give --pairs, or --model with --manifest");
        const auto manifest = DatasetManifest::load(o.manifest);
        const QmrNet net = load_model(o.model);
        int head = -1;
        for (int h = 0; h < net.heads(); ++h)
            if (net.config().grids[h] == manifest.grid) head = h;
        if (head < 0) throw GridMismatchError("evaluate: no head of the model uses the manifest grid");
        pairs.n_classes = manifest.grid.n;
        pairs.soft_threshold = o.soft_threshold;
        const fs::path dir = fs::path(o.manifest).parent_path();
        std::vector<HeadPrediction> preds(manifest.entries.size());
        parallel_for(preds.size(), g.threads, [&](std::size_t i) {
            const Image crop_img = load_image(dir / manifest.entries[i].output);
            preds[i] = predict(net, crop_img, o.crops, derive_seed(g.seed, {0xe7, i}))[head];
        });
        std::string csv = "target,predicted";
        for (int c = 0; c < pairs.n_classes; ++c) csv += ",p" + std::to_string(c);
        csv += "\n";
        for (std::size_t i = 0; i < preds.size(); ++i) {
            pairs.add(manifest.entries[i].class_index, preds[i].argmax, preds[i].probabilities);
            csv += std::to_string(manifest.entries[i].class_index) + "," + std::to_string(preds[i].argmax);
            for (double v : preds[i].probabilities) csv += "," + fixed(v, 6);
            csv += "\n";
        }
        run.write_text("pairs.csv", csv);
    }
    const json m = metrics_json(pairs, o.k);
    run.write_text("metrics.json", m.dump(2) + "\n");
    std::cout << "medR " << fixed(m["medR"].get<double>(), 2);
    for (int k : o.k) std::cout << " R@" << k << " " << fixed(m["R@" + std::to_string(k)].get<double>(), 1);
    std::cout << "\n";
    return {{"pairs", pairs.pairs.size()}};
}

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
    double blur = 0, snr = 0, rer = 0, f = 0, gsd = 0;
    ConventionOptions convention;
};

json cmd_score(RunContext& run, const Globals&, const ScoreOptions& o) {
    QualityVector qv;
    qv.blur = o.blur;
    qv.snr = o.snr;
    qv.rer = o.rer;
    qv.sharpness = o.f;
    qv.gsd = o.gsd;
    const double s = aggregate_score(qv, o.convention.convention);
    std::cout << fixed(s, 4) << "\n";
    const json j = {{"blur", o.blur}, {"snr", o.snr}, {"rer", o.rer}, {"F", o.f}, {"GSD", o.gsd}, {"score", s}};
    run.write_text("score.json", j.dump(2) + "\n");
    return {{"conventions", conventions(o.convention.convention)}};
}

// ---------------------------------------------------------------------------
// benchmark-dataset

struct BenchmarkDatasetOptions {
    std::vector<std::string> models;
    std::string input;
    int crops = 8;
    ConventionOptions convention;
};

json cmd_benchmark_dataset(RunContext& run, const Globals& g, const BenchmarkDatasetOptions& o) {
    const auto nets = load_models(o.models);
    const auto t = benchmark_dataset(pointers(nets), load_image_dir(o.input), o.crops, g.seed,
                                     o.convention.convention, g.threads);
    run.write_text("dataset.csv", t.to_csv());
    std::cout << t.to_csv();
    return {{"conventions", conventions(o.convention.convention)}};
}

// ---------------------------------------------------------------------------
// benchmark-sr

struct BenchmarkSrOptions {
    std::string input;
    int scale = 2;
    std::vector<std::string> methods{"nearest", "bicubic"};
    std::vector<std::string> models;
    bool blur_lr = false;
    int crops = 8;
    ConventionOptions convention;
};

SrMethod parse_method(const std::string& spec, int scale) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        if (spec == "nearest") return SrMethod::nearest(scale);
        if (spec == "bilinear") return SrMethod::bilinear(scale);
        if (spec == "bicubic") return SrMethod::bicubic(scale);
        throw UsageError("unknown SR method '" + spec + "' (nearest, bilinear, bicubic or NAME=checkpoint)");
    }
    const std::string name = spec.substr(0, eq), path = spec.substr(eq + 1);
    try {
        return load_tiny_sr(path, name);
    } catch (const Error& e) {
        // Recorded as a failed row by the benchmark.
        spdlog::warn("{}: {}", name, e.what());
        return {name, SrKind::TinySr, scale, nullptr};
    }
}

json cmd_benchmark_sr(RunContext& run, const Globals& g, const BenchmarkSrOptions& o) {
    std::vector<SrMethod> methods;
    for (const auto& m : o.methods) methods.push_back(parse_method(m, o.scale));
    const auto nets = load_models(o.models);
    SrBenchmarkOptions bo;
    bo.scale = o.scale;
    bo.blur_lr = o.blur_lr;
    bo.crops = o.crops;
    bo.seed = g.seed;
    bo.convention = o.convention.convention;
    bo.threads = g.threads;
    const auto b = benchmark_sr(methods, load_image_dir(o.input), pointers(nets), bo);
    run.write_text("fr.csv", b.fr.to_csv());
    run.write_text("nr.csv", b.nr.to_csv());
    run.write_text("qmr.csv", b.qmr.to_csv());
    std::cout << b.fr.to_csv() << "\n" << b.nr.to_csv() << "\n" << b.qmr.to_csv();
    return {{"conventions", conventions(o.convention.convention)}, {"failures", b.failures}};
}

// ---------------------------------------------------------------------------
// train-sr

struct TrainSrOptions {
    std::string input;
    int scale = 2;
    double lambda = 0.0;
    std::string qmr_model;
    int head = 0;
    std::string qmr_loss = "l1";
    std::string content = "l2";
    SrHyper hyper;
};

json cmd_train_sr(RunContext& run, const Globals& g, const TrainSrOptions& o) {
    if (o.lambda > 0.0 && o.qmr_model.empty()) throw UsageError("train-sr: --lambda > 0 needs --qmr-model");
    std::optional<QmrNet> net;
    if (!o.qmr_model.empty()) net = load_model(o.qmr_model);
    SrTrainOptions so;
    so.scale = o.scale;
    so.lambda = o.lambda;
    so.qmr = net ? &*net : nullptr;
    so.head = o.head;
    so.kind = parse_qmr_loss(o.qmr_loss);
    so.content = parse_content_loss(o.content);
    so.hyper = o.hyper;
    std::vector<Image> images;
    for (const auto& ni : load_image_dir(o.input)) images.push_back(ni.image);
    const auto r = train_tiny_sr(images, so, g.seed, [](const SrEpochLog& e) {
        spdlog::info("epoch {:3d} loss {:.6f} psnr {:.3f} ssim {:.4f}", e.epoch, e.loss, e.psnr, e.ssim);
    });
    const json meta = {{"seed", g.seed},        {"lambda", o.lambda},   {"qmr_loss", o.qmr_loss},
                       {"content", o.content},  {"hyper", o.hyper.to_json()}};
    save_tiny_sr(r.model, o.scale, meta, run.path("tinysr.json"));
    run.add_output("tinysr.json");
    run.write_text("sr_log.csv", sr_log_csv(r.log));
    std::cout << "held-out psnr " << fixed(r.log.back().psnr, 3) << " dB (bicubic " << fixed(r.bicubic_psnr, 3)
              << " dB)\n";
    return {{"val_images", r.val_images}};
}

// ---------------------------------------------------------------------------

// Resolved configuration of the executed command, without the options that
// only locate files for this invocation.
std::string resolved_config(const CLI::App& app, const std::string& command) {
    std::istringstream in(app.config_to_str(true, false));
    std::string line, out;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        const std::string key = line.substr(0, eq);
        if (key == "out" || key == "config" || key == "log-level" || key == "threads") continue;
        const auto dot = key.find('.');
        if (dot != std::string::npos && key.substr(0, dot) != command) continue;
        out += line + "\n";
    }
    return out;
}

void setup_logging(const Globals& g) {
    auto logger = std::make_shared<spdlog::logger>("qmr", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
    logger->set_level(spdlog::level::from_str(g.log_level));
    spdlog::set_default_logger(logger);
}

void add_file_log(const fs::path& dir) {
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "run.log").string(), true);
    spdlog::default_logger()->sinks().push_back(file);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quality metric regression for remote sensing imagery: datasets, training, evaluation, benchmarks"};
    app.set_version_flag("--version", cli::kToolVersion);
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML file with top-level options and one [section] per command");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.fallthrough();
    app.require_subcommand(1);

    Globals g;
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--threads", g.threads, "worker threads (default: QMR_THREADS or 1)")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "run directory (default: runs/<timestamp>_s<seed>)");
    app.add_option("--log-level", g.log_level, "log verbosity")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    std::vector<std::string> modifier_names;
    for (auto k : kAllModifiers) modifier_names.emplace_back(to_string(k));

    std::function<json(RunContext&)> action;
    std::string command;

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "write synthetic textured scenes");
    s->add_option("--count", synth.count, "number of images");
    s->add_option("--width", synth.width);
    s->add_option("--height", synth.height);
    s->callback([&] { command = "synth"; action = [&](RunContext& r) { return cmd_synth(r, g, synth); }; });

    ModifyOptions modify;
    s = app.add_subcommand("modify", "build an annotated crop dataset for one modifier");
    s->add_option("--input", modify.input, "directory of source images")->required()->check(CLI::ExistingDirectory);
    s->add_option("--modifier", modify.modifier, "blur, sharpness, gsd, rer or snr")
        ->required()
        ->check(CLI::IsMember(modifier_names));
    modify.grid.add_to(s);
    s->add_option("--side", modify.side, "crop side in pixels");
    s->add_option("--crops", modify.crops, "crops per image and grid value");
    s->callback([&] { command = "modify"; action = [&](RunContext& r) { return cmd_modify(r, g, modify); }; });

    TrainOptions train;
    s = app.add_subcommand("train", "train a quality regressor");
    s->add_option("--manifest", train.manifest, "manifest.jsonl written by modify")->check(CLI::ExistingFile);
    s->add_option("--input", train.input, "image directory; crops are generated in memory")
        ->check(CLI::ExistingDirectory);
    s->add_option("--modifier", train.modifiers, "modifiers for --input (one head each)")
        ->check(CLI::IsMember(modifier_names));
    s->add_option("--topology", train.topology)->check(CLI::IsMember({"single", "multi-head", "multi-branch"}));
    train.grid.add_to(s);
    s->add_option("--side", train.config.side, "network input side R");
    s->add_option("--crops", train.config.crops, "crops per image C");
    s->add_option("--epochs", train.config.epochs);
    s->add_option("--batch", train.config.batch);
    s->add_option("--lr", train.config.lr);
    s->add_option("--weight-decay", train.config.weight_decay);
    s->add_option("--momentum", train.config.momentum);
    s->add_option("--soft-threshold", train.config.soft_threshold);
    s->add_option("--val-fraction", train.config.val_fraction);
    s->callback([&] { command = "train"; action = [&](RunContext& r) { return cmd_train(r, g, train); }; });

    PredictOptions pred;
    s = app.add_subcommand("predict", "predict quality parameters for every image of a directory");
    s->add_option("--model", pred.models, "regressor checkpoint(s)")->required()->check(CLI::ExistingFile);
    s->add_option("--input", pred.input, "image directory")->required()->check(CLI::ExistingDirectory);
    s->add_option("--crops", pred.crops, "crops averaged per image");
    s->callback([&] { command = "predict"; action = [&](RunContext& r) { return cmd_predict(r, g, pred); }; });

    EvaluateOptions ev;
    s = app.add_subcommand("evaluate", "retrieval metrics from a pairs CSV or a model on a manifest");
    s->add_option("--pairs", ev.pairs, "CSV: target,predicted[,p0,...]")->check(CLI::ExistingFile);
    s->add_option("--classes", ev.classes, "grid size for --pairs");
    s->add_option("--model", ev.model, "regressor checkpoint")->check(CLI::ExistingFile);
    s->add_option("--manifest", ev.manifest, "manifest.jsonl with annotated crops")->check(CLI::ExistingFile);
    s->add_option("--crops", ev.crops, "crops averaged per annotated crop");
    s->add_option("--k", ev.k, "window sizes for R@K and P/R/A/F@K")->check(CLI::PositiveNumber);
    s->add_option("--soft-threshold", ev.soft_threshold);
    s->callback([&] { command = "evaluate"; action = [&](RunContext& r) { return cmd_evaluate(r, g, ev); }; });

    ScoreOptions sc;
    s = app.add_subcommand("score", "aggregate score of a hand-supplied quality vector");
    s->add_option("--blur", sc.blur)->required();
    s->add_option("--snr", sc.snr)->required();
    s->add_option("--rer", sc.rer)->required();
    s->add_option("--F", sc.f, "sharpness factor")->required();
    s->add_option("--gsd", sc.gsd)->required();
    sc.convention.add_to(s);
    s->callback([&] { command = "score"; action = [&](RunContext& r) { return cmd_score(r, g, sc); }; });

    BenchmarkDatasetOptions bd;
    s = app.add_subcommand("benchmark-dataset", "mean predicted quality and score of an image directory");
    s->add_option("--model", bd.models, "regressor checkpoint(s)")->required()->check(CLI::ExistingFile);
    s->add_option("--input", bd.input, "image directory")->required()->check(CLI::ExistingDirectory);
    s->add_option("--crops", bd.crops);
    bd.convention.add_to(s);
    s->callback([&] {
        command = "benchmark-dataset";
        action = [&](RunContext& r) { return cmd_benchmark_dataset(r, g, bd); };
    });

    BenchmarkSrOptions bs;
    s = app.add_subcommand("benchmark-sr", "full-reference, no-reference and predicted quality of SR methods");
    s->add_option("--input", bs.input, "directory of HR images")->required()->check(CLI::ExistingDirectory);
    s->add_option("--scale", bs.scale)->check(CLI::IsMember({2, 3, 4}));
    s->add_option("--methods", bs.methods, "nearest, bilinear, bicubic or NAME=tinysr-checkpoint")->delimiter(',');
    s->add_option("--model", bs.models, "regressor checkpoint(s) for the quality table")->check(CLI::ExistingFile);
    s->add_flag("--blur-lr", bs.blur_lr, "blur HR with sigma 1 before downsampling");
    s->add_option("--crops", bs.crops);
    bs.convention.add_to(s);
    s->callback([&] {
        command = "benchmark-sr";
        action = [&](RunContext& r) { return cmd_benchmark_sr(r, g, bs); };
    });

    TrainSrOptions ts;
    s = app.add_subcommand("train-sr", "train the tiny SR network, optionally with a quality loss");
    s->add_option("--input", ts.input, "directory of HR images")->required()->check(CLI::ExistingDirectory);
    s->add_option("--scale", ts.scale)->check(CLI::IsMember({2, 3, 4}));
    s->add_option("--lambda", ts.lambda, "weight of the quality loss")->check(CLI::NonNegativeNumber);
    s->add_option("--qmr-model", ts.qmr_model, "frozen regressor for the quality loss")->check(CLI::ExistingFile);
    s->add_option("--head", ts.head, "regressor head used by the quality loss");
    s->add_option("--qmr-loss", ts.qmr_loss)->check(CLI::IsMember({"l1", "l2", "bce"}));
    s->add_option("--content", ts.content)->check(CLI::IsMember({"l1", "l2"}));
    s->add_option("--epochs", ts.hyper.epochs);
    s->add_option("--patch", ts.hyper.patch, "HR patch side");
    s->add_option("--patches", ts.hyper.patches_per_image, "patches per image and epoch");
    s->add_option("--batch", ts.hyper.batch);
    s->add_option("--lr", ts.hyper.lr);
    s->add_option("--momentum", ts.hyper.momentum);
    s->add_option("--weight-decay", ts.hyper.weight_decay);
    s->add_option("--val-fraction", ts.hyper.val_fraction);
    s->callback([&] { command = "train-sr"; action = [&](RunContext& r) { return cmd_train_sr(r, g, ts); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        setup_logging(g);
        const fs::path dir = g.out.empty() ? cli::default_run_dir(g.seed) : fs::path(g.out);
        RunContext run(dir, command, g.seed);
        add_file_log(dir);
        json extra = action(run);
        if (!extra.contains("conventions")) extra["conventions"] = conventions(ScoreConvention::defaults());
        const bool reproduced = run.finish(resolved_config(app, command), extra);
        std::cout << (reproduced ? "reproduced " : "wrote ") << dir.string() << "\n";
        return 0;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
