#include "qmr/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "qmr/error.hpp"
#include "qmr/rng.hpp"

namespace qmr {

using json = nlohmann::json;
using nn::Tensor4;

std::string_view to_string(Topology t) {
    switch (t) {
        case Topology::SingleHead: return "single";
        case Topology::MultiHead: return "multi-head";
        case Topology::MultiBranch: return "multi-branch";
    }
    return "?";
}

Topology parse_topology(std::string_view name) {
    for (auto t : {Topology::SingleHead, Topology::MultiHead, Topology::MultiBranch})
        if (to_string(t) == name) return t;
    throw ParameterError("unknown topology '" + std::string(name) + "' (expected single, multi-head or multi-branch)");
}

void RegressorConfig::validate() const {
    if (grids.empty()) throw ParameterError("regressor: at least one grid required");
    if (topology == Topology::SingleHead && grids.size() != 1)
        throw ParameterError("regressor: single-head topology takes exactly one grid");
    if (side < 8) throw ParameterError("regressor: crop side must be at least 8");
    if (crops < 1) throw ParameterError("regressor: crops must be positive");
    if (epochs < 1 || batch < 1) throw ParameterError("regressor: epochs and batch must be positive");
    if (!(soft_threshold > 0.0 && soft_threshold < 1.0))
        throw ParameterError("regressor: soft threshold must lie in (0, 1)");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParameterError("regressor: split must lie in (0, 1)");
}

json RegressorConfig::to_json() const {
    json g = json::array();
    for (const auto& grid : grids) g.push_back(grid_json(grid));
    return {{"grids", g},
            {"topology", std::string(to_string(topology))},
            {"side", side},
            {"crops", crops},
            {"epochs", epochs},
            {"batch", batch},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"momentum", momentum},
            {"soft_threshold", soft_threshold},
            {"val_fraction", val_fraction}};
}

RegressorConfig RegressorConfig::from_json(const json& j) {
    if (!j.is_object()) throw ParameterError("regressor config must be a JSON object");
    RegressorConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "grids") {
            for (const auto& g : v) c.grids.push_back(grid_from_json(g));
        } else if (key == "topology") c.topology = parse_topology(v.get<std::string>());
        else if (key == "side") c.side = v.get<int>();
        else if (key == "crops") c.crops = v.get<int>();
        else if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "batch") c.batch = v.get<int>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "momentum") c.momentum = v.get<double>();
        else if (key == "soft_threshold") c.soft_threshold = v.get<double>();
        else if (key == "val_fraction") c.val_fraction = v.get<double>();
        else throw ParameterError("regressor config: unknown key '" + key + "'");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Network

namespace {

constexpr int kFeatures = 64;

nn::ModelSpec encoder_spec(std::uint64_t seed) {
    auto full = nn::ModelSpec::micro_encoder(2, seed);
    full.layers.resize(full.layers.size() - 2);  // drop linear + softmax
    return full;
}

nn::ModelSpec head_spec(int classes, std::uint64_t seed) {
    nn::ModelSpec s;
    s.seed = seed;
    s.layers = {nn::LayerSpec::linear(kFeatures, classes), nn::LayerSpec::softmax()};
    return s;
}

}  // namespace

QmrNet::QmrNet(RegressorConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    const std::size_t k = config_.grids.size();
    const std::size_t n_enc = config_.topology == Topology::MultiBranch ? k : 1;
    for (std::size_t e = 0; e < n_enc; ++e) encoders_.emplace_back(encoder_spec(derive_seed(seed, {100 + e})));
    for (std::size_t h = 0; h < k; ++h) heads_.emplace_back(head_spec(config_.grids[h].n, derive_seed(seed, {200 + h})));
}

Tensor4 condition_input(const Tensor4& x) {
    Tensor4 y = x;
    const std::size_t m = x.sample_size();
    for (int i = 0; i < x.n; ++i) {
        double* s = y.v.data() + i * m;
        double mean = 0.0;
        for (std::size_t k = 0; k < m; ++k) mean += s[k];
        mean /= static_cast<double>(m);
        for (std::size_t k = 0; k < m; ++k) s[k] = kInputGain * (s[k] - mean);
    }
    return y;
}

Tensor4 condition_input_backward(const Tensor4& g) {
    // Adjoint of the same linear map: gain times the mean-free gradient.
    return condition_input(g);
}

Tensor4 QmrNet::infer(const Tensor4& x, int head) const {
    if (head < 0 || head >= heads()) throw ParameterError("QmrNet: head index out of range");
    return heads_[head].infer(encoders_[encoder_of(head)].infer(condition_input(x)));
}

Tensor4 QmrNet::forward(const Tensor4& x, int head) {
    if (head < 0 || head >= heads()) throw ParameterError("QmrNet: head index out of range");
    return heads_[head].forward(encoders_[encoder_of(head)].forward(condition_input(x)));
}

Tensor4 QmrNet::backward(const Tensor4& g, int head) {
    if (head < 0 || head >= heads()) throw ParameterError("QmrNet: head index out of range");
    return condition_input_backward(encoders_[encoder_of(head)].backward(heads_[head].backward(g)));
}

std::vector<nn::Param*> QmrNet::parameters(int head) {
    auto out = encoders_[encoder_of(head)].parameters();
    for (auto* p : heads_[head].parameters()) out.push_back(p);
    return out;
}

std::vector<nn::Param*> QmrNet::all_parameters() {
    std::vector<nn::Param*> out;
    for (auto& e : encoders_)
        for (auto* p : e.parameters()) out.push_back(p);
    for (auto& h : heads_)
        for (auto* p : h.parameters()) out.push_back(p);
    return out;
}

void QmrNet::zero_grad() {
    for (auto& e : encoders_) e.zero_grad();
    for (auto& h : heads_) h.zero_grad();
}

json QmrNet::to_json(const json& metadata) const {
    json enc = json::array(), hd = json::array();
    for (const auto& e : encoders_) enc.push_back(nn::checkpoint_json(e, json::object()));
    for (const auto& h : heads_) hd.push_back(nn::checkpoint_json(h, json::object()));
    return {{"format", "qmr-regressor"}, {"version", kRegressorCheckpointVersion},
            {"config", config_.to_json()}, {"encoders", enc},
            {"heads", hd},                 {"metadata", metadata}};
}

QmrNet QmrNet::from_json(const json& j, json* metadata) {
    try {
        if (j.at("format").get<std::string>() != "qmr-regressor") throw CheckpointError("not a regressor checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kRegressorCheckpointVersion)
            throw CheckpointError("regressor checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                  std::to_string(kRegressorCheckpointVersion) + ")");
        QmrNet net;
        net.config_ = RegressorConfig::from_json(j.at("config"));
        net.config_.validate();
        for (const auto& e : j.at("encoders")) net.encoders_.push_back(nn::model_from_json(e));
        for (const auto& h : j.at("heads")) net.heads_.push_back(nn::model_from_json(h));
        const std::size_t k = net.config_.grids.size();
        const std::size_t n_enc = net.config_.topology == Topology::MultiBranch ? k : 1;
        if (net.heads_.size() != k || net.encoders_.size() != n_enc)
            throw CheckpointError("regressor checkpoint: network count does not match its topology");
        for (std::size_t h = 0; h < k; ++h)
            if (net.heads_[h].spec().layers.front().out != net.config_.grids[h].n)
                throw CheckpointError("regressor checkpoint: head width differs from its grid");
        if (metadata) *metadata = j.value("metadata", json::object());
        return net;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt regressor checkpoint: ") + e.what());
    } catch (const ParameterError& e) {
        throw CheckpointError(std::string("corrupt regressor checkpoint: ") + e.what());
    }
}

void save_model(const QmrNet& net, const std::filesystem::path& path, const json& metadata) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << net.to_json(metadata).dump(1) << '\n';
    if (!out) throw IoError("cannot write model " + path.string());
}

QmrNet load_model(const std::filesystem::path& path, const std::vector<ParamGrid>& expected_grids, json* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read model " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt regressor checkpoint " + path.string() + ": " + e.what());
    }
    QmrNet net = QmrNet::from_json(j, metadata);
    if (!expected_grids.empty() && expected_grids != net.config().grids) {
        throw GridMismatchError("model " + path.string() + " was trained on " + j["config"]["grids"].dump() +
                                ", configuration expects a different grid");
    }
    return net;
}

// ---------------------------------------------------------------------------
// Tensors

Tensor4 to_tensor(const Image& img) {
    const Image g = to_grayscale(img);
    Tensor4 t(1, 1, g.height, g.width);
    for (std::size_t i = 0; i < g.data.size(); ++i) t.v[i] = g.data[i] / g.max_value;
    return t;
}

Tensor4 to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ParameterError("to_batch: no images");
    const int w = imgs.front().width, h = imgs.front().height;
    Tensor4 t(static_cast<int>(imgs.size()), 1, h, w);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].width != w || imgs[i].height != h) throw DimensionError("to_batch: images differ in size");
        const Tensor4 s = to_tensor(imgs[i]);
        std::copy(s.v.begin(), s.v.end(), t.v.begin() + static_cast<std::ptrdiff_t>(i * s.v.size()));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Training

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream s;
    s << "epoch,loss,medR,R@1,R@5\n";
    s << std::fixed;
    for (const auto& e : log)
        s << e.epoch << ',' << std::setprecision(6) << e.loss << ',' << std::setprecision(3) << e.med_r << ','
          << e.r_at_1 << ',' << e.r_at_5 << '\n';
    return s.str();
}

void split_sources(const std::vector<int>& sources, double val_fraction, std::uint64_t seed, std::vector<int>& train,
                   std::vector<int>& val) {
    std::vector<int> ids = sources;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw ParameterError("split: at least two source images are needed for a train/val split");
    Rng rng(derive_seed(seed, {0x5b117}));
    for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
    auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(ids.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
    val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
}

namespace {

struct Sample {
    std::vector<double> pixels;
    int head;
    int label;
};

Tensor4 gather(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx, int side) {
    Tensor4 t(static_cast<int>(idx.size()), 1, side, side);
    const std::size_t n = static_cast<std::size_t>(side) * side;
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(samples[idx[i]].pixels.begin(), samples[idx[i]].pixels.end(),
                  t.v.begin() + static_cast<std::ptrdiff_t>(i * n));
    return t;
}

int argmax(const double* p, int n) { return static_cast<int>(std::max_element(p, p + n) - p); }

EpochLog validate(const QmrNet& net, const std::vector<Sample>& samples, const std::vector<std::size_t>& val) {
    EpochLog log;
    int heads_seen = 0;
    for (int h = 0; h < net.heads(); ++h) {
        std::vector<std::size_t> idx;
        for (auto i : val)
            if (samples[i].head == h) idx.push_back(i);
        if (idx.empty()) continue;
        EvalPairs pairs;
        pairs.n_classes = net.config().grids[h].n;
        constexpr std::size_t kChunk = 64;
        for (std::size_t s = 0; s < idx.size(); s += kChunk) {
            const std::vector<std::size_t> chunk(idx.begin() + static_cast<std::ptrdiff_t>(s),
                                                 idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), s + kChunk)));
            const Tensor4 p = net.infer(gather(samples, chunk, net.config().side), h);
            for (std::size_t i = 0; i < chunk.size(); ++i)
                pairs.add(samples[chunk[i]].label, argmax(&p.v[i * p.c], p.c));
        }
        log.med_r += med_r(pairs);
        log.r_at_1 += recall_at_k(pairs, 1);
        log.r_at_5 += recall_at_k(pairs, 5);
        ++heads_seen;
    }
    log.med_r /= heads_seen;
    log.r_at_1 /= heads_seen;
    log.r_at_5 /= heads_seen;
    return log;
}

}  // namespace

TrainResult train_regressor(const std::vector<LabeledCrop>& data, const RegressorConfig& config, std::uint64_t seed,
                            const EpochCallback& on_epoch) {
    config.validate();
    if (data.empty()) throw ParameterError("train: no training data");
    const int side = config.side;
    std::vector<Sample> samples;
    samples.reserve(data.size());
    std::vector<int> sources;
    for (const auto& d : data) {
        if (d.crop.width != side || d.crop.height != side)
            throw DimensionError("train: crop of " + std::to_string(d.crop.width) + "x" +
                                 std::to_string(d.crop.height) + " does not match side " + std::to_string(side));
        if (d.head < 0 || d.head >= static_cast<int>(config.grids.size()))
            throw ParameterError("train: crop annotated for a missing head");
        if (d.class_index < 0 || d.class_index >= config.grids[d.head].n)
            throw GridMismatchError("train: class index outside the configured grid");
        samples.push_back({to_tensor(d.crop).v, d.head, d.class_index});
        sources.push_back(d.source);
    }

    TrainResult result{QmrNet(config, seed), 0, {}, {}, {}};
    split_sources(sources, config.val_fraction, seed, result.train_sources, result.val_sources);
    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::binary_search(result.val_sources.begin(), result.val_sources.end(), data[i].source))
            val_idx.push_back(i);
        else
            train_idx.push_back(i);
    }
    if (train_idx.empty() || val_idx.empty()) throw ParameterError("train: empty split");

    QmrNet net(config, seed);
    nn::Sgd opt(config.lr, config.momentum, config.weight_decay);
    auto params = net.all_parameters();
    double best_med = INFINITY, best_r1 = -1;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng rng(derive_seed(seed, {0xe90c, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            const double batch_n = static_cast<double>(end - start);
            net.zero_grad();
            double batch_loss = 0.0;
            for (int h = 0; h < net.heads(); ++h) {
                std::vector<std::size_t> idx;
                for (std::size_t i = start; i < end; ++i)
                    if (samples[order[i]].head == h) idx.push_back(order[i]);
                if (idx.empty()) continue;
                const Tensor4 p = net.forward(gather(samples, idx, side), h);
                std::vector<double> target(p.size(), 0.0);
                for (std::size_t i = 0; i < idx.size(); ++i) target[i * p.c + samples[idx[i]].label] = 1.0;
                const auto lv = nn::bce_loss(p.v, target);
                const double share = static_cast<double>(idx.size()) / batch_n;
                if (!std::isfinite(lv.value))
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                        std::to_string(start));
                batch_loss += share * lv.value;
                Tensor4 g(p.n, p.c, p.h, p.w);
                for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] = share * lv.grad[i];
                net.backward(g, h);
            }
            opt.step(params);
            loss_sum += batch_loss * batch_n;
        }

        EpochLog log = validate(net, samples, val_idx);
        log.epoch = epoch;
        log.loss = loss_sum / static_cast<double>(order.size());
        result.log.push_back(log);
        spdlog::debug("epoch {} loss {:.5f} medR {:.3f} R@1 {:.2f}", epoch, log.loss, log.med_r, log.r_at_1);
        if (log.med_r < best_med || (log.med_r == best_med && log.r_at_1 > best_r1)) {
            best_med = log.med_r;
            best_r1 = log.r_at_1;
            result.best = net;
            result.best_epoch = epoch;
        }
        if (on_epoch) on_epoch(log);
    }
    return result;
}

TrainResult train_regressor(const std::vector<Image>& images, const RegressorConfig& config, std::uint64_t seed,
                            int threads, const EpochCallback& on_epoch) {
    config.validate();
    std::vector<LabeledCrop> data;
    for (std::size_t h = 0; h < config.grids.size(); ++h) {
        auto crops = make_annotated_crops(images, config.grids[h], config.side, config.crops,
                                          derive_seed(seed, {0xc0, h}), threads);
        for (auto& c : crops) data.push_back({std::move(c.crop), c.source, static_cast<int>(h), c.class_index});
    }
    return train_regressor(data, config, seed, on_epoch);
}

TrainResult train_from_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_dir,
                                const RegressorConfig& config_in, std::uint64_t seed, const EpochCallback& on_epoch) {
    RegressorConfig config = config_in;
    if (config.grids.empty()) config.grids = {manifest.grid};
    if (config.grids.size() != 1 || !(config.grids.front() == manifest.grid))
        throw GridMismatchError("manifest grid (" + grid_json(manifest.grid).dump() +
                                ") differs from the configured grid");
    if (manifest.side != config.side)
        throw GridMismatchError("manifest crops are " + std::to_string(manifest.side) + " px, configuration expects " +
                                std::to_string(config.side));
    std::map<std::string, int> ids;
    for (const auto& e : manifest.entries) ids.emplace(e.source, 0);
    int next = 0;
    for (auto& [name, id] : ids) id = next++;
    std::vector<LabeledCrop> data;
    data.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries)
        data.push_back({load_image(manifest_dir / e.output), ids.at(e.source), 0, e.class_index});
    return train_regressor(data, config, seed, on_epoch);
}

// ---------------------------------------------------------------------------
// Prediction

std::vector<HeadPrediction> predict(const QmrNet& net, const Image& img, int crops, std::uint64_t seed) {
    if (crops < 1) throw ParameterError("predict: crop count must be positive");
    const int side = net.config().side;
    const Image padded = circular_pad(img, side);
    const auto rects = extract_crops(padded, side, crops, seed);
    std::vector<Image> patches;
    patches.reserve(rects.size());
    for (const auto& r : rects) patches.push_back(crop(padded, r));
    const Tensor4 batch = to_batch(patches);

    std::vector<HeadPrediction> out;
    for (int h = 0; h < net.heads(); ++h) {
        const Tensor4 p = net.infer(batch, h);
        HeadPrediction hp;
        hp.grid = net.config().grids[h];
        hp.probabilities.assign(p.c, 0.0);
        for (int i = 0; i < p.n; ++i)
            for (int c = 0; c < p.c; ++c) hp.probabilities[c] += p.v[static_cast<std::size_t>(i) * p.c + c];
        const double total = std::accumulate(hp.probabilities.begin(), hp.probabilities.end(), 0.0);
        for (auto& v : hp.probabilities) v /= total;
        hp.argmax = argmax(hp.probabilities.data(), p.c);
        for (int c = 0; c < p.c; ++c)
            if (hp.probabilities[c] >= net.config().soft_threshold) hp.labels.push_back(c);
        hp.value = hp.grid.value(hp.argmax);
        out.push_back(std::move(hp));
    }
    return out;
}

QualityVector predict_quality_vector(const std::vector<const QmrNet*>& models, const Image& img, int crops,
                                     std::uint64_t seed, const std::vector<ModifierKind>& requested) {
    QualityVector qv;
    for (const auto* m : models) {
        if (!m) continue;
        for (const auto& hp : predict(*m, img, crops, seed)) qv.set(hp.grid.kind, hp.value);
    }
    for (auto kind : requested)
        if (!qv.get(kind)) throw ParameterError("no model predicts " + std::string(to_string(kind)));
    return qv;
}

// ---------------------------------------------------------------------------
// Quality losses

std::string_view to_string(QmrLossKind k) {
    switch (k) {
        case QmrLossKind::L1: return "l1";
        case QmrLossKind::L2: return "l2";
        case QmrLossKind::Bce: return "bce";
    }
    return "?";
}

QmrLossKind parse_qmr_loss(std::string_view name) {
    for (auto k : {QmrLossKind::L1, QmrLossKind::L2, QmrLossKind::Bce})
        if (to_string(k) == name) return k;
    throw ParameterError("unknown quality loss '" + std::string(name) + "' (expected l1, l2 or bce)");
}

TensorLoss qmr_loss(QmrNet& net, const Tensor4& hr, const Tensor4& sr, QmrLossKind kind, int head) {
    if (!hr.same_shape(sr)) throw DimensionError("qmr_loss: hr " + hr.shape_string() + " vs sr " + sr.shape_string());
    const Tensor4 p_hr = net.infer(hr, head);
    const Tensor4 p_sr = net.forward(sr, head);
    nn::LossValue lv;
    switch (kind) {
        case QmrLossKind::L1: lv = nn::l1_loss(p_sr.v, p_hr.v); break;
        case QmrLossKind::L2: lv = nn::l2_loss(p_sr.v, p_hr.v); break;
        case QmrLossKind::Bce: lv = nn::bce_loss(p_sr.v, p_hr.v); break;
    }
    Tensor4 g(p_sr.n, p_sr.c, p_sr.h, p_sr.w);
    g.v = std::move(lv.grad);
    TensorLoss out{lv.value, net.backward(g, head)};
    net.zero_grad();
    return out;
}

std::string_view to_string(ContentLoss k) { return k == ContentLoss::L1 ? "l1" : "l2"; }

ContentLoss parse_content_loss(std::string_view name) {
    if (name == "l1") return ContentLoss::L1;
    if (name == "l2") return ContentLoss::L2;
    throw ParameterError("unknown content loss '" + std::string(name) + "' (expected l1 or l2)");
}

TensorLoss combined_sr_loss(QmrNet* net, const Tensor4& hr, const Tensor4& sr, double lambda, QmrLossKind kind,
                            int head, ContentLoss content_kind) {
    if (!(lambda >= 0.0)) throw ParameterError("combined_sr_loss: lambda must be non-negative");
    if (!hr.same_shape(sr))
        throw DimensionError("combined_sr_loss: hr " + hr.shape_string() + " vs sr " + sr.shape_string());
    const auto content = content_kind == ContentLoss::L1 ? nn::l1_loss(sr.v, hr.v) : nn::l2_loss(sr.v, hr.v);
    TensorLoss out{content.value, Tensor4(sr.n, sr.c, sr.h, sr.w)};
    out.grad.v = content.grad;
    if (lambda == 0.0) return out;
    if (!net) throw ParameterError("combined_sr_loss: a quality model is required when lambda > 0");
    const TensorLoss q = qmr_loss(*net, hr, sr, kind, head);
    out.value += lambda * q.value;
    for (std::size_t i = 0; i < out.grad.v.size(); ++i) out.grad.v[i] += lambda * q.grad.v[i];
    return out;
}

}  // namespace qmr
