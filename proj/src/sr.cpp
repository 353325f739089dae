#include "qmr/sr.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qmr/error.hpp"
#include "qmr/fr_metrics.hpp"
#include "qmr/rng.hpp"

namespace qmr {

using json = nlohmann::json;
using nn::Tensor4;

namespace {

void require_scale(int scale, const char* what) {
    if (scale < 2 || scale > 4) throw ParameterError(std::string(what) + ": scale must be 2, 3 or 4");
}

double catmull_rom(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t < 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

struct Taps {
    int index[4];
    double weight[4];
};

std::vector<Taps> bicubic_taps(int n_in, int scale) {
    std::vector<Taps> taps(static_cast<std::size_t>(n_in) * scale);
    for (int o = 0; o < n_in * scale; ++o) {
        const double src = (o + 0.5) / scale - 0.5;
        const int base = static_cast<int>(std::floor(src));
        for (int k = 0; k < 4; ++k) {
            const int i = base - 1 + k;
            taps[o].index[k] = std::clamp(i, 0, n_in - 1);
            taps[o].weight[k] = catmull_rom(src - i);
        }
    }
    return taps;
}

}  // namespace

Image upscale_nearest(const Image& img, int scale) {
    require_scale(scale, "upscale_nearest");
    Image out(img.width * scale, img.height * scale, img.channels, img.max_value);
    if (img.gsd) out.gsd = *img.gsd / scale;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) out.at(c, y, x) = img.at(c, y / scale, x / scale);
    return out;
}

Image upscale_bicubic(const Image& img, int scale) {
    require_scale(scale, "upscale_bicubic");
    const int ow = img.width * scale, oh = img.height * scale;
    const auto tx = bicubic_taps(img.width, scale), ty = bicubic_taps(img.height, scale);
    Image out(ow, oh, img.channels, img.max_value);
    if (img.gsd) out.gsd = *img.gsd / scale;
    std::vector<double> rows(static_cast<std::size_t>(img.height) * ow);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += tx[x].weight[k] * img.at(c, y, tx[x].index[k]);
                rows[static_cast<std::size_t>(y) * ow + x] = s;
            }
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double s = 0.0;
                for (int k = 0; k < 4; ++k) s += ty[y].weight[k] * rows[static_cast<std::size_t>(ty[y].index[k]) * ow + x];
                out.at(c, y, x) = s;
            }
    }
    out.clamp();
    return out;
}

nn::ModelSpec tiny_sr_spec(int scale, std::uint64_t seed) {
    require_scale(scale, "tiny_sr_spec");
    nn::ModelSpec spec;
    spec.seed = seed;
    spec.layers = {nn::LayerSpec::conv3x3(1, 16), nn::LayerSpec::relu(),
                   nn::LayerSpec::conv3x3(16, 16), nn::LayerSpec::relu(),
                   nn::LayerSpec::conv3x3(16, scale * scale), nn::LayerSpec::pixel_shuffle(scale)};
    return spec;
}

SrMethod SrMethod::nearest(int scale) { return {"nearest", SrKind::Nearest, scale, nullptr}; }
SrMethod SrMethod::bilinear(int scale) { return {"bilinear", SrKind::Bilinear, scale, nullptr}; }
SrMethod SrMethod::bicubic(int scale) { return {"bicubic", SrKind::Bicubic, scale, nullptr}; }
SrMethod SrMethod::tiny(std::string name, nn::Model model, int scale) {
    return {std::move(name), SrKind::TinySr, scale, std::make_shared<const nn::Model>(std::move(model))};
}

Image apply_sr(const SrMethod& m, const Image& img) {
    require_scale(m.scale, "apply_sr");
    switch (m.kind) {
        case SrKind::Nearest: return upscale_nearest(img, m.scale);
        case SrKind::Bicubic: return upscale_bicubic(img, m.scale);
        case SrKind::Bilinear: {
            Image out = resize_bilinear(img, img.width * m.scale, img.height * m.scale);
            if (img.gsd) out.gsd = *img.gsd / m.scale;
            return out;
        }
        case SrKind::TinySr: break;
    }
    if (!m.model) throw ParameterError("apply_sr: method '" + m.name + "' has no network");
    if (!(m.model->spec().layers == tiny_sr_spec(m.scale, 0).layers))
        throw ParameterError("apply_sr: network of '" + m.name + "' does not match scale " + std::to_string(m.scale));

    // The residual is a luma change; adding it to every channel keeps the
    // bicubic chroma.
    const Tensor4 residual = m.model->infer(condition_input(to_tensor(to_grayscale(img))));
    Image out = upscale_bicubic(img, m.scale);
    for (int c = 0; c < out.channels; ++c) {
        auto p = out.plane(c);
        for (std::size_t k = 0; k < p.size(); ++k) p[k] += residual.v[k] * img.max_value;
    }
    out.clamp();
    return out;
}

void SrHyper::validate(int scale) const {
    require_scale(scale, "tiny sr");
    if (epochs < 1) throw ParameterError("tiny sr: epochs must be positive");
    if (patch < 8 || patch % scale != 0) throw ParameterError("tiny sr: patch must be >= 8 and a multiple of the scale");
    if (patches_per_image < 1 || batch < 1) throw ParameterError("tiny sr: patch count and batch must be positive");
    if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0))
        throw ParameterError("tiny sr: invalid optimizer settings");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ParameterError("tiny sr: val_fraction must be in (0, 1)");
}

json SrHyper::to_json() const {
    return {{"epochs", epochs}, {"patch", patch},       {"patches_per_image", patches_per_image},
            {"batch", batch},   {"lr", lr},             {"momentum", momentum},
            {"weight_decay", weight_decay}, {"val_fraction", val_fraction}};
}

SrHyper SrHyper::from_json(const json& j) {
    SrHyper h;
    for (const auto& [key, value] : j.items()) {
        if (key == "epochs") h.epochs = value.get<int>();
        else if (key == "patch") h.patch = value.get<int>();
        else if (key == "patches_per_image") h.patches_per_image = value.get<int>();
        else if (key == "batch") h.batch = value.get<int>();
        else if (key == "lr") h.lr = value.get<double>();
        else if (key == "momentum") h.momentum = value.get<double>();
        else if (key == "weight_decay") h.weight_decay = value.get<double>();
        else if (key == "val_fraction") h.val_fraction = value.get<double>();
        else throw ParameterError("tiny sr: unknown setting '" + key + "'");
    }
    return h;
}

std::string sr_log_csv(const std::vector<SrEpochLog>& log) {
    std::ostringstream os;
    os.precision(10);
    os << "epoch,loss,psnr,ssim\n";
    for (const auto& e : log) os << e.epoch << ',' << e.loss << ',' << e.psnr << ',' << e.ssim << '\n';
    return os.str();
}

SrPair make_sr_pair(const Image& hr, int scale, double pre_blur_sigma) {
    require_scale(scale, "make_sr_pair");
    if (hr.width < scale || hr.height < scale) throw SizeError("make_sr_pair: image smaller than the scale");
    SrPair p;
    const Image src = pre_blur_sigma > 0.0
                          ? gaussian_blur(hr, pre_blur_sigma, static_cast<int>(std::ceil(3.0 * pre_blur_sigma)))
                          : hr;
    p.lr = downsample(src, scale);
    p.hr = Image(p.lr.width * scale, p.lr.height * scale, hr.channels, hr.max_value);
    p.hr.gsd = hr.gsd;
    for (int c = 0; c < hr.channels; ++c)
        for (int y = 0; y < p.hr.height; ++y)
            for (int x = 0; x < p.hr.width; ++x) p.hr.at(c, y, x) = hr.at(c, y, x);
    return p;
}

SrTrainResult train_tiny_sr(const std::vector<Image>& hr_images, const SrTrainOptions& o, std::uint64_t seed,
                            const std::function<void(const SrEpochLog&)>& on_epoch) {
    const SrHyper& h = o.hyper;
    h.validate(o.scale);
    if (!(o.lambda >= 0.0)) throw ParameterError("train_tiny_sr: lambda must be non-negative");
    if (o.lambda > 0.0 && !o.qmr) throw ParameterError("train_tiny_sr: a quality model is required when lambda > 0");
    if (hr_images.size() < 2) throw ParameterError("train_tiny_sr: at least two images are required");

    std::vector<Image> luma;
    for (const auto& img : hr_images) luma.push_back(circular_pad(to_grayscale(img), h.patch));
    std::vector<int> ids(luma.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);

    SrTrainResult r{nn::Model(tiny_sr_spec(o.scale, derive_seed(seed, {0x7157}))), {}, {}, {}, 0.0};
    split_sources(ids, h.val_fraction, derive_seed(seed, {0x5a11}), r.train_images, r.val_images);
    // Start from the plain bicubic output: the last conv is zero-initialized.
    {
        auto params = r.model.parameters();
        for (std::size_t k = params.size() - 2; k < params.size(); ++k)
            std::fill(params[k]->value.begin(), params[k]->value.end(), 0.0);
    }

    std::vector<SrPair> val;
    for (int i : r.val_images) val.push_back(make_sr_pair(to_grayscale(hr_images[i]), o.scale));
    for (const auto& p : val) r.bicubic_psnr += psnr(upscale_bicubic(p.lr, o.scale), p.hr);
    r.bicubic_psnr /= static_cast<double>(val.size());

    nn::Sgd sgd(h.lr, h.momentum, h.weight_decay);
    for (int epoch = 1; epoch <= h.epochs; ++epoch) {
        struct Item {
            int image;
            CropRect rect;
        };
        std::vector<Item> items;
        for (int i : r.train_images)
            for (const auto& rect :
                 extract_crops(luma[i], h.patch, h.patches_per_image, derive_seed(seed, {0xc209, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i)})))
                items.push_back({i, rect});
        Rng rng(derive_seed(seed, {0xe90c, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < items.size(); b0 += h.batch) {
            const std::size_t nb = std::min<std::size_t>(h.batch, items.size() - b0);
            std::vector<Image> hr_p, lr_p, base_p;
            for (std::size_t k = 0; k < nb; ++k) {
                hr_p.push_back(crop(luma[items[b0 + k].image], items[b0 + k].rect));
                lr_p.push_back(downsample(hr_p.back(), o.scale));
                base_p.push_back(upscale_bicubic(lr_p.back(), o.scale));
            }
            const Tensor4 hr_t = to_batch(hr_p), lr_t = to_batch(lr_p);
            Tensor4 sr = to_batch(base_p);
            const Tensor4 res = r.model.forward(condition_input(lr_t));
            for (std::size_t k = 0; k < sr.v.size(); ++k) sr.v[k] += res.v[k];
            const TensorLoss loss = combined_sr_loss(o.qmr, hr_t, sr, o.lambda, o.kind, o.head, o.content);
            if (!std::isfinite(loss.value))
                throw TrainingError("train_tiny_sr: non-finite loss in epoch " + std::to_string(epoch));
            r.model.zero_grad();
            r.model.backward(loss.grad);
            sgd.step(r.model.parameters());
            loss_sum += loss.value;
            ++batches;
        }

        SrEpochLog e;
        e.epoch = epoch;
        e.loss = loss_sum / static_cast<double>(batches);
        const SrMethod m = SrMethod::tiny("tinysr", r.model, o.scale);
        for (const auto& p : val) {
            const Image sr_img = apply_sr(m, p.lr);
            e.psnr += psnr(sr_img, p.hr);
            e.ssim += ssim(sr_img, p.hr);
        }
        e.psnr /= static_cast<double>(val.size());
        e.ssim /= static_cast<double>(val.size());
        r.log.push_back(e);
        if (on_epoch) on_epoch(e);
    }
    return r;
}

void save_tiny_sr(const nn::Model& model, int scale, const json& extra, const std::filesystem::path& path) {
    json meta = extra.is_object() ? extra : json::object();
    meta["method"] = "tinysr";
    meta["scale"] = scale;
    meta["residual"] = "bicubic";
    nn::save_checkpoint(model, meta, path);
}

SrMethod load_tiny_sr(const std::filesystem::path& path, std::string name) {
    json meta;
    nn::Model model = nn::load_checkpoint(path, &meta);
    if (!meta.is_object() || meta.value("method", "") != "tinysr" || !meta.contains("scale") ||
        !meta["scale"].is_number_integer())
        throw CheckpointError(path.string() + ": not a tinysr checkpoint");
    const int scale = meta["scale"].get<int>();
    if (scale < 2 || scale > 4 || !(model.spec().layers == tiny_sr_spec(scale, 0).layers))
        throw CheckpointError(path.string() + ": network does not match its recorded scale");
    return SrMethod::tiny(std::move(name), std::move(model), scale);
}

}  // namespace qmr
