#include "qmr/modifiers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <boost/math/special_functions/erf.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "qmr/error.hpp"
#include "qmr/parallel.hpp"
#include "qmr/rng.hpp"

namespace qmr {

using nlohmann::json;

std::string_view to_string(ModifierKind kind) {
    switch (kind) {
        case ModifierKind::Blur: return "blur";
        case ModifierKind::Sharpness: return "sharpness";
        case ModifierKind::Gsd: return "gsd";
        case ModifierKind::Rer: return "rer";
        case ModifierKind::Snr: return "snr";
    }
    return "unknown";
}

ModifierKind parse_modifier(std::string_view name) {
    for (auto k : kAllModifiers) {
        if (to_string(k) == name) return k;
    }
    if (name == "F" || name == "sharp") return ModifierKind::Sharpness;
    throw ParameterError("unknown modifier '" + std::string(name) + "' (expected blur, sharpness, gsd, rer or snr)");
}

ParamGrid::ParamGrid(ModifierKind kind_, int n_, double lo_, double hi_) : kind(kind_), n(n_), lo(lo_), hi(hi_) {
    if (n < 2) throw ParameterError("ParamGrid: at least two intervals required");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw ParameterError("ParamGrid: lo must be < hi");
}

ParamGrid ParamGrid::defaults(ModifierKind kind) {
    switch (kind) {
        case ModifierKind::Blur: return {kind, 50, 1.0, 2.5};
        case ModifierKind::Sharpness: return {kind, 9, 1.0, 10.0};
        case ModifierKind::Gsd: return {kind, 10, 0.30, 0.60};
        case ModifierKind::Rer: return {kind, 40, 0.15, 0.55};
        case ModifierKind::Snr: return {kind, 40, 15.0, 30.0};
    }
    throw ParameterError("unknown modifier kind");
}

double ParamGrid::value(int k) const {
    if (k < 0 || k >= n) throw ParameterError("ParamGrid: class index out of range");
    if (k == n - 1) return hi;
    return lo + k * step();
}

std::vector<double> ParamGrid::values() const {
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = value(k);
    return v;
}

int value_to_class(const ParamGrid& grid, double value) {
    if (value < grid.lo || value > grid.hi) {
        spdlog::warn("{} value {} outside grid [{}, {}]; clamped", to_string(grid.kind), value, grid.lo, grid.hi);
        value = std::clamp(value, grid.lo, grid.hi);
    }
    const double step = grid.step();
    int k = std::clamp(static_cast<int>(std::floor((value - grid.lo) / step)), 0, grid.n - 1);
    if (k == grid.n - 1) return k;
    const double below = value - grid.value(k);
    const double above = grid.value(k + 1) - value;
    // Exact midpoints round down; the tolerance absorbs representation error.
    if (above < below && below - above > 1e-9 * step) return k + 1;
    return k;
}

double class_to_value(const ParamGrid& grid, int k) { return grid.value(k); }

Image apply_blur(const Image& img, double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("apply_blur: sigma must be positive");
    Image out = gaussian_blur(img, sigma, 3);
    out.clamp();
    return out;
}

Image apply_sharpness(const Image& img, double factor) {
    if (!(factor > 0.0)) throw ParameterError("apply_sharpness: factor must be positive");
    if (factor == 1.0) return img;
    const Image low = gaussian_blur(img, kSharpnessSigma, 3);
    Image out = img;
    if (factor > 1.0) {
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += (factor - 1.0) * (img.data[i] - low.data[i]);
    } else {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = factor * img.data[i] + (1.0 - factor) * low.data[i];
    }
    out.clamp();
    return out;
}

Image apply_gsd(const Image& img, double target_gsd, double base_gsd) {
    if (!(base_gsd > 0.0)) throw ParameterError("apply_gsd: base gsd must be positive");
    const bool same = std::abs(target_gsd - base_gsd) <= 1e-9 * base_gsd;
    if (target_gsd < base_gsd && !same) {
        throw ParameterError("apply_gsd: target gsd below base gsd (only degradation is modelled)");
    }
    Image out = same ? img : resize_bilinear(img, target_gsd / base_gsd);
    out.gsd = target_gsd;
    out.clamp();
    return out;
}

double rer_to_sigma(double target_rer) {
    if (!(target_rer > 0.0 && target_rer < 1.0)) throw ParameterError("rer_to_sigma: rer must lie in (0, 1)");
    return 1.0 / (2.0 * std::numbers::sqrt2 * boost::math::erf_inv(target_rer));
}

double sigma_to_rer(double sigma) {
    if (!(sigma > 0.0)) throw ParameterError("sigma_to_rer: sigma must be positive");
    return std::erf(1.0 / (2.0 * std::numbers::sqrt2 * sigma));
}

namespace {

double kernel_variance(const std::vector<double>& k) {
    const int r = static_cast<int>(k.size() / 2);
    double v = 0.0;
    for (int i = -r; i <= r; ++i) v += k[i + r] * i * i;
    return v;
}

// Sampled Gaussians have less variance than their sigma^2 when sigma is
// below about one pixel; pick the sigma whose taps carry exactly `variance`.
std::vector<double> variance_matched_kernel(double variance) {
    const double target_sd = std::sqrt(variance);
    const int radius = std::max(2, static_cast<int>(std::ceil(4.0 * target_sd)) + 1);
    double lo = 1e-3, hi = target_sd + 1.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (kernel_variance(gaussian_kernel(mid, radius)) < variance) lo = mid;
        else hi = mid;
    }
    return gaussian_kernel(0.5 * (lo + hi), radius);
}

}  // namespace

Image apply_rer(const Image& img, double target_rer, double base_rer) {
    if (!(base_rer > 0.0 && base_rer < 1.0) || !(target_rer > 0.0)) {
        throw ParameterError("apply_rer: rer values must lie in (0, 1)");
    }
    if (target_rer > base_rer) throw ParameterError("apply_rer: target rer above base rer (RER can only be degraded)");
    const double var = std::max(0.0, std::pow(rer_to_sigma(target_rer), 2) - std::pow(rer_to_sigma(base_rer), 2));
    if (var <= 0.0) return img;
    Image out = convolve_separable(img, variance_matched_kernel(var));
    out.clamp();
    return out;
}

Image apply_snr(const Image& img, double target_snr, std::uint64_t seed) {
    if (!(target_snr > 0.0)) throw ParameterError("apply_snr: target snr must be positive");
    const double m = img.mean();
    if (!(m > 0.0)) throw DegenerateInputError("apply_snr: image mean is zero, snr undefined");
    const double sd = m / target_snr;
    Rng rng(seed);
    Image out = img;
    for (auto& v : out.data) v += sd * rng.normal();
    out.clamp();
    return out;
}

Image apply_modifier(const Image& img, ModifierKind kind, double value, std::uint64_t seed, double base_rer,
                     double base_gsd_cm) {
    switch (kind) {
        case ModifierKind::Blur: return apply_blur(img, value);
        case ModifierKind::Sharpness: return apply_sharpness(img, value);
        case ModifierKind::Gsd: return apply_gsd(img, value * 100.0, img.gsd.value_or(base_gsd_cm));
        case ModifierKind::Rer: return apply_rer(img, value, base_rer);
        case ModifierKind::Snr: return apply_snr(img, value, seed);
    }
    throw ParameterError("unknown modifier kind");
}

namespace {

enum SeedTag : std::uint64_t { kModifierStream = 1, kCropStream = 2 };

struct ItemCrops {
    double value = 0.0;
    std::uint64_t seed = 0;
    std::vector<CropRect> rects;
    std::vector<Image> crops;
};

ItemCrops modify_and_crop(const Image& img, int image_index, const ParamGrid& grid, int k, int side, int crops,
                          std::uint64_t seed) {
    ItemCrops item;
    item.value = grid.value(k);
    const auto i = static_cast<std::uint64_t>(image_index);
    const auto kk = static_cast<std::uint64_t>(k);
    item.seed = derive_seed(seed, {i, kk, kModifierStream});
    const Image modified = circular_pad(apply_modifier(img, grid.kind, item.value, item.seed), side);
    item.rects = extract_crops(modified, side, crops, derive_seed(seed, {i, kk, kCropStream}));
    item.crops.reserve(item.rects.size());
    for (const auto& r : item.rects) item.crops.push_back(crop(modified, r));
    return item;
}

}  // namespace

json grid_json(const ParamGrid& g) {
    return {{"modifier", std::string(to_string(g.kind))}, {"n", g.n}, {"lo", g.lo}, {"hi", g.hi}};
}

ParamGrid grid_from_json(const json& j) {
    return ParamGrid(parse_modifier(j.at("modifier").get<std::string>()), j.at("n").get<int>(),
                     j.at("lo").get<double>(), j.at("hi").get<double>());
}

std::string DatasetManifest::to_jsonl() const {
    std::string out;
    json header = {{"record", "header"},  {"grid", grid_json(grid)}, {"side", side},
                   {"crops", crops},      {"seed", seed},            {"skipped", skipped},
                   {"entries", entries.size()}};
    out += header.dump() + "\n";
    for (const auto& e : entries) {
        json j = {{"source", e.source},
                  {"modifier", std::string(to_string(e.kind))},
                  {"value", e.value},
                  {"class", e.class_index},
                  {"x", e.rect.x},
                  {"y", e.rect.y},
                  {"side", e.rect.side},
                  {"seed", e.seed},
                  {"output", e.output}};
        out += j.dump() + "\n";
    }
    return out;
}

DatasetManifest DatasetManifest::from_jsonl(std::string_view text) {
    DatasetManifest m;
    std::istringstream in{std::string(text)};
    std::string line;
    bool have_header = false;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            if (!have_header) {
                if (j.value("record", "") != "header") throw DecodeError("manifest: first record must be the header");
                m.grid = grid_from_json(j.at("grid"));
                m.side = j.at("side").get<int>();
                m.crops = j.at("crops").get<int>();
                m.seed = j.at("seed").get<std::uint64_t>();
                m.skipped = j.at("skipped").get<std::vector<std::string>>();
                have_header = true;
                continue;
            }
            ManifestEntry e;
            e.source = j.at("source").get<std::string>();
            e.kind = parse_modifier(j.at("modifier").get<std::string>());
            e.value = j.at("value").get<double>();
            e.class_index = j.at("class").get<int>();
            e.rect = {j.at("x").get<int>(), j.at("y").get<int>(), j.at("side").get<int>()};
            e.seed = j.at("seed").get<std::uint64_t>();
            e.output = j.at("output").get<std::string>();
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw DecodeError(std::string("manifest: ") + ex.what());
    }
    if (!have_header) throw DecodeError("manifest: missing header record");
    return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << to_jsonl();
    if (!out) throw IoError("cannot write manifest " + path.string());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_jsonl(ss.str());
}

DatasetManifest generate_annotated_dataset(const std::vector<std::filesystem::path>& images, const ParamGrid& grid,
                                           int side, int crops, std::uint64_t seed,
                                           const std::filesystem::path& out_dir, int threads) {
    if (images.empty()) throw ParameterError("generate_annotated_dataset: no input images");
    if (side <= 0 || crops <= 0) throw ParameterError("generate_annotated_dataset: side and crops must be positive");
    DatasetManifest manifest;
    manifest.grid = grid;
    manifest.side = side;
    manifest.crops = crops;
    manifest.seed = seed;

    std::vector<Image> loaded(images.size());
    std::vector<bool> ok(images.size(), false);
    for (std::size_t i = 0; i < images.size(); ++i) {
        try {
            loaded[i] = load_image(images[i]);
            ok[i] = true;
        } catch (const DecodeError& e) {
            spdlog::warn("skipping {}: {}", images[i].string(), e.what());
            manifest.skipped.push_back(images[i].string());
        }
    }

    const std::size_t n_items = images.size() * static_cast<std::size_t>(grid.n);
    std::vector<std::vector<ManifestEntry>> slots(n_items);
    std::filesystem::create_directories(out_dir);
    std::size_t written = 0;
    std::mutex count_mutex;
    try {
        parallel_for(n_items, threads, [&](std::size_t item) {
            const std::size_t i = item / grid.n;
            const int k = static_cast<int>(item % grid.n);
            if (!ok[i]) return;
            const ItemCrops ic = modify_and_crop(loaded[i], static_cast<int>(i), grid, k, side, crops, seed);
            const std::string stem = images[i].stem().string();
            for (std::size_t j = 0; j < ic.crops.size(); ++j) {
                ManifestEntry e;
                e.source = images[i].string();
                e.kind = grid.kind;
                e.value = ic.value;
                e.class_index = k;
                e.rect = ic.rects[j];
                e.seed = ic.seed;
                e.output = (std::filesystem::path(std::string(to_string(grid.kind))) / std::to_string(k) /
                            (std::to_string(i) + "_" + stem + "_" + std::to_string(j) + ".png"))
                               .generic_string();
                save_image(ic.crops[j], out_dir / e.output);
                slots[item].push_back(std::move(e));
                std::lock_guard lock(count_mutex);
                ++written;
            }
        });
    } catch (const Error& e) {
        throw IoError(std::string("dataset generation aborted after ") + std::to_string(written) +
                      " crops written to " + out_dir.string() + ": " + e.what());
    }
    for (auto& s : slots)
        for (auto& e : s) manifest.entries.push_back(std::move(e));
    return manifest;
}

std::vector<AnnotatedCrop> make_annotated_crops(const std::vector<Image>& images, const ParamGrid& grid, int side,
                                                int crops, std::uint64_t seed, int threads) {
    const std::size_t n_items = images.size() * static_cast<std::size_t>(grid.n);
    std::vector<ItemCrops> items(n_items);
    parallel_for(n_items, threads, [&](std::size_t item) {
        const std::size_t i = item / grid.n;
        const int k = static_cast<int>(item % grid.n);
        items[item] = modify_and_crop(images[i], static_cast<int>(i), grid, k, side, crops, seed);
    });
    std::vector<AnnotatedCrop> out;
    out.reserve(n_items * crops);
    for (std::size_t item = 0; item < n_items; ++item) {
        for (auto& c : items[item].crops) {
            out.push_back({std::move(c), static_cast<int>(item / grid.n), static_cast<int>(item % grid.n),
                           items[item].value});
        }
    }
    return out;
}

}  // namespace qmr
