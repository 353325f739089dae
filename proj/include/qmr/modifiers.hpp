#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmr/image.hpp"

namespace qmr {

enum class ModifierKind { Blur, Sharpness, Gsd, Rer, Snr };

inline constexpr ModifierKind kAllModifiers[] = {ModifierKind::Blur, ModifierKind::Sharpness, ModifierKind::Gsd,
                                                 ModifierKind::Rer, ModifierKind::Snr};

/// Short names used on the command line, in manifests and in output paths:
/// blur, sharpness, gsd, rer, snr.
std::string_view to_string(ModifierKind kind);
ModifierKind parse_modifier(std::string_view name);

/// N equally spaced parameter values lo..hi (inclusive); class k <-> values[k].
///
/// Units follow the modifier: blur sigma in pixels, sharpness factor F, GSD in
/// metres per pixel, RER in (0, 1), SNR as a ratio.
struct ParamGrid {
    ModifierKind kind = ModifierKind::Blur;
    int n = 2;
    double lo = 0.0;
    double hi = 1.0;

    ParamGrid() = default;
    ParamGrid(ModifierKind kind, int n, double lo, double hi);

    /// Interval grids used for training: blur 50 on [1, 2.5], sharpness 9 on
    /// [1, 10], gsd 10 on [.30, .60], rer 40 on [.15, .55], snr 40 on [15, 30].
    static ParamGrid defaults(ModifierKind kind);

    double step() const { return n > 1 ? (hi - lo) / (n - 1) : 0.0; }
    double value(int k) const;
    std::vector<double> values() const;

    friend bool operator==(const ParamGrid&, const ParamGrid&) = default;
};

/// {"modifier", "n", "lo", "hi"}
nlohmann::json grid_json(const ParamGrid& grid);
ParamGrid grid_from_json(const nlohmann::json& j);

/// Nearest grid index; ties go to the lower index. Values outside [lo, hi]
/// are clamped (a warning is logged once per call site through the logger).
int value_to_class(const ParamGrid& grid, double value);
double class_to_value(const ParamGrid& grid, int k);

// Modifiers. All operate per channel and return images clamped to
// [0, max_value].

/// 7x7 Gaussian, reflect-101 borders.
Image apply_blur(const Image& img, double sigma);

/// Unsharp masking above 1, blend toward a sigma 1 Gaussian below 1, identity at 1.
Image apply_sharpness(const Image& img, double factor);
inline constexpr double kSharpnessSigma = 1.0;

/// Upscale by target/base (both cm/px) and tag the result with target_gsd.
Image apply_gsd(const Image& img, double target_gsd, double base_gsd);

/// Gaussian blur sigma whose ideal edge has the requested relative edge
/// response: erf(1 / (2 sqrt(2) sigma)) = rer.
double rer_to_sigma(double target_rer);
double sigma_to_rer(double sigma);

/// Degrades the edge response from base_rer to target_rer by a Gaussian whose
/// variance is the difference of the two model variances.
Image apply_rer(const Image& img, double target_rer, double base_rer = 0.55);

/// Additive zero-mean Gaussian noise with std = mean(img) / target_snr.
Image apply_snr(const Image& img, double target_snr, std::uint64_t seed);

/// Defaults for images without ground-truth annotations.
inline constexpr double kDefaultBaseRer = 0.55;
inline constexpr double kDefaultBaseGsdCm = 30.0;

/// Applies `kind` with parameter `value` given in grid units.
Image apply_modifier(const Image& img, ModifierKind kind, double value, std::uint64_t seed,
                     double base_rer = kDefaultBaseRer, double base_gsd_cm = kDefaultBaseGsdCm);

struct ManifestEntry {
    std::string source;
    ModifierKind kind = ModifierKind::Blur;
    double value = 0.0;
    int class_index = 0;
    CropRect rect;
    std::uint64_t seed = 0;
    std::string output;  ///< relative to the manifest directory
};

struct DatasetManifest {
    ParamGrid grid;
    int side = 64;
    int crops = 8;
    std::uint64_t seed = 0;
    std::vector<std::string> skipped;  ///< sources that could not be read
    std::vector<ManifestEntry> entries;

    /// JSON lines: a header record followed by one record per entry.
    std::string to_jsonl() const;
    static DatasetManifest from_jsonl(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

/// For every image x grid value x crop index, writes one modified crop to
/// out_dir/<modifier>/<class>/ and records it. Work items are independent and
/// run on up to `threads` workers; the manifest order does not depend on it.
DatasetManifest generate_annotated_dataset(const std::vector<std::filesystem::path>& images, const ParamGrid& grid,
                                           int side, int crops, std::uint64_t seed,
                                           const std::filesystem::path& out_dir, int threads = 1);

/// In-memory counterpart used by training: the crops themselves, in the same
/// order generate_annotated_dataset would record them.
struct AnnotatedCrop {
    Image crop;
    int source = 0;
    int class_index = 0;
    double value = 0.0;
};
std::vector<AnnotatedCrop> make_annotated_crops(const std::vector<Image>& images, const ParamGrid& grid, int side,
                                                int crops, std::uint64_t seed, int threads = 1);

}  // namespace qmr
