#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qmr/image.hpp"
#include "qmr/nn.hpp"
#include "qmr/regressor.hpp"

namespace qmr {

/// Pixel replication; output is input x scale in both dimensions.
Image upscale_nearest(const Image& img, int scale);

/// Catmull-Rom bicubic (a = -0.5) with half-pixel centres and edge-replicated
/// borders, clamped to [0, max_value].
Image upscale_bicubic(const Image& img, int scale);

enum class SrKind { Nearest, Bilinear, Bicubic, TinySr };

/// conv(1,16) relu conv(16,16) relu conv(16,scale^2) pixel_shuffle(scale).
nn::ModelSpec tiny_sr_spec(int scale, std::uint64_t seed);

/// One super-resolution method. TinySr predicts a luma residual that is
/// added to the bicubic upscale of its input.
struct SrMethod {
    std::string name;
    SrKind kind = SrKind::Bicubic;
    int scale = 2;
    std::shared_ptr<const nn::Model> model;  ///< TinySr only

    static SrMethod nearest(int scale);
    static SrMethod bilinear(int scale);
    static SrMethod bicubic(int scale);
    static SrMethod tiny(std::string name, nn::Model model, int scale);
};

/// Upscales `img` by method.scale. The network sees luma only; for RGB input
/// the chroma of the bicubic upscale is kept. Throws ParameterError when a
/// TinySr method has no model or the model's scale differs.
Image apply_sr(const SrMethod& method, const Image& img);

struct SrHyper {
    int epochs = 20;
    int patch = 64;              ///< HR patch side, a multiple of the scale
    int patches_per_image = 32;  ///< per epoch
    int batch = 4;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double val_fraction = 0.25;  ///< held-out images

    void validate(int scale) const;
    nlohmann::json to_json() const;
    static SrHyper from_json(const nlohmann::json& j);
};

struct SrEpochLog {
    int epoch = 0;
    double loss = 0.0;  ///< mean combined training loss
    double psnr = 0.0;  ///< held-out mean
    double ssim = 0.0;  ///< held-out mean
};

/// "epoch,loss,psnr,ssim"
std::string sr_log_csv(const std::vector<SrEpochLog>& log);

struct SrTrainResult {
    nn::Model model;
    std::vector<SrEpochLog> log;
    std::vector<int> train_images, val_images;
    double bicubic_psnr = 0.0;  ///< held-out baseline for comparison
};

struct SrTrainOptions {
    int scale = 2;
    double lambda = 0.0;  ///< weight of the quality term
    QmrNet* qmr = nullptr;
    QmrLossKind kind = QmrLossKind::L1;
    int head = 0;
    ContentLoss content = ContentLoss::L2;
    SrHyper hyper;
};

/// Trains a TinySr network on LR patches produced by downsample() from
/// luma HR patches. The loss is combined_sr_loss. Throws TrainingError on a
/// non-finite loss.
SrTrainResult train_tiny_sr(const std::vector<Image>& hr, const SrTrainOptions& options, std::uint64_t seed,
                            const std::function<void(const SrEpochLog&)>& on_epoch = {});

/// Held-out pairs as used during training: LR is downsample(HR) and HR is
/// trimmed to scale x LR.
struct SrPair {
    Image lr, hr;
};
SrPair make_sr_pair(const Image& hr, int scale, double pre_blur_sigma = 0.0);

/// Checkpoint in the nn format with {"method": "tinysr", "scale", ...} metadata.
void save_tiny_sr(const nn::Model& model, int scale, const nlohmann::json& extra, const std::filesystem::path& path);
/// Throws CheckpointError when the file is not a TinySr checkpoint.
SrMethod load_tiny_sr(const std::filesystem::path& path, std::string name = "tinysr");

}  // namespace qmr
