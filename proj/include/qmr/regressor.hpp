#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmr/eval.hpp"
#include "qmr/image.hpp"
#include "qmr/modifiers.hpp"
#include "qmr/nn.hpp"

namespace qmr {

enum class Topology {
    SingleHead,  ///< one grid, one encoder
    MultiHead,   ///< shared encoder, one head per grid
    MultiBranch  ///< one encoder and head per grid
};

std::string_view to_string(Topology t);
Topology parse_topology(std::string_view name);

struct RegressorConfig {
    std::vector<ParamGrid> grids;
    Topology topology = Topology::SingleHead;
    int side = 64;   ///< crop side R
    int crops = 8;   ///< crops per image C
    int epochs = 30;
    int batch = 32;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    double soft_threshold = 0.3;
    double val_fraction = 0.2;

    /// Throws ParameterError on an inconsistent configuration.
    void validate() const;
    nlohmann::json to_json() const;
    static RegressorConfig from_json(const nlohmann::json& j);
};

/// Fixed input conditioning applied by QmrNet before its encoders: each
/// sample has its mean removed and is scaled by kInputGain. Removing the DC
/// level lets the untuned SGD defaults learn from small contrast differences.
inline constexpr double kInputGain = 10.0;
nn::Tensor4 condition_input(const nn::Tensor4& x);
/// Gradient of a loss through condition_input (the map is linear and symmetric).
nn::Tensor4 condition_input_backward(const nn::Tensor4& grad);

/// Encoder(s) plus one classification head per grid.
class QmrNet {
public:
    QmrNet(RegressorConfig config, std::uint64_t seed);

    const RegressorConfig& config() const { return config_; }
    int heads() const { return static_cast<int>(heads_.size()); }
    int encoders() const { return static_cast<int>(encoders_.size()); }

    /// Post-softmax probabilities of `head` for a batch [n, 1, R, R] in [0, 1].
    nn::Tensor4 infer(const nn::Tensor4& x, int head) const;
    /// Training pass that keeps activations for backward().
    nn::Tensor4 forward(const nn::Tensor4& x, int head);
    /// Gradient w.r.t. the input of the last forward() of `head`.
    nn::Tensor4 backward(const nn::Tensor4& grad_probabilities, int head);

    /// Parameters that influence `head` (its encoder and its head).
    std::vector<nn::Param*> parameters(int head);
    std::vector<nn::Param*> all_parameters();
    void zero_grad();

    nlohmann::json to_json(const nlohmann::json& metadata) const;
    static QmrNet from_json(const nlohmann::json& j, nlohmann::json* metadata = nullptr);

private:
    QmrNet() = default;
    int encoder_of(int head) const { return config_.topology == Topology::MultiBranch ? head : 0; }

    RegressorConfig config_;
    std::vector<nn::Model> encoders_;
    std::vector<nn::Model> heads_;
};

inline constexpr int kRegressorCheckpointVersion = 1;

void save_model(const QmrNet& net, const std::filesystem::path& path, const nlohmann::json& metadata = {});
/// Throws CheckpointError on corrupt or wrong-version files, and
/// GridMismatchError when `expected_grids` is non-empty and differs.
QmrNet load_model(const std::filesystem::path& path, const std::vector<ParamGrid>& expected_grids = {},
                  nlohmann::json* metadata = nullptr);

/// Training example: a side x side crop annotated for one head.
struct LabeledCrop {
    Image crop;
    int source = 0;  ///< source image id, used for the split
    int head = 0;
    int class_index = 0;
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;  ///< mean training BCE
    double med_r = 0.0;
    double r_at_1 = 0.0;
    double r_at_5 = 0.0;
};

struct TrainResult {
    QmrNet best;  ///< parameters of the epoch with the lowest validation medR
    int best_epoch = 0;
    std::vector<EpochLog> log;
    std::vector<int> train_sources, val_sources;
};

/// "epoch,loss,medR,R@1,R@5" with one row per epoch.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

/// Image-level split: the sorted distinct sources are shuffled with `seed` and
/// the first round(fraction * count) (at least one) go to validation.
void split_sources(const std::vector<int>& sources, double val_fraction, std::uint64_t seed, std::vector<int>& train,
                   std::vector<int>& val);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD on BCE between head probabilities and one-hot targets.
/// Validation metrics are computed per crop, averaged over heads.
TrainResult train_regressor(const std::vector<LabeledCrop>& data, const RegressorConfig& config, std::uint64_t seed,
                            const EpochCallback& on_epoch = {});

/// Builds crops in memory with make_annotated_crops (one grid per head) and trains.
TrainResult train_regressor(const std::vector<Image>& images, const RegressorConfig& config, std::uint64_t seed,
                            int threads = 1, const EpochCallback& on_epoch = {});

/// Loads the crops a manifest points to (relative to manifest_dir) and trains a
/// single-head model on the manifest grid. Throws GridMismatchError when the
/// configured grid differs from the manifest's.
TrainResult train_from_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_dir,
                                const RegressorConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Luma scaled to [0, 1] as a [1, 1, h, w] tensor.
nn::Tensor4 to_tensor(const Image& img);
/// Stacks equally sized images into one batch.
nn::Tensor4 to_batch(const std::vector<Image>& imgs);

struct HeadPrediction {
    ParamGrid grid;
    std::vector<double> probabilities;
    std::vector<int> labels;  ///< classes with probability >= soft threshold
    int argmax = 0;
    double value = 0.0;  ///< grid value of argmax
};

/// C crops of the circularly padded image, probabilities averaged over crops
/// and renormalized. One entry per head.
std::vector<HeadPrediction> predict(const QmrNet& net, const Image& img, int crops, std::uint64_t seed);

/// Assembles grid values for `requested` parameters from several models.
/// Throws ParameterError when a requested parameter has no head.
QualityVector predict_quality_vector(const std::vector<const QmrNet*>& models, const Image& img, int crops,
                                     std::uint64_t seed,
                                     const std::vector<ModifierKind>& requested = {std::begin(kAllModifiers),
                                                                                   std::end(kAllModifiers)});

enum class QmrLossKind { L1, L2, Bce };
std::string_view to_string(QmrLossKind k);
QmrLossKind parse_qmr_loss(std::string_view name);

struct TensorLoss {
    double value = 0.0;
    nn::Tensor4 grad;  ///< d(value)/d(sr)
};

/// Distance between the head outputs for hr and sr ([n, 1, R, R] in [0, 1]).
/// Only sr receives a gradient; the network's own parameter gradients are
/// cleared afterwards and its weights are never changed.
TensorLoss qmr_loss(QmrNet& net, const nn::Tensor4& hr, const nn::Tensor4& sr, QmrLossKind kind, int head = 0);

enum class ContentLoss { L1, L2 };
std::string_view to_string(ContentLoss k);
ContentLoss parse_content_loss(std::string_view name);

/// content(sr, hr) + lambda * qmr_loss, where content is the mean absolute
/// or mean squared difference. `net` may be null when lambda is 0.
TensorLoss combined_sr_loss(QmrNet* net, const nn::Tensor4& hr, const nn::Tensor4& sr, double lambda,
                            QmrLossKind kind = QmrLossKind::L1, int head = 0,
                            ContentLoss content = ContentLoss::L1);

}  // namespace qmr
