#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qmr::nn {

/// Dense [batch, channels, height, width] block of doubles.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n, int c, int h, int w, double fill = 0.0);

    std::size_t size() const { return v.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }
    double& at(int i, int ch, int y, int x) {
        return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    double at(int i, int ch, int y, int x) const {
        return v[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
    }
    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    std::string shape_string() const;
};

enum class LayerKind { Conv3x3, Relu, MaxPool2, GlobalAvgPool, Linear, Softmax, PixelShuffle };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int in = 0;      ///< input channels (conv) or features (linear)
    int out = 0;     ///< output channels or features
    int stride = 1;  ///< conv only
    int scale = 0;   ///< pixel shuffle only

    static LayerSpec conv3x3(int in, int out, int stride = 1) { return {LayerKind::Conv3x3, in, out, stride, 0}; }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec maxpool2() { return {LayerKind::MaxPool2}; }
    static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
    static LayerSpec linear(int in, int out) { return {LayerKind::Linear, in, out}; }
    static LayerSpec softmax() { return {LayerKind::Softmax}; }
    static LayerSpec pixel_shuffle(int scale) { return {LayerKind::PixelShuffle, 0, 0, 1, scale}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 0;  ///< parameter initialization

    /// conv(1,16) relu pool conv(16,32) relu pool conv(32,64) relu gap linear(64,classes) softmax
    static ModelSpec micro_encoder(int classes, std::uint64_t seed);

    nlohmann::json to_json() const;
    static ModelSpec from_json(const nlohmann::json& j);
    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Trainable array with its accumulated gradient.
struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
};

class Layer;

/// Per-layer state captured by a training forward pass.
struct LayerCache {
    Tensor4 input;
    Tensor4 output;
    std::vector<double> cols;  ///< conv: unfolded input, one block per sample
    std::vector<int> argmax;   ///< max pool: winning input index per output
};

/// Feed-forward stack built from a ModelSpec.
///
/// forward() keeps the activations needed by backward(); infer() keeps
/// nothing and is const, so a trained model can serve several threads.
class Model {
public:
    explicit Model(ModelSpec spec);
    ~Model();
    Model(const Model& other);
    Model& operator=(const Model& other);
    Model(Model&&) noexcept;
    Model& operator=(Model&&) noexcept;

    const ModelSpec& spec() const { return spec_; }

    Tensor4 forward(const Tensor4& x);
    Tensor4 infer(const Tensor4& x) const;

    /// Accumulates parameter gradients and returns d(loss)/d(input).
    Tensor4 backward(const Tensor4& grad_output);

    std::vector<Param*> parameters();
    std::vector<const Param*> parameters() const;
    void zero_grad();
    std::size_t parameter_count() const;

private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<LayerCache> cache_;
    Tensor4 output_shape_;  ///< dimensions only
    bool have_forward_ = false;
};

struct LossValue {
    double value = 0.0;
    std::vector<double> grad;  ///< d(value)/d(pred)
};

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross entropy; pred is clamped to [eps, 1 - eps].
LossValue bce_loss(std::span<const double> pred, std::span<const double> target);
/// Mean absolute difference; the subgradient at 0 is 0.
LossValue l1_loss(std::span<const double> pred, std::span<const double> target);
/// Mean squared difference.
LossValue l2_loss(std::span<const double> pred, std::span<const double> target);

/// SGD with momentum and L2 weight decay:
///   v <- momentum v + grad + wd param;  param <- param - lr v
class Sgd {
public:
    Sgd(double lr, double momentum = 0.0, double weight_decay = 0.0);
    /// Throws TrainingError (parameters untouched) on a non-finite gradient.
    void step(const std::vector<Param*>& params);
    double lr() const { return lr_; }
    void set_lr(double lr);

private:
    double lr_, momentum_, wd_;
    std::vector<std::vector<double>> velocity_;
};

/// JSON checkpoint: {"format", "version", "spec", "params", "metadata"}.
/// Doubles are written in shortest round-trip form, so values reload exactly.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const Model& model, const nlohmann::json& metadata, const std::filesystem::path& path);
nlohmann::json checkpoint_json(const Model& model, const nlohmann::json& metadata);
/// Throws CheckpointError on a corrupt file or version mismatch.
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);
Model model_from_json(const nlohmann::json& j, nlohmann::json* metadata = nullptr);

}  // namespace qmr::nn
