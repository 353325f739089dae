#include "qmr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Core>

#include "qmr/error.hpp"
#include "qmr/rng.hpp"

namespace qmr::nn {

using json = nlohmann::json;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

Tensor4::Tensor4(int n_, int c_, int h_, int w_, double fill) : n(n_), c(c_), h(h_), w(w_) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw DimensionError("Tensor4: negative dimension");
    v.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor4::shape_string() const {
    std::ostringstream s;
    s << '[' << n << ", " << c << ", " << h << ", " << w << ']';
    return s.str();
}

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::Linear: return "linear";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::PixelShuffle: return "pixel_shuffle";
    }
    return "?";
}

namespace {

LayerKind parse_layer_kind(const std::string& s) {
    for (auto k : {LayerKind::Conv3x3, LayerKind::Relu, LayerKind::MaxPool2, LayerKind::GlobalAvgPool,
                   LayerKind::Linear, LayerKind::Softmax, LayerKind::PixelShuffle})
        if (to_string(k) == s) return k;
    throw CheckpointError("unknown layer kind '" + s + "'");
}

}  // namespace

ModelSpec ModelSpec::micro_encoder(int classes, std::uint64_t seed) {
    ModelSpec s;
    s.seed = seed;
    s.layers = {LayerSpec::conv3x3(1, 16),  LayerSpec::relu(), LayerSpec::maxpool2(),
                LayerSpec::conv3x3(16, 32), LayerSpec::relu(), LayerSpec::maxpool2(),
                LayerSpec::conv3x3(32, 64), LayerSpec::relu(), LayerSpec::global_avg_pool(),
                LayerSpec::linear(64, classes), LayerSpec::softmax()};
    return s;
}

json ModelSpec::to_json() const {
    json layers_j = json::array();
    for (const auto& l : layers) {
        json j = {{"kind", std::string(to_string(l.kind))}};
        if (l.kind == LayerKind::Conv3x3) j.update({{"in", l.in}, {"out", l.out}, {"stride", l.stride}});
        if (l.kind == LayerKind::Linear) j.update({{"in", l.in}, {"out", l.out}});
        if (l.kind == LayerKind::PixelShuffle) j["scale"] = l.scale;
        layers_j.push_back(std::move(j));
    }
    return {{"layers", layers_j}, {"seed", seed}};
}

ModelSpec ModelSpec::from_json(const json& j) {
    ModelSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& lj : j.at("layers")) {
        LayerSpec l;
        l.kind = parse_layer_kind(lj.at("kind").get<std::string>());
        l.in = lj.value("in", 0);
        l.out = lj.value("out", 0);
        l.stride = lj.value("stride", 1);
        l.scale = lj.value("scale", 0);
        s.layers.push_back(l);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Layers

class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual Tensor4 forward(const Tensor4& x, LayerCache& cache) const = 0;
    /// Adds parameter gradients, returns the input gradient.
    virtual Tensor4 backward(const Tensor4& g, const LayerCache& cache) = 0;
    virtual std::vector<Param*> params() { return {}; }

    const std::string& name() const { return name_; }

protected:
    [[noreturn]] void shape_error(const std::string& what) const {
        throw DimensionError("layer " + name_ + ": " + what);
    }

    std::string name_;
};

namespace {

void kaiming_uniform(std::vector<double>& w, int fan_in, std::uint64_t seed) {
    Rng rng(seed);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& x : w) x = (2.0 * rng.uniform() - 1.0) * bound;
}

class Conv3x3 final : public Layer {
public:
    Conv3x3(std::string name, const LayerSpec& s, std::uint64_t seed) : Layer(std::move(name)), in_(s.in), out_(s.out), stride_(s.stride) {
        if (in_ < 1 || out_ < 1 || stride_ < 1) shape_error("invalid conv3x3 parameters");
        weight_.name = name_ + ".weight";
        bias_.name = name_ + ".bias";
        weight_.value.resize(static_cast<std::size_t>(out_) * in_ * 9);
        weight_.grad.assign(weight_.value.size(), 0.0);
        bias_.value.assign(out_, 0.0);
        bias_.grad.assign(out_, 0.0);
        kaiming_uniform(weight_.value, in_ * 9, seed);
    }

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }

    Tensor4 forward(const Tensor4& x, LayerCache& cache) const override {
        if (x.c != in_) shape_error("expected " + std::to_string(in_) + " input channels, got " + x.shape_string());
        const int oh = (x.h - 1) / stride_ + 1, ow = (x.w - 1) / stride_ + 1;
        if (x.h < 1 || x.w < 1) shape_error("empty input " + x.shape_string());
        const std::size_t k = static_cast<std::size_t>(in_) * 9, p = static_cast<std::size_t>(oh) * ow;
        cache.cols.assign(k * p * x.n, 0.0);
        Tensor4 y(x.n, out_, oh, ow);
        ConstMapMatrix wm(weight_.value.data(), out_, static_cast<Eigen::Index>(k));
        for (int i = 0; i < x.n; ++i) {
            double* col = cache.cols.data() + k * p * i;
            im2col(x, i, oh, ow, col);
            MapMatrix ym(&y.v[static_cast<std::size_t>(i) * out_ * p], out_, static_cast<Eigen::Index>(p));
            ym.noalias() = wm * ConstMapMatrix(col, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
        }
        return y;
    }

    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        const Tensor4& x = cache.input;
        const int oh = g.h, ow = g.w;
        const std::size_t k = static_cast<std::size_t>(in_) * 9, p = static_cast<std::size_t>(oh) * ow;
        MapMatrix dw(weight_.grad.data(), out_, static_cast<Eigen::Index>(k));
        ConstMapMatrix wm(weight_.value.data(), out_, static_cast<Eigen::Index>(k));
        Tensor4 dx(x.n, x.c, x.h, x.w);
        std::vector<double> dcol(k * p);
        for (int i = 0; i < x.n; ++i) {
            ConstMapMatrix gm(&g.v[static_cast<std::size_t>(i) * out_ * p], out_, static_cast<Eigen::Index>(p));
            ConstMapMatrix col(cache.cols.data() + k * p * i, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            dw.noalias() += gm * col.transpose();
            for (int o = 0; o < out_; ++o) bias_.grad[o] += gm.row(o).sum();
            MapMatrix dc(dcol.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p));
            dc.noalias() = wm.transpose() * gm;
            col2im(dcol.data(), i, oh, ow, dx);
        }
        return dx;
    }

    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    // Row (ci, ky, kx), column (oy, ox); zero padding of one pixel.
    void im2col(const Tensor4& x, int i, int oh, int ow, double* col) const {
        const std::size_t p = static_cast<std::size_t>(oh) * ow;
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    double* row = col + ((static_cast<std::size_t>(ci) * 3 + ky) * 3 + kx) * p;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - 1;
                        double* dst = row + static_cast<std::size_t>(oy) * ow;
                        if (iy < 0 || iy >= x.h) {
                            std::fill(dst, dst + ow, 0.0);
                            continue;
                        }
                        const double* src = &x.v[((static_cast<std::size_t>(i) * x.c + ci) * x.h + iy) * x.w];
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - 1;
                            dst[ox] = (ix < 0 || ix >= x.w) ? 0.0 : src[ix];
                        }
                    }
                }
    }

    void col2im(const double* col, int i, int oh, int ow, Tensor4& dx) const {
        const std::size_t p = static_cast<std::size_t>(oh) * ow;
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double* row = col + ((static_cast<std::size_t>(ci) * 3 + ky) * 3 + kx) * p;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - 1;
                        if (iy < 0 || iy >= dx.h) continue;
                        double* dst = &dx.v[((static_cast<std::size_t>(i) * dx.c + ci) * dx.h + iy) * dx.w];
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - 1;
                            if (ix >= 0 && ix < dx.w) dst[ix] += row[static_cast<std::size_t>(oy) * ow + ox];
                        }
                    }
                }
    }

    int in_, out_, stride_;
    Param weight_, bias_;
};

class Relu final : public Layer {
public:
    using Layer::Layer;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache&) const override {
        Tensor4 y = x;
        for (auto& v : y.v) v = v > 0.0 ? v : 0.0;
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        Tensor4 dx = g;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (!(cache.input.v[i] > 0.0)) dx.v[i] = 0.0;
        return dx;
    }
};

class MaxPool2 final : public Layer {
public:
    using Layer::Layer;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache& cache) const override {
        if (x.h < 2 || x.w < 2) shape_error("input " + x.shape_string() + " too small for 2x2 pooling");
        Tensor4 y(x.n, x.c, x.h / 2, x.w / 2);
        cache.argmax.assign(y.size(), 0);
        std::size_t o = 0;
        for (int i = 0; i < x.n; ++i)
            for (int c = 0; c < x.c; ++c)
                for (int oy = 0; oy < y.h; ++oy)
                    for (int ox = 0; ox < y.w; ++ox, ++o) {
                        int best = -1;
                        double bv = 0.0;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const int idx = static_cast<int>(
                                    ((static_cast<std::size_t>(i) * x.c + c) * x.h + 2 * oy + dy) * x.w + 2 * ox + dx);
                                if (best < 0 || x.v[idx] > bv) {
                                    best = idx;
                                    bv = x.v[idx];
                                }
                            }
                        y.v[o] = bv;
                        cache.argmax[o] = best;
                    }
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        Tensor4 dx(cache.input.n, cache.input.c, cache.input.h, cache.input.w);
        for (std::size_t o = 0; o < g.v.size(); ++o) dx.v[cache.argmax[o]] += g.v[o];
        return dx;
    }
};

class GlobalAvgPool final : public Layer {
public:
    using Layer::Layer;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache&) const override {
        if (x.h < 1 || x.w < 1) shape_error("empty input " + x.shape_string());
        Tensor4 y(x.n, x.c, 1, 1);
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        for (std::size_t k = 0; k < y.v.size(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < hw; ++j) s += x.v[k * hw + j];
            y.v[k] = s / static_cast<double>(hw);
        }
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        const Tensor4& x = cache.input;
        Tensor4 dx(x.n, x.c, x.h, x.w);
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        for (std::size_t k = 0; k < g.v.size(); ++k) {
            const double d = g.v[k] / static_cast<double>(hw);
            std::fill(dx.v.begin() + k * hw, dx.v.begin() + (k + 1) * hw, d);
        }
        return dx;
    }
};

// Flattens [c, h, w] into features; output is [n, out, 1, 1].
class Linear final : public Layer {
public:
    Linear(std::string name, const LayerSpec& s, std::uint64_t seed) : Layer(std::move(name)), in_(s.in), out_(s.out) {
        if (in_ < 1 || out_ < 1) shape_error("invalid linear parameters");
        weight_.name = name_ + ".weight";
        bias_.name = name_ + ".bias";
        weight_.value.resize(static_cast<std::size_t>(out_) * in_);
        weight_.grad.assign(weight_.value.size(), 0.0);
        bias_.value.assign(out_, 0.0);
        bias_.grad.assign(out_, 0.0);
        kaiming_uniform(weight_.value, in_, seed);
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache&) const override {
        if (static_cast<int>(x.sample_size()) != in_)
            shape_error("expected " + std::to_string(in_) + " features, got " + x.shape_string());
        Tensor4 y(x.n, out_, 1, 1);
        ConstMapMatrix xm(x.v.data(), x.n, in_);
        ConstMapMatrix wm(weight_.value.data(), out_, in_);
        MapMatrix ym(y.v.data(), x.n, out_);
        ym.noalias() = xm * wm.transpose();
        for (int i = 0; i < x.n; ++i)
            for (int o = 0; o < out_; ++o) ym(i, o) += bias_.value[o];
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        const Tensor4& x = cache.input;
        ConstMapMatrix gm(g.v.data(), g.n, out_);
        ConstMapMatrix xm(x.v.data(), x.n, in_);
        ConstMapMatrix wm(weight_.value.data(), out_, in_);
        MapMatrix(weight_.grad.data(), out_, in_).noalias() += gm.transpose() * xm;
        for (int i = 0; i < g.n; ++i)
            for (int o = 0; o < out_; ++o) bias_.grad[o] += gm(i, o);
        Tensor4 dx(x.n, x.c, x.h, x.w);
        MapMatrix(dx.v.data(), x.n, in_).noalias() = gm * wm;
        return dx;
    }
    std::vector<Param*> params() override { return {&weight_, &bias_}; }

private:
    int in_, out_;
    Param weight_, bias_;
};

// Softmax over channels at every (sample, y, x).
class Softmax final : public Layer {
public:
    using Layer::Layer;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache&) const override {
        if (x.c < 1) shape_error("no channels");
        Tensor4 y(x.n, x.c, x.h, x.w);
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        for (int i = 0; i < x.n; ++i)
            for (std::size_t s = 0; s < hw; ++s) {
                const std::size_t base = static_cast<std::size_t>(i) * x.c * hw + s;
                double m = x.v[base];
                for (int c = 1; c < x.c; ++c) m = std::max(m, x.v[base + c * hw]);
                double z = 0.0;
                for (int c = 0; c < x.c; ++c) z += (y.v[base + c * hw] = std::exp(x.v[base + c * hw] - m));
                for (int c = 0; c < x.c; ++c) y.v[base + c * hw] /= z;
            }
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        const Tensor4& y = cache.output;
        Tensor4 dx(y.n, y.c, y.h, y.w);
        const std::size_t hw = static_cast<std::size_t>(y.h) * y.w;
        for (int i = 0; i < y.n; ++i)
            for (std::size_t s = 0; s < hw; ++s) {
                const std::size_t base = static_cast<std::size_t>(i) * y.c * hw + s;
                double dot = 0.0;
                for (int c = 0; c < y.c; ++c) dot += g.v[base + c * hw] * y.v[base + c * hw];
                for (int c = 0; c < y.c; ++c) dx.v[base + c * hw] = y.v[base + c * hw] * (g.v[base + c * hw] - dot);
            }
        return dx;
    }
};

// [n, c r^2, h, w] -> [n, c, h r, w r]; channel c r^2 + dy r + dx feeds (y r + dy, x r + dx).
class PixelShuffle final : public Layer {
public:
    PixelShuffle(std::string name, int r) : Layer(std::move(name)), r_(r) {
        if (r_ < 1) shape_error("scale must be positive");
    }
    std::unique_ptr<Layer> clone() const override { return std::make_unique<PixelShuffle>(*this); }
    Tensor4 forward(const Tensor4& x, LayerCache&) const override {
        if (x.c % (r_ * r_) != 0)
            shape_error("channels of " + x.shape_string() + " not divisible by " + std::to_string(r_ * r_));
        Tensor4 y(x.n, x.c / (r_ * r_), x.h * r_, x.w * r_);
        for (int i = 0; i < x.n; ++i)
            for (int c = 0; c < x.c; ++c) {
                const int oc = c / (r_ * r_), dy = (c / r_) % r_, dx = c % r_;
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx) y.at(i, oc, yy * r_ + dy, xx * r_ + dx) = x.at(i, c, yy, xx);
            }
        return y;
    }
    Tensor4 backward(const Tensor4& g, const LayerCache& cache) override {
        const Tensor4& x = cache.input;
        Tensor4 dx(x.n, x.c, x.h, x.w);
        for (int i = 0; i < x.n; ++i)
            for (int c = 0; c < x.c; ++c) {
                const int oc = c / (r_ * r_), dy = (c / r_) % r_, ddx = c % r_;
                for (int yy = 0; yy < x.h; ++yy)
                    for (int xx = 0; xx < x.w; ++xx) dx.at(i, c, yy, xx) = g.at(i, oc, yy * r_ + dy, xx * r_ + ddx);
            }
        return dx;
    }

private:
    int r_;
};

std::unique_ptr<Layer> make_layer(const LayerSpec& s, std::size_t index, std::uint64_t seed) {
    const std::string name = std::to_string(index) + ":" + std::string(to_string(s.kind));
    const std::uint64_t layer_seed = derive_seed(seed, {index});
    switch (s.kind) {
        case LayerKind::Conv3x3: return std::make_unique<Conv3x3>(name, s, layer_seed);
        case LayerKind::Relu: return std::make_unique<Relu>(name);
        case LayerKind::MaxPool2: return std::make_unique<MaxPool2>(name);
        case LayerKind::GlobalAvgPool: return std::make_unique<GlobalAvgPool>(name);
        case LayerKind::Linear: return std::make_unique<Linear>(name, s, layer_seed);
        case LayerKind::Softmax: return std::make_unique<Softmax>(name);
        case LayerKind::PixelShuffle: return std::make_unique<PixelShuffle>(name, s.scale);
    }
    throw ParameterError("unknown layer kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.layers.empty()) throw ParameterError("model spec has no layers");
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) layers_.push_back(make_layer(spec_.layers[i], i, spec_.seed));
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

Model::Model(const Model& other) : spec_(other.spec_) {
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
    if (this != &other) {
        Model tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

Tensor4 Model::forward(const Tensor4& x) {
    cache_.assign(layers_.size(), {});
    Tensor4 cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cache_[i].input = cur;
        cur = layers_[i]->forward(cur, cache_[i]);
        if (spec_.layers[i].kind == LayerKind::Softmax) cache_[i].output = cur;
    }
    have_forward_ = true;
    output_shape_ = Tensor4();
    output_shape_.n = cur.n;
    output_shape_.c = cur.c;
    output_shape_.h = cur.h;
    output_shape_.w = cur.w;
    return cur;
}

Tensor4 Model::infer(const Tensor4& x) const {
    Tensor4 cur = x;
    LayerCache scratch;
    for (const auto& l : layers_) cur = l->forward(cur, scratch);
    return cur;
}

Tensor4 Model::backward(const Tensor4& grad_output) {
    if (!have_forward_) throw StateError("backward called before forward");
    if (!grad_output.same_shape(output_shape_))
        throw DimensionError("backward: gradient " + grad_output.shape_string() + " does not match output " +
                             output_shape_.shape_string());
    Tensor4 g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, cache_[i]);
    return g;
}

std::vector<Param*> Model::parameters() {
    std::vector<Param*> out;
    for (auto& l : layers_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

std::vector<const Param*> Model::parameters() const {
    std::vector<const Param*> out;
    for (auto& l : layers_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

void Model::zero_grad() {
    for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        throw DimensionError(std::string(what) + ": length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    if (a.empty()) throw DimensionError(std::string(what) + ": empty input");
}

}  // namespace

LossValue bce_loss(std::span<const double> pred, std::span<const double> target) {
    require_same_length(pred, target, "bce_loss");
    LossValue r;
    r.grad.resize(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
        const double t = target[i];
        r.value -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        // The clamp is flat outside its range, so the gradient vanishes there.
        const bool clamped = pred[i] < kBceEpsilon || pred[i] > 1.0 - kBceEpsilon;
        r.grad[i] = clamped ? 0.0 : (-t / p + (1.0 - t) / (1.0 - p)) / n;
    }
    r.value /= n;
    return r;
}

LossValue l1_loss(std::span<const double> pred, std::span<const double> target) {
    require_same_length(pred, target, "l1_loss");
    LossValue r;
    r.grad.resize(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        r.value += std::abs(d);
        r.grad[i] = (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) / n;
    }
    r.value /= n;
    return r;
}

LossValue l2_loss(std::span<const double> pred, std::span<const double> target) {
    require_same_length(pred, target, "l2_loss");
    LossValue r;
    r.grad.resize(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        r.value += d * d;
        r.grad[i] = 2.0 * d / n;
    }
    r.value /= n;
    return r;
}

// ---------------------------------------------------------------------------
// Optimizer

Sgd::Sgd(double lr, double momentum, double weight_decay) : lr_(lr), momentum_(momentum), wd_(weight_decay) {
    if (!(lr > 0.0)) throw ParameterError("sgd: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("sgd: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ParameterError("sgd: weight decay must be non-negative");
}

void Sgd::set_lr(double lr) {
    if (!(lr > 0.0)) throw ParameterError("sgd: learning rate must be positive");
    lr_ = lr;
}

void Sgd::step(const std::vector<Param*>& params) {
    for (const auto* p : params)
        for (std::size_t i = 0; i < p->grad.size(); ++i)
            if (!std::isfinite(p->grad[i]))
                throw TrainingError("non-finite gradient in " + p->name + " at index " + std::to_string(i));
    if (velocity_.empty()) {
        for (const auto* p : params) velocity_.emplace_back(p->value.size(), 0.0);
    }
    if (velocity_.size() != params.size()) throw StateError("sgd: parameter list changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& v = velocity_[k];
        auto& p = *params[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            v[i] = momentum_ * v[i] + p.grad[i] + wd_ * p.value[i];
            p.value[i] -= lr_ * v[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

json checkpoint_json(const Model& model, const json& metadata) {
    json params = json::object();
    for (const auto* p : model.parameters()) params[p->name] = p->value;
    return {{"format", "qmr-model"},
            {"version", kCheckpointVersion},
            {"spec", model.spec().to_json()},
            {"params", params},
            {"metadata", metadata}};
}

void save_checkpoint(const Model& model, const json& metadata, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << checkpoint_json(model, metadata).dump(1) << '\n';
    if (!out) throw IoError("cannot write checkpoint " + path.string());
}

Model model_from_json(const json& j, json* metadata) {
    try {
        if (j.at("format").get<std::string>() != "qmr-model") throw CheckpointError("not a model checkpoint");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion)
            throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
        Model m(ModelSpec::from_json(j.at("spec")));
        const auto& pj = j.at("params");
        for (auto* p : m.parameters()) {
            auto values = pj.at(p->name).get<std::vector<double>>();
            if (values.size() != p->value.size())
                throw CheckpointError("parameter " + p->name + " has " + std::to_string(values.size()) +
                                      " values, expected " + std::to_string(p->value.size()));
            p->value = std::move(values);
        }
        if (pj.size() != m.parameters().size()) throw CheckpointError("checkpoint holds unexpected parameters");
        if (metadata) *metadata = j.value("metadata", json::object());
        return m;
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
    }
}

Model load_checkpoint(const std::filesystem::path& path, json* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return model_from_json(j, metadata);
}

}  // namespace qmr::nn
