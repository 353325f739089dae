#include "qmr/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qmr/error.hpp"
#include "qmr/rng.hpp"

namespace qmr {

Image::Image(int w, int h, int c, double max, double fill)
    : width(w), height(h), channels(c), max_value(max),
      data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 0 || h < 0 || c < 1) throw SizeError("invalid image dimensions");
}

double Image::mean() const {
    if (data.empty()) return 0.0;
    return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

bool Image::valid() const {
    if (data.size() != static_cast<std::size_t>(width) * height * channels) return false;
    return std::all_of(data.begin(), data.end(),
                       [&](double v) { return std::isfinite(v) && v >= 0.0 && v <= max_value; });
}

void Image::clamp() {
    for (auto& v : data) v = std::clamp(v, 0.0, max_value);
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3) throw ParameterError("to_grayscale: expected 1 or 3 channels");
    Image out(img.width, img.height, 1, img.max_value);
    out.gsd = img.gsd;
    auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    }
    return out;
}

namespace {

struct Tap {
    int i0;
    int i1;
    double frac;
};

// Half-pixel centres: src = (dst + 0.5) * in/out - 0.5, clamped to the image.
std::vector<Tap> linear_taps(int in, int out) {
    std::vector<Tap> taps(out);
    const double ratio = static_cast<double>(in) / out;
    for (int d = 0; d < out; ++d) {
        double s = (d + 0.5) * ratio - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        int i0 = static_cast<int>(std::floor(s));
        i0 = std::min(i0, in - 1);
        const int i1 = std::min(i0 + 1, in - 1);
        taps[d] = {i0, i1, s - i0};
    }
    return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) throw SizeError("resize_bilinear: degenerate output size");
    if (img.width < 1 || img.height < 1) throw SizeError("resize_bilinear: empty input");
    Image out(out_width, out_height, img.channels, img.max_value);
    if (img.gsd) out.gsd = *img.gsd * static_cast<double>(img.width) / out_width;
    const auto tx = linear_taps(img.width, out_width);
    const auto ty = linear_taps(img.height, out_height);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < out_height; ++y) {
            const Tap& vy = ty[y];
            for (int x = 0; x < out_width; ++x) {
                const Tap& vx = tx[x];
                const double top = img.at(c, vy.i0, vx.i0) * (1.0 - vx.frac) + img.at(c, vy.i0, vx.i1) * vx.frac;
                const double bot = img.at(c, vy.i1, vx.i0) * (1.0 - vx.frac) + img.at(c, vy.i1, vx.i1) * vx.frac;
                out.at(c, y, x) = top * (1.0 - vy.frac) + bot * vy.frac;
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& img, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw SizeError("resize_bilinear: scale must be positive");
    if (scale == 1.0) return img;
    const int w = static_cast<int>(std::lround(img.width * scale));
    const int h = static_cast<int>(std::lround(img.height * scale));
    Image out = resize_bilinear(img, w, h);
    if (img.gsd) out.gsd = *img.gsd / scale;
    return out;
}

std::vector<CropRect> extract_crops(const Image& img, int side, int count, std::uint64_t seed) {
    if (side <= 0 || count <= 0) throw ParameterError("extract_crops: side and count must be positive");
    if (img.width < side || img.height < side) {
        throw SizeError("extract_crops: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " smaller than crop side " + std::to_string(side));
    }
    const auto nx = static_cast<std::uint64_t>(img.width - side + 1);
    const auto ny = static_cast<std::uint64_t>(img.height - side + 1);
    std::vector<CropRect> rects;
    rects.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        const int x = static_cast<int>(rng.below(nx));
        const int y = static_cast<int>(rng.below(ny));
        rects.push_back({x, y, side});
    }
    return rects;
}

Image crop(const Image& img, const CropRect& r) {
    if (r.side <= 0 || r.x < 0 || r.y < 0 || r.x + r.side > img.width || r.y + r.side > img.height) {
        throw SizeError("crop: rectangle outside image");
    }
    Image out(r.side, r.side, img.channels, img.max_value);
    out.gsd = img.gsd;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < r.side; ++y) {
            const double* src = &img.data[c * img.plane_size() + static_cast<std::size_t>(r.y + y) * img.width + r.x];
            std::copy(src, src + r.side, &out.at(c, y, 0));
        }
    }
    return out;
}

Image circular_pad(const Image& img, int target_side) {
    if (img.width >= target_side && img.height >= target_side) return img;
    if (img.width < 1 || img.height < 1) throw SizeError("circular_pad: empty image");
    const int w = std::max(img.width, target_side);
    const int h = std::max(img.height, target_side);
    const int lead_x = (w - img.width) / 2;
    const int lead_y = (h - img.height) / 2;
    auto wrap = [](int i, int n) { return ((i % n) + n) % n; };
    Image out(w, h, img.channels, img.max_value);
    out.gsd = img.gsd;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            const int sy = wrap(y - lead_y, img.height);
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = img.at(c, sy, wrap(x - lead_x, img.width));
            }
        }
    }
    return out;
}

Image downsample(const Image& img, int factor) {
    if (factor < 2) throw ParameterError("downsample: factor must be >= 2");
    if (img.width < factor || img.height < factor) throw SizeError("downsample: image smaller than factor");
    const int w = img.width / factor * factor;
    const int h = img.height / factor * factor;
    if (w == img.width && h == img.height) return resize_bilinear(img, w / factor, h / factor);
    Image src(w, h, img.channels, img.max_value);
    src.gsd = img.gsd;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) src.at(c, y, x) = img.at(c, y, x);
    return resize_bilinear(src, w / factor, h / factor);
}

int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0.0)) throw ParameterError("gaussian_kernel: sigma must be positive");
    if (radius < 0) throw ParameterError("gaussian_kernel: negative radius");
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

Image convolve_separable(const Image& img, std::span<const double> kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    Image tmp(img.width, img.height, img.channels, img.max_value);
    Image out(img.width, img.height, img.channels, img.max_value);
    out.gsd = img.gsd;
    std::vector<int> xi(img.width + 2 * radius), yi(img.height + 2 * radius);
    for (int i = 0; i < static_cast<int>(xi.size()); ++i) xi[i] = reflect101(i - radius, img.width);
    for (int i = 0; i < static_cast<int>(yi.size()); ++i) yi[i] = reflect101(i - radius, img.height);
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int k = 0; k < static_cast<int>(kernel.size()); ++k) acc += kernel[k] * img.at(c, y, xi[x + k]);
                tmp.at(c, y, x) = acc;
            }
        }
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int k = 0; k < static_cast<int>(kernel.size()); ++k) acc += kernel[k] * tmp.at(c, yi[y + k], x);
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, double sigma, int radius) {
    const auto k = gaussian_kernel(sigma, radius);
    return convolve_separable(img, k);
}

}  // namespace qmr
