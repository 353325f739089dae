#include "qmr/fr_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qmr/error.hpp"

namespace qmr {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.width) + "x" +
                             std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                             std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                             std::to_string(b.channels));
    }
}

// Valid-region separable filtering of a single plane.
std::vector<double> filter_valid(std::span<const double> src, int w, int h, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

// 2x2 block mean producing ceil(n/2) samples per axis; missing samples are zero.
std::vector<double> pool2(const Image& g, int& ow, int& oh) {
    ow = (g.width + 1) / 2;
    oh = (g.height + 1) / 2;
    std::vector<double> out(static_cast<std::size_t>(ow) * oh);
    auto px = [&](int y, int x) { return (y < g.height && x < g.width) ? g.at(y, x) : 0.0; };
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[static_cast<std::size_t>(y) * ow + x] =
                0.25 * (px(2 * y, 2 * x) + px(2 * y, 2 * x + 1) + px(2 * y + 1, 2 * x) + px(2 * y + 1, 2 * x + 1));
    return out;
}

std::vector<double> prewitt_magnitude(const std::vector<double>& p, int w, int h) {
    auto at = [&](int y, int x) {
        return (y >= 0 && y < h && x >= 0 && x < w) ? p[static_cast<std::size_t>(y) * w + x] : 0.0;
    };
    std::vector<double> mag(p.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = 0.0, gy = 0.0;
            for (int d = -1; d <= 1; ++d) {
                gx += at(y + d, x - 1) - at(y + d, x + 1);
                gy += at(y - 1, x + d) - at(y + 1, x + d);
            }
            gx /= 3.0;
            gy /= 3.0;
            mag[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return mag;
}

}  // namespace

double rmse(const Image& a, const Image& b) {
    require_same_shape(a, b, "rmse");
    if (a.data.empty()) throw SizeError("rmse: empty images");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.data.size()));
}

double psnr(const Image& a, const Image& b) {
    const double e = rmse(a, b);
    if (e == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 20.0 * std::log10(a.max_value / e));
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    constexpr int kWindow = 11;
    if (a.width < kWindow || a.height < kWindow) throw SizeError("ssim: image smaller than the 11x11 window");
    const Image ga = to_grayscale(a), gb = to_grayscale(b);
    const int w = ga.width, h = ga.height;
    const auto k = gaussian_kernel(1.5, kWindow / 2);
    std::vector<double> aa(ga.data.size()), bb(ga.data.size()), ab(ga.data.size());
    for (std::size_t i = 0; i < ga.data.size(); ++i) {
        aa[i] = ga.data[i] * ga.data[i];
        bb[i] = gb.data[i] * gb.data[i];
        ab[i] = ga.data[i] * gb.data[i];
    }
    const auto mu_a = filter_valid(ga.data, w, h, k);
    const auto mu_b = filter_valid(gb.data, w, h, k);
    const auto e_aa = filter_valid(aa, w, h, k);
    const auto e_bb = filter_valid(bb, w, h, k);
    const auto e_ab = filter_valid(ab, w, h, k);
    const double L = a.max_value;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

double gmsd(const Image& a, const Image& b) {
    require_same_shape(a, b, "gmsd");
    if (a.width < 2 || a.height < 2) throw SizeError("gmsd: image too small");
    int w = 0, h = 0;
    const auto pa = pool2(to_grayscale(a), w, h);
    const auto pb = pool2(to_grayscale(b), w, h);
    const auto ma = prewitt_magnitude(pa, w, h);
    const auto mb = prewitt_magnitude(pb, w, h);
    const double scale = a.max_value / 255.0;
    const double c = 170.0 * scale * scale;
    std::vector<double> gms(ma.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        gms[i] = (2.0 * ma[i] * mb[i] + c) / (ma[i] * ma[i] + mb[i] * mb[i] + c);
        mean += gms[i];
    }
    mean /= static_cast<double>(gms.size());
    double var = 0.0;
    for (double g : gms) var += (g - mean) * (g - mean);
    if (gms.size() < 2) return 0.0;
    return std::sqrt(var / static_cast<double>(gms.size() - 1));
}

FrReport fr_report(const Image& test, const Image& reference) {
    return {rmse(test, reference), psnr(test, reference), ssim(test, reference), gmsd(test, reference)};
}

}  // namespace qmr
