#include "qmr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qmr/error.hpp"
#include "qmr/rng.hpp"

namespace qmr::synthetic {

namespace {

double phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

Image edge_phantom(const EdgeSpec& s, EdgeOrientation orientation) {
    if (s.size < 8) throw SizeError("edge_phantom: size too small");
    Image img(s.size, s.size, 1, s.max_value);
    const double c = s.size / 2.0 + s.offset;
    const double cos_t = 1.0 / std::sqrt(1.0 + s.slope * s.slope);
    for (int y = 0; y < s.size; ++y)
        for (int x = 0; x < s.size; ++x) {
            // Distance along the sampling axis, then along the normal.
            const double along = orientation == EdgeOrientation::Y ? (y - c - s.slope * (x - c))
                                                                   : (x - c - s.slope * (y - c));
            const double n = along * cos_t;
            double t;
            if (s.sigma <= 0.0) t = n > 0 ? 1.0 : (n < 0 ? 0.0 : 0.5);
            else t = phi(n / s.sigma);
            img.at(y, x) = s.low + (s.high - s.low) * t;
        }
    return img;
}

Image textured_scene(int width, int height, std::uint64_t seed, double max_value) {
    Image img(width, height, 1, max_value);
    Rng rng(derive_seed(seed, {0x5ce4e}));
    const double k = max_value / 255.0;
    const double gx = (rng.uniform() - 0.5) * 60.0, gy = (rng.uniform() - 0.5) * 60.0;
    const double base = 90.0 + 50.0 * rng.uniform();
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.at(y, x) = base + gx * x / width + gy * y / height;

    const int n_rect = 6 + static_cast<int>((width * height) / 1200);
    for (int r = 0; r < n_rect; ++r) {
        const int w = 4 + static_cast<int>(rng.below(std::max(2, width / 4)));
        const int h = 4 + static_cast<int>(rng.below(std::max(2, height / 4)));
        const int x0 = static_cast<int>(rng.below(width));
        const int y0 = static_cast<int>(rng.below(height));
        const double v = 30.0 + 200.0 * rng.uniform();
        for (int y = y0; y < std::min(height, y0 + h); ++y)
            for (int x = x0; x < std::min(width, x0 + w); ++x) img.at(y, x) = v;
    }
    const int n_roads = 2 + static_cast<int>(rng.below(3));
    for (int r = 0; r < n_roads; ++r) {
        const double v = 40.0 + 180.0 * rng.uniform();
        const int thick = 1 + static_cast<int>(rng.below(3));
        if (rng.below(2) == 0) {
            const int y0 = static_cast<int>(rng.below(height));
            for (int y = y0; y < std::min(height, y0 + thick); ++y)
                for (int x = 0; x < width; ++x) img.at(y, x) = v;
        } else {
            const int x0 = static_cast<int>(rng.below(width));
            for (int y = 0; y < height; ++y)
                for (int x = x0; x < std::min(width, x0 + thick); ++x) img.at(y, x) = v;
        }
    }
    for (auto& v : img.data) v = (v + 12.0 * (rng.uniform() - 0.5)) * k;
    img.clamp();
    return img;
}

Image flat(int width, int height, double value, double max_value) {
    return Image(width, height, 1, max_value, value);
}

Image ramp(int width, int height, double lo, double hi, double max_value) {
    Image img(width, height, 1, max_value);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(y, x) = lo + (hi - lo) * x / std::max(1, width - 1);
    return img;
}

}  // namespace qmr::synthetic
