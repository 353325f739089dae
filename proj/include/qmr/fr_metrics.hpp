#pragma once

#include "qmr/image.hpp"

namespace qmr {

/// Full-reference scores of a test image against its reference.
struct FrReport {
    double rmse = 0.0;
    double psnr = 0.0;  ///< dB, capped at kPsnrCap
    double ssim = 0.0;
    double gmsd = 0.0;
};

inline constexpr double kPsnrCap = 80.0;

/// Root mean squared sample difference in native pixel units, over all channels.
double rmse(const Image& a, const Image& b);

/// 20 log10(max_value / rmse), capped at 80 dB (also when rmse is zero).
double psnr(const Image& a, const Image& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L = max_value. Computed on luma.
double ssim(const Image& a, const Image& b);

/// Gradient magnitude similarity deviation: 2x2 average pooling, Prewitt
/// gradients with zero padding, c = 170 (L / 255)^2, sample standard deviation
/// of the similarity map. Computed on luma.
double gmsd(const Image& a, const Image& b);

FrReport fr_report(const Image& test, const Image& reference);

}  // namespace qmr
