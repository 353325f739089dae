#pragma once

#include <cstdint>

#include "qmr/image.hpp"
#include "qmr/nr_metrics.hpp"

namespace qmr::synthetic {

struct EdgeSpec {
    int size = 128;
    /// Gaussian blur of the edge; 0 renders an ideal step.
    double sigma = 1.0;
    /// Tangent of the tilt against the sampling axis normal. A quarter-pixel
    /// shift per row (0.25) spreads samples evenly over the oversampled bins.
    double slope = 0.25;
    double low = 50.0;
    double high = 200.0;
    double max_value = 255.0;
    /// Sub-pixel position of the edge relative to the image centre.
    double offset = 0.3;
};

/// Point-sampled straight edge low + (high - low) * Phi(n / sigma), n being
/// the signed distance to the edge line. Oblique edges use `slope` as the
/// tangent of their angle to the rows (use about 1.25 for ~51 degrees).
Image edge_phantom(const EdgeSpec& spec, EdgeOrientation orientation = EdgeOrientation::X);

/// Earth-observation-like scene: smooth background, axis-aligned "buildings",
/// thin "roads", and a fixed fine-grained texture. Rendered without blur.
Image textured_scene(int width, int height, std::uint64_t seed, double max_value = 255.0);

/// Constant image.
Image flat(int width, int height, double value, double max_value = 255.0);

/// Horizontal linear ramp from lo to hi.
Image ramp(int width, int height, double lo, double hi, double max_value = 255.0);

}  // namespace qmr::synthetic
