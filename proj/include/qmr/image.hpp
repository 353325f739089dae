#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace qmr {

/// Planar floating-point raster. Samples are kept in their native range
/// [0, max_value] (255 for 8-bit sources, 65535 for 16-bit); normalization to
/// [0, 1] only happens where images enter the network.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    double max_value = 255.0;
    std::optional<double> gsd;  ///< ground sampling distance, cm/px
    std::vector<double> data;   ///< channel-major, then row-major

    Image() = default;
    Image(int w, int h, int c = 1, double max = 255.0, double fill = 0.0);

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    double& at(int c, int y, int x) { return data[c * plane_size() + static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int y, int x) const {
        return data[c * plane_size() + static_cast<std::size_t>(y) * width + x];
    }
    double& at(int y, int x) { return at(0, y, x); }
    double at(int y, int x) const { return at(0, y, x); }

    std::span<double> plane(int c) { return {data.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data.data() + c * plane_size(), plane_size()}; }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    double mean() const;
    /// Checks the documented invariants (size, finiteness, range).
    bool valid() const;
    /// Clamps every sample into [0, max_value].
    void clamp();
};

/// Square crop window. Crops are always side x side.
struct CropRect {
    int x = 0;
    int y = 0;
    int side = 0;
    friend bool operator==(const CropRect&, const CropRect&) = default;
};

/// Reads an 8/16-bit PNG or TIFF with 1 or 3 channels. A `<path>.gsd` sidecar
/// holding a single number (cm/px) sets Image::gsd.
Image load_image(const std::filesystem::path& path);

/// Writes PNG or TIFF (chosen by extension). Bit depth is 16 when max_value
/// exceeds 255, otherwise 8. Samples are rounded to the nearest integer.
void save_image(const Image& img, const std::filesystem::path& path);

/// PNG and TIFF files directly inside `dir`, sorted by file name. Throws
/// IoError when `dir` is not a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

Image to_grayscale(const Image& img);

/// Bilinear resampling with half-pixel centre alignment. Output dimensions are
/// round(input * scale); the gsd tag is divided by scale.
Image resize_bilinear(const Image& img, double scale);
Image resize_bilinear(const Image& img, int out_width, int out_height);

/// `count` uniformly random square windows; crop i draws from its own
/// derived stream so the list depends only on (image size, side, count, seed).
std::vector<CropRect> extract_crops(const Image& img, int side, int count, std::uint64_t seed);

Image crop(const Image& img, const CropRect& rect);

/// Wrap-around padding of each dimension smaller than target_side; the extra
/// pixel of an odd split goes to the trailing border.
Image circular_pad(const Image& img, int target_side);

/// Integer-factor reduction through resize_bilinear after truncating both
/// dimensions to a multiple of factor.
Image downsample(const Image& img, int factor);

/// Normalized 1-D Gaussian taps for offsets -radius..radius.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Separable convolution with a symmetric 1-D kernel on rows and columns,
/// reflect-101 borders, per channel. The result is not clamped.
Image convolve_separable(const Image& img, std::span<const double> kernel);

Image gaussian_blur(const Image& img, double sigma, int radius);

/// Index mapping for reflect-101 borders (…, 2, 1 | 0, 1, 2, … n-1 | n-2, …).
int reflect101(int i, int n);

}  // namespace qmr
