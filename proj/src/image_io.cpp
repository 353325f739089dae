#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "qmr/error.hpp"
#include "qmr/image.hpp"

namespace qmr {

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
    auto s = p;
    s += ".gsd";
    return s;
}

template <typename T>
void unpack(const cv::Mat& m, Image& img) {
    // OpenCV stores colour as interleaved BGR.
    for (int y = 0; y < m.rows; ++y) {
        const T* row = m.ptr<T>(y);
        for (int x = 0; x < m.cols; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const int src_c = img.channels == 3 ? 2 - c : c;
                img.at(c, y, x) = static_cast<double>(row[x * img.channels + src_c]);
            }
        }
    }
}

template <typename T>
cv::Mat pack(const Image& img, int type) {
    cv::Mat m(img.height, img.width, type);
    for (int y = 0; y < img.height; ++y) {
        T* row = m.ptr<T>(y);
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                const int dst_c = img.channels == 3 ? 2 - c : c;
                const double v = std::clamp(std::round(img.at(c, y, x)), 0.0, img.max_value);
                row[x * img.channels + dst_c] = static_cast<T>(v);
            }
        }
    }
    return m;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DecodeError("cannot read image " + path.string() + ": no such file");
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DecodeError("cannot decode image " + path.string());
    const int ch = m.channels();
    if (ch != 1 && ch != 3) {
        throw DecodeError("unsupported channel count " + std::to_string(ch) + " in " + path.string());
    }
    Image img;
    switch (m.depth()) {
        case CV_8U:
            img = Image(m.cols, m.rows, ch, 255.0);
            unpack<std::uint8_t>(m, img);
            break;
        case CV_16U:
            img = Image(m.cols, m.rows, ch, 65535.0);
            unpack<std::uint16_t>(m, img);
            break;
        default:
            throw DecodeError("unsupported bit depth in " + path.string());
    }
    if (std::ifstream side(sidecar_path(path)); side) {
        double g = 0.0;
        if (side >> g && g > 0.0) img.gsd = g;
    }
    return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
    if (img.channels != 1 && img.channels != 3) throw ParameterError("save_image: 1 or 3 channels required");
    const auto ext = path.extension().string();
    if (ext != ".png" && ext != ".tif" && ext != ".tiff") {
        throw ParameterError("save_image: unsupported extension '" + ext + "' for " + path.string());
    }
    cv::Mat m;
    if (img.max_value > 255.0) {
        m = pack<std::uint16_t>(img, CV_MAKETYPE(CV_16U, img.channels));
    } else {
        m = pack<std::uint8_t>(img, CV_MAKETYPE(CV_8U, img.channels));
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw IoError("cannot write image " + path.string());
    const auto side = sidecar_path(path);
    if (img.gsd) {
        std::ofstream out(side);
        out.precision(17);
        out << *img.gsd << '\n';
        if (!out) throw IoError("cannot write " + side.string());
    } else if (std::filesystem::exists(side)) {
        std::filesystem::remove(side);
    }
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png" || ext == ".tif" || ext == ".tiff") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace qmr
