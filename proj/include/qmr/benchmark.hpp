#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qmr/eval.hpp"
#include "qmr/image.hpp"
#include "qmr/regressor.hpp"
#include "qmr/sr.hpp"

namespace qmr {

struct NamedImage {
    std::string name;  ///< file stem
    Image image;
};

/// Every image list_images() finds in `dir`. Throws ParameterError when there are none.
std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir);

struct ReportRow {
    std::string name;
    std::vector<std::optional<double>> values;  ///< empty entries print as NA
};

struct ReportTable {
    std::vector<std::string> columns;  ///< first entry labels the row-name column
    std::vector<ReportRow> rows;

    /// Fixed-point with `decimals` places, one row per line.
    std::string to_csv(int decimals = 4) const;
    const ReportRow* find(const std::string& name) const;
};

inline const std::vector<std::string> kQmrColumns = {"Modifier", "blur", "snr", "rer", "F", "GSD", "score"};
inline const std::vector<std::string> kFrColumns = {"Modifier", "ssim", "psnr", "gmsd"};
inline const std::vector<std::string> kNrColumns = {"Modifier", "snr_Mdn", "snr_M", "RER(XY)", "MTF(XY)", "FWHM(XY)"};

/// QMR columns for one image. Parameters without a head stay empty, and the
/// score is only filled when all five are present.
ReportRow qmr_row(const std::string& name, const std::vector<const QmrNet*>& models, const Image& img, int crops,
                  std::uint64_t seed, const ScoreConvention& convention);

/// Column means over the rows that have a value.
ReportRow mean_row(const std::string& name, const std::vector<ReportRow>& rows, std::size_t columns);

/// One row per image followed by a "mean" row.
ReportTable benchmark_dataset(const std::vector<const QmrNet*>& models, const std::vector<NamedImage>& images,
                              int crops, std::uint64_t seed,
                              const ScoreConvention& convention = ScoreConvention::defaults(), int threads = 1);

struct SrBenchmarkOptions {
    int scale = 2;
    bool blur_lr = false;  ///< Gaussian sigma 1 before downsampling
    int crops = 8;
    std::uint64_t seed = 0;
    ScoreConvention convention = ScoreConvention::defaults();
    int threads = 1;
};

struct SrBenchmark {
    ReportTable fr, nr, qmr;
    std::vector<std::string> failures;  ///< "method: message"
};

/// Rows "LR" (bilinear upscale of the LR input), one per method, and "HR".
/// Each cell is the mean over images. A method that throws gets a row of
/// empty values and the run continues.
SrBenchmark benchmark_sr(const std::vector<SrMethod>& methods, const std::vector<NamedImage>& hr,
                         const std::vector<const QmrNet*>& models, const SrBenchmarkOptions& options);

}  // namespace qmr
