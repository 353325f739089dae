#pragma once

#include <optional>
#include <vector>

#include "qmr/image.hpp"

namespace qmr {

enum class EdgeOrientation {
    X,       ///< near-vertical edge, response sampled along x
    Y,       ///< near-horizontal edge, response sampled along y
    Oblique  ///< edge between roughly 27 and 63 degrees
};

/// Oversampled, normalized edge spread function.
///
/// Samples are binned at a quarter of the pixel pitch along the sampling
/// axis and then expressed as distances along the edge normal, so the
/// nominal spacing is 0.25 * cos(angle). `position` is centred on the
/// 0.5 crossing; `esf` runs from ~0 to ~1 regardless of edge polarity.
struct EdgeProfile {
    std::vector<double> position;
    std::vector<double> esf;
    double spacing = 0.25;
    double angle_deg = 0.0;  ///< edge tilt relative to the sampling axis normal
    EdgeOrientation orientation = EdgeOrientation::X;
};

struct SnrOptions {
    int patch = 16;
    /// Patches whose box-blurred coefficient of variation exceeds this are
    /// treated as structure, not noise.
    double max_cov = 0.05;
};

struct SnrEstimate {
    double median = 0.0;
    double mean = 0.0;
    int patches = 0;
};

/// Mean / noise-std over homogeneous patches; noise std is taken from the
/// residual of a least-squares plane so smooth gradients do not count as noise.
/// Returns nullopt when no patch qualifies.
std::optional<SnrEstimate> estimate_snr(const Image& img, const SnrOptions& opts = {});

/// Locates the dominant straight edge of the requested orientation by row-wise
/// gradient centroids and a weighted line fit, then projects pixels onto the
/// edge normal. Throws EdgeNotFoundError when no such edge exists.
EdgeProfile measure_edge_response(const Image& img, EdgeOrientation orientation);

/// ESF(+0.5 px) - ESF(-0.5 px) around the half-rise point.
double rer(const EdgeProfile& profile);

/// Derivative of the ESF (forward differences), at bin midpoints, in 1/px.
struct LineSpread {
    std::vector<double> position;
    std::vector<double> value;
};
LineSpread line_spread(const EdgeProfile& profile);

/// Full width at half maximum of the LSF, or nullopt when it is not unimodal.
std::optional<double> lsf_fwhm(const EdgeProfile& profile);

/// |DFT of the LSF| at `frequency` cycles/px, normalized to 1 at DC and
/// corrected for the finite-difference derivative.
double mtf_at(const EdgeProfile& profile, double frequency);
inline double mtf_at_nyquist(const EdgeProfile& profile) { return mtf_at(profile, 0.5); }

struct NrReport {
    std::optional<double> snr_median;
    std::optional<double> snr_mean;
    std::optional<double> rer_x, rer_y, rer_oblique;
    std::optional<double> mtf_nyq_x, mtf_nyq_y;
    std::optional<double> fwhm_x, fwhm_y;

    /// Mean of the X and Y measurements when both exist, else whichever does.
    std::optional<double> rer_xy() const;
    std::optional<double> mtf_xy() const;
    std::optional<double> fwhm_xy() const;
};

/// Runs every no-reference measurement; failed measurements stay empty.
NrReport nr_report(const Image& img);

}  // namespace qmr
