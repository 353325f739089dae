#include "qmr/nr_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "qmr/error.hpp"

namespace qmr {

namespace {

constexpr double kBin = 0.25;           // oversampling pitch along the sampling axis, px
constexpr int kCentroidHalfWidth = 16;  // px
constexpr double kNormalHalfWidth = 16.0;
constexpr int kPlateauBins = 8;
constexpr int kMinRows = 8;
constexpr double kMaxFitResidual = 1.0;  // px rms

struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane luma_plane(const Image& img, bool transpose) {
    const Image g = to_grayscale(img);
    Plane p;
    if (!transpose) {
        p.w = g.width;
        p.h = g.height;
        p.v = g.data;
        return p;
    }
    p.w = g.height;
    p.h = g.width;
    p.v.resize(g.data.size());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) p.v[static_cast<std::size_t>(x) * p.w + y] = g.at(y, x);
    return p;
}

struct RowEdge {
    double y;
    double x;
    double weight;
};

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms = 0.0;
};

LineFit fit_line(const std::vector<RowEdge>& rows) {
    double sw = 0, sy = 0, sx = 0, syy = 0, sxy = 0;
    for (const auto& r : rows) {
        sw += r.weight;
        sy += r.weight * r.y;
        sx += r.weight * r.x;
    }
    const double my = sy / sw, mx = sx / sw;
    for (const auto& r : rows) {
        syy += r.weight * (r.y - my) * (r.y - my);
        sxy += r.weight * (r.y - my) * (r.x - mx);
    }
    LineFit f;
    f.slope = syy > 0 ? sxy / syy : 0.0;
    f.intercept = mx - f.slope * my;
    double ss = 0;
    for (const auto& r : rows) {
        const double e = r.x - (f.slope * r.y + f.intercept);
        ss += r.weight * e * e;
    }
    f.rms = std::sqrt(ss / sw);
    return f;
}

// Centroid of |d/dx| over [xc - hw, xc + hw]; false when the window does not fit.
bool row_centroid(const Plane& p, const std::vector<double>& gx, int y, int xc, double& x, double& weight) {
    const int hw = std::min({kCentroidHalfWidth, xc - 1, p.w - 2 - xc});
    if (hw < 2) return false;
    double s = 0, sw = 0;
    for (int i = xc - hw; i <= xc + hw; ++i) {
        const double g = std::abs(gx[static_cast<std::size_t>(y) * p.w + i]);
        s += g * i;
        sw += g;
    }
    if (sw <= 0) return false;
    x = s / sw;
    weight = sw;
    return true;
}

[[noreturn]] void not_found(const std::string& why) { throw EdgeNotFoundError("edge not found: " + why); }

bool slope_matches(double slope, EdgeOrientation o) {
    const double a = std::abs(slope);
    if (o == EdgeOrientation::Oblique) return a >= 0.5 && a <= 2.0;
    return a <= 1.0;
}

EdgeProfile measure_rows(const Plane& p, EdgeOrientation orientation, double max_value) {
    if (p.w < 8 || p.h < kMinRows) not_found("image too small");
    std::vector<double> gx(p.v.size(), 0.0);
    double gmax = 0.0;
    for (int y = 0; y < p.h; ++y)
        for (int x = 1; x + 1 < p.w; ++x) {
            const double g = 0.5 * (p.at(y, x + 1) - p.at(y, x - 1));
            gx[static_cast<std::size_t>(y) * p.w + x] = g;
            gmax = std::max(gmax, std::abs(g));
        }
    if (gmax <= 1e-6 * max_value) not_found("no contrast");
    const double threshold = 0.25 * gmax;

    // First pass: centroid around each row's strongest response.
    std::vector<RowEdge> rows;
    std::vector<char> strong(p.h, 0);
    for (int y = 0; y < p.h; ++y) {
        int best = 1;
        double bv = 0.0;
        for (int x = 1; x + 1 < p.w; ++x) {
            const double g = std::abs(gx[static_cast<std::size_t>(y) * p.w + x]);
            if (g > bv) {
                bv = g;
                best = x;
            }
        }
        if (bv < threshold) continue;
        double cx = 0, w = 0;
        if (!row_centroid(p, gx, y, best, cx, w)) continue;
        strong[y] = 1;
        rows.push_back({static_cast<double>(y), cx, w});
    }
    if (static_cast<int>(rows.size()) < kMinRows) not_found("too few rows cross an edge");
    LineFit fit = fit_line(rows);

    // Second pass: windows centred on the fitted line, not on the noisy peak.
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<RowEdge> refined;
        for (int y = 0; y < p.h; ++y) {
            if (!strong[y]) continue;
            const int xc = static_cast<int>(std::lround(fit.slope * y + fit.intercept));
            double cx = 0, w = 0;
            if (!row_centroid(p, gx, y, xc, cx, w)) continue;
            refined.push_back({static_cast<double>(y), cx, w});
        }
        if (static_cast<int>(refined.size()) < kMinRows) not_found("too few rows cross an edge");
        fit = fit_line(refined);
        rows = std::move(refined);
    }
    if (fit.rms > kMaxFitResidual) not_found("edge points are not collinear");
    if (!slope_matches(fit.slope, orientation)) not_found("no edge with the requested orientation");

    const double cos_t = 1.0 / std::sqrt(1.0 + fit.slope * fit.slope);
    const double reach = kNormalHalfWidth / cos_t;
    const int y0 = static_cast<int>(rows.front().y);
    const int y1 = static_cast<int>(rows.back().y);

    // Align the bin lattice with the sample lattice (phase of u modulo the pitch).
    double cs = 0, sn = 0;
    for (int y = y0; y <= y1; ++y)
        for (int x = 0; x < p.w; ++x) {
            const double u = x - (fit.slope * y + fit.intercept);
            if (std::abs(u) > reach) continue;
            const double ph = 2.0 * std::numbers::pi * u / kBin;
            cs += std::cos(ph);
            sn += std::sin(ph);
        }
    const double shift = (cs == 0 && sn == 0) ? 0.0 : kBin * std::atan2(sn, cs) / (2.0 * std::numbers::pi);

    const int m_lo = static_cast<int>(std::floor((-reach - shift) / kBin)) - 1;
    const int m_hi = static_cast<int>(std::ceil((reach - shift) / kBin)) + 1;
    const std::size_t nb = static_cast<std::size_t>(m_hi - m_lo + 1);
    std::vector<double> sum(nb, 0.0), sum_u(nb, 0.0);
    std::vector<int> count(nb, 0);
    for (int y = y0; y <= y1; ++y)
        for (int x = 0; x < p.w; ++x) {
            const double u = x - (fit.slope * y + fit.intercept);
            if (std::abs(u) > reach) continue;
            const int m = static_cast<int>(std::lround((u - shift) / kBin));
            const std::size_t b = static_cast<std::size_t>(m - m_lo);
            sum[b] += p.at(y, x);
            sum_u[b] += u;
            ++count[b];
        }
    std::size_t first = 0, last = nb - 1;
    while (first < nb && count[first] == 0) ++first;
    while (last > first && count[last] == 0) --last;
    if (first >= last || last - first + 1 < 2 * kPlateauBins + 4) not_found("edge too close to the border");

    EdgeProfile prof;
    prof.orientation = orientation;
    prof.spacing = kBin * cos_t;
    prof.angle_deg = std::atan(fit.slope) * 180.0 / std::numbers::pi;
    std::vector<double> pos, val;
    std::vector<char> have;
    for (std::size_t b = first; b <= last; ++b) {
        const int m = static_cast<int>(b) + m_lo;
        if (count[b] > 0) {
            pos.push_back(sum_u[b] / count[b] * cos_t);
            val.push_back(sum[b] / count[b]);
            have.push_back(1);
        } else {
            pos.push_back((shift + m * kBin) * cos_t);
            val.push_back(0.0);
            have.push_back(0);
        }
    }
    // Empty bins (axis-aligned edges populate one bin per pixel) are filled linearly.
    for (std::size_t i = 0; i < val.size(); ++i) {
        if (have[i]) continue;
        std::size_t l = i, r = i;
        while (!have[l]) --l;
        while (!have[r]) ++r;
        const double t = (pos[i] - pos[l]) / (pos[r] - pos[l]);
        val[i] = val[l] + t * (val[r] - val[l]);
    }

    const double lo = std::accumulate(val.begin(), val.begin() + kPlateauBins, 0.0) / kPlateauBins;
    const double hi = std::accumulate(val.end() - kPlateauBins, val.end(), 0.0) / kPlateauBins;
    if (std::abs(hi - lo) <= 1e-6 * max_value) not_found("flat profile");
    for (auto& v : val) v = (v - lo) / (hi - lo);

    // Half-rise crossing nearest the fitted edge position.
    double centre = 0.0;
    double best_dist = 1e300;
    bool found = false;
    for (std::size_t i = 0; i + 1 < val.size(); ++i) {
        if (val[i] < 0.5 && val[i + 1] >= 0.5) {
            const double t = (0.5 - val[i]) / (val[i + 1] - val[i]);
            const double c = pos[i] + t * (pos[i + 1] - pos[i]);
            if (std::abs(c) < best_dist) {
                best_dist = std::abs(c);
                centre = c;
                found = true;
            }
        }
    }
    if (!found) not_found("profile never crosses half rise");
    for (auto& x : pos) x -= centre;
    prof.position = std::move(pos);
    prof.esf = std::move(val);
    return prof;
}

// Cubic Lagrange interpolation through the four samples around x.
double esf_at(const EdgeProfile& p, double x) {
    const auto& xs = p.position;
    const auto& ys = p.esf;
    const std::size_t n = xs.size();
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    std::size_t k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    std::size_t s = k >= 1 ? k - 1 : 0;
    if (s + 4 > n) s = n - 4;
    double acc = 0.0;
    for (std::size_t i = s; i < s + 4; ++i) {
        double li = 1.0;
        for (std::size_t j = s; j < s + 4; ++j)
            if (j != i) li *= (x - xs[j]) / (xs[i] - xs[j]);
        acc += li * ys[i];
    }
    return acc;
}

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

void require_profile(const EdgeProfile& p) {
    if (p.position.size() < 4 || p.position.size() != p.esf.size()) throw ParameterError("invalid edge profile");
}

}  // namespace

EdgeProfile measure_edge_response(const Image& img, EdgeOrientation orientation) {
    const bool transpose = orientation == EdgeOrientation::Y;
    return measure_rows(luma_plane(img, transpose), orientation, img.max_value);
}

double rer(const EdgeProfile& profile) {
    require_profile(profile);
    return esf_at(profile, 0.5) - esf_at(profile, -0.5);
}

LineSpread line_spread(const EdgeProfile& profile) {
    require_profile(profile);
    LineSpread l;
    const auto& x = profile.position;
    const auto& e = profile.esf;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        l.position.push_back(0.5 * (x[i] + x[i + 1]));
        l.value.push_back((e[i + 1] - e[i]) / profile.spacing);
    }
    return l;
}

std::optional<double> lsf_fwhm(const EdgeProfile& profile) {
    const LineSpread lsf = line_spread(profile);
    const auto& v = lsf.value;
    const auto& x = lsf.position;
    const std::size_t peak = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    double height = v[peak];
    if (!(height > 0.0)) return std::nullopt;
    if (peak > 0 && peak + 1 < v.size() && v[peak - 1] > 0 && v[peak + 1] > 0) {
        // Three-point Gaussian (log-parabola) peak height.
        const double a = std::log(v[peak - 1]), b = std::log(v[peak]), c = std::log(v[peak + 1]);
        const double den = a - 2 * b + c;
        if (den < 0) {
            const double off = 0.5 * (a - c) / den;
            height = std::exp(b - 0.25 * (a - c) * off);
        }
    }
    const double half = 0.5 * height;
    std::size_t l = peak, r = peak;
    while (l > 0 && v[l] >= half) --l;
    while (r + 1 < v.size() && v[r] >= half) ++r;
    if (v[l] >= half || v[r] >= half) return std::nullopt;
    for (std::size_t i = 0; i < l; ++i)
        if (v[i] >= half) return std::nullopt;
    for (std::size_t i = r + 1; i < v.size(); ++i)
        if (v[i] >= half) return std::nullopt;
    const double xl = x[l] + (half - v[l]) / (v[l + 1] - v[l]) * (x[l + 1] - x[l]);
    const double xr = x[r - 1] + (v[r - 1] - half) / (v[r - 1] - v[r]) * (x[r] - x[r - 1]);
    return xr - xl;
}

double mtf_at(const EdgeProfile& profile, double frequency) {
    require_profile(profile);
    const auto& e = profile.esf;
    const double h = profile.spacing;
    double re = 0, im = 0, dc = 0;
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
        const double d = e[k + 1] - e[k];
        const double ph = 2.0 * std::numbers::pi * frequency * h * static_cast<double>(k);
        re += d * std::cos(ph);
        im -= d * std::sin(ph);
        dc += d;
    }
    if (dc == 0.0) throw ParameterError("mtf: degenerate line spread function");
    return std::hypot(re, im) / std::abs(dc) / sinc(frequency * h);
}

std::optional<SnrEstimate> estimate_snr(const Image& img, const SnrOptions& opts) {
    if (img.width < 64 || img.height < 64) throw SizeError("estimate_snr: image must be at least 64x64");
    const Image g = to_grayscale(img);
    const double box[3] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const Image smooth = convolve_separable(g, box);
    const int ps = opts.patch;
    const int n = ps * ps;
    // Plane-fit design over patch coordinates centred at zero: x and y are
    // orthogonal to the constant and to each other on a square grid.
    const double c0 = (ps - 1) / 2.0;
    double sxx = 0;
    for (int i = 0; i < ps; ++i) sxx += (i - c0) * (i - c0);
    sxx *= ps;

    std::vector<double> ratios;
    for (int py = 0; py + ps <= g.height; py += ps)
        for (int px = 0; px + ps <= g.width; px += ps) {
            double sm = 0, sm2 = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x) {
                    const double v = smooth.at(py + y, px + x);
                    sm += v;
                    sm2 += v * v;
                }
            const double mean_s = sm / n;
            if (!(mean_s > 0)) continue;
            const double sd_s = std::sqrt(std::max(0.0, sm2 / n - mean_s * mean_s));
            if (sd_s / mean_s >= opts.max_cov) continue;

            double s = 0, sx = 0, sy = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x) {
                    const double v = g.at(py + y, px + x);
                    s += v;
                    sx += v * (x - c0);
                    sy += v * (y - c0);
                }
            const double mean = s / n, bx = sx / sxx, by = sy / sxx;
            double ss = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x) {
                    const double r = g.at(py + y, px + x) - (mean + bx * (x - c0) + by * (y - c0));
                    ss += r * r;
                }
            const double noise = std::sqrt(ss / (n - 3));
            if (!(noise > 0) || !(mean > 0)) continue;
            const double ratio = mean / noise;
            if (std::isfinite(ratio)) ratios.push_back(ratio);
        }
    if (ratios.empty()) return std::nullopt;
    SnrEstimate est;
    est.patches = static_cast<int>(ratios.size());
    est.mean = std::accumulate(ratios.begin(), ratios.end(), 0.0) / ratios.size();
    std::sort(ratios.begin(), ratios.end());
    const std::size_t m = ratios.size();
    est.median = m % 2 ? ratios[m / 2] : 0.5 * (ratios[m / 2 - 1] + ratios[m / 2]);
    return est;
}

namespace {
std::optional<double> pair_mean(const std::optional<double>& a, const std::optional<double>& b) {
    if (a && b) return 0.5 * (*a + *b);
    return a ? a : b;
}
}  // namespace

std::optional<double> NrReport::rer_xy() const { return pair_mean(rer_x, rer_y); }
std::optional<double> NrReport::mtf_xy() const { return pair_mean(mtf_nyq_x, mtf_nyq_y); }
std::optional<double> NrReport::fwhm_xy() const { return pair_mean(fwhm_x, fwhm_y); }

NrReport nr_report(const Image& img) {
    NrReport r;
    if (img.width >= 64 && img.height >= 64) {
        if (auto s = estimate_snr(img)) {
            r.snr_median = s->median;
            r.snr_mean = s->mean;
        }
    }
    auto measure = [&](EdgeOrientation o, std::optional<double>* rer_out, std::optional<double>* mtf_out,
                       std::optional<double>* fwhm_out) {
        try {
            const EdgeProfile p = measure_edge_response(img, o);
            *rer_out = rer(p);
            if (mtf_out) *mtf_out = mtf_at_nyquist(p);
            if (fwhm_out) *fwhm_out = lsf_fwhm(p);
        } catch (const EdgeNotFoundError&) {
        }
    };
    measure(EdgeOrientation::X, &r.rer_x, &r.mtf_nyq_x, &r.fwhm_x);
    measure(EdgeOrientation::Y, &r.rer_y, &r.mtf_nyq_y, &r.fwhm_y);
    measure(EdgeOrientation::Oblique, &r.rer_oblique, nullptr, nullptr);
    return r;
}

}  // namespace qmr
