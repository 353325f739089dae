#include "qmr/benchmark.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <spdlog/spdlog.h>

#include "qmr/error.hpp"
#include "qmr/fr_metrics.hpp"
#include "qmr/nr_metrics.hpp"
#include "qmr/parallel.hpp"
#include "qmr/rng.hpp"

namespace qmr {

std::vector<NamedImage> load_image_dir(const std::filesystem::path& dir) {
    std::vector<NamedImage> out;
    for (const auto& p : list_images(dir)) out.push_back({p.stem().string(), load_image(p)});
    if (out.empty()) throw ParameterError("no PNG or TIFF images in " + dir.string());
    return out;
}

std::string ReportTable::to_csv(int decimals) const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(decimals);
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    for (const auto& r : rows) {
        os << r.name;
        for (const auto& v : r.values) {
            os << ',';
            if (v && std::isfinite(*v)) os << (*v == 0.0 ? 0.0 : *v);  // no "-0.0000"
            else os << "NA";
        }
        os << '\n';
    }
    return os.str();
}

const ReportRow* ReportTable::find(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return &r;
    return nullptr;
}

ReportRow qmr_row(const std::string& name, const std::vector<const QmrNet*>& models, const Image& img, int crops,
                  std::uint64_t seed, const ScoreConvention& convention) {
    QualityVector qv;
    for (const auto* m : models) {
        if (!m) continue;
        for (const auto& hp : predict(*m, img, crops, seed)) qv.set(hp.grid.kind, hp.value);
    }
    ReportRow row{name, {}};
    for (auto kind : {ModifierKind::Blur, ModifierKind::Snr, ModifierKind::Rer, ModifierKind::Sharpness,
                      ModifierKind::Gsd})
        row.values.push_back(qv.get(kind));
    if (qv.complete()) row.values.push_back(aggregate_score(qv, convention));
    else row.values.push_back(std::nullopt);
    return row;
}

ReportRow mean_row(const std::string& name, const std::vector<ReportRow>& rows, std::size_t columns) {
    ReportRow out{name, std::vector<std::optional<double>>(columns)};
    for (std::size_t c = 0; c < columns; ++c) {
        double s = 0.0;
        int n = 0;
        for (const auto& r : rows)
            if (c < r.values.size() && r.values[c]) {
                s += *r.values[c];
                ++n;
            }
        if (n) out.values[c] = s / n;
    }
    return out;
}

namespace {

// Means of the five parameters; the score is recomputed from the mean vector
// so a mean row relates to its columns exactly as a per-image row does.
ReportRow qmr_mean_row(const std::string& name, const std::vector<ReportRow>& rows,
                       const ScoreConvention& convention) {
    ReportRow out = mean_row(name, rows, kQmrColumns.size() - 1);
    QualityVector qv;
    const ModifierKind order[] = {ModifierKind::Blur, ModifierKind::Snr, ModifierKind::Rer, ModifierKind::Sharpness,
                                  ModifierKind::Gsd};
    for (int k = 0; k < 5; ++k)
        if (out.values[k]) qv.set(order[k], *out.values[k]);
    out.values[5] = qv.complete() ? std::optional<double>(aggregate_score(qv, convention)) : std::nullopt;
    return out;
}

}  // namespace

ReportTable benchmark_dataset(const std::vector<const QmrNet*>& models, const std::vector<NamedImage>& images,
                              int crops, std::uint64_t seed, const ScoreConvention& convention, int threads) {
    if (images.empty()) throw ParameterError("benchmark_dataset: no images");
    convention.validate();
    ReportTable t{kQmrColumns, std::vector<ReportRow>(images.size())};
    parallel_for(images.size(), threads, [&](std::size_t i) {
        t.rows[i] = qmr_row(images[i].name, models, images[i].image, crops, derive_seed(seed, {0xbd, i}), convention);
    });
    t.rows.push_back(qmr_mean_row("mean", t.rows, convention));
    return t;
}

namespace {

struct Cell {
    bool ok = false;
    std::string error;
    ReportRow fr, nr, qmr;
};

ReportRow fr_row(const Image& test, const Image& ref) {
    const FrReport r = fr_report(test, ref);
    return {"", {r.ssim, r.psnr, r.gmsd}};
}

ReportRow nr_row(const Image& img) {
    const NrReport r = nr_report(to_grayscale(img));
    return {"", {r.snr_median, r.snr_mean, r.rer_xy(), r.mtf_xy(), r.fwhm_xy()}};
}

ReportRow na_row(const std::string& name, std::size_t columns) {
    return {name, std::vector<std::optional<double>>(columns)};
}

}  // namespace

SrBenchmark benchmark_sr(const std::vector<SrMethod>& methods, const std::vector<NamedImage>& hr,
                         const std::vector<const QmrNet*>& models, const SrBenchmarkOptions& o) {
    if (hr.empty()) throw ParameterError("benchmark_sr: no images");
    if (o.scale < 2 || o.scale > 4) throw ParameterError("benchmark_sr: scale must be 2, 3 or 4");
    o.convention.validate();
    for (const auto& m : methods)
        if (m.scale != o.scale)
            throw ParameterError("benchmark_sr: method '" + m.name + "' is for x" + std::to_string(m.scale));

    std::vector<std::string> names{"LR"};
    for (const auto& m : methods) names.push_back(m.name);
    names.push_back("HR");
    const std::size_t n_rows = names.size(), n_img = hr.size();
    std::vector<Cell> cells(n_rows * n_img);

    parallel_for(n_img, o.threads, [&](std::size_t i) {
        if (hr[i].image.width < 2 * o.scale || hr[i].image.height < 2 * o.scale)
            throw SizeError("benchmark_sr: " + hr[i].name + " is too small for x" + std::to_string(o.scale));
        const SrPair pair = make_sr_pair(hr[i].image, o.scale, o.blur_lr ? 1.0 : 0.0);
        const std::uint64_t crop_seed = derive_seed(o.seed, {0xb5, i});
        for (std::size_t r = 0; r < n_rows; ++r) {
            Cell& c = cells[r * n_img + i];
            try {
                Image out;
                if (r == 0) out = apply_sr(SrMethod::bilinear(o.scale), pair.lr);
                else if (r + 1 == n_rows) out = pair.hr;
                else out = apply_sr(methods[r - 1], pair.lr);
                if (!out.same_shape(pair.hr)) throw DimensionError("output size differs from the HR image");
                c.fr = fr_row(out, pair.hr);
                c.nr = nr_row(out);
                c.qmr = qmr_row("", models, out, o.crops, crop_seed, o.convention);
                c.ok = true;
            } catch (const Error& e) {
                c.error = e.what();
            }
        }
    });

    SrBenchmark b;
    b.fr.columns = kFrColumns;
    b.nr.columns = kNrColumns;
    b.qmr.columns = kQmrColumns;
    for (std::size_t r = 0; r < n_rows; ++r) {
        std::string error;
        std::vector<ReportRow> fr, nr, qm;
        for (std::size_t i = 0; i < n_img && error.empty(); ++i) {
            const Cell& c = cells[r * n_img + i];
            if (!c.ok) error = hr[i].name + ": " + c.error;
            fr.push_back(c.fr);
            nr.push_back(c.nr);
            qm.push_back(c.qmr);
        }
        if (!error.empty()) {
            spdlog::warn("benchmark_sr: {} failed ({})", names[r], error);
            b.failures.push_back(names[r] + ": " + error);
            b.fr.rows.push_back(na_row(names[r], kFrColumns.size() - 1));
            b.nr.rows.push_back(na_row(names[r], kNrColumns.size() - 1));
            b.qmr.rows.push_back(na_row(names[r], kQmrColumns.size() - 1));
            continue;
        }
        b.fr.rows.push_back(mean_row(names[r], fr, kFrColumns.size() - 1));
        b.nr.rows.push_back(mean_row(names[r], nr, kNrColumns.size() - 1));
        b.qmr.rows.push_back(qmr_mean_row(names[r], qm, o.convention));
    }
    return b;
}

}  // namespace qmr
