#include "qmr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "qmr/error.hpp"

namespace qmr {

namespace {

void require_pairs(const EvalPairs& p, const char* what) {
    if (p.pairs.empty()) throw ParameterError(std::string(what) + ": no evaluation pairs");
}

void require_k(int k, const char* what) {
    if (k < 1) throw ParameterError(std::string(what) + ": k must be >= 1");
}

}  // namespace

void EvalPairs::add(int target, int predicted, std::vector<double> probabilities) {
    if (target < 0 || target >= n_classes || predicted < 0 || predicted >= n_classes)
        throw ParameterError("EvalPairs: class index outside [0, " + std::to_string(n_classes) + ")");
    if (!probabilities.empty() && static_cast<int>(probabilities.size()) != n_classes)
        throw DimensionError("EvalPairs: probability vector length differs from class count");
    pairs.push_back({target, predicted, std::move(probabilities)});
}

std::vector<int> EvalPairs::label_set(const EvalPair& p) const {
    if (p.probabilities.empty()) return {p.predicted};
    std::vector<int> out;
    for (int j = 0; j < static_cast<int>(p.probabilities.size()); ++j)
        if (p.probabilities[j] >= soft_threshold) out.push_back(j);
    return out;
}

double med_r(const EvalPairs& p) {
    require_pairs(p, "med_r");
    std::vector<int> d;
    d.reserve(p.pairs.size());
    for (const auto& e : p.pairs) d.push_back(std::abs(e.target - e.predicted));
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    if (n % 2 == 1) return d[n / 2];
    return 0.5 * (d[n / 2 - 1] + d[n / 2]);
}

double recall_at_k(const EvalPairs& p, int k) {
    require_pairs(p, "recall_at_k");
    require_k(k, "recall_at_k");
    std::size_t hits = 0;
    for (const auto& e : p.pairs)
        if (std::abs(e.target - e.predicted) < k) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(p.pairs.size());
}

Prf prf_at_k(const EvalPairs& p, int k) {
    require_pairs(p, "prf_at_k");
    require_k(k, "prf_at_k");
    std::size_t labels = 0, correct = 0, hit_pairs = 0, exact_pairs = 0;
    for (const auto& e : p.pairs) {
        const auto set = p.label_set(e);
        std::size_t ok = 0;
        for (int j : set)
            if (std::abs(j - e.target) < k) ++ok;
        labels += set.size();
        correct += ok;
        if (ok > 0) ++hit_pairs;
        if (!set.empty() && ok == set.size()) ++exact_pairs;
    }
    const double n = static_cast<double>(p.pairs.size());
    Prf r;
    r.precision = labels ? static_cast<double>(correct) / static_cast<double>(labels) : 0.0;
    r.recall = static_cast<double>(hit_pairs) / n;
    r.accuracy = static_cast<double>(exact_pairs) / n;
    r.f_score = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

double macro_auc(const EvalPairs& p) {
    require_pairs(p, "macro_auc");
    std::set<int> present;
    for (const auto& e : p.pairs) {
        if (e.probabilities.empty()) throw ParameterError("macro_auc: probability vectors required");
        present.insert(e.target);
    }
    if (present.size() < 2) throw DegenerateInputError("macro_auc: AUC undefined with a single target class");

    const std::size_t n = p.pairs.size();
    std::vector<std::size_t> order(n);
    std::vector<double> rank(n);
    double total = 0.0;
    for (int c : present) {
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        auto score = [&](std::size_t i) { return p.pairs[i].probabilities[c]; };
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
        // Average 1-based ranks over runs of equal scores.
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && score(order[j + 1]) == score(order[i])) ++j;
            const double r = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
            i = j + 1;
        }
        double pos = 0, rank_sum = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (p.pairs[i].target == c) {
                ++pos;
                rank_sum += rank[i];
            }
        const double neg = static_cast<double>(n) - pos;
        total += (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
    }
    return total / static_cast<double>(present.size());
}

std::optional<double> QualityVector::get(ModifierKind kind) const {
    switch (kind) {
        case ModifierKind::Blur: return blur;
        case ModifierKind::Snr: return snr;
        case ModifierKind::Rer: return rer;
        case ModifierKind::Sharpness: return sharpness;
        case ModifierKind::Gsd: return gsd;
    }
    return std::nullopt;
}

void QualityVector::set(ModifierKind kind, double value) {
    switch (kind) {
        case ModifierKind::Blur: blur = value; break;
        case ModifierKind::Snr: snr = value; break;
        case ModifierKind::Rer: rer = value; break;
        case ModifierKind::Sharpness: sharpness = value; break;
        case ModifierKind::Gsd: gsd = value; break;
    }
}

ScoreConvention ScoreConvention::defaults() {
    ScoreConvention c;
    c.metrics[ModifierKind::Blur] = {2.5, 0.0, 0.2};
    c.metrics[ModifierKind::Snr] = {15.0, 30.0, 0.2};
    c.metrics[ModifierKind::Rer] = {0.40, 0.55, 0.2};
    c.metrics[ModifierKind::Sharpness] = {9.0, 1.0, 0.2};
    c.metrics[ModifierKind::Gsd] = {0.30, 0.30, 0.2};
    return c;
}

void ScoreConvention::validate() const {
    double wsum = 0.0;
    for (auto kind : kAllModifiers) {
        const auto it = metrics.find(kind);
        if (it == metrics.end())
            throw ParameterError("score convention: missing entry for " + std::string(to_string(kind)));
        if (!(it->second.range > 0.0))
            throw ParameterError("score convention: range of " + std::string(to_string(kind)) + " must be positive");
        if (!(it->second.weight >= 0.0))
            throw ParameterError("score convention: weight of " + std::string(to_string(kind)) + " is negative");
        wsum += it->second.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ParameterError("score convention: weights must sum to 1");
}

double metric_score(double value, const MetricConvention& c) {
    if (!(c.range > 0.0)) throw ParameterError("metric_score: range must be positive");
    return std::clamp((c.range - std::abs(c.objective - value)) / c.range, 0.0, 1.0);
}

double aggregate_score(const QualityVector& qv, const ScoreConvention& convention) {
    convention.validate();
    double s = 0.0;
    for (auto kind : kAllModifiers) {
        const auto v = qv.get(kind);
        if (!v) throw ParameterError("aggregate_score: no " + std::string(to_string(kind)) + " value");
        const auto& c = convention.metrics.at(kind);
        s += c.weight * metric_score(*v, c);
    }
    return s;
}

}  // namespace qmr
