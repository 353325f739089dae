#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qmr/modifiers.hpp"

namespace qmr {

/// One prediction against its annotation on a common grid.
struct EvalPair {
    int target = 0;
    int predicted = 0;
    std::vector<double> probabilities;  ///< may be empty when only indices are known
};

struct EvalPairs {
    int n_classes = 0;
    double soft_threshold = 0.3;
    std::vector<EvalPair> pairs;

    void add(int target, int predicted, std::vector<double> probabilities = {});
    /// {j : p_j >= soft_threshold}; the argmax alone when no probabilities are stored.
    std::vector<int> label_set(const EvalPair& p) const;
};

/// Median of |target - predicted|; the two central values are averaged for even counts.
double med_r(const EvalPairs& pairs);

/// Percentage of pairs with |target - predicted| < k, so R@1 is the exact-match rate.
double recall_at_k(const EvalPairs& pairs, int k);

/// Windowed multi-label statistics. A predicted label j of a pair is correct
/// when |j - target| < k.
///   precision: correct labels / predicted labels over all pairs
///   recall:    pairs with at least one correct label / pairs
///   accuracy:  pairs whose label set is non-empty and entirely correct / pairs
///   f_score:   harmonic mean of precision and recall
struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double accuracy = 0.0;
    double f_score = 0.0;
};
Prf prf_at_k(const EvalPairs& pairs, int k);

/// One-vs-rest ROC AUC (rank statistic, ties averaged), macro-averaged over
/// the classes present in the targets. Throws DegenerateInputError when fewer
/// than two classes are present.
double macro_auc(const EvalPairs& pairs);

/// Quality estimates in grid units. Missing entries mean no model was available.
struct QualityVector {
    std::optional<double> blur, snr, rer, sharpness, gsd;

    std::optional<double> get(ModifierKind kind) const;
    void set(ModifierKind kind, double value);
    bool complete() const { return blur && snr && rer && sharpness && gsd; }
};

struct MetricConvention {
    double range = 1.0;
    double objective = 0.0;
    double weight = 0.2;
};

/// Per-metric range/objective/weight. Defaults reproduce the published dataset
/// scores: blur (2.5, 0), snr (15, 30), rer (0.40, 0.55), F (9, 1), GSD (0.30, 0.30),
/// equal weights.
struct ScoreConvention {
    std::map<ModifierKind, MetricConvention> metrics;

    static ScoreConvention defaults();
    /// Throws ParameterError unless all five metrics are present, ranges are
    /// positive and weights are non-negative with sum 1.
    void validate() const;
};

/// (range - |objective - value|) / range, clamped to [0, 1].
double metric_score(double value, const MetricConvention& convention);

/// Weighted sum of metric scores. Throws ParameterError when the vector is incomplete.
double aggregate_score(const QualityVector& qv, const ScoreConvention& convention = ScoreConvention::defaults());

}  // namespace qmr
