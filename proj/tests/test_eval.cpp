#include <gtest/gtest.h>

#include <set>

#include "qmr/error.hpp"
#include "qmr/eval.hpp"
#include "support/eval_oracles.hpp"

using namespace qmr;

namespace {

EvalPairs from_indices(int n, const std::vector<std::pair<int, int>>& tp) {
    EvalPairs p;
    p.n_classes = n;
    for (auto [t, q] : tp) p.add(t, q);
    return p;
}

}  // namespace

TEST(MedR, GsdExampleNearMiss) {
    const auto g = ParamGrid::defaults(ModifierKind::Gsd);
    const auto p = from_indices(g.n, {{value_to_class(g, 1.0 / 3.0), value_to_class(g, 0.36666666666666667)}});
    EXPECT_EQ(med_r(p), 1.0);
}

TEST(MedR, Basics) {
    EXPECT_EQ(med_r(from_indices(5, {{1, 1}, {3, 3}})), 0.0);
    EXPECT_EQ(med_r(from_indices(5, {{0, 1}, {0, 4}})), 2.5);
    EXPECT_EQ(med_r(from_indices(5, {{0, 1}, {0, 4}, {2, 2}})), 1.0);
    EXPECT_THROW(med_r(EvalPairs{}), ParameterError);
}

TEST(Recall, Basics) {
    EXPECT_EQ(recall_at_k(from_indices(5, {{1, 1}, {3, 3}}), 1), 100.0);
    const auto far = from_indices(10, {{0, 3}});
    EXPECT_EQ(recall_at_k(far, 1), 0.0);
    EXPECT_EQ(recall_at_k(far, 5), 100.0);
    EXPECT_THROW(recall_at_k(far, 0), ParameterError);
}

TEST(Prf, PerfectAndEmpty) {
    EvalPairs p;
    p.n_classes = 3;
    p.add(0, 0, {1, 0, 0});
    p.add(2, 2, {0, 0, 1});
    const Prf r = prf_at_k(p, 1);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.f_score, 1.0);

    EvalPairs flat;
    flat.n_classes = 5;
    flat.add(1, 0, {0.2, 0.2, 0.2, 0.2, 0.2});  // nothing reaches 0.3
    EXPECT_EQ(prf_at_k(flat, 1).recall, 0.0);
    EXPECT_EQ(prf_at_k(flat, 1).precision, 0.0);
}

TEST(Prf, Windowed) {
    EvalPairs p;
    p.n_classes = 4;
    p.add(1, 2, {0, 0.35, 0.4, 0.25});  // labels {1, 2}
    EXPECT_DOUBLE_EQ(prf_at_k(p, 1).precision, 0.5);
    EXPECT_DOUBLE_EQ(prf_at_k(p, 1).accuracy, 0.0);
    EXPECT_DOUBLE_EQ(prf_at_k(p, 2).precision, 1.0);
    EXPECT_DOUBLE_EQ(prf_at_k(p, 2).accuracy, 1.0);
}

TEST(Auc, OneHotAndChance) {
    EvalPairs p;
    p.n_classes = 3;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> v(3, 0.0);
        v[i % 3] = 1.0;
        p.add(i % 3, i % 3, v);
    }
    EXPECT_DOUBLE_EQ(macro_auc(p), 1.0);

    Rng rng(77);
    EvalPairs u;
    u.n_classes = 4;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(4);
        double s = 0;
        for (auto& x : v) s += (x = rng.uniform());
        for (auto& x : v) x /= s;
        u.add(static_cast<int>(rng.below(4)), 0, v);
    }
    EXPECT_NEAR(macro_auc(u), 0.5, 0.05);

    EvalPairs single;
    single.n_classes = 2;
    single.add(1, 1, {0.1, 0.9});
    EXPECT_THROW(macro_auc(single), DegenerateInputError);
}

TEST(Oracles, RandomFixtures) {
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto p = check::random_pairs(s);
        ASSERT_EQ(med_r(p), check::oracle_med_r(p)) << s;
        for (int k : {1, 2, 3, 5}) {
            ASSERT_EQ(recall_at_k(p, k), check::oracle_recall(p, k));
            const Prf a = prf_at_k(p, k), b = check::oracle_prf(p, k);
            ASSERT_EQ(a.precision, b.precision);
            ASSERT_EQ(a.recall, b.recall);
            ASSERT_EQ(a.accuracy, b.accuracy);
            ASSERT_EQ(a.f_score, b.f_score);
        }
        std::set<int> classes;
        for (const auto& e : p.pairs) classes.insert(e.target);
        if (classes.size() >= 2) ASSERT_NEAR(macro_auc(p), check::oracle_auc(p), 1e-9) << s;
    }
}

TEST(Oracles, MonotoneRelabelingInvariance) {
    // Index distances are all that matter, so reversing the grid changes nothing.
    const auto p = check::random_pairs(5);
    EvalPairs r;
    r.n_classes = p.n_classes;
    for (const auto& e : p.pairs) r.add(p.n_classes - 1 - e.target, p.n_classes - 1 - e.predicted);
    EXPECT_EQ(med_r(p), med_r(r));
    EXPECT_EQ(recall_at_k(p, 2), recall_at_k(r, 2));
}

TEST(Score, MetricScore) {
    const auto c = ScoreConvention::defaults();
    EXPECT_DOUBLE_EQ(metric_score(30, c.metrics.at(ModifierKind::Snr)), 1.0);
    EXPECT_DOUBLE_EQ(metric_score(15, c.metrics.at(ModifierKind::Snr)), 0.0);
    EXPECT_DOUBLE_EQ(metric_score(1.0, c.metrics.at(ModifierKind::Blur)), 0.6);
    EXPECT_DOUBLE_EQ(metric_score(99, c.metrics.at(ModifierKind::Blur)), 0.0);
}

TEST(Score, Aggregate) {
    QualityVector best;
    best.blur = 0;
    best.snr = 30;
    best.rer = 0.55;
    best.sharpness = 1;
    best.gsd = 0.30;
    EXPECT_NEAR(aggregate_score(best), 1.0, 1e-15);

    QualityVector inria = best;
    inria.blur = 1.0;
    inria.rer = 0.515;
    EXPECT_NEAR(aggregate_score(inria), 0.9025, 1e-12);

    // Worsening one metric never raises the score.
    double prev = aggregate_score(inria);
    for (double r : {0.5, 0.45, 0.3, 0.1}) {
        inria.rer = r;
        const double s = aggregate_score(inria);
        EXPECT_LE(s, prev);
        prev = s;
    }
    QualityVector partial = best;
    partial.gsd.reset();
    EXPECT_THROW(aggregate_score(partial), ParameterError);
    ScoreConvention bad = ScoreConvention::defaults();
    bad.metrics.erase(ModifierKind::Gsd);
    EXPECT_THROW(aggregate_score(best, bad), ParameterError);
}
