#pragma once

// Brute-force reference implementations of the retrieval metrics, written
// independently of the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <vector>

#include "qmr/eval.hpp"
#include "qmr/rng.hpp"

namespace qmr::check {

inline double oracle_med_r(const EvalPairs& p) {
    std::vector<double> d;
    for (const auto& e : p.pairs) d.push_back(std::abs(e.target - e.predicted));
    // Selection by counting: the smallest value with at least half the set at or below it.
    auto kth = [&](std::size_t k) {
        for (double c : d) {
            std::size_t below = 0, equal = 0;
            for (double x : d) {
                below += x < c;
                equal += x == c;
            }
            if (below <= k && k < below + equal) return c;
        }
        return -1.0;
    };
    const std::size_t n = d.size();
    return n % 2 ? kth(n / 2) : 0.5 * (kth(n / 2 - 1) + kth(n / 2));
}

inline double oracle_recall(const EvalPairs& p, int k) {
    int hit = 0;
    for (const auto& e : p.pairs) hit += (e.target - e.predicted < k && e.predicted - e.target < k) ? 1 : 0;
    return 100.0 * hit / static_cast<double>(p.pairs.size());
}

/// Confusion counts over (pair, class) cells inside and outside the +-k window.
inline Prf oracle_prf(const EvalPairs& p, int k) {
    double tp = 0, fp = 0, pairs_hit = 0, pairs_exact = 0;
    for (const auto& e : p.pairs) {
        double pair_tp = 0, pair_fp = 0;
        for (int j = 0; j < p.n_classes; ++j) {
            const bool predicted = e.probabilities.empty() ? j == e.predicted : e.probabilities[j] >= p.soft_threshold;
            const bool inside = j > e.target - k && j < e.target + k;
            if (predicted && inside) ++pair_tp;
            if (predicted && !inside) ++pair_fp;
        }
        tp += pair_tp;
        fp += pair_fp;
        pairs_hit += pair_tp > 0;
        pairs_exact += (pair_tp > 0 && pair_fp == 0);
    }
    const double n = static_cast<double>(p.pairs.size());
    Prf r;
    r.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    r.recall = pairs_hit / n;
    r.accuracy = pairs_exact / n;
    r.f_score = (r.precision + r.recall) > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

/// Mann-Whitney pair counting per class.
inline double oracle_auc(const EvalPairs& p) {
    std::set<int> classes;
    for (const auto& e : p.pairs) classes.insert(e.target);
    double total = 0;
    for (int c : classes) {
        double wins = 0, count = 0;
        for (const auto& a : p.pairs) {
            if (a.target != c) continue;
            for (const auto& b : p.pairs) {
                if (b.target == c) continue;
                const double sa = a.probabilities[c], sb = b.probabilities[c];
                wins += sa > sb ? 1.0 : (sa == sb ? 0.5 : 0.0);
                count += 1;
            }
        }
        total += wins / count;
    }
    return total / static_cast<double>(classes.size());
}

/// Random pairs with coarse probabilities (many ties, some empty label sets).
inline EvalPairs random_pairs(std::uint64_t seed) {
    Rng rng(seed);
    EvalPairs p;
    p.n_classes = 2 + static_cast<int>(rng.below(9));
    const int n = 1 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) {
        std::vector<double> prob(p.n_classes);
        double s = 0;
        for (auto& v : prob) s += (v = static_cast<double>(rng.below(5)));
        if (s == 0) prob[rng.below(p.n_classes)] = s = 1;
        for (auto& v : prob) v /= s;
        const int predicted = static_cast<int>(std::max_element(prob.begin(), prob.end()) - prob.begin());
        p.add(static_cast<int>(rng.below(p.n_classes)), predicted, prob);
    }
    return p;
}

}  // namespace qmr::check
