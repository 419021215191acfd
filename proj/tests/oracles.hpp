// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations used only by tests. Nothing here calls
// the code path it is used to check (IoU values aside, which are checked
// separately against exact rational arithmetic).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "vgreward/geometry.hpp"

namespace vgreward::oracle {

// ---------------------------------------------------------------------------
// Exact IoU for integer boxes as a reduced fraction.

struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;
};

struct IntBox {
    std::int64_t x1, y1, x2, y2;
};

inline Rational iou_rational(const IntBox& a, const IntBox& b) {
    const std::int64_t iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const std::int64_t ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return {0, 1};
    const std::int64_t inter = iw * ih;
    const std::int64_t uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    const std::int64_t g = std::gcd(inter, uni);
    return {inter / g, uni / g};
}

// Both operands are exact in double, and IEEE division rounds correctly, so this
// is the nearest double to the rational value.
inline double nearest_double(const Rational& r) { return static_cast<double>(r.num) / static_cast<double>(r.den); }

// ---------------------------------------------------------------------------
// Brute-force assignment

struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, gt), sorted by pred
    double cost = 0.0;
};

inline double canonical_cost(std::vector<std::pair<std::size_t, std::size_t>>& pairs, const BoxSet& preds,
                                 const BoxSet& gts) {
    std::sort(pairs.begin(), pairs.end());
    std::vector<double> costs;
    for (const auto& [p, g] : pairs) costs.push_back(1.0 - iou(preds[p], gts[g]));
    std::sort(costs.begin(), costs.end());
    return std::accumulate(costs.begin(), costs.end(), 0.0);
}

/// Every injective assignment of size min(|P|, |G|), in a fixed enumeration order.
template <typename Visit>
void for_each_assignment(const BoxSet& preds, const BoxSet& gts, Visit&& visit) {
    if (preds.empty() || gts.empty()) {
        std::vector<std::pair<std::size_t, std::size_t>> none;
        visit(none);
        return;
    }
    const bool preds_smaller = preds.size() <= gts.size();
    const std::size_t small = preds_smaller ? preds.size() : gts.size();
    const std::size_t large = preds_smaller ? gts.size() : preds.size();
    std::vector<std::size_t> perm(large);
    std::iota(perm.begin(), perm.end(), 0);
    // Permutations of the larger side; only the first `small` slots matter, so
    // skip permutations whose tail is not sorted to avoid repeats.
    do {
        if (!std::is_sorted(perm.begin() + static_cast<std::ptrdiff_t>(small), perm.end())) continue;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < small; ++i)
            pairs.emplace_back(preds_smaller ? std::pair{i, perm[i]} : std::pair{perm[i], i});
        visit(pairs);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

inline Assignment brute_force_min_cost(const BoxSet& preds, const BoxSet& gts) {
    Assignment best;
    best.cost = std::numeric_limits<double>::infinity();
    for_each_assignment(preds, gts, [&](std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        const double c = canonical_cost(pairs, preds, gts);
        if (c < best.cost) best = {pairs, c};
    });
    return best;
}

/// Precision/recall by exhaustive matching: among minimum-cost assignments take
/// the largest count of pairs with IoU > tau.
inline std::pair<double, double> brute_force_grounding(const BoxSet& preds, const BoxSet& gts, double tau) {
    const double best = brute_force_min_cost(preds, gts).cost;
    std::size_t hits = 0;
    for_each_assignment(preds, gts, [&](std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
        const double c = canonical_cost(pairs, preds, gts);
        if (std::abs(c - best) > 1e-12) return;
        std::size_t h = 0;
        for (const auto& [p, g] : pairs) h += iou(preds[p], gts[g]) > tau ? 1 : 0;
        hits = std::max(hits, h);
    });
    const double precision = preds.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(preds.size());
    const double recall = gts.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gts.size());
    return {precision, recall};
}

// ---------------------------------------------------------------------------
// Reference AP@0.5 by rank-cutoff sweep.
//
// For each cutoff K (keep the first K+1 boxes of every image), match greedily
// per image from scratch and record (recall, precision). Interpolated
// precision at recall r is the best precision over cutoffs reaching r.

inline std::optional<double> reference_ap50(const std::vector<BoxSet>& preds, const std::vector<BoxSet>& gts) {
    std::size_t num_gt = 0, max_len = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
        num_gt += gts[i].size();
        max_len = std::max(max_len, preds[i].size());
    }
    if (num_gt == 0) return std::nullopt;

    std::vector<std::pair<double, double>> points;  // (recall, precision)
    for (std::size_t cutoff = 1; cutoff <= max_len; ++cutoff) {
        std::size_t tp = 0, kept = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            std::vector<bool> used(gts[i].size(), false);
            const std::size_t n = std::min(cutoff, preds[i].size());
            kept += n;
            for (std::size_t k = 0; k < n; ++k) {
                int best = -1;
                double best_iou = 0.0;
                for (std::size_t g = 0; g < gts[i].size(); ++g) {
                    if (used[g]) continue;
                    const double v = iou(preds[i][k], gts[i][g]);
                    if (v >= 0.5 && v > best_iou) {
                        best_iou = v;
                        best = static_cast<int>(g);
                    }
                }
                if (best >= 0) {
                    used[static_cast<std::size_t>(best)] = true;
                    ++tp;
                }
            }
        }
        points.emplace_back(static_cast<double>(tp) / static_cast<double>(num_gt),
                            static_cast<double>(tp) / static_cast<double>(kept));
    }

    double sum = 0.0;
    for (int t = 0; t <= 100; ++t) {
        const double r = t / 100.0;
        double p = 0.0;
        for (const auto& [rec, prec] : points)
            if (rec >= r) p = std::max(p, prec);
        sum += p;
    }
    return sum / 101.0;
}

// ---------------------------------------------------------------------------
// Regular-grammar box extractor

inline BoxSet regex_extract_boxes(const std::string& text) {
    static const std::regex re(
        R"(\[\s*(\d+(?:\.\d+)?)\s*,\s*(\d+(?:\.\d+)?)\s*,\s*(\d+(?:\.\d+)?)\s*,\s*(\d+(?:\.\d+)?)\s*\])");
    BoxSet out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        double v[4];
        for (int i = 0; i < 4; ++i) {
            try {
                v[i] = std::stod((*it)[i + 1].str());
            } catch (const std::out_of_range&) {
                v[i] = std::numeric_limits<double>::infinity();
            }
        }
        const bool ok = std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]) && std::isfinite(v[3]) &&
                        v[0] < v[2] && v[1] < v[3];
        if (ok) out.push_back({v[0], v[1], v[2], v[3]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generators

inline BBox random_box(std::mt19937_64& rng, double extent = 100.0) {
    std::uniform_real_distribution<double> pos(0.0, extent);
    std::uniform_real_distribution<double> side(1.0, extent / 2.0);
    const double x = pos(rng), y = pos(rng);
    return {x, y, x + side(rng), y + side(rng)};
}

inline BoxSet random_box_set(std::mt19937_64& rng, std::size_t max_size, double extent = 100.0) {
    std::uniform_int_distribution<std::size_t> n(0, max_size);
    BoxSet s(n(rng));
    for (auto& b : s) b = random_box(rng, extent);
    return s;
}

/// Boxes clustered around a few centres so that many pairs overlap.
inline BoxSet clustered_box_set(std::mt19937_64& rng, std::size_t max_size, const BoxSet& anchors) {
    std::uniform_int_distribution<std::size_t> n(0, max_size);
    std::normal_distribution<double> jitter(0.0, 4.0);
    BoxSet s(n(rng));
    for (auto& b : s) {
        if (anchors.empty()) {
            b = random_box(rng);
            continue;
        }
        const auto& a = anchors[std::uniform_int_distribution<std::size_t>(0, anchors.size() - 1)(rng)];
        const double x1 = std::max(0.0, a.x1 + jitter(rng)), y1 = std::max(0.0, a.y1 + jitter(rng));
        b = {x1, y1, std::max(x1 + 1.0, a.x2 + jitter(rng)), std::max(y1 + 1.0, a.y2 + jitter(rng))};
    }
    return s;
}

}  // namespace vgreward::oracle
