// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vgreward/errors.hpp"

namespace vgreward {

/// Axis-aligned box in absolute pixel coordinates, [x1, y1, x2, y2].
/// Valid boxes have finite, non-negative coordinates and x1 < x2, y1 < y2.
struct BBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    /// Throws ValidationError naming the first offending field.
    void validate() const {
        const double v[4] = {x1, y1, x2, y2};
        const char* names[4] = {"x1", "y1", "x2", "y2"};
        for (int i = 0; i < 4; ++i) {
            if (!std::isfinite(v[i])) throw ValidationError(names[i], "coordinate is not finite");
            if (v[i] < 0.0) throw ValidationError(names[i], "coordinate is negative");
        }
        if (!(x1 < x2)) throw ValidationError("x2", "must be greater than x1");
        if (!(y1 < y2)) throw ValidationError("y2", "must be greater than y1");
    }

    bool is_valid() const noexcept {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
               x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2;
    }

    static BBox checked(double x1, double y1, double x2, double y2) {
        BBox b{x1, y1, x2, y2};
        b.validate();
        return b;
    }

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return width() * height(); }

    BBox translated(double dx, double dy) const noexcept { return {x1 + dx, y1 + dy, x2 + dx, y2 + dy}; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Ordered set of boxes. Order is meaningful (emission order ranks AP).
using BoxSet = std::vector<BBox>;

/// Intersection over union of two valid boxes. Symmetric; 0 for disjoint boxes.
inline double iou(const BBox& a, const BBox& b) {
    a.validate();
    b.validate();
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

struct MatchPair {
    std::size_t pred_index = 0;
    std::size_t gt_index = 0;
    double iou = 0.0;

    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

/// One-to-one assignment between predictions and ground truth.
/// Pairs are sorted by pred_index; size() == min(|preds|, |gts|).
struct MatchResult {
    std::vector<MatchPair> pairs;

    std::size_t m() const noexcept { return pairs.size(); }

    /// Sum of (1 - iou) over pairs, accumulated in ascending order of pair cost
    /// so that equal cost multisets give bit-identical totals.
    double total_cost() const {
        std::vector<double> costs;
        costs.reserve(pairs.size());
        for (const auto& p : pairs) costs.push_back(1.0 - p.iou);
        std::sort(costs.begin(), costs.end());
        double c = 0.0;
        for (double v : costs) c += v;
        return c;
    }
};

namespace detail {

// Minimum-cost assignment of every row to a distinct column, rows <= cols.
// Shortest augmenting path with potentials, O(rows^2 * cols). Strict comparisons
// make the scan order (lowest index first) decide between equal-cost candidates.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t rows,
                                                 std::size_t cols) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
    std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);
    auto at = [&](std::size_t r, std::size_t c) { return cost[(r - 1) * cols + (c - 1)]; };

    for (std::size_t r = 1; r <= rows; ++r) {
        owner[0] = r;
        std::size_t col0 = 0;
        std::vector<double> minv(cols + 1, inf);
        std::vector<char> used(cols + 1, 0);
        do {
            used[col0] = 1;
            const std::size_t row0 = owner[col0];
            double delta = inf;
            std::size_t col1 = 0;
            for (std::size_t c = 1; c <= cols; ++c) {
                if (used[c]) continue;
                const double cur = at(row0, c) - u[row0] - v[c];
                if (cur < minv[c]) {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if (minv[c] < delta) {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for (std::size_t c = 0; c <= cols; ++c) {
                if (used[c]) {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
        } while (owner[col0] != 0);
        do {
            const std::size_t col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
        } while (col0 != 0);
    }

    std::vector<std::size_t> row_to_col(rows, 0);
    for (std::size_t c = 1; c <= cols; ++c) {
        if (owner[c] != 0) row_to_col[owner[c] - 1] = c - 1;
    }
    return row_to_col;
}

}  // namespace detail

/// Optimal one-to-one matching minimizing total (1 - IoU). Exactly
/// min(|preds|, |gts|) pairs are produced; zero-IoU pairs remain eligible.
inline MatchResult hungarian_match(std::span<const BBox> preds, std::span<const BBox> gts) {
    for (const auto& b : preds) b.validate();
    for (const auto& b : gts) b.validate();

    MatchResult result;
    if (preds.empty() || gts.empty()) return result;

    const bool transpose = preds.size() > gts.size();
    const std::size_t rows = transpose ? gts.size() : preds.size();
    const std::size_t cols = transpose ? preds.size() : gts.size();

    std::vector<double> ious(preds.size() * gts.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (std::size_t j = 0; j < gts.size(); ++j) ious[i * gts.size() + j] = iou(preds[i], gts[j]);

    std::vector<double> cost(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t pi = transpose ? c : r;
            const std::size_t gi = transpose ? r : c;
            cost[r * cols + c] = 1.0 - ious[pi * gts.size() + gi];
        }

    const auto row_to_col = detail::solve_assignment(cost, rows, cols);
    result.pairs.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t pi = transpose ? row_to_col[r] : r;
        const std::size_t gi = transpose ? r : row_to_col[r];
        result.pairs.push_back({pi, gi, ious[pi * gts.size() + gi]});
    }
    std::sort(result.pairs.begin(), result.pairs.end(),
              [](const MatchPair& a, const MatchPair& b) { return a.pred_index < b.pred_index; });
    return result;
}

inline void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie strictly inside (0, 1), got " + std::to_string(tau));
}

/// Correctness indicators: 1 iff the pair's IoU is strictly greater than tau.
inline std::vector<int> match_deltas(const MatchResult& match, double tau) {
    check_tau(tau);
    std::vector<int> deltas;
    deltas.reserve(match.pairs.size());
    for (const auto& p : match.pairs) deltas.push_back(p.iou > tau ? 1 : 0);
    return deltas;
}

}  // namespace vgreward
