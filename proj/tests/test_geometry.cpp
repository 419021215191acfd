// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "vgreward/geometry.hpp"

namespace vgreward {
namespace {

TEST(BBox, ValidationNamesOffendingField) {
    try {
        BBox{5, 5, 5, 9}.validate();
        FAIL() << "zero-width box accepted";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.path(), "x2");
    }
    try {
        BBox{0, std::numeric_limits<double>::quiet_NaN(), 1, 1}.validate();
        FAIL() << "NaN accepted";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.path(), "y1");
    }
    try {
        BBox{-1, 0, 1, 1}.validate();
        FAIL() << "negative coordinate accepted";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.path(), "x1");
    }
    // Inverted corners are rejected, not swapped.
    EXPECT_THROW(BBox::checked(10, 10, 0, 0), ValidationError);
    EXPECT_NO_THROW(BBox::checked(0, 0, 1, 1));
}

TEST(Iou, Examples) {
    EXPECT_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
    EXPECT_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
    // inter = 50, union = 150
    EXPECT_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), oracle::nearest_double({1, 3}));
    // Touching edges share no area.
    EXPECT_EQ(iou({0, 0, 10, 10}, {10, 0, 20, 10}), 0.0);
}

TEST(Iou, InvalidInputThrows) {
    EXPECT_THROW(iou({0, 0, 0, 10}, {0, 0, 10, 10}), ValidationError);
    EXPECT_THROW(iou({0, 0, 10, 10}, {0, 0, std::numeric_limits<double>::infinity(), 10}), ValidationError);
}

TEST(Iou, SymmetricAndTranslationInvariant) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> shift(0, 500);
    for (int i = 0; i < 10000; ++i) {
        const auto a = oracle::random_box(rng);
        const auto b = oracle::random_box(rng);
        ASSERT_EQ(iou(a, b), iou(b, a));
        // Integer offsets keep coordinates exactly representable, so the
        // intersection and union widths are unchanged up to rounding.
        const double dx = shift(rng), dy = shift(rng);
        ASSERT_NEAR(iou(a.translated(dx, dy), b.translated(dx, dy)), iou(a, b), 1e-12);
    }
}

TEST(Iou, MatchesRationalOracleOnIntegerBoxes) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::int64_t> c(0, 200);
    for (int i = 0; i < 2000; ++i) {
        auto gen = [&] {
            std::int64_t x1 = c(rng), x2 = c(rng), y1 = c(rng), y2 = c(rng);
            if (x1 == x2) ++x2;
            if (y1 == y2) ++y2;
            return oracle::IntBox{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
        };
        const auto a = gen(), b = gen();
        const BBox fa{double(a.x1), double(a.y1), double(a.x2), double(a.y2)};
        const BBox fb{double(b.x1), double(b.y1), double(b.x2), double(b.y2)};
        ASSERT_EQ(iou(fa, fb), oracle::nearest_double(oracle::iou_rational(a, b)));
    }
}

TEST(HungarianMatch, SingletonIdentity) {
    const BoxSet p{{0, 0, 10, 10}}, g{{0, 0, 10, 10}};
    const auto m = hungarian_match(p, g);
    ASSERT_EQ(m.m(), 1u);
    EXPECT_EQ(m.pairs[0], (MatchPair{0, 0, 1.0}));
}

TEST(HungarianMatch, CrossedAssignment) {
    const BoxSet p{{0, 0, 10, 10}, {100, 100, 110, 110}};
    const BoxSet g{{99, 99, 111, 111}, {1, 1, 9, 9}};
    const auto m = hungarian_match(p, g);
    ASSERT_EQ(m.m(), 2u);
    EXPECT_EQ(m.pairs[0].pred_index, 0u);
    EXPECT_EQ(m.pairs[0].gt_index, 1u);
    EXPECT_EQ(m.pairs[1].pred_index, 1u);
    EXPECT_EQ(m.pairs[1].gt_index, 0u);
    EXPECT_EQ(m.total_cost(), oracle::brute_force_min_cost(p, g).cost);
}

TEST(HungarianMatch, RectangularAndEmpty) {
    const BoxSet p{{0, 0, 10, 10}, {20, 20, 30, 30}, {40, 40, 50, 50}};
    const BoxSet g{{41, 41, 50, 50}, {0, 0, 9, 10}};
    const auto m = hungarian_match(p, g);
    EXPECT_EQ(m.m(), 2u);
    EXPECT_TRUE(hungarian_match(p, BoxSet{}).pairs.empty());
    EXPECT_TRUE(hungarian_match(BoxSet{}, g).pairs.empty());
    // More ground truth than predictions.
    EXPECT_EQ(hungarian_match(g, p).m(), 2u);
}

TEST(HungarianMatch, ZeroIouPairsStillMatched) {
    const BoxSet p{{0, 0, 1, 1}}, g{{50, 50, 60, 60}};
    const auto m = hungarian_match(p, g);
    ASSERT_EQ(m.m(), 1u);
    EXPECT_EQ(m.pairs[0].iou, 0.0);
}

TEST(HungarianMatch, OneToOneAndOptimalAgainstBruteForce) {
    std::mt19937_64 rng(1234);
    for (int t = 0; t < 300; ++t) {
        const auto p = oracle::random_box_set(rng, 6);
        const auto g = oracle::clustered_box_set(rng, 6, p);
        const auto m = hungarian_match(p, g);
        ASSERT_EQ(m.m(), (p.empty() || g.empty()) ? 0u : std::min(p.size(), g.size()));
        std::vector<int> seen_p(p.size()), seen_g(g.size());
        for (const auto& pr : m.pairs) {
            ASSERT_EQ(seen_p[pr.pred_index]++, 0);
            ASSERT_EQ(seen_g[pr.gt_index]++, 0);
        }
        ASSERT_EQ(m.total_cost(), oracle::brute_force_min_cost(p, g).cost) << "instance " << t;
    }
}

TEST(HungarianMatch, InvalidBoxRejected) {
    EXPECT_THROW(hungarian_match(BoxSet{{0, 0, 10, 10}}, BoxSet{{5, 5, 4, 9}}), ValidationError);
}

TEST(MatchDeltas, StrictThreshold) {
    MatchResult m;
    m.pairs = {{0, 0, 0.6}, {1, 1, 0.4}};
    EXPECT_EQ(match_deltas(m, 0.5), (std::vector<int>{1, 0}));
    m.pairs = {{0, 0, 0.5}};
    EXPECT_EQ(match_deltas(m, 0.5), (std::vector<int>{0}));
    EXPECT_TRUE(match_deltas(MatchResult{}, 0.5).empty());
}

TEST(MatchDeltas, TauOutOfRange) {
    EXPECT_THROW(match_deltas(MatchResult{}, 0.0), ConfigError);
    EXPECT_THROW(match_deltas(MatchResult{}, 1.0), ConfigError);
    EXPECT_THROW(match_deltas(MatchResult{}, std::nan("")), ConfigError);
}

TEST(MatchDeltas, MonotoneInTau) {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 200; ++t) {
        const auto p = oracle::random_box_set(rng, 5);
        const auto g = oracle::clustered_box_set(rng, 5, p);
        const auto m = hungarian_match(p, g);
        std::vector<int> prev = match_deltas(m, 0.01);
        for (double tau = 0.05; tau < 1.0; tau += 0.05) {
            const auto cur = match_deltas(m, tau);
            for (std::size_t i = 0; i < cur.size(); ++i) ASSERT_LE(cur[i], prev[i]);
            prev = cur;
        }
    }
}

}  // namespace
}  // namespace vgreward
