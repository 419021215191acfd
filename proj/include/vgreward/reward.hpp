// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vgreward/geometry.hpp"
#include "vgreward/parser.hpp"

namespace vgreward {

inline constexpr double kPerceptionTau = 0.5;  // stage-1 detection training
inline constexpr double kReasoningTau = 0.3;   // stage-2 grounded reasoning
inline constexpr std::size_t kDefaultGroupSize = 8;

struct RewardConfig {
    double alpha = 0.5;
    double tau = kReasoningTau;
    double ctr_weight = 0.5;
    double format_scale = 1.0;       // 0 disables the tag-format reward
    double bbox_format_scale = 1.0;  // 0 disables the bbox-format reward
    double group_eps = 1e-6;

    /// Throws ConfigError on the first out-of-range field.
    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
        check_tau(tau);
        if (!(ctr_weight >= 0.0) || !std::isfinite(ctr_weight)) throw ConfigError("ctr_weight must be finite and >= 0");
        if (format_scale != 0.0 && format_scale != 1.0) throw ConfigError("format_scale must be 0 or 1");
        if (bbox_format_scale != 0.0 && bbox_format_scale != 1.0) throw ConfigError("bbox_format_scale must be 0 or 1");
        if (!(group_eps >= 0.0) || !std::isfinite(group_eps)) throw ConfigError("group_eps must be finite and >= 0");
    }
};

struct RewardBreakdown {
    double r_acc = 0.0;
    double r_format = 0.0;
    double r_bbox_format = 0.0;
    double r_precision = 0.0;
    double r_recall = 0.0;
    double r_ctr = 0.0;
    double total = 0.0;

    friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

struct GroundTruth {
    Choice answer = Choice::A;
    BoxSet gt_boxes;  // may be empty only when answer == D
};

struct GroundingRewards {
    double precision = 0.0;
    double recall = 0.0;
};

/// Precision = (sum of deltas) / |preds|, recall = (sum of deltas) / |gts|, over
/// the optimal one-to-one matching. An empty side yields 0 for its ratio.
inline GroundingRewards grounding_rewards(std::span<const BBox> preds, std::span<const BBox> gts, double tau) {
    check_tau(tau);
    const auto deltas = match_deltas(hungarian_match(preds, gts), tau);
    const double hits = std::accumulate(deltas.begin(), deltas.end(), 0.0);
    GroundingRewards r;
    if (!preds.empty()) r.precision = hits / static_cast<double>(preds.size());
    if (!gts.empty()) r.recall = hits / static_cast<double>(gts.size());
    return r;
}

inline double accuracy_reward(const ParsedResponse& parsed, const GroundTruth& gt) {
    return parsed.answer_choice && *parsed.answer_choice == gt.answer ? 1.0 : 0.0;
}

struct StructureRewards {
    double format = 0.0;
    double bbox_format = 0.0;
};

inline StructureRewards structure_rewards(const ParsedResponse& parsed) {
    return {parsed.tag_structure_ok ? 1.0 : 0.0, parsed.any_valid_box ? 1.0 : 0.0};
}

inline bool is_valid_judge_score(int score) { return score >= 1 && score <= 5; }

struct CtrReward {
    double value = 0.0;
    std::optional<std::string> error;  // set when the judge score was out of range
};

/// Judge score s in 1..5 maps to ctr_weight * (s - 1) / 4, but only for a correct answer.
inline CtrReward ctr_reward(std::optional<int> verdict_score, bool answer_correct, const RewardConfig& cfg) {
    CtrReward out;
    if (!verdict_score) return out;
    if (!is_valid_judge_score(*verdict_score)) {
        out.error = "judge score " + std::to_string(*verdict_score) + " outside 1..5";
        return out;
    }
    if (!answer_correct) return out;
    out.value = cfg.ctr_weight * static_cast<double>(*verdict_score - 1) / 4.0;
    return out;
}

/// Weighted aggregate: alpha * acc + (1 - alpha) * (format + bbox_format + precision + recall + ctr).
/// Stores the result in `b.total` and returns it.
inline double final_reward(RewardBreakdown& b, const RewardConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    auto binary = [](double v) { return v == 0.0 || v == 1.0; };
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!binary(b.r_acc)) throw ValidationError("r_acc", "must be 0 or 1");
    if (!binary(b.r_format)) throw ValidationError("r_format", "must be 0 or 1");
    if (!binary(b.r_bbox_format)) throw ValidationError("r_bbox_format", "must be 0 or 1");
    if (!unit(b.r_precision)) throw ValidationError("r_precision", "must lie in [0, 1]");
    if (!unit(b.r_recall)) throw ValidationError("r_recall", "must lie in [0, 1]");
    if (!(b.r_ctr >= 0.0 && b.r_ctr <= cfg.ctr_weight)) throw ValidationError("r_ctr", "must lie in [0, ctr_weight]");

    const double rest = b.r_format + b.r_bbox_format + b.r_precision + b.r_recall + b.r_ctr;
    b.total = cfg.alpha * b.r_acc + (1.0 - cfg.alpha) * rest;
    return b.total;
}

/// Group-relative advantages: (r - mean) / (population std + eps).
inline std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
    if (rewards.size() < 2) throw ValidationError("rewards", "group needs at least 2 rollouts");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double std_dev = std::sqrt(var / n);

    std::vector<double> adv;
    adv.reserve(rewards.size());
    const bool constant = std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; });
    for (double r : rewards) adv.push_back(constant ? 0.0 : (r - mean) / (std_dev + eps));
    return adv;
}

/// Every reward component except CTR for one parsed rollout. `total` is left
/// for final_reward once the judge score is known.
inline RewardBreakdown score_without_ctr(const ParsedResponse& parsed, const GroundTruth& gt, const RewardConfig& cfg) {
    RewardBreakdown b;
    const auto s = structure_rewards(parsed);
    b.r_format = s.format * cfg.format_scale;
    b.r_bbox_format = s.bbox_format * cfg.bbox_format_scale;
    b.r_acc = accuracy_reward(parsed, gt);
    const auto g = grounding_rewards(parsed.clue_boxes, gt.gt_boxes, cfg.tau);
    b.r_precision = g.precision;
    b.r_recall = g.recall;
    return b;
}

}  // namespace vgreward
