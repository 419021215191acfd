// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgreward/dataset.hpp"
#include "vgreward/geometry.hpp"
#include "vgreward/parser.hpp"
#include "vgreward/reward.hpp"

namespace vgreward {

inline constexpr std::size_t kNumChoices = 4;
inline constexpr double kApIouThreshold = 0.5;
inline constexpr int kApRecallPoints = 101;

struct ChoicePrediction {
    std::string record_id;
    std::optional<Choice> predicted;
};

struct ChoiceMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::array<double, kNumChoices> per_class_f1{};
    // rows: ground-truth class A..D; columns: predicted A..D, then "absent"
    std::array<std::array<std::size_t, kNumChoices + 1>, kNumChoices> confusion{};
    std::size_t total = 0;
    std::size_t correct = 0;
};

/// Accuracy and macro-F1 over the four answer classes. Records without a
/// prediction land in the "absent" column and count as wrong. A class with no
/// support and no predictions contributes F1 = 0 to the macro mean.
inline ChoiceMetrics evaluate_choices(std::span<const ChoicePrediction> preds,
                                      std::span<const std::pair<std::string, Choice>> gts) {
    std::map<std::string, std::optional<Choice>> by_id;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!by_id.emplace(preds[i].record_id, preds[i].predicted).second)
            throw ValidationError("predictions[" + std::to_string(i) + "]",
                                  "duplicate prediction for record " + preds[i].record_id);
    }

    ChoiceMetrics m;
    std::set<std::string> seen;
    for (const auto& [id, answer] : gts) {
        if (!seen.insert(id).second) throw ValidationError("ground_truth", "duplicate record id " + id);
        const auto row = static_cast<std::size_t>(answer);
        const auto it = by_id.find(id);
        const std::optional<Choice> pred = it == by_id.end() ? std::nullopt : it->second;
        const std::size_t col = pred ? static_cast<std::size_t>(*pred) : kNumChoices;
        ++m.confusion[row][col];
        ++m.total;
        if (col == row) ++m.correct;
    }
    m.accuracy = m.total == 0 ? 0.0 : static_cast<double>(m.correct) / static_cast<double>(m.total);

    double sum = 0.0;
    for (std::size_t c = 0; c < kNumChoices; ++c) {
        const std::size_t tp = m.confusion[c][c];
        std::size_t predicted = 0, support = 0;
        for (std::size_t r = 0; r < kNumChoices; ++r) predicted += m.confusion[r][c];
        for (std::size_t k = 0; k <= kNumChoices; ++k) support += m.confusion[c][k];
        const std::size_t denom = predicted + support;  // 2TP + FP + FN
        m.per_class_f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
        sum += m.per_class_f1[c];
    }
    m.macro_f1 = sum / static_cast<double>(kNumChoices);
    return m;
}

struct GroundingMetrics {
    double precision = 0.0;
    double recall = 0.0;
    std::size_t matched = 0;
    std::size_t num_pred = 0;
    std::size_t num_gt = 0;
};

/// Micro-aggregated precision and recall: total matched pairs above tau over
/// total predicted and total ground-truth boxes.
inline GroundingMetrics evaluate_grounding(std::span<const BoxSet> pred_sets, std::span<const BoxSet> gt_sets, double tau) {
    check_tau(tau);
    if (pred_sets.size() != gt_sets.size())
        throw ValidationError("pred_sets", "expected " + std::to_string(gt_sets.size()) + " entries, got " +
                                               std::to_string(pred_sets.size()));
    GroundingMetrics g;
    for (std::size_t i = 0; i < pred_sets.size(); ++i) {
        for (int d : match_deltas(hungarian_match(pred_sets[i], gt_sets[i]), tau)) g.matched += static_cast<std::size_t>(d);
        g.num_pred += pred_sets[i].size();
        g.num_gt += gt_sets[i].size();
    }
    if (g.num_pred) g.precision = static_cast<double>(g.matched) / static_cast<double>(g.num_pred);
    if (g.num_gt) g.recall = static_cast<double>(g.matched) / static_cast<double>(g.num_gt);
    return g;
}

/// Average precision at IoU 0.5 with 101-point interpolation.
///
/// Predictions carry no confidence, so a box's rank is its emission position
/// within its image. Each image is matched greedily in rank order: a box takes
/// the unmatched ground truth with the highest IoU >= 0.5 (lowest index on
/// ties). Boxes sharing a rank across images form one block on the
/// precision-recall curve, which makes the result independent of image order.
/// Returns nullopt when there is no ground truth at all.
inline std::optional<double> ap50(std::span<const BoxSet> pred_sets, std::span<const BoxSet> gt_sets) {
    if (pred_sets.size() != gt_sets.size())
        throw ValidationError("pred_sets", "expected " + std::to_string(gt_sets.size()) + " entries, got " +
                                               std::to_string(pred_sets.size()));
    std::size_t num_gt = 0;
    std::size_t max_rank = 0;
    for (std::size_t i = 0; i < gt_sets.size(); ++i) {
        num_gt += gt_sets[i].size();
        max_rank = std::max(max_rank, pred_sets[i].size());
    }
    if (num_gt == 0) return std::nullopt;

    // tp_by_rank[k] / count_by_rank[k]: true positives and detections at rank k.
    std::vector<std::size_t> tp_by_rank(max_rank, 0), count_by_rank(max_rank, 0);
    for (std::size_t i = 0; i < pred_sets.size(); ++i) {
        const auto& preds = pred_sets[i];
        const auto& gts = gt_sets[i];
        std::vector<char> taken(gts.size(), 0);
        for (std::size_t k = 0; k < preds.size(); ++k) {
            ++count_by_rank[k];
            double best = kApIouThreshold;
            std::optional<std::size_t> best_gt;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (taken[g]) continue;
                const double v = iou(preds[k], gts[g]);
                if (v >= best && (!best_gt || v > best)) {
                    best = v;
                    best_gt = g;
                }
            }
            if (best_gt) {
                taken[*best_gt] = 1;
                ++tp_by_rank[k];
            }
        }
    }

    std::vector<double> recall, precision;
    std::size_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < max_rank; ++k) {
        tp += tp_by_rank[k];
        seen += count_by_rank[k];
        recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
        precision.push_back(static_cast<double>(tp) / static_cast<double>(seen));
    }
    for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

    double sum = 0.0;
    for (int t = 0; t < kApRecallPoints; ++t) {
        const double r = static_cast<double>(t) / static_cast<double>(kApRecallPoints - 1);
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / static_cast<double>(kApRecallPoints);
}

// ---------------------------------------------------------------------------
// Prediction files and dataset-level reports

struct PredictionLine {
    std::string record_id;
    std::optional<Choice> choice;
    std::optional<BoxSet> boxes;  // canvas coordinates, emission order
};

/// Reads line-delimited {record_id, choice?, boxes?}. An unrecognised or null
/// choice counts as absent; invalid boxes are dropped like any unusable emission.
inline std::vector<PredictionLine> read_predictions(std::istream& in) {
    std::vector<PredictionLine> out;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        const std::string where = "line " + std::to_string(line_no);
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ValidationError(where, "expected a JSON object");
        if (!j.contains("record_id") || !j["record_id"].is_string()) throw ValidationError(where + ": record_id", "missing or not a string");
        PredictionLine p;
        p.record_id = j["record_id"].get<std::string>();
        if (!ids.insert(p.record_id).second) throw ValidationError(where, "duplicate prediction for record " + p.record_id);
        if (const auto it = j.find("choice"); it != j.end() && it->is_string()) p.choice = choice_from_string(it->get<std::string>());
        if (const auto it = j.find("boxes"); it != j.end() && !it->is_null()) {
            BoxSet all = boxes_from_json(*it, where + ": boxes");
            BoxSet kept;
            for (const auto& b : all)
                if (b.is_valid()) kept.push_back(b);
            p.boxes = std::move(kept);
        }
        out.push_back(std::move(p));
    }
    return out;
}

struct EvalReport {
    ChoiceMetrics choices;
    std::optional<double> ap50;
    std::optional<GroundingMetrics> grounding;
    double tau = kPerceptionTau;
    std::size_t unknown_predictions = 0;

    nlohmann::json to_json() const {
        static constexpr const char* kCols[] = {"A", "B", "C", "D", "absent"};
        nlohmann::json confusion = nlohmann::json::object();
        for (std::size_t r = 0; r < kNumChoices; ++r) {
            nlohmann::json row = nlohmann::json::object();
            for (std::size_t c = 0; c <= kNumChoices; ++c) row[kCols[c]] = choices.confusion[r][c];
            confusion[kCols[r]] = row;
        }
        nlohmann::json per_class = nlohmann::json::object();
        for (std::size_t c = 0; c < kNumChoices; ++c) per_class[kCols[c]] = choices.per_class_f1[c];

        nlohmann::json j = {{"accuracy", choices.accuracy},
                            {"macro_f1", choices.macro_f1},
                            {"per_class_f1", per_class},
                            {"confusion", confusion},
                            {"total", choices.total},
                            {"correct", choices.correct},
                            {"unknown_predictions", unknown_predictions},
                            {"tau", tau}};
        j["ap50"] = ap50 ? nlohmann::json(*ap50) : nlohmann::json(nullptr);
        if (grounding) {
            j["grounding_precision"] = grounding->precision;
            j["grounding_recall"] = grounding->recall;
            j["grounding_counts"] = {{"matched", grounding->matched}, {"pred", grounding->num_pred}, {"gt", grounding->num_gt}};
        } else {
            j["grounding_precision"] = nullptr;
            j["grounding_recall"] = nullptr;
        }
        return j;
    }

    std::string to_text() const {
        std::ostringstream out;
        out << std::fixed << std::setprecision(4);
        out << "records            " << choices.total << "\n";
        out << "accuracy           " << choices.accuracy << "\n";
        out << "macro F1           " << choices.macro_f1 << "\n";
        out << "per-class F1       A " << choices.per_class_f1[0] << "  B " << choices.per_class_f1[1] << "  C "
            << choices.per_class_f1[2] << "  D " << choices.per_class_f1[3] << "\n";
        if (ap50) out << "AP50               " << *ap50 << "\n";
        else out << "AP50               n/a\n";
        if (grounding) {
            out << "precision@tau=" << std::setprecision(2) << tau << std::setprecision(4) << "  " << grounding->precision << "\n";
            out << "recall@tau=" << std::setprecision(2) << tau << std::setprecision(4) << "     " << grounding->recall << "\n";
        }
        out << "confusion (rows = truth; cols = A B C D absent)\n";
        static constexpr char kRows[] = {'A', 'B', 'C', 'D'};
        for (std::size_t r = 0; r < kNumChoices; ++r) {
            out << "  " << kRows[r];
            for (std::size_t c = 0; c <= kNumChoices; ++c) out << "\t" << choices.confusion[r][c];
            out << "\n";
        }
        return out.str();
    }
};

/// Scores a prediction file against benchmark records. Ground-truth boxes are
/// remapped onto the concatenated canvas, the frame the model predicts in.
/// Box metrics are reported only when at least one prediction carries boxes.
inline EvalReport evaluate_predictions(std::span<const PredictionLine> preds, std::span<const BenchmarkRecord> records,
                                       double tau = kPerceptionTau, const DatasetOptions& opts = {}) {
    check_tau(tau);
    EvalReport report;
    report.tau = tau;

    std::vector<ChoicePrediction> choice_preds;
    std::map<std::string, const PredictionLine*> by_id;
    bool any_boxes = false;
    for (const auto& p : preds) {
        choice_preds.push_back({p.record_id, p.choice});
        by_id[p.record_id] = &p;
        any_boxes = any_boxes || p.boxes.has_value();
    }

    std::vector<std::pair<std::string, Choice>> gts;
    std::vector<BoxSet> pred_sets, gt_sets;
    std::set<std::string> record_ids;
    for (const auto& r : records) {
        gts.emplace_back(r.record_id, r.answer);
        record_ids.insert(r.record_id);
        const auto sizes = r.image_sizes();
        const auto layout = plan_concat(sizes, opts.direction, opts.max_canvas_side);
        gt_sets.push_back(remap_boxes(layout, r.gt_boxes, r.record_id));
        const auto it = by_id.find(r.record_id);
        pred_sets.push_back(it != by_id.end() && it->second->boxes ? *it->second->boxes : BoxSet{});
    }
    for (const auto& p : preds)
        if (!record_ids.count(p.record_id)) ++report.unknown_predictions;

    report.choices = evaluate_choices(choice_preds, gts);
    if (any_boxes) {
        report.grounding = evaluate_grounding(pred_sets, gt_sets, tau);
        report.ap50 = ap50(pred_sets, gt_sets);
    }
    return report;
}

}  // namespace vgreward
