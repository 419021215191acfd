// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgreward/errors.hpp"
#include "vgreward/geometry.hpp"
#include "vgreward/parser.hpp"

namespace vgreward {

inline constexpr int kMinImageSide = 224;
inline constexpr int kMaxImageSide = 1024;
inline constexpr int kDefaultMaxCanvasSide = 4096;
inline constexpr std::size_t kMaxConcatImages = 16;
inline constexpr std::size_t kCandidateCount = 3;

enum class Split { Train, IdTest, OodTest };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::IdTest: return "id_test";
        case Split::OodTest: return "ood_test";
    }
    return "train";
}

inline std::optional<Split> split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "id_test") return Split::IdTest;
    if (s == "ood_test") return Split::OodTest;
    return std::nullopt;
}

enum class ConcatDirection { Horizontal, Vertical };

inline std::string_view to_string(ConcatDirection d) { return d == ConcatDirection::Horizontal ? "horizontal" : "vertical"; }

inline std::optional<ConcatDirection> direction_from_string(std::string_view s) {
    if (s == "horizontal") return ConcatDirection::Horizontal;
    if (s == "vertical") return ConcatDirection::Vertical;
    return std::nullopt;
}

struct ImageSize {
    int width = 0;
    int height = 0;
    friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct Offset {
    int dx = 0;
    int dy = 0;
    friend bool operator==(const Offset&, const Offset&) = default;
};

struct ImageRef {
    std::string path;
    ImageSize size;
};

struct Candidate {
    std::string brand;
    std::string logo_path;
};

struct BenchmarkRecord {
    std::string record_id;
    std::vector<ImageRef> images;
    std::vector<Candidate> candidates;
    Choice answer = Choice::A;
    std::vector<BoxSet> gt_boxes;  // one list per image
    Split split = Split::Train;

    std::vector<ImageSize> image_sizes() const {
        std::vector<ImageSize> s;
        s.reserve(images.size());
        for (const auto& im : images) s.push_back(im.size);
        return s;
    }
};

/// Placement of source images on a shared canvas, no resizing.
struct ConcatLayout {
    ConcatDirection direction = ConcatDirection::Horizontal;
    std::vector<Offset> offsets;
    std::vector<ImageSize> sources;
    ImageSize canvas;
};

/// Horizontal: images side by side, top-aligned. Vertical: stacked, left-aligned.
inline ConcatLayout plan_concat(std::span<const ImageSize> sizes, ConcatDirection direction,
                                int max_canvas_side = kDefaultMaxCanvasSide) {
    if (sizes.empty()) throw ValidationError("sizes", "at least one image is required");
    if (sizes.size() > kMaxConcatImages)
        throw ValidationError("sizes", "at most " + std::to_string(kMaxConcatImages) + " images can be concatenated");

    ConcatLayout layout;
    layout.direction = direction;
    layout.sources.assign(sizes.begin(), sizes.end());
    long long along = 0;
    long long across = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const auto& s = sizes[i];
        if (s.width < 1 || s.height < 1)
            throw ValidationError("sizes[" + std::to_string(i) + "]", "image sides must be >= 1");
        if (direction == ConcatDirection::Horizontal) {
            layout.offsets.push_back({static_cast<int>(along), 0});
            along += s.width;
            across = std::max<long long>(across, s.height);
        } else {
            layout.offsets.push_back({0, static_cast<int>(along)});
            along += s.height;
            across = std::max<long long>(across, s.width);
        }
    }
    if (along > max_canvas_side || across > max_canvas_side)
        throw CapacityError("canvas side " + std::to_string(std::max(along, across)) + " exceeds the maximum of " +
                            std::to_string(max_canvas_side));
    layout.canvas = direction == ConcatDirection::Horizontal
                        ? ImageSize{static_cast<int>(along), static_cast<int>(across)}
                        : ImageSize{static_cast<int>(across), static_cast<int>(along)};
    return layout;
}

inline bool box_within(const BBox& b, const ImageSize& s) {
    return b.is_valid() && b.x2 <= s.width && b.y2 <= s.height;
}

/// Translates every per-image box by its image's offset. Output order is image
/// order, then within-image order.
inline BoxSet remap_boxes(const ConcatLayout& layout, std::span<const BoxSet> per_image,
                          std::string_view record_id = {}) {
    const std::string prefix = record_id.empty() ? std::string() : "record " + std::string(record_id) + ": ";
    if (per_image.size() != layout.offsets.size())
        throw ValidationError(prefix + "gt_boxes", "expected " + std::to_string(layout.offsets.size()) +
                                                       " box lists, got " + std::to_string(per_image.size()));
    BoxSet out;
    for (std::size_t i = 0; i < per_image.size(); ++i) {
        for (std::size_t j = 0; j < per_image[i].size(); ++j) {
            const auto& b = per_image[i][j];
            if (!box_within(b, layout.sources[i]))
                throw ValidationError(prefix + "gt_boxes[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                                      "box is invalid or outside its source image");
            out.push_back(b.translated(layout.offsets[i].dx, layout.offsets[i].dy));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Line-delimited JSON record schema

namespace detail {

inline BBox box_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 4) throw ValidationError(path, "expected [x1, y1, x2, y2]");
    double v[4];
    for (std::size_t i = 0; i < 4; ++i) {
        if (!j[i].is_number()) throw ValidationError(path, "box coordinates must be numbers");
        v[i] = j[i].get<double>();
    }
    return {v[0], v[1], v[2], v[3]};
}

template <typename T>
T required(const nlohmann::json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(path + key, "missing field");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ValidationError(path + key, "wrong type");
    }
}

}  // namespace detail

inline nlohmann::json box_to_json(const BBox& b) { return nlohmann::json::array({b.x1, b.y1, b.x2, b.y2}); }

inline nlohmann::json boxes_to_json(std::span<const BBox> boxes) {
    auto arr = nlohmann::json::array();
    for (const auto& b : boxes) arr.push_back(box_to_json(b));
    return arr;
}

/// Parses an array of [x1, y1, x2, y2] arrays. Boxes are not validated here.
inline BoxSet boxes_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path, "expected an array of boxes");
    BoxSet out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(detail::box_from_json(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

/// Schema-level parse; semantic checks live in validate_record.
inline BenchmarkRecord record_from_json(const nlohmann::json& j) {
    using detail::required;
    if (!j.is_object()) throw ValidationError("", "record must be a JSON object");
    BenchmarkRecord r;
    r.record_id = required<std::string>(j, "record_id", "");

    const auto images = required<nlohmann::json>(j, "images", "");
    if (!images.is_array()) throw ValidationError("images", "expected an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string p = "images[" + std::to_string(i) + "].";
        r.images.push_back({required<std::string>(images[i], "path", p),
                            {required<int>(images[i], "width", p), required<int>(images[i], "height", p)}});
    }

    const auto cands = required<nlohmann::json>(j, "candidates", "");
    if (!cands.is_array()) throw ValidationError("candidates", "expected an array");
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const std::string p = "candidates[" + std::to_string(i) + "].";
        r.candidates.push_back({required<std::string>(cands[i], "brand", p), required<std::string>(cands[i], "logo_path", p)});
    }

    const auto answer = choice_from_string(required<std::string>(j, "answer", ""));
    if (!answer) throw ValidationError("answer", "must be one of A, B, C, D");
    r.answer = *answer;

    const auto gt = required<nlohmann::json>(j, "gt_boxes", "");
    if (!gt.is_array()) throw ValidationError("gt_boxes", "expected one box list per image");
    for (std::size_t i = 0; i < gt.size(); ++i) r.gt_boxes.push_back(boxes_from_json(gt[i], "gt_boxes[" + std::to_string(i) + "]"));

    const auto split = split_from_string(required<std::string>(j, "split", ""));
    if (!split) throw ValidationError("split", "must be one of train, id_test, ood_test");
    r.split = *split;
    return r;
}

inline nlohmann::json record_to_json(const BenchmarkRecord& r) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& im : r.images) images.push_back({{"path", im.path}, {"width", im.size.width}, {"height", im.size.height}});
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : r.candidates) cands.push_back({{"brand", c.brand}, {"logo_path", c.logo_path}});
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& set : r.gt_boxes) gt.push_back(boxes_to_json(set));
    return {{"record_id", r.record_id}, {"images", images},           {"candidates", cands},
            {"answer", std::string(1, to_char(r.answer))}, {"gt_boxes", gt}, {"split", std::string(to_string(r.split))}};
}

// ---------------------------------------------------------------------------
// Dataset validation

struct DatasetOptions {
    ConcatDirection direction = ConcatDirection::Horizontal;
    int max_canvas_side = kDefaultMaxCanvasSide;
};

/// Semantic problems with a parsed record; empty when the record is usable.
inline std::vector<std::string> validate_record(const BenchmarkRecord& r, const DatasetOptions& opts = {}) {
    std::vector<std::string> reasons;
    if (r.record_id.empty()) reasons.push_back("record_id: empty");
    if (r.candidates.size() != kCandidateCount)
        reasons.push_back("candidate count: expected 3, got " + std::to_string(r.candidates.size()));
    for (std::size_t i = 0; i < r.candidates.size(); ++i)
        if (r.candidates[i].brand.empty()) reasons.push_back("candidates[" + std::to_string(i) + "].brand: empty");
    if (r.images.empty()) reasons.push_back("images: at least one image is required");

    for (std::size_t i = 0; i < r.images.size(); ++i) {
        const auto& s = r.images[i].size;
        if (s.width < kMinImageSide || s.width > kMaxImageSide || s.height < kMinImageSide || s.height > kMaxImageSide)
            reasons.push_back("images[" + std::to_string(i) + "]: size " + std::to_string(s.width) + "x" +
                              std::to_string(s.height) + " outside [224, 1024]");
    }

    if (r.gt_boxes.size() != r.images.size()) {
        reasons.push_back("gt_boxes: expected " + std::to_string(r.images.size()) + " box lists, got " +
                          std::to_string(r.gt_boxes.size()));
    } else {
        std::size_t total = 0;
        for (std::size_t i = 0; i < r.gt_boxes.size(); ++i) {
            for (std::size_t j = 0; j < r.gt_boxes[i].size(); ++j) {
                const auto& b = r.gt_boxes[i][j];
                const std::string p = "gt_boxes[" + std::to_string(i) + "][" + std::to_string(j) + "]";
                if (!b.is_valid()) reasons.push_back(p + ": invalid box");
                else if (!box_within(b, r.images[i].size)) reasons.push_back(p + ": outside image bounds");
            }
            total += r.gt_boxes[i].size();
        }
        if (total == 0 && r.answer != Choice::D) reasons.push_back("gt_boxes: empty for a non-D answer");
    }

    if (!r.images.empty()) {
        try {
            const auto sizes = r.image_sizes();
            plan_concat(sizes, opts.direction, opts.max_canvas_side);
        } catch (const std::exception& e) {
            reasons.push_back(std::string("canvas: ") + e.what());
        }
    }
    return reasons;
}

struct RecordVerdict {
    std::size_t line = 0;  // 1-based
    std::string record_id;
    bool ok = true;
    std::vector<std::string> reasons;
};

struct DatasetReport {
    std::vector<RecordVerdict> records;
    std::map<std::string, std::size_t> brand_histogram;  // brand of the correct answer
    std::map<std::string, std::size_t> split_counts;
    std::size_t passed = 0;
    std::size_t failed = 0;

    /// Commutative merge of per-shard counts; records are appended.
    void merge(const DatasetReport& other) {
        records.insert(records.end(), other.records.begin(), other.records.end());
        for (const auto& [k, v] : other.brand_histogram) brand_histogram[k] += v;
        for (const auto& [k, v] : other.split_counts) split_counts[k] += v;
        passed += other.passed;
        failed += other.failed;
    }

    nlohmann::json to_json() const {
        nlohmann::json failures = nlohmann::json::array();
        for (const auto& v : records)
            if (!v.ok) failures.push_back({{"line", v.line}, {"record_id", v.record_id}, {"reasons", v.reasons}});
        return {{"total", records.size()},
                {"passed", passed},
                {"failed", failed},
                {"failures", failures},
                {"brand_histogram", brand_histogram},
                {"split_counts", split_counts}};
    }

    std::string to_text() const {
        std::ostringstream out;
        out << "records: " << records.size() << "  passed: " << passed << "  failed: " << failed << "\n";
        out << "splits:";
        for (const auto& [k, v] : split_counts) out << "  " << k << "=" << v;
        out << "\nbrands (" << brand_histogram.size() << "):\n";
        std::vector<std::pair<std::string, std::size_t>> sorted(brand_histogram.begin(), brand_histogram.end());
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        for (const auto& [brand, n] : sorted) out << "  " << n << "\t" << brand << "\n";
        return out.str();
    }
};

inline constexpr std::string_view kNoneOfTheAbove = "None of the above";

/// Validates line-delimited JSON records. Blank lines are skipped. Report-only:
/// bad records are listed, never thrown.
inline DatasetReport validate_dataset(std::istream& in, const DatasetOptions& opts = {}) {
    DatasetReport report;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        RecordVerdict v;
        v.line = line_no;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            v.reasons.push_back("schema: line is not valid JSON");
        } else {
            try {
                const auto r = record_from_json(j);
                v.record_id = r.record_id;
                v.reasons = validate_record(r, opts);
                if (const auto it = seen.find(r.record_id); it != seen.end())
                    v.reasons.push_back("record_id: duplicate of line " + std::to_string(it->second));
                else
                    seen.emplace(r.record_id, line_no);
                if (v.reasons.empty()) {
                    const auto idx = static_cast<std::size_t>(r.answer);
                    const std::string brand = r.answer == Choice::D ? std::string(kNoneOfTheAbove) : r.candidates[idx].brand;
                    ++report.brand_histogram[brand];
                    ++report.split_counts[std::string(to_string(r.split))];
                }
            } catch (const ValidationError& e) {
                if (j.is_object() && j.contains("record_id") && j["record_id"].is_string())
                    v.record_id = j["record_id"].get<std::string>();
                v.reasons.push_back(std::string("schema: ") + e.what());
            }
        }
        v.ok = v.reasons.empty();
        (v.ok ? report.passed : report.failed)++;
        report.records.push_back(std::move(v));
    }
    return report;
}

/// Reads every record of a line-delimited file, throwing on the first bad line.
inline std::vector<BenchmarkRecord> read_records(std::istream& in) {
    std::vector<BenchmarkRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank(line)) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ValidationError("line " + std::to_string(line_no), "not valid JSON");
        try {
            out.push_back(record_from_json(j));
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(line_no), e.what());
        }
    }
    return out;
}

}  // namespace vgreward
