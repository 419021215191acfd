// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <charconv>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgreward/geometry.hpp"

namespace vgreward {

/// Multiple-choice answer. D is "None of the above".
enum class Choice { A, B, C, D };

inline char to_char(Choice c) { return static_cast<char>('A' + static_cast<int>(c)); }

inline std::optional<Choice> choice_from_char(char ch) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
        case 'A': return Choice::A;
        case 'B': return Choice::B;
        case 'C': return Choice::C;
        case 'D': return Choice::D;
        default: return std::nullopt;
    }
}

inline std::optional<Choice> choice_from_string(std::string_view s) {
    if (s.size() != 1) return std::nullopt;
    return choice_from_char(s[0]);
}

struct ParsedResponse {
    std::optional<std::string> think_text;
    std::optional<Choice> answer_choice;
    BoxSet clue_boxes;  // boxes inside the think segment only
    bool tag_structure_ok = false;
    bool any_valid_box = false;
    std::string raw_text;
};

struct DetectionOutput {
    BoxSet boxes;
    std::vector<std::string> labels;  // empty, or parallel to boxes
    bool parse_ok = false;
};

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
    return n;
}

// Unsigned decimal: digits with an optional fractional part ("12", "12.5", ".5" is rejected).
inline bool scan_number(std::string_view text, std::size_t& pos, double& out) {
    const std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == start) return false;
    if (pos < text.size() && text[pos] == '.') {
        const std::size_t frac = ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        if (pos == frac) return false;
    }
    const auto res = std::from_chars(text.data() + start, text.data() + pos, out);
    // Out-of-range literals still count as syntax; the box invariant rejects them.
    if (res.ec == std::errc::result_out_of_range) out = std::numeric_limits<double>::infinity();
    else if (res.ec != std::errc()) return false;
    return true;
}

inline void skip_ws(std::string_view text, std::size_t& pos) {
    while (pos < text.size() && is_space(text[pos])) ++pos;
}

// Parses "[a, b, c, d]" starting at text[pos] == '['. On success pos is one past ']'.
inline bool scan_tuple(std::string_view text, std::size_t& pos, BBox& out) {
    std::size_t p = pos + 1;
    double v[4];
    for (int i = 0; i < 4; ++i) {
        skip_ws(text, p);
        if (!scan_number(text, p, v[i])) return false;
        skip_ws(text, p);
        const char expected = i < 3 ? ',' : ']';
        if (p >= text.size() || text[p] != expected) return false;
        ++p;
    }
    out = {v[0], v[1], v[2], v[3]};
    pos = p;
    return true;
}

struct Segment {
    std::size_t open = 0;   // position of the opening tag
    std::size_t close = 0;  // position one past the closing tag
    std::string_view body;
};

inline std::optional<Segment> find_segment(std::string_view text, std::string_view tag, std::size_t from = 0) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    const auto o = text.find(open, from);
    if (o == std::string_view::npos) return std::nullopt;
    const auto body_start = o + open.size();
    const auto c = text.find(close, body_start);
    if (c == std::string_view::npos) return std::nullopt;
    return Segment{o, c + close.size(), text.substr(body_start, c - body_start)};
}

}  // namespace detail

/// All syntactically valid "[x1, y1, x2, y2]" tuples that satisfy the box
/// invariant, in textual order. Matches never overlap in the text.
inline BoxSet extract_boxes(std::string_view text) {
    BoxSet boxes;
    std::size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string_view::npos) {
        BBox b;
        std::size_t p = pos;
        if (detail::scan_tuple(text, p, b)) {
            if (b.is_valid()) boxes.push_back(b);
            pos = p;
        } else {
            ++pos;
        }
    }
    return boxes;
}

/// Decomposes one rollout into think/answer segments and coordinate clues.
/// Never throws; malformed input is reported through the flags.
inline ParsedResponse parse_reasoning_response(std::string_view raw) {
    ParsedResponse out;
    out.raw_text = std::string(raw);

    const auto think = detail::find_segment(raw, "think");
    if (think) {
        out.think_text = std::string(think->body);
        out.clue_boxes = extract_boxes(think->body);
    }
    out.any_valid_box = !out.clue_boxes.empty();

    const auto answer = detail::find_segment(raw, "answer");
    if (answer) {
        std::string_view body = detail::trim(answer->body);
        // Tolerate light decoration such as "(B)" or "B." around a single letter.
        auto decoration = [](char c) { return c == '(' || c == ')' || c == '.' || c == ':' || c == '[' || c == ']'; };
        while (!body.empty() && decoration(body.front())) body.remove_prefix(1);
        while (!body.empty() && decoration(body.back())) body.remove_suffix(1);
        out.answer_choice = choice_from_string(detail::trim(body));
    }

    if (think && answer && think->close <= answer->open) {
        const bool counts_ok = detail::count_occurrences(raw, "<think>") == 1 &&
                               detail::count_occurrences(raw, "</think>") == 1 &&
                               detail::count_occurrences(raw, "<answer>") == 1 &&
                               detail::count_occurrences(raw, "</answer>") == 1;
        out.tag_structure_ok = counts_ok && detail::is_blank(raw.substr(0, think->open)) &&
                               detail::is_blank(raw.substr(think->close, answer->open - think->close)) &&
                               detail::is_blank(raw.substr(answer->close));
    }
    return out;
}

namespace detail {

// Returns the payload between a ``` fence pair, or the input when unfenced.
inline std::string_view strip_code_fence(std::string_view raw) {
    const auto open = raw.find("```");
    if (open == std::string_view::npos) return raw;
    auto body_start = raw.find('\n', open + 3);
    if (body_start == std::string_view::npos) return raw.substr(open + 3);
    ++body_start;
    const auto close = raw.find("```", body_start);
    return raw.substr(body_start, close == std::string_view::npos ? std::string_view::npos : close - body_start);
}

}  // namespace detail

/// Parses stage-1 detection output: a JSON array of objects, or an object
/// wrapping one, each object holding a 4-number array under `box_key`.
/// Structurally broken input yields parse_ok = false with no boxes; boxes that
/// parse but violate the box invariant are dropped.
inline DetectionOutput parse_detection_json(std::string_view raw, std::string_view box_key = "bbox") {
    using ordered_json = nlohmann::ordered_json;
    DetectionOutput out;

    ordered_json doc = ordered_json::parse(detail::strip_code_fence(raw), nullptr, false);
    if (doc.is_discarded()) return out;

    const ordered_json* items = nullptr;
    if (doc.is_array()) {
        items = &doc;
    } else if (doc.is_object()) {
        for (const auto& [key, value] : doc.items()) {
            if (value.is_array()) {
                items = &value;
                break;
            }
        }
    }
    if (items == nullptr) return out;

    BoxSet boxes;
    std::vector<std::string> labels;
    bool any_label = false;
    for (const auto& obj : *items) {
        if (!obj.is_object()) return out;
        const auto it = obj.find(std::string(box_key));
        if (it == obj.end() || !it->is_array() || it->size() != 4) return out;
        double v[4];
        for (std::size_t i = 0; i < 4; ++i) {
            if (!(*it)[i].is_number()) return out;
            v[i] = (*it)[i].get<double>();
        }
        std::string label;
        if (const auto lit = obj.find("label"); lit != obj.end()) {
            if (!lit->is_string()) return out;
            label = lit->get<std::string>();
            any_label = true;
        }
        const BBox b{v[0], v[1], v[2], v[3]};
        if (!b.is_valid()) continue;
        boxes.push_back(b);
        labels.push_back(std::move(label));
    }

    out.boxes = std::move(boxes);
    if (any_label) out.labels = std::move(labels);
    out.parse_ok = true;
    return out;
}

}  // namespace vgreward
