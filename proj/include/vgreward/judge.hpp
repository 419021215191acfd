// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vgreward/errors.hpp"
#include "vgreward/parallel.hpp"
#include "vgreward/parser.hpp"

namespace vgreward {

/// Reasoning-trace grading prompt. Must stay byte-identical to
/// resources/judge_prompt.v1.txt; bump the version when the text changes.
inline constexpr std::string_view kJudgeTemplateVersion = "ctr-judge-v1";
inline constexpr std::string_view kJudgeTemplate =
    R"(Role: You are a reinforcement learning reward modeling expert, responsible for scoring the quality of the Assistant’s responses.

Evaluation Criteria:
1. Does the answer clearly explain the judgment basis? For example, when distinguishing between genuine and counterfeit products, it should point out specific differences between the given logo and the authentic one.
2. Does the answer demonstrate reasoning, with a concise and logical thought process?
3. Is the answer accurate, without hallucinations in the description of images?

Original Task Description: {prompt_str}

Assistant’s Response: {response_str}

Ground Truth: {ground_truth}

Please, based on the above criteria, output the scoring rationale and the total score (an integer from 1 to 5). The reasoning should not exceed 100 words.

Output Format:
<think>(Briefly write the scoring rationale)</think>
<answer>(Fill in the total score: an integer between 1 and 5)</answer>
)";

inline constexpr std::size_t kRationaleWordLimit = 100;

struct JudgeRequest {
    std::string prompt_str;
    std::string response_str;
    std::string ground_truth;

    void validate() const {
        if (prompt_str.empty()) throw ValidationError("prompt_str", "must not be empty");
        if (response_str.empty()) throw ValidationError("response_str", "must not be empty");
        if (ground_truth.empty()) throw ValidationError("ground_truth", "must not be empty");
    }

    friend bool operator<(const JudgeRequest& a, const JudgeRequest& b) {
        return std::tie(a.prompt_str, a.response_str, a.ground_truth) <
               std::tie(b.prompt_str, b.response_str, b.ground_truth);
    }
};

struct JudgeVerdict {
    std::string rationale;
    int score = 0;
    std::string raw;
    bool rationale_over_limit = false;
};

/// Substitutes {prompt_str}, {response_str} and {ground_truth} in one left-to-right
/// pass. Substituted text is never rescanned.
inline std::string render_judge_prompt(const JudgeRequest& req, std::string_view tmpl = kJudgeTemplate) {
    req.validate();
    static constexpr std::pair<std::string_view, int> kSlots[] = {
        {"{prompt_str}", 0}, {"{response_str}", 1}, {"{ground_truth}", 2}};
    const std::string* values[] = {&req.prompt_str, &req.response_str, &req.ground_truth};

    std::string out;
    out.reserve(tmpl.size() + req.prompt_str.size() + req.response_str.size() + req.ground_truth.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        bool substituted = false;
        if (tmpl[pos] == '{') {
            for (const auto& [slot, idx] : kSlots) {
                if (tmpl.substr(pos, slot.size()) == slot) {
                    out += *values[idx];
                    pos += slot.size();
                    substituted = true;
                    break;
                }
            }
        }
        if (!substituted) out += tmpl[pos++];
    }
    return out;
}

namespace detail {

inline std::size_t count_words(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = is_space(c);
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

}  // namespace detail

/// Extracts the rationale (think segment) and integer score (answer segment).
/// Throws ProtocolError, carrying the raw reply, when the score is missing,
/// not an integer, or outside 1..5.
inline JudgeVerdict parse_judge_verdict(std::string_view raw) {
    const auto answer = detail::find_segment(raw, "answer");
    if (!answer) throw ProtocolError("judge reply has no answer segment", std::string(raw));
    const auto body = detail::trim(answer->body);
    int score = 0;
    const auto res = std::from_chars(body.data(), body.data() + body.size(), score);
    if (body.empty() || res.ec != std::errc() || res.ptr != body.data() + body.size())
        throw ProtocolError("judge score is not an integer: '" + std::string(body) + "'", std::string(raw));
    if (score < 1 || score > 5)
        throw ProtocolError("judge score " + std::to_string(score) + " outside 1..5", std::string(raw));

    JudgeVerdict v;
    v.score = score;
    v.raw = std::string(raw);
    if (const auto think = detail::find_segment(raw, "think")) v.rationale = std::string(detail::trim(think->body));
    v.rationale_over_limit = detail::count_words(v.rationale) > kRationaleWordLimit;
    return v;
}

/// Chat-completion style backend: one prompt in, one reply text out.
/// Implementations must be callable from several threads at once.
class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual std::string complete(const std::string& prompt) const = 0;
};

/// Offline judge for tests and dry runs. Reads the fields back out of a prompt
/// rendered from the default template and scores 5 when the ground-truth text
/// occurs in the response, 2 otherwise.
class MockJudge final : public JudgeBackend {
public:
    explicit MockJudge(std::uint64_t seed = 0) : seed_(seed) {}

    std::string complete(const std::string& prompt) const override {
        static constexpr std::string_view kResponseAnchor = "\n\nAssistant’s Response: ";
        static constexpr std::string_view kTruthAnchor = "\n\nGround Truth: ";
        static constexpr std::string_view kTailAnchor = "\n\nPlease, based on the above criteria";

        const auto r = prompt.find(kResponseAnchor);
        const auto g = prompt.rfind(kTruthAnchor);
        const auto t = prompt.rfind(kTailAnchor);
        if (r == std::string::npos || g == std::string::npos || t == std::string::npos || !(r < g && g < t))
            return "mock judge could not read the prompt";

        const auto response_start = r + kResponseAnchor.size();
        const std::string_view response(prompt.data() + response_start, g - response_start);
        const auto truth_start = g + kTruthAnchor.size();
        const std::string_view truth(prompt.data() + truth_start, t - truth_start);

        const bool cited = !truth.empty() && response.find(truth) != std::string_view::npos;
        std::ostringstream out;
        out << "<think>mock judge seed " << seed_ << ": ground truth "
            << (cited ? "is cited in the response" : "is not cited in the response") << "</think><answer>"
            << (cited ? 5 : 2) << "</answer>";
        return out.str();
    }

private:
    std::uint64_t seed_;
};

struct RemoteJudgeConfig {
    std::string base_url;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    double timeout_s = 60.0;
};

/// Reads JUDGE_BASE_URL, JUDGE_API_KEY and JUDGE_MODEL over the given defaults.
inline RemoteJudgeConfig remote_judge_config_from_env(RemoteJudgeConfig cfg = {}) {
    if (const char* v = std::getenv("JUDGE_BASE_URL"); v && *v) cfg.base_url = v;
    if (const char* v = std::getenv("JUDGE_API_KEY"); v && *v) cfg.api_key = v;
    if (const char* v = std::getenv("JUDGE_MODEL"); v && *v) cfg.model = v;
    return cfg;
}

/// OpenAI-compatible chat endpoint, temperature pinned to 0.
class RemoteJudge final : public JudgeBackend {
public:
    explicit RemoteJudge(RemoteJudgeConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) throw ConfigError("remote judge needs a base URL (JUDGE_BASE_URL)");
    }

    std::string complete(const std::string& prompt) const override {
        nlohmann::json body = {
            {"model", cfg_.model},
            {"temperature", 0},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        };

        // One client per call; httplib clients are not shared across threads here.
        httplib::Client cli(cfg_.base_url);
        const auto secs = static_cast<time_t>(cfg_.timeout_s);
        const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

        auto res = cli.Post(cfg_.path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("judge request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw TransportError("judge endpoint returned HTTP " + std::to_string(res->status));

        const auto reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded()) throw ProtocolError("judge endpoint returned non-JSON body", res->body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ProtocolError("judge reply lacks choices[0].message.content", res->body);
        }
    }

    const RemoteJudgeConfig& config() const noexcept { return cfg_; }

private:
    RemoteJudgeConfig cfg_;
};

struct JudgeOutcome {
    enum class Status { Ok, ProtocolError, TransportError, InvalidRequest };

    Status status = Status::Ok;
    std::optional<JudgeVerdict> verdict;
    std::string error;
    std::string raw;  // reply text kept for audit on protocol errors
    int attempts = 0;

    bool ok() const noexcept { return status == Status::Ok; }
};

inline std::string_view to_string(JudgeOutcome::Status s) {
    switch (s) {
        case JudgeOutcome::Status::Ok: return "ok";
        case JudgeOutcome::Status::ProtocolError: return "protocol_error";
        case JudgeOutcome::Status::TransportError: return "transport_error";
        case JudgeOutcome::Status::InvalidRequest: return "invalid_request";
    }
    return "unknown";
}

struct JudgeBatchOptions {
    std::size_t max_in_flight = 8;
    int retries = 2;  // extra attempts after a transport failure
    std::string_view prompt_template = kJudgeTemplate;
};

/// Judges one request. Transport failures are retried; everything else is final.
inline JudgeOutcome judge_one(const JudgeRequest& req, const JudgeBackend& backend, const JudgeBatchOptions& opts = {}) {
    JudgeOutcome out;
    std::string prompt;
    try {
        prompt = render_judge_prompt(req, opts.prompt_template);
    } catch (const ValidationError& e) {
        out.status = JudgeOutcome::Status::InvalidRequest;
        out.error = e.what();
        return out;
    }

    for (int attempt = 0; attempt <= opts.retries; ++attempt) {
        out.attempts = attempt + 1;
        try {
            out.raw = backend.complete(prompt);
            out.verdict = parse_judge_verdict(out.raw);
            out.status = JudgeOutcome::Status::Ok;
            out.error.clear();
            return out;
        } catch (const TransportError& e) {
            out.status = JudgeOutcome::Status::TransportError;
            out.error = e.what();
        } catch (const ProtocolError& e) {
            out.status = JudgeOutcome::Status::ProtocolError;
            out.error = e.what();
            out.raw = e.raw();
            return out;
        } catch (const std::exception& e) {
            out.status = JudgeOutcome::Status::ProtocolError;
            out.error = e.what();
            return out;
        }
    }
    return out;
}

/// Fans requests out to the backend with at most `max_in_flight` concurrent calls.
/// result[i] always belongs to requests[i]; a failed item never aborts the batch.
inline std::vector<JudgeOutcome> judge_batch(const std::vector<JudgeRequest>& requests, const JudgeBackend& backend,
                                             const JudgeBatchOptions& opts = {}) {
    std::vector<JudgeOutcome> results(requests.size());
    parallel_for(requests.size(), opts.max_in_flight,
                 [&](std::size_t i) { results[i] = judge_one(requests[i], backend, opts); });
    return results;
}

/// Loads a judge template file; it must contain all three placeholders.
inline std::string load_judge_template(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path, "cannot open judge template");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    for (std::string_view slot : {"{prompt_str}", "{response_str}", "{ground_truth}"}) {
        if (text.find(slot) == std::string::npos)
            throw ValidationError(path, "judge template lacks placeholder " + std::string(slot));
    }
    return text;
}

}  // namespace vgreward
