// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgreward/dataset.hpp"
#include "vgreward/errors.hpp"
#include "vgreward/judge.hpp"
#include "vgreward/parallel.hpp"
#include "vgreward/parser.hpp"
#include "vgreward/reward.hpp"

namespace vgreward {

enum class JudgeMode { Off, Mock, Remote };

inline std::string_view to_string(JudgeMode m) {
    switch (m) {
        case JudgeMode::Off: return "off";
        case JudgeMode::Mock: return "mock";
        case JudgeMode::Remote: return "remote";
    }
    return "off";
}

inline std::optional<JudgeMode> judge_mode_from_string(std::string_view s) {
    if (s == "off") return JudgeMode::Off;
    if (s == "mock") return JudgeMode::Mock;
    if (s == "remote") return JudgeMode::Remote;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Configuration

inline nlohmann::json reward_config_to_json(const RewardConfig& c) {
    return {{"alpha", c.alpha},
            {"tau", c.tau},
            {"ctr_weight", c.ctr_weight},
            {"format_scale", c.format_scale},
            {"bbox_format_scale", c.bbox_format_scale},
            {"group_eps", c.group_eps}};
}

/// Applies a partial RewardConfig object. Unknown keys and non-numeric values
/// raise ValidationError with the offending path; range checks are left to
/// RewardConfig::validate.
inline RewardConfig apply_reward_overrides(RewardConfig base, const nlohmann::json& overrides,
                                           const std::string& path = "config") {
    if (overrides.is_null()) return base;
    if (!overrides.is_object()) throw ValidationError(path, "expected an object");
    const std::map<std::string, double RewardConfig::*> fields = {
        {"alpha", &RewardConfig::alpha},           {"tau", &RewardConfig::tau},
        {"ctr_weight", &RewardConfig::ctr_weight}, {"format_scale", &RewardConfig::format_scale},
        {"bbox_format_scale", &RewardConfig::bbox_format_scale}, {"group_eps", &RewardConfig::group_eps}};
    for (const auto& [key, value] : overrides.items()) {
        const auto it = fields.find(key);
        if (it == fields.end()) throw ValidationError(path + "." + key, "unknown field");
        if (!value.is_number()) throw ValidationError(path + "." + key, "expected a number");
        base.*(it->second) = value.get<double>();
    }
    return base;
}

/// Server and CLI defaults, loadable from a JSON config file.
struct ServiceConfig {
    RewardConfig reward;
    std::size_t batch_cap = 1024;
    std::size_t workers = 8;
    std::size_t judge_concurrency = 8;
    int judge_retries = 2;
    JudgeMode judge_mode = JudgeMode::Off;
    RemoteJudgeConfig remote;
    std::string template_path;  // empty: built-in template
    std::uint64_t mock_seed = 0;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string audit_log;  // empty: no audit log

    nlohmann::json to_json() const {
        return {{"reward", reward_config_to_json(reward)},
                {"batch_cap", batch_cap},
                {"workers", workers},
                {"judge_concurrency", judge_concurrency},
                {"judge_retries", judge_retries},
                {"judge_mode", std::string(to_string(judge_mode))},
                {"judge",
                 {{"base_url", remote.base_url},
                  {"path", remote.path},
                  {"model", remote.model},
                  {"timeout_s", remote.timeout_s},
                  {"api_key_set", !remote.api_key.empty()},
                  {"template_path", template_path},
                  {"template_version", template_path.empty() ? std::string(kJudgeTemplateVersion) : std::string("custom")},
                  {"mock_seed", mock_seed}}},
                {"host", host},
                {"port", port},
                {"audit_log", audit_log}};
    }
};

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path + key + ": wrong type");
    }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& path) {
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(path + key + ": unknown field");
    }
}

}  // namespace detail

/// Parses a config document. Environment variables JUDGE_BASE_URL, JUDGE_API_KEY
/// and JUDGE_MODEL override the judge section.
inline ServiceConfig service_config_from_json(const nlohmann::json& j) {
    ServiceConfig c;
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    detail::reject_unknown(j, {"reward", "batch_cap", "workers", "judge_concurrency", "judge_retries", "judge_mode", "judge",
                               "host", "port", "audit_log"},
                           "");
    if (const auto it = j.find("reward"); it != j.end()) {
        try {
            c.reward = apply_reward_overrides(c.reward, *it, "reward");
        } catch (const ValidationError& e) {
            throw ConfigError(e.what());
        }
    }
    detail::read_field(j, "batch_cap", c.batch_cap, "");
    detail::read_field(j, "workers", c.workers, "");
    detail::read_field(j, "judge_concurrency", c.judge_concurrency, "");
    detail::read_field(j, "judge_retries", c.judge_retries, "");
    detail::read_field(j, "host", c.host, "");
    detail::read_field(j, "port", c.port, "");
    detail::read_field(j, "audit_log", c.audit_log, "");
    if (const auto it = j.find("judge_mode"); it != j.end()) {
        const auto m = it->is_string() ? judge_mode_from_string(it->get<std::string>()) : std::nullopt;
        if (!m) throw ConfigError("judge_mode: must be off, mock or remote");
        c.judge_mode = *m;
    }
    if (const auto it = j.find("judge"); it != j.end()) {
        if (!it->is_object()) throw ConfigError("judge: expected an object");
        detail::reject_unknown(*it, {"base_url", "path", "model", "timeout_s", "template_path", "mock_seed"}, "judge.");
        detail::read_field(*it, "base_url", c.remote.base_url, "judge.");
        detail::read_field(*it, "path", c.remote.path, "judge.");
        detail::read_field(*it, "model", c.remote.model, "judge.");
        detail::read_field(*it, "timeout_s", c.remote.timeout_s, "judge.");
        detail::read_field(*it, "template_path", c.template_path, "judge.");
        detail::read_field(*it, "mock_seed", c.mock_seed, "judge.");
    }
    c.remote = remote_judge_config_from_env(c.remote);
    c.reward.validate();
    if (c.batch_cap == 0) throw ConfigError("batch_cap must be >= 1");
    if (c.workers == 0) throw ConfigError("workers must be >= 1");
    if (c.judge_concurrency == 0) throw ConfigError("judge_concurrency must be >= 1");
    if (c.judge_retries < 0) throw ConfigError("judge_retries must be >= 0");
    if (!(c.remote.timeout_s > 0.0)) throw ConfigError("judge.timeout_s must be > 0");
    return c;
}

inline ServiceConfig load_service_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    return service_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Request schema

struct GroupRequest {
    std::string prompt_id;
    GroundTruth ground_truth;
    std::string task_prompt;
    std::optional<std::string> ground_truth_text;  // what the judge sees; default is the answer letter
    std::vector<std::string> rollouts;

    std::string judge_ground_truth() const {
        return ground_truth_text ? *ground_truth_text : std::string(1, to_char(ground_truth.answer));
    }
};

struct ScoreBatchRequest {
    std::vector<GroupRequest> groups;
    nlohmann::json config_overrides;  // null or a partial RewardConfig
    std::optional<JudgeMode> judge_mode;
};

inline GroundTruth ground_truth_from_json(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) throw ValidationError(path, "expected an object");
    const auto a = j.find("answer");
    if (a == j.end() || !a->is_string()) throw ValidationError(path + ".answer", "missing or not a string");
    const auto choice = choice_from_string(a->get<std::string>());
    if (!choice) throw ValidationError(path + ".answer", "must be one of A, B, C, D");
    GroundTruth gt;
    gt.answer = *choice;
    if (const auto b = j.find("gt_boxes"); b != j.end()) gt.gt_boxes = boxes_from_json(*b, path + ".gt_boxes");
    for (std::size_t i = 0; i < gt.gt_boxes.size(); ++i) {
        try {
            gt.gt_boxes[i].validate();
        } catch (const ValidationError& e) {
            throw ValidationError(path + ".gt_boxes[" + std::to_string(i) + "]." + e.path(), "invalid box");
        }
    }
    if (gt.gt_boxes.empty() && gt.answer != Choice::D)
        throw ValidationError(path + ".gt_boxes", "may be empty only when the answer is D");
    return gt;
}

inline GroupRequest group_from_json(const nlohmann::json& g, const std::string& path) {
    if (!g.is_object()) throw ValidationError(path, "expected an object");
    GroupRequest out;
    const auto id = g.find("prompt_id");
    if (id == g.end() || !(id->is_string() || id->is_number_integer()))
        throw ValidationError(path + ".prompt_id", "missing or not a string");
    out.prompt_id = id->is_string() ? id->get<std::string>() : std::to_string(id->get<long long>());
    const auto gt = g.find("ground_truth");
    if (gt == g.end()) throw ValidationError(path + ".ground_truth", "missing field");
    out.ground_truth = ground_truth_from_json(*gt, path + ".ground_truth");
    if (const auto tp = g.find("task_prompt"); tp != g.end()) {
        if (!tp->is_string()) throw ValidationError(path + ".task_prompt", "expected a string");
        out.task_prompt = tp->get<std::string>();
    }
    if (const auto gtt = g.find("ground_truth_text"); gtt != g.end() && !gtt->is_null()) {
        if (!gtt->is_string() || gtt->get<std::string>().empty())
            throw ValidationError(path + ".ground_truth_text", "expected a non-empty string");
        out.ground_truth_text = gtt->get<std::string>();
    }
    const auto rs = g.find("rollouts");
    if (rs == g.end() || !rs->is_array()) throw ValidationError(path + ".rollouts", "missing or not an array");
    if (rs->size() < 2) throw ValidationError(path + ".rollouts", "a group needs at least 2 rollouts");
    for (std::size_t i = 0; i < rs->size(); ++i) {
        if (!(*rs)[i].is_string()) throw ValidationError(path + ".rollouts[" + std::to_string(i) + "]", "expected a string");
        out.rollouts.push_back((*rs)[i].get<std::string>());
    }
    return out;
}

/// Parses and validates a /v1/score body. Throws ValidationError (with field
/// path) or CapacityError when the rollout count exceeds `batch_cap`.
inline ScoreBatchRequest score_request_from_json(const nlohmann::json& j, std::size_t batch_cap) {
    if (!j.is_object()) throw ValidationError("", "request body must be a JSON object");
    ScoreBatchRequest req;
    const auto groups = j.find("groups");
    if (groups == j.end() || !groups->is_array()) throw ValidationError("groups", "missing or not an array");
    if (groups->empty()) throw ValidationError("groups", "at least one group is required");
    std::size_t total = 0;
    for (std::size_t i = 0; i < groups->size(); ++i) {
        req.groups.push_back(group_from_json((*groups)[i], "groups[" + std::to_string(i) + "]"));
        total += req.groups.back().rollouts.size();
    }
    if (total > batch_cap)
        throw CapacityError("batch has " + std::to_string(total) + " rollouts; the cap is " + std::to_string(batch_cap));
    if (const auto c = j.find("config"); c != j.end()) req.config_overrides = *c;
    if (const auto m = j.find("judge_mode"); m != j.end() && !m->is_null()) {
        const auto mode = m->is_string() ? judge_mode_from_string(m->get<std::string>()) : std::nullopt;
        if (!mode) throw ValidationError("judge_mode", "must be off, mock or remote");
        req.judge_mode = mode;
    }
    return req;
}

inline nlohmann::json group_to_json(const GroupRequest& g) {
    nlohmann::json j = {{"prompt_id", g.prompt_id},
                        {"ground_truth",
                         {{"answer", std::string(1, to_char(g.ground_truth.answer))}, {"gt_boxes", boxes_to_json(g.ground_truth.gt_boxes)}}},
                        {"task_prompt", g.task_prompt},
                        {"rollouts", g.rollouts}};
    if (g.ground_truth_text) j["ground_truth_text"] = *g.ground_truth_text;
    return j;
}

// ---------------------------------------------------------------------------
// Scoring

struct RolloutScore {
    ParsedResponse parsed;
    RewardBreakdown breakdown;
    std::string judge_status = "off";  // off | skipped | ok | protocol_error | transport_error | invalid_request
    std::optional<int> judge_score;
    std::string judge_error;
    bool rationale_over_limit = false;
};

struct GroupScore {
    std::string prompt_id;
    std::vector<RolloutScore> rollouts;
    std::vector<double> advantages;
};

struct BatchTiming {
    double parse_ms = 0.0;
    double judge_ms = 0.0;
    double aggregate_ms = 0.0;
    double total_ms = 0.0;
};

struct ScoreBatchResult {
    std::vector<GroupScore> groups;
    RewardConfig config;
    JudgeMode judge_mode = JudgeMode::Off;
    std::size_t judge_calls = 0;
    std::size_t judge_requests = 0;
    BatchTiming timing;
};

inline nlohmann::json rollout_to_json(const RolloutScore& r) {
    const auto& b = r.breakdown;
    nlohmann::json judge = {{"status", r.judge_status}};
    if (r.judge_score) judge["score"] = *r.judge_score;
    if (!r.judge_error.empty()) judge["error"] = r.judge_error;
    if (r.judge_status == "ok") judge["rationale_over_limit"] = r.rationale_over_limit;
    return {{"r_acc", b.r_acc},
            {"r_format", b.r_format},
            {"r_bbox_format", b.r_bbox_format},
            {"r_precision", b.r_precision},
            {"r_recall", b.r_recall},
            {"r_ctr", b.r_ctr},
            {"total", b.total},
            {"answer_choice", r.parsed.answer_choice ? nlohmann::json(std::string(1, to_char(*r.parsed.answer_choice)))
                                                     : nlohmann::json(nullptr)},
            {"num_clue_boxes", r.parsed.clue_boxes.size()},
            {"judge", judge}};
}

inline nlohmann::json group_score_to_json(const GroupScore& g) {
    nlohmann::json rollouts = nlohmann::json::array();
    for (const auto& r : g.rollouts) rollouts.push_back(rollout_to_json(r));
    return {{"prompt_id", g.prompt_id}, {"rollouts", rollouts}, {"advantages", g.advantages}};
}

/// Full response body. `timing` is the only non-deterministic member.
inline nlohmann::json score_result_to_json(const ScoreBatchResult& r) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : r.groups) groups.push_back(group_score_to_json(g));
    return {{"groups", groups},
            {"config", reward_config_to_json(r.config)},
            {"judge", {{"mode", std::string(to_string(r.judge_mode))}, {"calls", r.judge_calls}, {"requests", r.judge_requests}}},
            {"timing",
             {{"parse_ms", r.timing.parse_ms},
              {"judge_ms", r.timing.judge_ms},
              {"aggregate_ms", r.timing.aggregate_ms},
              {"total_ms", r.timing.total_ms}}}};
}

/// Batch reward computation shared by the HTTP service and the CLI. Immutable
/// after construction; score() may be called concurrently.
class Scorer {
public:
    /// `remote` may be null; requests asking for the remote judge are then rejected.
    explicit Scorer(ServiceConfig cfg, std::shared_ptr<const JudgeBackend> remote = nullptr)
        : cfg_(std::move(cfg)), mock_(std::make_shared<MockJudge>(cfg_.mock_seed)), remote_(std::move(remote)) {
        cfg_.reward.validate();
        if (!cfg_.template_path.empty()) template_ = load_judge_template(cfg_.template_path);
        else template_ = std::string(kJudgeTemplate);
    }

    const ServiceConfig& config() const noexcept { return cfg_; }

    ScoreBatchResult score(const ScoreBatchRequest& req) const {
        using clock = std::chrono::steady_clock;
        const auto t0 = clock::now();
        auto ms_since = [](clock::time_point a) {
            return std::chrono::duration<double, std::milli>(clock::now() - a).count();
        };

        ScoreBatchResult result;
        result.judge_mode = req.judge_mode.value_or(cfg_.judge_mode);
        try {
            result.config = apply_reward_overrides(cfg_.reward, req.config_overrides, "config");
            result.config.validate();
        } catch (const ConfigError& e) {
            throw ValidationError("config", e.what());
        }
        const RewardConfig& rc = result.config;

        const JudgeBackend* backend = nullptr;
        if (result.judge_mode == JudgeMode::Mock) backend = mock_.get();
        if (result.judge_mode == JudgeMode::Remote) {
            if (!remote_) throw ValidationError("judge_mode", "remote judge is not configured on this server");
            backend = remote_.get();
        }
        if (backend) {
            for (std::size_t g = 0; g < req.groups.size(); ++g)
                if (req.groups[g].task_prompt.empty())
                    throw ValidationError("groups[" + std::to_string(g) + "].task_prompt", "required when the judge is on");
        }

        // Flatten so rollouts from every group share one worker pool.
        struct Slot {
            std::size_t group;
            std::size_t index;
        };
        std::vector<Slot> slots;
        result.groups.resize(req.groups.size());
        for (std::size_t g = 0; g < req.groups.size(); ++g) {
            result.groups[g].prompt_id = req.groups[g].prompt_id;
            result.groups[g].rollouts.resize(req.groups[g].rollouts.size());
            for (std::size_t i = 0; i < req.groups[g].rollouts.size(); ++i) slots.push_back({g, i});
        }

        parallel_for(slots.size(), cfg_.workers, [&](std::size_t s) {
            const auto [g, i] = slots[s];
            auto& out = result.groups[g].rollouts[i];
            out.parsed = parse_reasoning_response(req.groups[g].rollouts[i]);
            out.breakdown = score_without_ctr(out.parsed, req.groups[g].ground_truth, rc);
            out.judge_status = backend ? "skipped" : "off";
        });
        result.timing.parse_ms = ms_since(t0);

        const auto t_judge = clock::now();
        if (backend) {
            // Only correct answers can earn CTR, so only they are sent; identical
            // (prompt, response, truth) triples share one call.
            std::map<JudgeRequest, std::size_t> unique;
            std::vector<JudgeRequest> calls;
            std::vector<std::pair<Slot, std::size_t>> wanted;
            for (const auto& slot : slots) {
                const auto& out = result.groups[slot.group].rollouts[slot.index];
                if (out.breakdown.r_acc != 1.0) continue;
                const auto& grp = req.groups[slot.group];
                JudgeRequest jr{grp.task_prompt, grp.rollouts[slot.index], grp.judge_ground_truth()};
                auto [it, inserted] = unique.emplace(jr, calls.size());
                if (inserted) calls.push_back(std::move(jr));
                wanted.emplace_back(slot, it->second);
            }
            JudgeBatchOptions opts;
            opts.max_in_flight = cfg_.judge_concurrency;
            opts.retries = cfg_.judge_retries;
            opts.prompt_template = template_;
            const auto outcomes = judge_batch(calls, *backend, opts);
            result.judge_calls = calls.size();
            result.judge_requests = wanted.size();
            for (const auto& [slot, idx] : wanted) {
                auto& out = result.groups[slot.group].rollouts[slot.index];
                const auto& o = outcomes[idx];
                out.judge_status = std::string(to_string(o.status));
                out.judge_error = o.error;
                if (o.verdict) {
                    out.judge_score = o.verdict->score;
                    out.rationale_over_limit = o.verdict->rationale_over_limit;
                }
            }
        }
        result.timing.judge_ms = ms_since(t_judge);

        const auto t_agg = clock::now();
        for (auto& grp : result.groups) {
            std::vector<double> totals;
            for (auto& r : grp.rollouts) {
                const auto ctr = ctr_reward(r.judge_score, r.breakdown.r_acc == 1.0, rc);
                if (ctr.error) {
                    r.judge_status = "protocol_error";
                    r.judge_error = *ctr.error;
                }
                r.breakdown.r_ctr = ctr.value;
                final_reward(r.breakdown, rc);
                totals.push_back(r.breakdown.total);
            }
            grp.advantages = group_advantages(totals, rc.group_eps);
        }
        result.timing.aggregate_ms = ms_since(t_agg);
        result.timing.total_ms = ms_since(t0);
        return result;
    }

private:
    ServiceConfig cfg_;
    std::shared_ptr<const JudgeBackend> mock_;
    std::shared_ptr<const JudgeBackend> remote_;
    std::string template_;
};

/// Remote backend from config, or null when no base URL is configured.
inline std::shared_ptr<const JudgeBackend> make_remote_judge(const ServiceConfig& cfg) {
    if (cfg.remote.base_url.empty()) return nullptr;
    return std::make_shared<RemoteJudge>(cfg.remote);
}

/// 64-bit FNV-1a, used for audit-log fingerprints.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace vgreward
