// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
// Runs fully offline (mock judge or scripted backends only).

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "parser_corpus.hpp"
#include "service_harness.hpp"
#include "vgreward/vgreward.hpp"

namespace {

using namespace vgreward;
using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Each check returns an empty string on success, otherwise the failure detail.
using Check = std::function<std::string()>;

std::string hungarian_exact() {
    std::mt19937_64 rng(20261016);
    const auto t0 = clock_type::now();
    for (int t = 0; t < 1000; ++t) {
        const auto p = oracle::random_box_set(rng, 7);
        const auto g = (t % 3 == 0) ? oracle::random_box_set(rng, 7) : oracle::clustered_box_set(rng, 7, p);
        const auto m = hungarian_match(p, g);
        const auto bf = oracle::brute_force_min_cost(p, g);
        if (m.total_cost() != bf.cost) {
            std::ostringstream s;
            s.precision(17);
            s << "instance " << t << ": hungarian " << m.total_cost() << " vs brute force " << bf.cost;
            return s.str();
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 5.0) return "took " + std::to_string(secs) + " s";
    return {};
}

std::string grounding_oracle() {
    std::mt19937_64 rng(7001);
    for (int t = 0; t < 1000; ++t) {
        const auto p = oracle::random_box_set(rng, 6);
        const auto g = oracle::clustered_box_set(rng, 6, p);
        const double tau = (t % 2) ? kPerceptionTau : kReasoningTau;
        const auto got = grounding_rewards(p, g, tau);
        const auto [prec, rec] = oracle::brute_force_grounding(p, g, tau);
        if (std::abs(got.precision - prec) > 1e-9 || std::abs(got.recall - rec) > 1e-9)
            return "instance " + std::to_string(t) + " differs from the exhaustive oracle";
    }
    return {};
}

std::string iou_rational() {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::int64_t> c(0, 1000);
    auto gen = [&] {
        std::int64_t x1 = c(rng), x2 = c(rng), y1 = c(rng), y2 = c(rng);
        if (x1 == x2) ++x2;
        if (y1 == y2) ++y2;
        return oracle::IntBox{std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    };
    for (int i = 0; i < 10000; ++i) {
        const auto a = gen();
        // Half the pairs are perturbations of `a` so that overlaps are common.
        oracle::IntBox b = gen();
        if (i % 2) {
            const std::int64_t dx = c(rng) % 20, dy = c(rng) % 20;
            b = {a.x1 + dx, a.y1 + dy, a.x2 + dx + c(rng) % 20, a.y2 + dy + c(rng) % 20};
        }
        const BBox fa{double(a.x1), double(a.y1), double(a.x2), double(a.y2)};
        const BBox fb{double(b.x1), double(b.y1), double(b.x2), double(b.y2)};
        if (iou(fa, fb) != oracle::nearest_double(oracle::iou_rational(a, b)))
            return "pair " + std::to_string(i) + " differs from the rational oracle";
    }
    return {};
}

std::string weighted_total() {
    RewardBreakdown b{1, 1, 1, 1, 1, 0, 0};
    RewardConfig cfg;  // alpha 0.5, ctr_weight 0.5
    b.r_ctr = ctr_reward(5, true, cfg).value;
    const double total = final_reward(b, cfg);
    if (total != 2.75) return "total " + std::to_string(total) + " != 2.75";

    // Same value through the parse and score path.
    const ScoringServer server(ServiceConfig{});
    nlohmann::json req = {
        {"judge_mode", "mock"},
        {"groups",
         {{{"prompt_id", "p"},
           {"task_prompt", "Which logo?"},
           {"ground_truth", {{"answer", "B"}, {"gt_boxes", {{10, 20, 50, 60}}}}},
           {"rollouts", {"<think>B logo at [10,20,50,60]</think><answer>B</answer>", "<answer>A</answer>"}}}}}};
    std::string body;
    if (server.score_body(req.dump(), body) != 200) return "service rejected the request: " + body;
    const double via_service = nlohmann::json::parse(body)["groups"][0]["rollouts"][0]["total"].get<double>();
    if (via_service != 2.75) return "service total " + std::to_string(via_service) + " != 2.75";
    return {};
}

// Returns a perfect score for every prompt, so any leaked CTR would show up.
class AlwaysFive final : public JudgeBackend {
public:
    std::string complete(const std::string&) const override { return "<think>excellent</think><answer>5</answer>"; }
};

std::string ctr_gating() {
    std::mt19937_64 rng(5150);
    std::uniform_int_distribution<int> choice(0, 3), coord(0, 300), shape(0, 3), score(-2, 8);
    std::uniform_real_distribution<double> weight(0.0, 2.0);
    nlohmann::json groups = nlohmann::json::array();
    for (int g = 0; g < 125; ++g) {
        const char truth = static_cast<char>('A' + choice(rng));
        nlohmann::json rollouts = nlohmann::json::array();
        for (int r = 0; r < 8; ++r) {
            char said = static_cast<char>('A' + choice(rng));
            if (said == truth) said = static_cast<char>('A' + (said - 'A' + 1) % 4);
            const int x = coord(rng), y = coord(rng);
            std::ostringstream text;
            switch (shape(rng)) {
                case 0: text << "<think>[" << x << "," << y << "," << x + 40 << "," << y + 40 << "]</think><answer>" << said << "</answer>"; break;
                case 1: text << "<answer>" << said << "</answer>"; break;
                case 2: text << "<think>no idea</think>"; break;
                default: text << "<think>[" << x << "," << y << "," << x + 9 << "," << y + 9 << "] " << truth << "</think><answer>" << said << "</answer> ok"; break;
            }
            rollouts.push_back(text.str());
        }
        groups.push_back({{"prompt_id", "g" + std::to_string(g)},
                          {"task_prompt", "Which logo?"},
                          {"ground_truth", {{"answer", std::string(1, truth)}, {"gt_boxes", {{10, 10, 60, 60}}}}},
                          {"rollouts", rollouts}});
    }
    const ScoringServer server(ServiceConfig{}, std::make_shared<AlwaysFive>());
    for (const char* mode : {"mock", "remote"}) {
        std::string body;
        if (server.score_body(nlohmann::json{{"groups", groups}, {"judge_mode", mode}}.dump(), body) != 200)
            return std::string("service rejected the ") + mode + " batch: " + body;
        const auto scored = nlohmann::json::parse(body);
        std::size_t n = 0;
        for (const auto& g : scored["groups"])
            for (const auto& r : g["rollouts"]) {
                ++n;
                if (r["r_acc"] != 0.0) return "generated rollout unexpectedly correct";
                if (r["r_ctr"] != 0.0) return std::string("non-zero r_ctr for an incorrect answer (") + mode + ")";
            }
        if (n != 1000) return "expected 1000 rollouts, scored " + std::to_string(n);
    }
    for (int i = 0; i < 1000; ++i) {
        RewardConfig cfg;
        cfg.ctr_weight = weight(rng);
        if (ctr_reward(score(rng), false, cfg).value != 0.0) return "ctr_reward non-zero for an incorrect answer";
    }
    return {};
}

std::string delta_strictness() {
    for (const double tau : {0.5, 0.3}) {
        // Integer box pairs whose IoU is exactly tau as a double.
        std::size_t boundary_pairs = 0;
        for (int w = 1; w <= 40; ++w)
            for (int h = 1; h <= 10; ++h) {
                const BBox gt{0, 0, 40, 10};
                const BBox pred{0, 0, double(w), double(h)};
                const double v = iou(pred, gt);
                if (v != tau) continue;
                ++boundary_pairs;
                const auto m = hungarian_match(BoxSet{pred}, BoxSet{gt});
                if (match_deltas(m, tau)[0] != 0) return "IoU == tau counted as a match at tau " + std::to_string(tau);
                const auto g = grounding_rewards(BoxSet{pred}, BoxSet{gt}, tau);
                if (g.precision != 0.0 || g.recall != 0.0) return "IoU == tau rewarded at tau " + std::to_string(tau);
                if (match_deltas(m, std::nextafter(tau, 0.0))[0] != 1) return "IoU just above tau not matched";
            }
        if (boundary_pairs == 0) return "no boundary pairs found for tau " + std::to_string(tau);
    }
    return {};
}

std::pair<std::vector<BoxSet>, std::vector<BoxSet>> synthetic_detection_set(std::mt19937_64& rng) {
    std::vector<BoxSet> preds, gts;
    std::normal_distribution<double> jitter(0.0, 4.0);
    std::uniform_int_distribution<int> extra(0, 3);
    for (int i = 0; i < 20; ++i) {
        auto g = oracle::random_box_set(rng, 5, 300.0);
        BoxSet p;
        for (const auto& b : g) {
            if (rng() % 4 == 0) continue;
            const double x1 = std::max(0.0, b.x1 + jitter(rng)), y1 = std::max(0.0, b.y1 + jitter(rng));
            p.push_back({x1, y1, std::max(x1 + 1, b.x2 + jitter(rng)), std::max(y1 + 1, b.y2 + jitter(rng))});
        }
        for (int k = extra(rng); k > 0; --k) p.push_back(oracle::random_box(rng, 300.0));
        std::shuffle(p.begin(), p.end(), rng);
        preds.push_back(std::move(p));
        gts.push_back(std::move(g));
    }
    return {preds, gts};
}

std::string ap50_reference() {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const auto [preds, gts] = synthetic_detection_set(rng);
        const auto got = ap50(preds, gts), want = oracle::reference_ap50(preds, gts);
        if (got.has_value() != want.has_value()) return "trial " + std::to_string(trial) + ": definedness differs";
        if (got && std::abs(*got - *want) > 1e-6)
            return "trial " + std::to_string(trial) + ": " + std::to_string(*got) + " vs " + std::to_string(*want);
    }
    return {};
}

std::string parser_totality() {
    std::mt19937_64 rng(424242);
    std::uniform_int_distribution<int> byte(0, 255), len(0, 256), coin(0, 4);
    static constexpr std::string_view tokens[] = {"<think>", "</think>", "<answer>", "</answer>", "[", "]", ",", "1",
                                                  "[1,2,3,4]", "[0.5, 0.5, 9, 9]", "A", " ", "\n", "-", "."};
    for (int i = 0; i < 100000; ++i) {
        std::string s;
        for (int n = len(rng); n > 0; --n) {
            if (coin(rng) == 0) s.push_back(static_cast<char>(byte(rng)));
            else s += tokens[static_cast<std::size_t>(byte(rng)) % std::size(tokens)];
        }
        try {
            const auto p = parse_reasoning_response(s);
            if (p.any_valid_box != !p.clue_boxes.empty()) return "any_valid_box inconsistent on input " + std::to_string(i);
            for (const auto& b : p.clue_boxes)
                if (!b.is_valid()) return "invalid clue box on input " + std::to_string(i);
            (void)parse_detection_json(s);
        } catch (const std::exception& e) {
            return "input " + std::to_string(i) + " threw: " + e.what();
        } catch (...) {
            return "input " + std::to_string(i) + " threw a non-standard exception";
        }
    }
    for (const auto& c : corpus::kStructureCases) {
        const auto bits = structure_rewards(parse_reasoning_response(c.text));
        if (bits.format != c.format || bits.bbox_format != c.bbox_format)
            return "corpus case '" + std::string(c.name) + "' produced (" + std::to_string(int(bits.format)) + ", " +
                   std::to_string(int(bits.bbox_format)) + ")";
    }
    return {};
}

std::string concat_remap() {
    std::mt19937_64 rng(1600);
    std::uniform_int_distribution<int> count(1, 16), side(kMinImageSide, 256), nboxes(0, 6), dir(0, 1);
    for (int t = 0; t < 1000; ++t) {
        std::vector<ImageSize> sizes(static_cast<std::size_t>(count(rng)));
        for (auto& s : sizes) s = {side(rng), side(rng)};
        const auto direction = dir(rng) ? ConcatDirection::Vertical : ConcatDirection::Horizontal;
        const auto layout = plan_concat(sizes, direction);
        std::vector<BoxSet> per_image(sizes.size());
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            // Sub-pixel grid of 1/8: exactly representable before and after translation.
            std::uniform_int_distribution<int> gx(0, sizes[i].width * 8), gy(0, sizes[i].height * 8);
            for (int k = nboxes(rng); k > 0; --k) {
                int a = gx(rng), b = gx(rng), c = gy(rng), d = gy(rng);
                if (a == b || c == d) continue;
                if (a > b) std::swap(a, b);
                if (c > d) std::swap(c, d);
                per_image[i].push_back({a / 8.0, c / 8.0, b / 8.0, d / 8.0});
            }
        }
        const auto out = remap_boxes(layout, per_image);
        std::size_t base = 0;
        for (const auto& src : per_image) {
            for (std::size_t a = 0; a < src.size(); ++a) {
                if (!box_within(out[base + a], layout.canvas)) return "layout " + std::to_string(t) + ": box off canvas";
                for (std::size_t b = 0; b < src.size(); ++b)
                    if (iou(out[base + a], out[base + b]) != iou(src[a], src[b]))
                        return "layout " + std::to_string(t) + ": IoU changed by remapping";
            }
            base += src.size();
        }
    }
    return {};
}

std::string advantages() {
    for (std::size_t n : {2u, 8u, 16u})
        for (double v : {0.0, 1.0, 2.75})
            for (double a : group_advantages(std::vector<double>(n, v), 1e-6))
                if (a != 0.0) return "constant group produced a non-zero advantage";
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> reward(0.0, 3.5), shift(-10.0, 10.0);
    std::uniform_int_distribution<int> size(2, 32);
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> r(static_cast<std::size_t>(size(rng)));
        for (double& v : r) v = (i % 3 == 0) ? std::round(reward(rng) * 4) / 4 : reward(rng);
        const auto adv = group_advantages(r, 1e-6);
        const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
        if (std::abs(mean) > 1e-9) return "group " + std::to_string(i) + " not centred";
        const double c = shift(rng);
        auto shifted = r;
        for (double& v : shifted) v += c;
        const auto adv2 = group_advantages(shifted, 1e-6);
        for (std::size_t k = 0; k < adv.size(); ++k)
            if (std::abs(adv[k] - adv2[k]) > 1e-9) return "group " + std::to_string(i) + " not shift invariant";
    }
    return {};
}

std::string run_cli_score(const std::filesystem::path& out) {
    const std::string cmd = std::string(VGREWARD_CLI_PATH) + " score --force --judge-mode mock --stage reasoning -i " +
                            harness::fixture_path("score_groups.jsonl") + " -o " + out.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return "CLI score exited with status " + std::to_string(status);
    return {};
}

std::string service_parity() {
    harness::RunningServer srv(ServiceConfig{});
    auto cli = srv.client();
    const std::string req = harness::fixture_request().dump();
    const auto a = cli.Post("/v1/score", req, "application/json");
    const auto b = cli.Post("/v1/score", req, "application/json");
    if (!a || !b || a->status != 200 || b->status != 200) return "fixture request failed";
    if (harness::without_timing(a->body) != harness::without_timing(b->body)) return "responses differ beyond timing";

    const auto out = std::filesystem::temp_directory_path() / "vgreward_acceptance_scores.jsonl";
    if (auto err = run_cli_score(out); !err.empty()) return err;
    const auto cli_lines = harness::read_lines(out.string());
    const auto groups = nlohmann::json::parse(a->body)["groups"];
    if (cli_lines.size() != groups.size()) return "CLI and service group counts differ";
    for (std::size_t i = 0; i < cli_lines.size(); ++i)
        if (cli_lines[i] != groups[i].dump()) return "CLI output differs from service output in group " + std::to_string(i);

    const std::string big = harness::synthetic_request(128, 8, 2026).dump();
    const auto t0 = clock_type::now();
    const auto res = cli.Post("/v1/score", big, "application/json");
    const double secs = seconds_since(t0);
    if (!res || res->status != 200) return "1024-rollout request failed";
    if (nlohmann::json::parse(res->body)["judge"]["calls"] != 0) return "judge called with judge_mode off";
    if (secs >= 1.0) return "1024 rollouts took " + std::to_string(secs) + " s";
    return {};
}

}  // namespace

int main() {
    const std::pair<const char*, Check> checks[] = {
        {"hungarian matches brute-force minimum cost (1000 instances, <= 7 boxes, < 5 s)", hungarian_exact},
        {"grounding rewards match exhaustive-matching oracle (1000 instances, 1e-9)", grounding_oracle},
        {"iou equals exact rational oracle (10000 integer box pairs)", iou_rational},
        {"weighted total is exactly 2.75 for a perfect rollout with judge score 5", weighted_total},
        {"ctr is exactly 0 for 1000 incorrect rollouts", ctr_gating},
        {"iou equal to tau never matches (tau 0.5 and 0.3)", delta_strictness},
        {"ap50 matches 101-point reference on 20-image sets (1e-6)", ap50_reference},
        {"parser totality (100000 fuzz inputs) and 30-case corpus bits", parser_totality},
        {"concat remap preserves within-image IoU and stays on canvas (1000 layouts)", concat_remap},
        {"group advantages: constant -> 0, centred within 1e-9, shift invariant", advantages},
        {"service determinism, CLI parity, 1024 rollouts in < 1 s", service_parity},
    };

    int failed = 0;
    for (const auto& [name, check] : checks) {
        std::string detail;
        try {
            detail = check();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        if (detail.empty()) {
            std::cout << "PASS  " << name << "\n";
        } else {
            std::cout << "FAIL  " << name << ": " << detail << "\n";
            ++failed;
        }
    }
    std::cout << (std::size(checks) - static_cast<std::size_t>(failed)) << "/" << std::size(checks) << " criteria passed\n";
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
