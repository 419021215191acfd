// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front-end: score, eval, concat, validate, serve, judge.
// Exit codes: 0 success, 1 validation/runtime failure, 2 usage error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef VGREWARD_WITH_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#endif

#include "vgreward/vgreward.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string config_path;
    std::optional<double> tau;
    std::optional<double> alpha;
    std::string judge_mode;
    std::string stage;
    bool force = false;
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--config", o.config_path, "JSON config file (server/reward defaults)")->check(CLI::ExistingFile);
    app->add_option("--tau", o.tau, "IoU threshold in (0,1); overrides --stage");
    app->add_option("--alpha", o.alpha, "weight of the accuracy reward in [0,1]");
    app->add_option("--judge-mode", o.judge_mode, "off | mock | remote")->check(CLI::IsMember({"off", "mock", "remote"}));
    app->add_option("--stage", o.stage, "perception (tau 0.5) | reasoning (tau 0.3)")
        ->check(CLI::IsMember({"perception", "reasoning"}));
    app->add_flag("--force", o.force, "overwrite existing output files");
}

// Config file, then --stage, then explicit flags.
vgreward::ServiceConfig resolve_config(const CommonOptions& o) {
    vgreward::ServiceConfig cfg;
    try {
        cfg = o.config_path.empty() ? vgreward::service_config_from_json(json::object())
                                    : vgreward::load_service_config(o.config_path);
    } catch (const vgreward::ConfigError& e) {
        throw UsageError(e.what());
    }
    if (o.stage == "perception") cfg.reward.tau = vgreward::kPerceptionTau;
    if (o.stage == "reasoning") cfg.reward.tau = vgreward::kReasoningTau;
    if (o.tau) cfg.reward.tau = *o.tau;
    if (o.alpha) cfg.reward.alpha = *o.alpha;
    if (!o.judge_mode.empty()) cfg.judge_mode = *vgreward::judge_mode_from_string(o.judge_mode);
    try {
        cfg.reward.validate();
    } catch (const vgreward::ConfigError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vgreward::ValidationError(path, "cannot open input file");
    return in;
}

// Writes to `path` ("-" is stdout). Refuses to replace an existing file without --force.
class Output {
public:
    Output(const std::string& path, bool force) {
        if (path == "-") return;
        if (fs::exists(path) && !force) throw UsageError("refusing to overwrite " + path + " (use --force)");
        file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
        if (!*file_) throw vgreward::ValidationError(path, "cannot open output file");
    }
    std::ostream& stream() { return file_ ? *file_ : std::cout; }

private:
    std::unique_ptr<std::ofstream> file_;
};

void check_output_free(const std::string& path, bool force) {
    if (path != "-" && !path.empty() && fs::exists(path) && !force)
        throw UsageError("refusing to overwrite " + path + " (use --force)");
}

// ---------------------------------------------------------------------------

int run_score(const CommonOptions& common, const std::string& input, const std::string& output) {
    auto cfg = resolve_config(common);
    check_output_free(output, common.force);

    auto in = open_input(input);
    std::vector<vgreward::GroupRequest> groups;
    std::string line;
    std::size_t line_no = 0;
    bool bad = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (vgreward::detail::is_blank(line)) continue;
        const auto j = json::parse(line, nullptr, false);
        try {
            if (j.is_discarded()) throw vgreward::ValidationError("", "not valid JSON");
            groups.push_back(vgreward::group_from_json(j, "group"));
        } catch (const vgreward::ValidationError& e) {
            std::cerr << input << ":" << line_no << ": " << e.what() << "\n";
            bad = true;
        }
    }
    if (bad) return kExitFailure;

    const vgreward::Scorer scorer(cfg, cfg.judge_mode == vgreward::JudgeMode::Remote ? vgreward::make_remote_judge(cfg) : nullptr);
    Output out(output, common.force);

    // Chunks respect the batch cap; results do not depend on chunking.
    std::size_t begin = 0;
    while (begin < groups.size()) {
        vgreward::ScoreBatchRequest req;
        req.judge_mode = cfg.judge_mode;
        std::size_t rollouts = 0;
        while (begin < groups.size() &&
               (req.groups.empty() || rollouts + groups[begin].rollouts.size() <= cfg.batch_cap)) {
            rollouts += groups[begin].rollouts.size();
            req.groups.push_back(groups[begin++]);
        }
        const auto result = scorer.score(req);
        for (const auto& g : result.groups) out.stream() << vgreward::group_score_to_json(g).dump() << "\n";
    }
    return kExitOk;
}

int run_eval(const CommonOptions& common, const std::string& predictions, const std::string& records,
             const std::string& output, const std::string& direction) {
    CommonOptions o = common;
    if (o.stage.empty() && !o.tau) o.stage = "perception";
    const auto cfg = resolve_config(o);
    check_output_free(output, common.force);

    auto pin = open_input(predictions);
    auto rin = open_input(records);
    const auto preds = vgreward::read_predictions(pin);
    const auto recs = vgreward::read_records(rin);
    vgreward::DatasetOptions dopts;
    dopts.direction = *vgreward::direction_from_string(direction);
    const auto report = vgreward::evaluate_predictions(preds, recs, cfg.reward.tau, dopts);

    std::cout << report.to_text();
    if (!output.empty()) {
        Output out(output, common.force);
        out.stream() << report.to_json().dump(2) << "\n";
    }
    return kExitOk;
}

int run_validate(const std::string& records, const std::string& report_path, const std::string& direction,
                 int max_canvas, bool force) {
    check_output_free(report_path, force);
    auto in = open_input(records);
    vgreward::DatasetOptions opts;
    opts.direction = *vgreward::direction_from_string(direction);
    opts.max_canvas_side = max_canvas;
    const auto report = vgreward::validate_dataset(in, opts);

    for (const auto& v : report.records) {
        if (v.ok) continue;
        std::cerr << records << ":" << v.line << ": " << (v.record_id.empty() ? "<no id>" : v.record_id) << ": ";
        for (std::size_t i = 0; i < v.reasons.size(); ++i) std::cerr << (i ? "; " : "") << v.reasons[i];
        std::cerr << "\n";
    }
    std::cout << report.to_text();
    if (!report_path.empty()) {
        Output out(report_path, force);
        out.stream() << report.to_json().dump(2) << "\n";
    }
    return report.failed == 0 ? kExitOk : kExitFailure;
}

#ifdef VGREWARD_WITH_OPENCV
void write_composite(const vgreward::BenchmarkRecord& r, const vgreward::ConcatLayout& layout, const fs::path& image_root,
                     const fs::path& target) {
    cv::Mat canvas = cv::Mat::zeros(layout.canvas.height, layout.canvas.width, CV_8UC3);
    for (std::size_t i = 0; i < r.images.size(); ++i) {
        const fs::path src = fs::path(r.images[i].path).is_absolute() ? fs::path(r.images[i].path) : image_root / r.images[i].path;
        cv::Mat img = cv::imread(src.string(), cv::IMREAD_COLOR);
        if (img.empty()) throw vgreward::ValidationError("images[" + std::to_string(i) + "]", "cannot read " + src.string());
        if (img.cols != r.images[i].size.width || img.rows != r.images[i].size.height)
            throw vgreward::ValidationError("images[" + std::to_string(i) + "]",
                                            "actual size " + std::to_string(img.cols) + "x" + std::to_string(img.rows) +
                                                " differs from the record");
        img.copyTo(canvas(cv::Rect(layout.offsets[i].dx, layout.offsets[i].dy, img.cols, img.rows)));
    }
    if (!cv::imwrite(target.string(), canvas)) throw vgreward::ValidationError(target.string(), "cannot write composite");
}
#endif

int run_concat(const std::string& records, const std::string& output_dir, const std::string& image_root,
               const std::string& direction, int max_canvas, bool layout_only, bool force) {
#ifndef VGREWARD_WITH_OPENCV
    if (!layout_only) throw UsageError("built without OpenCV; only --layout-only is available");
#endif
    auto in = open_input(records);
    const auto recs = vgreward::read_records(in);
    fs::create_directories(output_dir);
    const auto dir = *vgreward::direction_from_string(direction);

    int failures = 0;
    for (std::size_t n = 0; n < recs.size(); ++n) {
        const auto& r = recs[n];
        const fs::path sidecar = fs::path(output_dir) / (r.record_id + ".layout.json");
        const fs::path composite = fs::path(output_dir) / (r.record_id + ".png");
        try {
            if (!force && (fs::exists(sidecar) || (!layout_only && fs::exists(composite))))
                throw UsageError("refusing to overwrite outputs of record " + r.record_id + " (use --force)");
            const auto sizes = r.image_sizes();
            const auto layout = vgreward::plan_concat(sizes, dir, max_canvas);
            const auto remapped = vgreward::remap_boxes(layout, r.gt_boxes, r.record_id);
#ifdef VGREWARD_WITH_OPENCV
            if (!layout_only) write_composite(r, layout, image_root, composite);
#else
            (void)image_root;
#endif
            json offsets = json::array();
            for (const auto& o : layout.offsets) offsets.push_back({o.dx, o.dy});
            json paths = json::array();
            for (const auto& im : r.images) paths.push_back(im.path);
            const json side = {{"record_id", r.record_id},
                               {"direction", std::string(vgreward::to_string(layout.direction))},
                               {"canvas", {layout.canvas.width, layout.canvas.height}},
                               {"offsets", offsets},
                               {"images", paths},
                               {"composite", layout_only ? json(nullptr) : json(composite.filename().string())},
                               {"gt_boxes", vgreward::boxes_to_json(remapped)}};
            std::ofstream(sidecar) << side.dump(2) << "\n";
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            std::cerr << records << ": record " << (n + 1) << " (" << r.record_id << "): " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? kExitOk : kExitFailure;
}

vgreward::ScoringServer* g_server = nullptr;

int run_serve(const CommonOptions& common, const std::string& host_flag, std::optional<int> port_flag) {
    auto cfg = resolve_config(common);
    if (!host_flag.empty()) cfg.host = host_flag;
    if (port_flag) cfg.port = *port_flag;

    vgreward::ScoringServer server(cfg);
    const int port = server.bind(cfg.host, cfg.port);
    if (port < 0) {
        std::cerr << "cannot bind " << cfg.host << ":" << cfg.port << " (port in use?)\n";
        return kExitFailure;
    }
    g_server = &server;
    std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
    std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
    std::cerr << "vgreward scoring service listening on " << cfg.host << ":" << port << " (judge "
              << vgreward::to_string(cfg.judge_mode) << ")\n";
    server.listen_after_bind();
    g_server = nullptr;
    return kExitOk;
}

int run_judge(const CommonOptions& common, const std::string& input, const std::string& output, bool render_only) {
    CommonOptions o = common;
    if (o.judge_mode.empty()) o.judge_mode = "mock";
    const auto cfg = resolve_config(o);
    check_output_free(output, common.force);

    const std::string tmpl = cfg.template_path.empty() ? std::string(vgreward::kJudgeTemplate)
                                                       : vgreward::load_judge_template(cfg.template_path);
    auto in = open_input(input);
    std::vector<vgreward::JudgeRequest> requests;
    std::string line;
    std::size_t line_no = 0;
    bool bad = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (vgreward::detail::is_blank(line)) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            std::cerr << input << ":" << line_no << ": expected a JSON object\n";
            bad = true;
            continue;
        }
        requests.push_back({j.value("prompt_str", ""), j.value("response_str", ""), j.value("ground_truth", "")});
    }
    if (bad) return kExitFailure;

    Output out(output, common.force);
    if (render_only) {
        for (std::size_t i = 0; i < requests.size(); ++i) {
            try {
                out.stream() << json{{"index", i}, {"prompt", vgreward::render_judge_prompt(requests[i], tmpl)}}.dump() << "\n";
            } catch (const vgreward::ValidationError& e) {
                out.stream() << json{{"index", i}, {"error", e.what()}}.dump() << "\n";
            }
        }
        return kExitOk;
    }

    std::shared_ptr<const vgreward::JudgeBackend> backend;
    if (cfg.judge_mode == vgreward::JudgeMode::Remote) {
        backend = vgreward::make_remote_judge(cfg);
        if (!backend) throw UsageError("remote judge needs JUDGE_BASE_URL or judge.base_url");
    } else {
        backend = std::make_shared<vgreward::MockJudge>(cfg.mock_seed);
    }
    vgreward::JudgeBatchOptions opts;
    opts.max_in_flight = cfg.judge_concurrency;
    opts.retries = cfg.judge_retries;
    opts.prompt_template = tmpl;
    const auto outcomes = vgreward::judge_batch(requests, *backend, opts);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& oc = outcomes[i];
        json j = {{"index", i}, {"status", std::string(vgreward::to_string(oc.status))}, {"attempts", oc.attempts}};
        if (oc.verdict) {
            j["score"] = oc.verdict->score;
            j["rationale"] = oc.verdict->rationale;
            j["rationale_over_limit"] = oc.verdict->rationale_over_limit;
        } else {
            j["error"] = oc.error;
            j["raw"] = oc.raw;
        }
        out.stream() << j.dump() << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grounded-reasoning reward engine: rollout scoring, evaluation and dataset tools"};
    app.require_subcommand(1);

    CommonOptions common;
    std::string input, output, predictions, records, report, output_dir, image_root, host;
    std::string direction = "horizontal";
    int max_canvas = vgreward::kDefaultMaxCanvasSide;
    std::optional<int> port;
    bool layout_only = false, render_only = false;

    auto* score = app.add_subcommand("score", "score rollout groups (line-delimited JSON) into reward breakdowns");
    add_common(score, common);
    score->add_option("-i,--input", input, "rollout groups, one JSON object per line")->required();
    score->add_option("-o,--output", output, "breakdown output, one group per line ('-' for stdout)")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a prediction file against benchmark records");
    add_common(eval, common);
    eval->add_option("-p,--predictions", predictions, "predictions {record_id, choice?, boxes?} per line")->required();
    eval->add_option("-r,--records", records, "benchmark records, one per line")->required();
    eval->add_option("-o,--output", output, "write the JSON report here");
    eval->add_option("--direction", direction, "concatenation direction of the records")
        ->check(CLI::IsMember({"horizontal", "vertical"}));

    auto* concat = app.add_subcommand("concat", "write composite images and layout sidecars per record");
    add_common(concat, common);
    concat->add_option("-r,--records", records, "benchmark records, one per line")->required();
    concat->add_option("-o,--output-dir", output_dir, "output directory")->required();
    concat->add_option("--image-root", image_root, "base directory for relative image paths");
    concat->add_option("--direction", direction)->check(CLI::IsMember({"horizontal", "vertical"}));
    concat->add_option("--max-canvas", max_canvas, "maximum canvas side in pixels");
    concat->add_flag("--layout-only", layout_only, "write sidecars only, no pixels");

    auto* validate = app.add_subcommand("validate", "validate benchmark records");
    add_common(validate, common);
    validate->add_option("-r,--records", records, "benchmark records, one per line")->required();
    validate->add_option("--report", report, "write the JSON report here");
    validate->add_option("--direction", direction)->check(CLI::IsMember({"horizontal", "vertical"}));
    validate->add_option("--max-canvas", max_canvas, "maximum canvas side in pixels");

    auto* serve = app.add_subcommand("serve", "run the HTTP scoring service");
    add_common(serve, common);
    serve->add_option("--port", port, "listen port (0 picks a free one)");
    serve->add_option("--host", host, "listen address");

    auto* judge = app.add_subcommand("judge", "render judge prompts and run the mock or remote judge");
    add_common(judge, common);
    judge->add_option("-i,--input", input, "{prompt_str, response_str, ground_truth} per line")->required();
    judge->add_option("-o,--output", output, "verdicts, one per line ('-' for stdout)")->required();
    judge->add_flag("--render-only", render_only, "emit rendered prompts instead of calling the judge");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*score) return run_score(common, input, output);
        if (*eval) return run_eval(common, predictions, records, output, direction);
        if (*concat) return run_concat(records, output_dir, image_root, direction, max_canvas, layout_only, common.force);
        if (*validate) return run_validate(records, report, direction, max_canvas, common.force);
        if (*serve) return run_serve(common, host, port);
        if (*judge) return run_judge(common, input, output, render_only);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
