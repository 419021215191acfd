// Copyright (C) 2026 vgreward contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "vgreward/errors.hpp"
#include "vgreward/scoring.hpp"

namespace vgreward {

/// HTTP front-end over Scorer:
///   POST /v1/score   ScoreBatchRequest -> ScoreBatchResponse
///   GET  /v1/health  {"status": "ok"}
///   GET  /v1/config  effective server defaults (secrets redacted)
/// Errors are JSON bodies {"error": message, "path": field path}.
class ScoringServer {
public:
    explicit ScoringServer(ServiceConfig cfg, std::shared_ptr<const JudgeBackend> remote = nullptr)
        : scorer_(cfg, remote ? std::move(remote) : make_remote_judge(cfg)) {
        const std::size_t threads = std::max<std::size_t>(scorer_.config().workers, 2);
        server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
        server_.set_payload_max_length(64u << 20);
        // SO_REUSEADDR without SO_REUSEPORT, so binding a busy port fails.
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });

        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
        server_.Get("/v1/config", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(scorer_.config().to_json().dump(), "application/json");
        });
        server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) { handle_score(req, res); });
    }

    ScoringServer(const ScoringServer&) = delete;
    ScoringServer& operator=(const ScoringServer&) = delete;

    /// Binds to host:port; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }

    /// Serves until stop(); call after a successful bind().
    bool listen_after_bind() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    bool is_running() const { return server_.is_running(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

    const Scorer& scorer() const noexcept { return scorer_; }

    /// Handles one /v1/score body; exposed so tests and the CLI can share the exact code path.
    /// Returns the HTTP status and fills `body`.
    int score_body(const std::string& request_body, std::string& body) const {
        const auto j = nlohmann::json::parse(request_body, nullptr, false);
        if (j.is_discarded()) return error(body, 400, "request body is not valid JSON", "");
        try {
            const auto req = score_request_from_json(j, scorer_.config().batch_cap);
            body = score_result_to_json(scorer_.score(req)).dump();
            return 200;
        } catch (const ValidationError& e) {
            return error(body, 400, e.what(), e.path());
        } catch (const CapacityError& e) {
            return error(body, 413, e.what(), "groups");
        } catch (const ConfigError& e) {
            return error(body, 400, e.what(), "config");
        } catch (const std::exception& e) {
            return error(body, 500, e.what(), "");
        }
    }

private:
    static int error(std::string& body, int status, const std::string& message, const std::string& path) {
        body = nlohmann::json{{"error", message}, {"path", path}}.dump();
        return status;
    }

    void handle_score(const httplib::Request& req, httplib::Response& res) {
        std::string body;
        res.status = score_body(req.body, body);
        if (!scorer_.config().audit_log.empty()) audit(req.body, res.status, body);
        res.set_content(body, "application/json");
    }

    // Append-only fingerprint log; response hash ignores the timing member.
    void audit(const std::string& request_body, int status, const std::string& response_body) {
        std::string stable = response_body;
        if (status == 200) {
            auto j = nlohmann::json::parse(response_body, nullptr, false);
            if (!j.is_discarded()) {
                j.erase("timing");
                stable = j.dump();
            }
        }
        char req_hex[17], res_hex[17];
        std::snprintf(req_hex, sizeof req_hex, "%016llx", static_cast<unsigned long long>(fnv1a64(request_body)));
        std::snprintf(res_hex, sizeof res_hex, "%016llx", static_cast<unsigned long long>(fnv1a64(stable)));
        const nlohmann::json line = {{"request_fnv1a64", req_hex}, {"response_fnv1a64", res_hex}, {"status", status}};
        std::lock_guard lock(audit_mu_);
        std::ofstream out(scorer_.config().audit_log, std::ios::app);
        out << line.dump() << "\n";
    }

    Scorer scorer_;
    httplib::Server server_;
    std::mutex audit_mu_;
};

}  // namespace vgreward
