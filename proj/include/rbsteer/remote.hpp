#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "rbsteer/errors.hpp"
#include "rbsteer/session.hpp"

namespace rbsteer {

struct RemoteConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::string model;
    std::string api_key;  // sent as a Bearer token when non-empty
    std::string completions_path = "/v1/chat/completions";
    std::string system_prompt =
        "Answer the question. Reason in steps separated by blank lines, and "
        "write </think> when the reasoning is complete.";
    double temperature = 0.7;
    int max_tokens = 512;
    int max_attempts = 3;           // total tries per request
    int retry_base_delay_ms = 200;  // doubled after each failed attempt
    int timeout_sec = 30;
    std::string end_marker = "</think>";
};

// Chat-completions client used as a steerable generator. Each call resumes
// the assistant turn with the forced prefix appended to everything generated
// so far, and asks the server to stop at the next segment boundary ("\n\n").
// Connection failures and 5xx answers are retried with exponential backoff;
// 4xx answers (wrong key, bad request) fail immediately.
class RemoteSession final : public GeneratorSession {
  public:
    RemoteSession(RemoteConfig config, std::string prompt)
        : config_(std::move(config)), prompt_(std::move(prompt)), client_(config_.base_url) {
        if (config_.base_url.empty()) throw UsageError("remote session requires a base URL");
        if (config_.max_attempts < 1) throw UsageError("max_attempts must be >= 1");
        client_.set_connection_timeout(config_.timeout_sec, 0);
        client_.set_read_timeout(config_.timeout_sec, 0);
        client_.set_write_timeout(config_.timeout_sec, 0);
    }

    Continuation continue_with(const std::string& forced_prefix) override {
        if (finished_) return {"", true};
        assistant_text_ += forced_prefix;
        std::string content = post_completion();
        bool finished = false;
        if (auto pos = content.find(config_.end_marker); pos != std::string::npos) {
            content.resize(pos);
            finished = true;
        } else if (content.empty()) {
            finished = true;  // nothing left to generate
        }
        assistant_text_ += content;
        if (finished) {
            assistant_text_ += config_.end_marker;
            finished_ = true;
        }
        return {std::move(content), finished};
    }

    const std::string& assistant_text() const { return assistant_text_; }

  private:
    std::string post_completion() {
        nlohmann::ordered_json body;
        body["model"] = config_.model;
        body["messages"] = nlohmann::ordered_json::array();
        if (!config_.system_prompt.empty())
            body["messages"].push_back({{"role", "system"}, {"content", config_.system_prompt}});
        body["messages"].push_back({{"role", "user"}, {"content", prompt_}});
        body["messages"].push_back({{"role", "assistant"}, {"content", assistant_text_}});
        body["stop"] = {"\n\n"};
        body["temperature"] = config_.temperature;
        body["max_tokens"] = config_.max_tokens;
        const std::string payload = body.dump();

        httplib::Headers headers;
        if (!config_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_key);

        std::string last_error;
        int last_status = 0;
        int delay_ms = config_.retry_base_delay_ms;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            auto res = client_.Post(config_.completions_path, headers, payload, "application/json");
            if (res && res->status == 200) return parse_content(res->body);
            if (res) {
                last_status = res->status;
                last_error = "HTTP " + std::to_string(res->status);
                if (res->status < 500) {
                    // Client-side problem; retrying cannot fix it.
                    std::string what = res->status == 401 || res->status == 403
                                           ? "authentication rejected (" + last_error + ")"
                                           : "request rejected (" + last_error + ")";
                    throw TransportError(what, res->status, attempt);
                }
            } else {
                last_error = httplib::to_string(res.error());
            }
            if (attempt < config_.max_attempts && delay_ms > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
                delay_ms *= 2;
            }
        }
        throw TransportError("generator unreachable after " +
                                 std::to_string(config_.max_attempts) + " attempts: " + last_error,
                             last_status, config_.max_attempts);
    }

    std::string parse_content(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed response JSON: ") + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
            throw TransportError("response has no choices");
        const auto& message = j["choices"][0];
        if (!message.contains("message") || !message["message"].contains("content") ||
            !message["message"]["content"].is_string())
            throw TransportError("response missing choices[0].message.content");
        return message["message"]["content"].get<std::string>();
    }

    RemoteConfig config_;
    std::string prompt_;
    httplib::Client client_;
    std::string assistant_text_;
    bool finished_ = false;
};

inline std::unique_ptr<GeneratorSession> open_remote_session(RemoteConfig config,
                                                             std::string prompt) {
    return std::make_unique<RemoteSession>(std::move(config), std::move(prompt));
}

}  // namespace rbsteer
