#include <catch2/catch_amalgamated.hpp>

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "rbsteer/remote.hpp"
#include "rbsteer/steering.hpp"

using namespace rbsteer;
using nlohmann::json;

namespace {

// Loopback chat-completions stub. The handler decides each response from the
// 1-based call index; requests are recorded for shape assertions.
class StubServer {
  public:
    using Responder = std::function<void(int call, const httplib::Request&, httplib::Response&)>;

    explicit StubServer(Responder responder) : responder_(std::move(responder)) {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         int call = 0;
                         {
                             std::lock_guard<std::mutex> lock(mutex_);
                             requests_.push_back(req);
                             call = static_cast<int>(requests_.size());
                         }
                         responder_(call, req, res);
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    int request_count() {
        std::lock_guard<std::mutex> lock(mutex_);
        return static_cast<int>(requests_.size());
    }

    httplib::Request request(int call) {
        std::lock_guard<std::mutex> lock(mutex_);
        REQUIRE(call <= static_cast<int>(requests_.size()));
        return requests_[call - 1];
    }

  private:
    httplib::Server server_;
    Responder responder_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mutex_;
    std::vector<httplib::Request> requests_;
};

void reply_content(httplib::Response& res, const std::string& content) {
    json body = {{"choices", {{{"message", {{"content", content}}}}}}};
    res.set_content(body.dump(), "application/json");
}

RemoteConfig test_config(const std::string& base_url) {
    RemoteConfig config;
    config.base_url = base_url;
    config.model = "unit-model";
    config.api_key = "sk-unit";
    config.retry_base_delay_ms = 0;  // keep retry tests fast
    config.timeout_sec = 5;
    return config;
}

}  // namespace

TEST_CASE("remote sessions send a resumable chat request") {
    StubServer server([](int call, const httplib::Request&, httplib::Response& res) {
        reply_content(res, call == 1 ? "thinking step" : "done</think> trailing");
    });
    RemoteSession session(test_config(server.base_url()), "What is 2+2?");

    auto first = session.continue_with("\n\nOkay, ");
    REQUIRE(first.text == "thinking step");
    REQUIRE_FALSE(first.finished);

    auto req = server.request(1);
    REQUIRE(req.get_header_value("Authorization") == "Bearer sk-unit");
    REQUIRE(req.get_header_value("Content-Type") == "application/json");
    json body = json::parse(req.body);
    REQUIRE(body["model"] == "unit-model");
    REQUIRE(body["stop"] == json::array({"\n\n"}));
    REQUIRE(body["temperature"] == 0.7);
    REQUIRE(body["max_tokens"] == 512);
    REQUIRE(body["messages"].size() == 3);
    REQUIRE(body["messages"][0]["role"] == "system");
    REQUIRE(body["messages"][1]["role"] == "user");
    REQUIRE(body["messages"][1]["content"] == "What is 2+2?");
    REQUIRE(body["messages"][2]["role"] == "assistant");
    REQUIRE(body["messages"][2]["content"] == "\n\nOkay, ");

    // The next call resumes with everything generated so far plus the new
    // forced prefix, and the end marker truncates + finishes the session.
    auto second = session.continue_with("\n\nWait ");
    REQUIRE(second.text == "done");
    REQUIRE(second.finished);
    json body2 = json::parse(server.request(2).body);
    REQUIRE(body2["messages"][2]["content"] == "\n\nOkay, thinking step\n\nWait ");
    REQUIRE(session.assistant_text() == "\n\nOkay, thinking step\n\nWait done</think>");

    // Finished latches without further HTTP traffic.
    auto third = session.continue_with("\n\nNow ");
    REQUIRE(third.text.empty());
    REQUIRE(third.finished);
    REQUIRE(server.request_count() == 2);
}

TEST_CASE("an empty completion means the generator is done") {
    StubServer server([](int, const httplib::Request&, httplib::Response& res) {
        reply_content(res, "");
    });
    RemoteSession session(test_config(server.base_url()), "p");
    auto cont = session.continue_with("\n\nOkay, ");
    REQUIRE(cont.text.empty());
    REQUIRE(cont.finished);
}

TEST_CASE("a custom end marker truncates the completion") {
    StubServer server([](int, const httplib::Request&, httplib::Response& res) {
        reply_content(res, "answer[DONE]ignored");
    });
    RemoteConfig config = test_config(server.base_url());
    config.end_marker = "[DONE]";
    RemoteSession session(config, "p");
    auto cont = session.continue_with("x");
    REQUIRE(cont.text == "answer");
    REQUIRE(cont.finished);
}

TEST_CASE("server errors are retried and then succeed") {
    StubServer server([](int call, const httplib::Request&, httplib::Response& res) {
        if (call < 3) {
            res.status = 500;
            res.set_content("overloaded", "text/plain");
        } else {
            reply_content(res, "recovered");
        }
    });
    RemoteSession session(test_config(server.base_url()), "p");
    auto cont = session.continue_with("x");
    REQUIRE(cont.text == "recovered");
    REQUIRE(server.request_count() == 3);
}

TEST_CASE("persistent server errors exhaust the attempt budget") {
    StubServer server([](int, const httplib::Request&, httplib::Response& res) {
        res.status = 503;
        res.set_content("down", "text/plain");
    });
    RemoteConfig config = test_config(server.base_url());
    config.max_attempts = 2;
    RemoteSession session(config, "p");
    try {
        session.continue_with("x");
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        REQUIRE(e.status() == 503);
        REQUIRE(e.attempts() == 2);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("after 2 attempts"));
    }
    REQUIRE(server.request_count() == 2);
}

TEST_CASE("authentication failures are not retried") {
    StubServer server([](int, const httplib::Request&, httplib::Response& res) {
        res.status = 401;
        res.set_content("bad key", "text/plain");
    });
    RemoteSession session(test_config(server.base_url()), "p");
    try {
        session.continue_with("x");
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        REQUIRE(e.status() == 401);
        REQUIRE(e.attempts() == 1);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("authentication rejected"));
    }
    REQUIRE(server.request_count() == 1);
}

TEST_CASE("other client-side rejections fail immediately too") {
    StubServer server([](int, const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    RemoteSession session(test_config(server.base_url()), "p");
    REQUIRE_THROWS_MATCHES(session.continue_with("x"), TransportError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("request rejected")));
    REQUIRE(server.request_count() == 1);
}

TEST_CASE("malformed response bodies are transport errors") {
    int mode = 0;
    StubServer server([&mode](int, const httplib::Request&, httplib::Response& res) {
        switch (mode) {
            case 0: res.set_content("not json at all", "application/json"); break;
            case 1: res.set_content(R"({"choices":[]})", "application/json"); break;
            default:
                res.set_content(R"({"choices":[{"message":{}}]})", "application/json");
                break;
        }
    });
    RemoteConfig config = test_config(server.base_url());
    config.max_attempts = 1;

    mode = 0;
    REQUIRE_THROWS_MATCHES(RemoteSession(config, "p").continue_with("x"), TransportError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("malformed response JSON")));
    mode = 1;
    REQUIRE_THROWS_MATCHES(RemoteSession(config, "p").continue_with("x"), TransportError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("no choices")));
    mode = 2;
    REQUIRE_THROWS_MATCHES(
        RemoteSession(config, "p").continue_with("x"), TransportError,
        Catch::Matchers::MessageMatches(
            Catch::Matchers::ContainsSubstring("choices[0].message.content")));
}

TEST_CASE("an unreachable generator exhausts its attempts") {
    std::string dead_url;
    {
        StubServer server([](int, const httplib::Request&, httplib::Response&) {});
        dead_url = server.base_url();
    }  // server gone; the port is closed again
    RemoteConfig config = test_config(dead_url);
    config.max_attempts = 2;
    RemoteSession session(config, "p");
    REQUIRE_THROWS_MATCHES(session.continue_with("x"), TransportError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("unreachable")));
}

TEST_CASE("remote configuration is validated") {
    RemoteConfig config;
    REQUIRE_THROWS_AS(RemoteSession(config, "p"), UsageError);  // no base URL
    config.base_url = "http://127.0.0.1:1";
    config.max_attempts = 0;
    REQUIRE_THROWS_AS(RemoteSession(config, "p"), UsageError);
}

TEST_CASE("steering drives a remote session end to end") {
    StubServer server([](int call, const httplib::Request&, httplib::Response& res) {
        reply_content(res, call == 1 ? "step one\n\nleaked second segment" : "final</think>");
    });
    auto session = open_remote_session(test_config(server.base_url()), "prompt");
    InjectionPolicy policy = uniform_policy(1);
    for (Behavior b : kAllBehaviors) {
        if (b != Behavior::Verification) policy.masks.push_back({"", b});
    }
    SteeringConfig config;
    config.policy = &policy;
    config.max_steps = 8;
    config.stop_on_conclusion_streak = 2;
    config.seed = 5;
    config.stream_name = "remote";
    auto transcript = steer(*session, config);
    REQUIRE(transcript.stop_reason == StopReason::GeneratorFinished);
    REQUIRE(transcript.events.size() == 2);
    REQUIRE(transcript.events[0].segment == "step one");  // leaked tail dropped
    REQUIRE(transcript.events[1].segment == "final");
    REQUIRE(chain_code(transcript.final_chain) == "VV");
    REQUIRE(transcript.full_text ==
            "\n\nLet me verify step one\n\nLet me verify final");
}
