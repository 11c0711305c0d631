#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rbsteer/extractor.hpp"
#include "rbsteer/steering.hpp"

namespace fs = std::filesystem;
using namespace rbsteer;

namespace {

// Uniform base policy of the given order whose masks leave exactly one
// behavior available at every step (only meaningful for order 1, where the
// empty prefix matches every context).
InjectionPolicy point_mass(Behavior keep) {
    InjectionPolicy policy = uniform_policy(1);
    for (Behavior b : kAllBehaviors) {
        if (b != keep) policy.masks.push_back({"", b});
    }
    return policy;
}

std::vector<MockScriptEntry> plain_script(int n, bool finish_last = false) {
    std::vector<MockScriptEntry> script;
    for (int i = 1; i <= n; ++i)
        script.push_back({"step " + std::to_string(i), finish_last && i == n, ""});
    return script;
}

SteeringConfig config_for(const InjectionPolicy& policy, int max_steps = 16,
                          int streak = 2, std::uint64_t seed = 7) {
    SteeringConfig config;
    config.policy = &policy;
    config.max_steps = max_steps;
    config.stop_on_conclusion_streak = streak;
    config.seed = seed;
    config.stream_name = "test";
    return config;
}

}  // namespace

TEST_CASE("mock sessions replay their script and latch finished") {
    MockSession session({{"one", false, ""}, {"two", true, ""}});
    auto first = session.continue_with("\n\nNow ");
    REQUIRE(first.text == "one");
    REQUIRE_FALSE(first.finished);
    auto second = session.continue_with("\n\nNow ");
    REQUIRE(second.text == "two");
    REQUIRE(second.finished);
    // Finished latches: later calls return empty finished continuations
    // instead of running off the script.
    auto third = session.continue_with("\n\nNow ");
    REQUIRE(third.text.empty());
    REQUIRE(third.finished);
    REQUIRE(session.steps_taken() == 3);
}

TEST_CASE("mock sessions fail on exhaustion and unexpected prefixes") {
    MockSession shallow({{"only", false, ""}});
    shallow.continue_with("x");
    try {
        shallow.continue_with("x");
        FAIL("expected MockScriptError");
    } catch (const MockScriptError& e) {
        REQUIRE(e.step() == 2);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("exhausted"));
    }

    MockSession strict({{"seg", false, "Wait"}});
    REQUIRE_THROWS_MATCHES(strict.continue_with("\n\nTherefore, "), MockScriptError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("Wait")));
    REQUIRE_NOTHROW(MockSession({{"seg", false, "Wait"}}).continue_with("\n\nWait "));
}

TEST_CASE("choose_marker takes the first lexicon phrase per behavior") {
    RngStream rng(1);
    const MarkerLexicon& lex = default_lexicon();
    auto canonical = [&](Behavior b) {
        return choose_marker(b, lex, MarkerStrategy::CanonicalFirst, rng);
    };
    REQUIRE(canonical(Behavior::Objective) == "Okay,");
    REQUIRE(canonical(Behavior::Progression) == "Now");
    REQUIRE(canonical(Behavior::Summary) == "In summary");
    REQUIRE(canonical(Behavior::Exploration) == "Alternatively");
    REQUIRE(canonical(Behavior::Verification) == "Let me verify");
    REQUIRE(canonical(Behavior::Conclusion) == "Therefore,");
}

TEST_CASE("choose_marker uniform-random stays inside the behavior's phrases") {
    const MarkerLexicon& lex = default_lexicon();
    auto conclusion_phrases = lex.phrases_for(Behavior::Conclusion);
    std::set<std::string> allowed(conclusion_phrases.begin(), conclusion_phrases.end());
    RngStream rng(42, "markers");
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) {
        std::string phrase =
            choose_marker(Behavior::Conclusion, lex, MarkerStrategy::UniformRandom, rng);
        REQUIRE(allowed.count(phrase) == 1);
        seen.insert(phrase);
    }
    REQUIRE(seen.size() > 1);  // 200 draws over 18 phrases hit more than one

    MarkerLexicon tiny({{"Go", Behavior::Progression}});
    RngStream rng2(1);
    REQUIRE_THROWS_AS(
        choose_marker(Behavior::Conclusion, tiny, MarkerStrategy::CanonicalFirst, rng2),
        UsageError);
    REQUIRE_THROWS_AS(
        choose_marker(Behavior::Conclusion, tiny, MarkerStrategy::UniformRandom, rng2),
        UsageError);
}

TEST_CASE("steering stops after the configured conclusion streak") {
    InjectionPolicy policy = point_mass(Behavior::Conclusion);
    MockSession session(plain_script(10));
    auto transcript = steer(session, config_for(policy, 10, 2));
    REQUIRE(transcript.stop_reason == StopReason::ConclusionStreak);
    REQUIRE(transcript.events.size() == 2);
    REQUIRE(chain_code(transcript.final_chain) == "CC");
    REQUIRE(session.steps_taken() == 2);

    MockSession longer(plain_script(10));
    auto three = steer(longer, config_for(policy, 10, 3));
    REQUIRE(three.events.size() == 3);
    REQUIRE(three.stop_reason == StopReason::ConclusionStreak);
}

TEST_CASE("a finishing generator outranks the conclusion streak") {
    InjectionPolicy policy = point_mass(Behavior::Conclusion);
    MockSession session({{"a", false, ""}, {"b", true, ""}});
    auto transcript = steer(session, config_for(policy, 10, 2));
    // Step 2 satisfies both stop conditions; generator-finished wins.
    REQUIRE(transcript.stop_reason == StopReason::GeneratorFinished);
    REQUIRE(transcript.events.size() == 2);
}

TEST_CASE("the step budget caps a run that never concludes") {
    InjectionPolicy policy = point_mass(Behavior::Progression);
    MockSession session(plain_script(10));
    auto transcript = steer(session, config_for(policy, 3, 2));
    REQUIRE(transcript.stop_reason == StopReason::MaxSteps);
    REQUIRE(transcript.events.size() == 3);
    REQUIRE(chain_code(transcript.final_chain) == "PPP");
}

TEST_CASE("the forced prefix is a segment break, the marker, and a space") {
    InjectionPolicy policy = point_mass(Behavior::Verification);
    MockSession session({{"all good", true, "\n\nLet me verify "}});
    auto transcript = steer(session, config_for(policy));
    REQUIRE(transcript.events.size() == 1);
    REQUIRE(transcript.events[0].phrase == "Let me verify");
    REQUIRE(transcript.full_text == "\n\nLet me verify all good");
}

TEST_CASE("generator text past a segment break is discarded") {
    InjectionPolicy policy = point_mass(Behavior::Conclusion);
    MockSession session({{"kept\n\nWait dropped", true, ""}});
    auto transcript = steer(session, config_for(policy));
    REQUIRE(transcript.events[0].segment == "kept");
    REQUIRE(transcript.full_text == "\n\nTherefore, kept");
    REQUIRE(chain_code(transcript.final_chain) == "C");
    // The discarded tail never contaminates re-extraction.
    REQUIRE(extract_chain(transcript.full_text) == transcript.final_chain);
}

TEST_CASE("re-extracting the assembled text reproduces the steered chain") {
    // Random policies, both marker strategies: full_text is built from marker
    // phrases at segment onsets, so the extractor must read back exactly the
    // chain the steerer recorded.
    std::vector<BehaviorChain> chains;
    std::mt19937_64 gen(2026);
    for (int i = 0; i < 40; ++i) {
        BehaviorChain chain;
        for (std::size_t j = 0; j < 1 + gen() % 8; ++j)
            chain.push_back(kAllBehaviors[gen() % kBehaviorCount]);
        chains.push_back(std::move(chain));
    }
    InjectionPolicy policy = fit_backoff_empirical(chains, 3);
    for (auto strategy : {MarkerStrategy::CanonicalFirst, MarkerStrategy::UniformRandom}) {
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
            MockSession session(plain_script(12));
            SteeringConfig config = config_for(policy, 12, 100, seed);
            config.marker_strategy = strategy;
            config.stream_name = "invariant/" + std::to_string(seed);
            auto transcript = steer(session, config);
            REQUIRE(extract_chain(transcript.full_text) == transcript.final_chain);
            REQUIRE(transcript.events.size() == transcript.final_chain.size());
        }
    }
}

TEST_CASE("mask rules keep banned patterns out of steered chains") {
    std::mt19937_64 gen(77);
    const std::string codes = "OPSEVC";
    int total_steps = 0;
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<BehaviorChain> chains;
        for (int i = 0; i < 30; ++i) {
            BehaviorChain chain;
            for (std::size_t j = 0; j < 2 + gen() % 7; ++j)
                chain.push_back(kAllBehaviors[gen() % kBehaviorCount]);
            chains.push_back(std::move(chain));
        }
        InjectionPolicy policy = fit_backoff_empirical(chains, 3);
        std::vector<MaskRule> rules;
        std::set<std::string> banned;
        for (std::size_t r = 0; r < 1 + gen() % 2; ++r) {
            std::string prefix{codes[gen() % 6], codes[gen() % 6]};
            Behavior b = kAllBehaviors[gen() % 6];
            rules.push_back({prefix, b});
            banned.insert(prefix + to_code(b));
        }
        MockSession session(plain_script(40));
        SteeringConfig config = config_for(policy, 40, 100, 1000 + trial);
        config.stream_name = "fuzz/" + std::to_string(trial);
        // A fitted policy can put all its mass on one behavior at some
        // context, so a random ban may legitimately empty the distribution;
        // the banned patterns must be absent either way, including from the
        // partial output of a run that died on an unsatisfiable mask.
        std::string code;
        try {
            auto transcript = mask_steer(session, config, rules);
            REQUIRE(transcript.events.size() == 40);  // nothing else stops these runs
            total_steps += static_cast<int>(transcript.events.size());
            code = chain_code(transcript.final_chain);
        } catch (const SteerError& e) {
            REQUIRE(e.failure() == SteerFailure::UnsatisfiableMask);
            total_steps += static_cast<int>(e.partial().events.size());
            code = chain_code(e.partial().final_chain);
        }
        for (const auto& pattern : banned)
            REQUIRE(code.find(pattern) == std::string::npos);
    }
    REQUIRE(total_steps >= 1500);  // almost every fuzz run uses its full budget
}

TEST_CASE("masking away every behavior raises a typed steering error") {
    InjectionPolicy policy = uniform_policy(1);
    std::vector<MaskRule> all_banned;
    for (Behavior b : kAllBehaviors) all_banned.push_back({"", b});
    MockSession session(plain_script(4));
    try {
        mask_steer(session, config_for(policy), all_banned);
        FAIL("expected SteerError");
    } catch (const SteerError& e) {
        REQUIRE(e.failure() == SteerFailure::UnsatisfiableMask);
        REQUIRE(e.step() == 1);
        REQUIRE(e.partial().events.empty());
        REQUIRE(session.steps_taken() == 0);  // failed before touching the generator
    }
}

TEST_CASE("mid-run unsatisfiable masks carry the partial transcript") {
    // Order-2 policy, uniform base; every behavior is banned after P, so the
    // run dies one step after the first P gets sampled.
    InjectionPolicy policy = uniform_policy(2);
    std::vector<MaskRule> rules;
    for (Behavior b : kAllBehaviors) rules.push_back({"P", b});
    bool saw_failure = false;
    for (std::uint64_t seed = 0; seed < 100 && !saw_failure; ++seed) {
        MockSession session(plain_script(64));
        SteeringConfig config = config_for(policy, 64, 100, seed);
        try {
            mask_steer(session, config, rules);
        } catch (const SteerError& e) {
            saw_failure = true;
            REQUIRE(e.failure() == SteerFailure::UnsatisfiableMask);
            REQUIRE(e.step() >= 2);
            const SteeredTranscript& partial = e.partial();
            REQUIRE(partial.events.size() == static_cast<std::size_t>(e.step() - 1));
            REQUIRE(partial.final_chain.back() == Behavior::Progression);
            REQUIRE_FALSE(partial.full_text.empty());
        }
    }
    REQUIRE(saw_failure);
}

TEST_CASE("generator failures surface as steering errors with context") {
    InjectionPolicy policy = point_mass(Behavior::Conclusion);
    MockSession session({{"ok", false, ""}, {"seg", false, "Wait"}});
    try {
        steer(session, config_for(policy, 10, 5));
        FAIL("expected SteerError");
    } catch (const SteerError& e) {
        REQUIRE(e.failure() == SteerFailure::Generator);
        REQUIRE(e.step() == 2);
        REQUIRE(e.partial().events.size() == 1);
        REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("Wait"));
    }
}

TEST_CASE("steering configuration is validated up front") {
    MockSession session(plain_script(2));
    SteeringConfig config;  // no policy
    REQUIRE_THROWS_AS(steer(session, config), UsageError);
    InjectionPolicy policy = uniform_policy(1);
    config.policy = &policy;
    config.max_steps = 0;
    REQUIRE_THROWS_AS(steer(session, config), UsageError);
    config.max_steps = 4;
    config.stop_on_conclusion_streak = 0;
    REQUIRE_THROWS_AS(steer(session, config), UsageError);
}

TEST_CASE("identical seeds and streams replay byte-identical transcripts") {
    std::vector<BehaviorChain> chains = {parse_chain_code("OPVC"), parse_chain_code("OPEC"),
                                         parse_chain_code("OVPC")};
    InjectionPolicy policy = fit_backoff_empirical(chains, 3);
    auto run_once = [&policy](std::uint64_t seed, const std::string& stream) {
        MockSession session(plain_script(10));
        SteeringConfig config = config_for(policy, 10, 2, seed);
        config.stream_name = stream;
        config.marker_strategy = MarkerStrategy::UniformRandom;
        return transcript_to_jsonl(steer(session, config));
    };
    REQUIRE(run_once(12345, "a") == run_once(12345, "a"));
}

TEST_CASE("transcripts serialize to a fixed JSONL form") {
    SteeredTranscript transcript;
    transcript.events.push_back({1, Behavior::Conclusion, "Therefore,", "done"});
    transcript.final_chain = parse_chain_code("C");
    transcript.full_text = "\n\nTherefore, done";
    transcript.stop_reason = StopReason::GeneratorFinished;
    std::string expected =
        "{\"t\":1,\"behavior\":\"C\",\"phrase\":\"Therefore,\",\"segment\":\"done\"}\n"
        "{\"final_chain\":\"C\",\"stop_reason\":\"generator-finished\","
        "\"full_text\":\"\\n\\nTherefore, done\"}\n";
    REQUIRE(transcript_to_jsonl(transcript) == expected);

    auto dir = fs::temp_directory_path() / "rbsteer-steering-tests";
    fs::create_directories(dir);
    auto path = dir / "transcript.jsonl";
    save_transcript(transcript, path);
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    REQUIRE(buf.str() == expected);
}

TEST_CASE("marker strategy names round-trip") {
    REQUIRE(to_string(MarkerStrategy::CanonicalFirst) == "canonical-first");
    REQUIRE(marker_strategy_from("uniform-random") == MarkerStrategy::UniformRandom);
    REQUIRE_FALSE(marker_strategy_from("random").has_value());
    REQUIRE(to_string(StopReason::ConclusionStreak) == "conclusion-streak");
    REQUIRE(to_string(StopReason::MaxSteps) == "max-steps");
}
