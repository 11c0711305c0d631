#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rbsteer/behavior.hpp"
#include "rbsteer/errors.hpp"
#include "rbsteer/lexicon.hpp"
#include "rbsteer/policy.hpp"
#include "rbsteer/rng.hpp"
#include "rbsteer/session.hpp"

namespace rbsteer {

enum class MarkerStrategy {
    CanonicalFirst,  // always the first lexicon phrase for the behavior
    UniformRandom,   // uniformly among the behavior's phrases
};

constexpr std::string_view to_string(MarkerStrategy s) {
    return s == MarkerStrategy::CanonicalFirst ? "canonical-first" : "uniform-random";
}

inline std::optional<MarkerStrategy> marker_strategy_from(std::string_view name) {
    if (name == "canonical-first") return MarkerStrategy::CanonicalFirst;
    if (name == "uniform-random") return MarkerStrategy::UniformRandom;
    return std::nullopt;
}

enum class StopReason {
    GeneratorFinished,
    ConclusionStreak,
    MaxSteps,
};

constexpr std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::GeneratorFinished: return "generator-finished";
        case StopReason::ConclusionStreak: return "conclusion-streak";
        case StopReason::MaxSteps: return "max-steps";
    }
    return "?";
}

struct SteeringConfig {
    int max_steps = 64;
    MarkerStrategy marker_strategy = MarkerStrategy::CanonicalFirst;
    int stop_on_conclusion_streak = 2;  // consecutive Conclusion steps that end the run
    const InjectionPolicy* policy = nullptr;
    const MarkerLexicon* lexicon = &default_lexicon();
    std::uint64_t seed = 0;
    std::string stream_name;  // distinguishes RNG streams across prompts/episodes
};

struct SteerEvent {
    int step = 0;  // 1-based
    Behavior behavior;
    std::string phrase;
    std::string segment;
};

struct SteeredTranscript {
    std::vector<SteerEvent> events;
    BehaviorChain final_chain;
    std::string full_text;
    StopReason stop_reason = StopReason::MaxSteps;
};

// What cut a steering run short.
enum class SteerFailure {
    UnsatisfiableMask,  // mask rules removed all probability mass
    Generator,          // transport / mock script failure
    Other,
};

// A steering run failed mid-flight; carries the failure kind, the 1-based
// step, and everything produced up to that point.
class SteerError : public Error {
  public:
    SteerError(const std::string& message, SteerFailure failure, int step,
               SteeredTranscript partial)
        : Error("step " + std::to_string(step) + ": " + message),
          failure_(failure),
          step_(step),
          partial_(std::move(partial)) {}

    SteerFailure failure() const { return failure_; }
    int step() const { return step_; }
    const SteeredTranscript& partial() const { return partial_; }

  private:
    SteerFailure failure_;
    int step_;
    SteeredTranscript partial_;
};

// Picks the marker phrase to inject for a behavior. Canonical-first takes
// the behavior's first lexicon phrase; uniform-random draws one from the
// behavior's phrases. A lexicon with no phrase for the behavior cannot
// steer toward it.
inline std::string choose_marker(Behavior behavior, const MarkerLexicon& lexicon,
                                 MarkerStrategy strategy, RngStream& rng) {
    if (strategy == MarkerStrategy::CanonicalFirst) {
        const std::string* phrase = lexicon.canonical_phrase(behavior);
        if (!phrase)
            throw UsageError("lexicon has no marker phrase for behavior " +
                             std::string(to_name(behavior)));
        return *phrase;
    }
    auto phrases = lexicon.phrases_for(behavior);
    if (phrases.empty())
        throw UsageError("lexicon has no marker phrase for behavior " +
                         std::string(to_name(behavior)));
    return phrases[rng.uniform_index(phrases.size())];
}

namespace detail {

inline SteeredTranscript steer_impl(GeneratorSession& session, const SteeringConfig& config,
                                    std::span<const MaskRule> extra_rules) {
    if (!config.policy) throw UsageError("steering requires a policy");
    if (config.max_steps < 1) throw UsageError("max_steps must be >= 1");
    if (config.stop_on_conclusion_streak < 1) throw UsageError("conclusion streak must be >= 1");
    const InjectionPolicy& policy = *config.policy;
    const MarkerLexicon& lexicon = config.lexicon ? *config.lexicon : default_lexicon();

    std::vector<MaskRule> rules(policy.masks);
    rules.insert(rules.end(), extra_rules.begin(), extra_rules.end());

    RngStream rng(config.seed, "steer/" + config.stream_name);
    SteeredTranscript out;
    int conclusion_streak = 0;
    for (int step = 1; step <= config.max_steps; ++step) {
        Behavior behavior;
        std::string phrase;
        try {
            auto dist = apply_mask(policy_base_distribution(policy, out.final_chain),
                                   context_of(out.final_chain, policy.order), rules);
            behavior = kAllBehaviors[rng.categorical(dist)];
            phrase = choose_marker(behavior, lexicon, config.marker_strategy, rng);
        } catch (const UnsatisfiableMaskError& e) {
            throw SteerError(e.what(), SteerFailure::UnsatisfiableMask, step, std::move(out));
        } catch (const Error& e) {
            throw SteerError(e.what(), SteerFailure::Other, step, std::move(out));
        }
        std::string forced = "\n\n" + phrase + " ";
        Continuation cont;
        try {
            cont = session.continue_with(forced);
        } catch (const Error& e) {
            throw SteerError(e.what(), SteerFailure::Generator, step, std::move(out));
        }
        // Anything past a segment delimiter inside the generator's text
        // belongs to a segment we did not steer; drop it.
        if (auto cut = cont.text.find("\n\n"); cut != std::string::npos) cont.text.resize(cut);
        out.events.push_back({step, behavior, phrase, cont.text});
        out.final_chain.push_back(behavior);
        out.full_text += forced;
        out.full_text += cont.text;
        conclusion_streak = behavior == Behavior::Conclusion ? conclusion_streak + 1 : 0;
        if (cont.finished) {
            out.stop_reason = StopReason::GeneratorFinished;
            return out;
        }
        if (conclusion_streak >= config.stop_on_conclusion_streak) {
            out.stop_reason = StopReason::ConclusionStreak;
            return out;
        }
    }
    out.stop_reason = StopReason::MaxSteps;
    return out;
}

}  // namespace detail

// Runs the injection loop: sample a behavior from the policy, inject its
// marker as a forced continuation prefix, collect the generated segment, and
// repeat until the generator finishes, Conclusion repeats enough, or the
// step budget runs out (checked in that order).
inline SteeredTranscript steer(GeneratorSession& session, const SteeringConfig& config) {
    return detail::steer_impl(session, config, {});
}

// steer() with additional mask rules on top of the policy's own. The masked
// patterns cannot appear in final_chain: a full-length window only ever
// completes through a context the rules saw.
inline SteeredTranscript mask_steer(GeneratorSession& session, const SteeringConfig& config,
                                    std::span<const MaskRule> extra_rules) {
    return detail::steer_impl(session, config, extra_rules);
}

// Transcript file: JSONL, one event per line, then a closing record with the
// final chain, stop reason, and assembled text.
inline std::string transcript_to_jsonl(const SteeredTranscript& transcript) {
    std::string out;
    for (const SteerEvent& e : transcript.events) {
        nlohmann::ordered_json j;
        j["t"] = e.step;
        j["behavior"] = std::string(1, to_code(e.behavior));
        j["phrase"] = e.phrase;
        j["segment"] = e.segment;
        out += j.dump();
        out += '\n';
    }
    nlohmann::ordered_json end;
    end["final_chain"] = chain_code(transcript.final_chain);
    end["stop_reason"] = std::string(to_string(transcript.stop_reason));
    end["full_text"] = transcript.full_text;
    out += end.dump();
    out += '\n';
    return out;
}

inline void save_transcript(const SteeredTranscript& transcript,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write transcript file: " + path.string());
    out << transcript_to_jsonl(transcript);
    if (!out) throw IoError("failed writing transcript file: " + path.string());
}

}  // namespace rbsteer
