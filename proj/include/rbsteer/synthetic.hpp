#pragma once

#include <array>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/errors.hpp"
#include "rbsteer/extractor.hpp"
#include "rbsteer/lexicon.hpp"
#include "rbsteer/policy.hpp"
#include "rbsteer/rng.hpp"
#include "rbsteer/session.hpp"
#include "rbsteer/steering.hpp"
#include "rbsteer/trace.hpp"

namespace rbsteer {

// Self-contained evaluation environment with a known ground truth: episodes
// whose behavior chain contains `rewarded_pattern` succeed with probability
// `hit_success`, everything else with `miss_success`. Training corpora come
// from a scripted base process that mixes a background drift over behaviors
// with occasional scripted runs of the rewarded pattern (the "motif"), so
// the pattern is present-but-rare in the data — learnable, not given away.
struct SyntheticSpec {
    std::string rewarded_pattern = "PVV";
    double hit_success = 0.8;
    double miss_success = 0.3;

    // training-chain generation
    double motif_rate = 0.03;  // per free step, chance the motif starts
    int len_min = 26;          // target chain length range
    int len_max = 40;

    // evaluation episodes
    int eval_max_steps = 56;
    int eval_conclusion_streak = 2;
};

namespace detail {

// Background drift (rows: current behavior; cols O P S E V C). Deliberate
// structure: P and E are rare destinations, and the adjacencies that motifs
// are made of (P->V, V->V, E->E, E->S) are rarer still, so n-gram structure
// in a corpus comes from the motif, not from the drift. The drift never
// emits Conclusion — the scripted process works until its length budget and
// simply stops, which keeps the terminal-reward discount from smuggling a
// "conclude late" bonus into the action values. The C row exists only for
// user-chosen patterns that contain C.
inline constexpr double kBackgroundRows[kBehaviorCount][kBehaviorCount] = {
    // O     P     S     E     V     C
    {0.06, 0.05, 0.30, 0.05, 0.54, 0.00},  // from O
    {0.28, 0.12, 0.52, 0.06, 0.02, 0.00},  // from P
    {0.22, 0.05, 0.08, 0.05, 0.60, 0.00},  // from S
    {0.30, 0.06, 0.06, 0.02, 0.56, 0.00},  // from E
    {0.32, 0.05, 0.53, 0.06, 0.04, 0.00},  // from V
    {0.22, 0.04, 0.32, 0.04, 0.38, 0.00},  // from C
};

inline Behavior sample_row(const double (&row)[kBehaviorCount], RngStream& rng) {
    return kAllBehaviors[rng.categorical(std::span<const double>(row, kBehaviorCount))];
}

}  // namespace detail

inline bool contains_pattern(const BehaviorChain& chain, std::string_view pattern_code) {
    return chain_code(chain).find(pattern_code) != std::string::npos;
}

inline void validate_spec(const SyntheticSpec& spec) {
    parse_chain_code(spec.rewarded_pattern);  // throws on bad codes
    if (spec.rewarded_pattern.empty()) throw UsageError("rewarded pattern must be non-empty");
    if (!(spec.hit_success >= 0.0 && spec.hit_success <= 1.0) ||
        !(spec.miss_success >= 0.0 && spec.miss_success <= 1.0))
        throw UsageError("success probabilities must lie in [0, 1]");
    if (!(spec.motif_rate >= 0.0 && spec.motif_rate < 1.0))
        throw UsageError("motif rate must lie in [0, 1)");
    if (spec.len_min < 2 || spec.len_max < spec.len_min)
        throw UsageError("length range must satisfy 2 <= len_min <= len_max");
    if (spec.eval_max_steps < 1) throw UsageError("eval_max_steps must be >= 1");
    if (spec.eval_conclusion_streak < 1) throw UsageError("eval conclusion streak must be >= 1");
}

// Exact ground-truth reward of an episode.
inline double success_probability(const SyntheticSpec& spec, const BehaviorChain& chain) {
    return contains_pattern(chain, spec.rewarded_pattern) ? spec.hit_success : spec.miss_success;
}

// One scripted training chain. The process starts at Objective, drifts
// through the background rows, occasionally runs the motif to completion,
// and stops at its drawn target length.
inline BehaviorChain simulate_chain(const SyntheticSpec& spec, RngStream& rng) {
    validate_spec(spec);
    BehaviorChain pattern = parse_chain_code(spec.rewarded_pattern);
    int target_len = spec.len_min +
                     static_cast<int>(rng.uniform_index(
                         static_cast<std::size_t>(spec.len_max - spec.len_min + 1)));
    BehaviorChain chain{Behavior::Objective};
    std::size_t queued = 0;  // next index into `pattern` while the motif runs
    while (chain.size() < static_cast<std::size_t>(target_len)) {
        Behavior next;
        if (queued > 0 && queued < pattern.size()) {
            next = pattern[queued++];
        } else {
            queued = 0;
            if (rng.next_unit() < spec.motif_rate) {
                next = pattern[0];
                queued = 1;
            } else {
                next = detail::sample_row(
                    detail::kBackgroundRows[static_cast<std::size_t>(chain.back())], rng);
            }
        }
        chain.push_back(next);
    }
    return chain;
}

// Renders a chain as reasoning text whose extraction recovers the chain:
// one segment per behavior, opened by the behavior's canonical marker.
inline std::string render_chain_text(const BehaviorChain& chain,
                                     const MarkerLexicon& lexicon = default_lexicon()) {
    std::string text;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const std::string* marker = lexicon.canonical_phrase(chain[i]);
        if (!marker)
            throw UsageError("lexicon has no marker phrase for behavior " +
                             std::string(to_name(chain[i])));
        if (i > 0) text += "\n\n";
        text += *marker;
        text += " step ";
        text += std::to_string(i + 1);
        text += '.';
    }
    return text;
}

// Simulated trace corpus: scripted chains rendered to text, graded by a
// Bernoulli draw of the ground-truth success probability. The ground truth
// of each trace is kept in meta for inspection; nothing downstream reads it.
inline Corpus simulate_corpus(const SyntheticSpec& spec, int count, std::uint64_t seed) {
    if (count < 1) throw UsageError("corpus size must be >= 1");
    Corpus corpus;
    corpus.traces.reserve(count);
    for (int i = 0; i < count; ++i) {
        RngStream rng(seed, "synthetic/trace/" + std::to_string(i));
        BehaviorChain chain = simulate_chain(spec, rng);
        double p = success_probability(spec, chain);
        bool correct = rng.next_unit() < p;
        ReasoningTrace t;
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "syn-%06d", i);
        t.id = idbuf;
        t.dataset = "synthetic-" + spec.rewarded_pattern;
        t.model = "scripted-base";
        t.question = "synthetic episode " + std::to_string(i);
        t.reasoning_text = render_chain_text(chain);
        t.answer = "synthetic";
        t.correct = correct;
        t.meta["pattern_hit"] = contains_pattern(chain, spec.rewarded_pattern) ? "true" : "false";
        corpus.traces.push_back(std::move(t));
    }
    return corpus;
}

// Generator stub for steering episodes: emits neutral filler and never
// finishes on its own, so termination is entirely the controller's call.
class SyntheticSession final : public GeneratorSession {
  public:
    Continuation continue_with(const std::string&) override {
        ++step_;
        return {"synthetic segment " + std::to_string(step_) + ".", false};
    }

  private:
    int step_ = 0;
};

struct EvalResult {
    int episodes = 0;
    long long pattern_hits = 0;
    double mean_success = 0.0;  // exact ground-truth reward averaged over episodes
    double mean_length = 0.0;
};

// Steers `episodes` fresh synthetic sessions with the policy and scores each
// final chain with the exact reward function (no sampling noise on the
// reward side; the only randomness is the policy's own).
inline EvalResult evaluate_policy(const SyntheticSpec& spec, const InjectionPolicy& policy,
                                  int episodes, std::uint64_t seed,
                                  std::span<const MaskRule> extra_rules = {}) {
    if (episodes < 1) throw UsageError("episode count must be >= 1");
    EvalResult result;
    result.episodes = episodes;
    double success_sum = 0.0;
    long long length_sum = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        SyntheticSession session;
        SteeringConfig config;
        config.max_steps = spec.eval_max_steps;
        config.stop_on_conclusion_streak = spec.eval_conclusion_streak;
        config.policy = &policy;
        config.seed = seed;
        config.stream_name = "synthetic-eval/" + std::to_string(ep);
        SteeredTranscript t = mask_steer(session, config, extra_rules);
        success_sum += success_probability(spec, t.final_chain);
        if (contains_pattern(t.final_chain, spec.rewarded_pattern)) ++result.pattern_hits;
        length_sum += static_cast<long long>(t.final_chain.size());
    }
    result.mean_success = success_sum / episodes;
    result.mean_length = static_cast<double>(length_sum) / episodes;
    return result;
}

}  // namespace rbsteer
