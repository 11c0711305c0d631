#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/conditional.hpp"
#include "rbsteer/errors.hpp"

namespace rbsteer {

// One step of a chain viewed as a decision: in `state` (the behavior context,
// shortened near the start of the chain), the trace took `action`, and the
// whole episode eventually earned `value` = gamma^(T-t) * terminal reward.
struct Transition {
    std::string state;
    Behavior action;
    double value = 0.0;
};

// Expands labeled chains into state/action/return transitions. The only
// reward is terminal: 1 when the trace was correct, else 0, discounted back
// through the chain. Returns are accumulated backward (G_T = r, then
// G_{t-1} = gamma * G_t), so discounting is exact repeated multiplication.
inline std::vector<Transition> build_trajectories(
    const std::vector<std::pair<BehaviorChain, bool>>& labeled, int max_order, double gamma) {
    if (max_order < 1) throw UsageError("model order must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
    std::vector<Transition> transitions;
    for (const auto& [chain, correct] : labeled) {
        const std::size_t T = chain.size();
        if (T == 0) continue;
        std::string code = chain_code(chain);
        std::vector<double> value(T);
        double g = correct ? 1.0 : 0.0;
        for (std::size_t t = T; t-- > 0;) {
            value[t] = g;
            g *= gamma;
        }
        for (std::size_t t = 0; t < T; ++t) {
            // context length min(max_order, t+1) - 1, ending just before t
            std::size_t ctx_len = std::min<std::size_t>(max_order - 1, t);
            transitions.push_back({code.substr(t - ctx_len, ctx_len), chain[t], value[t]});
        }
    }
    return transitions;
}

struct QEntry {
    double value_sum = 0.0;
    long long visits = 0;

    double q_hat() const { return visits == 0 ? 0.0 : value_sum / static_cast<double>(visits); }
};

// Monte-Carlo action values: per (state, action), the mean discounted return
// over every occurrence in the training chains, kept as an exact (sum,
// visits) pair. A slot with zero visits means the pair was never seen.
struct QTable {
    double gamma = 1.0;
    std::map<std::string, std::array<QEntry, kBehaviorCount>> states;

    const QEntry* find(std::string_view state, Behavior action) const {
        auto it = states.find(std::string(state));
        if (it == states.end()) return nullptr;
        const QEntry& e = it->second[static_cast<std::size_t>(action)];
        return e.visits > 0 ? &e : nullptr;
    }
};

inline QTable estimate_q(const std::vector<Transition>& transitions, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
    QTable table;
    table.gamma = gamma;
    for (const Transition& tr : transitions) {
        QEntry& e = table.states[tr.state][static_cast<std::size_t>(tr.action)];
        e.value_sum += tr.value;
        e.visits += 1;
    }
    return table;
}

// Visit-count reliability factor sqrt(N) / (sqrt(N) + c): 0 when unvisited,
// approaching 1 as evidence accumulates; c sets the half-way point at
// N = c^2 visits.
inline double confidence_weight(long long n_visits, double c) {
    if (!(c > 0.0)) throw UsageError("confidence constant c must be > 0");
    if (n_visits < 0) throw UsageError("negative visit count");
    if (n_visits == 0) return 0.0;
    double root = std::sqrt(static_cast<double>(n_visits));
    return root / (root + c);
}

// Reliability-aware softmax over actions at `state`:
//   weight(a) = exp(q_hat(s,a) / tau) * confidence_weight(N(s,a), c)
// normalized over all actions. Unvisited actions get weight 0. When nothing
// at the state was ever visited, the empirical conditional `fallback`
// decides instead. exp() is evaluated against the max q_hat so small tau
// cannot overflow; the common factor cancels in the normalization.
inline std::array<double, kBehaviorCount> reliability_softmax(const QTable& table,
                                                              std::string_view state, double tau,
                                                              double c,
                                                              const ConditionalModel& fallback) {
    if (!(tau > 0.0)) throw UsageError("temperature tau must be > 0");
    if (!(c > 0.0)) throw UsageError("confidence constant c must be > 0");
    auto it = table.states.find(std::string(state));
    if (it == table.states.end()) return conditional_distribution(fallback, state);
    const auto& entries = it->second;
    double q_max = 0.0;
    bool any = false;
    for (const QEntry& e : entries) {
        if (e.visits > 0 && (!any || e.q_hat() > q_max)) {
            q_max = e.q_hat();
            any = true;
        }
    }
    if (!any) return conditional_distribution(fallback, state);
    std::array<double, kBehaviorCount> weights{};
    double total = 0.0;
    for (std::size_t i = 0; i < kBehaviorCount; ++i) {
        const QEntry& e = entries[i];
        if (e.visits == 0) continue;
        weights[i] = std::exp((e.q_hat() - q_max) / tau) * confidence_weight(e.visits, c);
        total += weights[i];
    }
    if (total <= 0.0) return conditional_distribution(fallback, state);
    for (double& w : weights) w /= total;
    return weights;
}

}  // namespace rbsteer
