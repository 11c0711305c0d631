#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/errors.hpp"
#include "rbsteer/ngram.hpp"

namespace rbsteer {

// Empirical next-behavior model with variable-order back-off. tables[m-1]
// holds raw m-gram counts for m = 1..max_order; conditionals are ratios of
// these counts, so the model is exactly the training corpus statistics.
struct ConditionalModel {
    int max_order = 0;
    std::vector<std::map<std::string, long long>> tables;
};

// Order actually usable at step t (1-based): early steps have short
// histories, so the model shortens to min(max_order, t).
inline int effective_order(int max_order, int step) {
    if (max_order < 1) throw UsageError("model order must be >= 1");
    if (step < 1) throw UsageError("step index must be >= 1");
    return step < max_order ? step : max_order;
}

inline ConditionalModel fit_conditional(const std::vector<BehaviorChain>& chains, int max_order) {
    if (max_order < 1) throw UsageError("model order must be >= 1");
    ConditionalModel model;
    model.max_order = max_order;
    model.tables.resize(max_order);
    for (const BehaviorChain& chain : chains) {
        std::string code = chain_code(chain);
        for (int m = 1; m <= max_order; ++m) {
            for (std::size_t t = 0; t + m <= code.size(); ++t)
                ++model.tables[m - 1][code.substr(t, m)];
        }
    }
    return model;
}

namespace detail {

inline std::array<double, kBehaviorCount> uniform_distribution() {
    std::array<double, kBehaviorCount> d;
    d.fill(1.0 / static_cast<double>(kBehaviorCount));
    return d;
}

}  // namespace detail

// P(next | context) over all six behaviors. context is a behavior code
// string, most recent last; anything longer than max_order - 1 is truncated
// to its tail. Back-off: the longest context suffix with positive
// continuation mass decides, down through the unigram table; a model that
// has seen nothing at all yields the uniform distribution.
inline std::array<double, kBehaviorCount> conditional_distribution(const ConditionalModel& model,
                                                                   std::string_view context) {
    if (model.max_order < 1) throw UsageError("model order must be >= 1");
    std::size_t max_ctx = static_cast<std::size_t>(model.max_order) - 1;
    if (context.size() > max_ctx) context = context.substr(context.size() - max_ctx);
    for (std::size_t len = context.size() + 1; len-- > 0;) {
        std::string_view suffix = context.substr(context.size() - len);
        const auto& table = model.tables[len];  // (len+1)-grams
        std::array<long long, kBehaviorCount> counts{};
        long long mass = 0;
        std::string key(suffix);
        key.push_back('?');
        for (std::size_t i = 0; i < kBehaviorCount; ++i) {
            key.back() = to_code(kAllBehaviors[i]);
            auto it = table.find(key);
            if (it != table.end()) {
                counts[i] = it->second;
                mass += it->second;
            }
        }
        if (mass > 0) {
            std::array<double, kBehaviorCount> dist;
            for (std::size_t i = 0; i < kBehaviorCount; ++i)
                dist[i] = static_cast<double>(counts[i]) / static_cast<double>(mass);
            return dist;
        }
    }
    return detail::uniform_distribution();
}

inline double conditional_prob(const ConditionalModel& model, std::string_view context,
                               Behavior next) {
    return conditional_distribution(model, context)[static_cast<std::size_t>(next)];
}

}  // namespace rbsteer
