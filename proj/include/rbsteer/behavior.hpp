#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rbsteer/errors.hpp"

namespace rbsteer {

// The six functional roles a reasoning segment can play.
enum class Behavior : std::uint8_t {
    Objective,     // O: restating the goal / setting up the problem
    Progression,   // P: advancing the main line of work
    Summary,       // S: condensing what has been established
    Exploration,   // E: branching into an alternative
    Verification,  // V: checking earlier steps
    Conclusion,    // C: committing to an answer
};

inline constexpr std::size_t kBehaviorCount = 6;

inline constexpr std::array<Behavior, kBehaviorCount> kAllBehaviors = {
    Behavior::Objective,   Behavior::Progression,  Behavior::Summary,
    Behavior::Exploration, Behavior::Verification, Behavior::Conclusion,
};

constexpr char to_code(Behavior b) {
    constexpr const char codes[kBehaviorCount + 1] = "OPSEVC";
    return codes[static_cast<std::size_t>(b)];
}

constexpr std::string_view to_name(Behavior b) {
    constexpr std::string_view names[kBehaviorCount] = {
        "Objective", "Progression", "Summary", "Exploration", "Verification", "Conclusion",
    };
    return names[static_cast<std::size_t>(b)];
}

constexpr std::optional<Behavior> behavior_from_code(char code) {
    switch (code) {
        case 'O': return Behavior::Objective;
        case 'P': return Behavior::Progression;
        case 'S': return Behavior::Summary;
        case 'E': return Behavior::Exploration;
        case 'V': return Behavior::Verification;
        case 'C': return Behavior::Conclusion;
        default: return std::nullopt;
    }
}

// Behavior sequence of one reasoning trace, in order of appearance.
using BehaviorChain = std::vector<Behavior>;

inline std::string chain_code(const BehaviorChain& chain) {
    std::string s;
    s.reserve(chain.size());
    for (Behavior b : chain) s.push_back(to_code(b));
    return s;
}

inline BehaviorChain parse_chain_code(std::string_view code) {
    BehaviorChain chain;
    chain.reserve(code.size());
    for (char c : code) {
        auto b = behavior_from_code(c);
        if (!b) throw ParseError("unknown behavior code '" + std::string(1, c) + "'");
        chain.push_back(*b);
    }
    return chain;
}

}  // namespace rbsteer
