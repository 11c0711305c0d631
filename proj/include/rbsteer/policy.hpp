#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/conditional.hpp"
#include "rbsteer/errors.hpp"
#include "rbsteer/extractor.hpp"
#include "rbsteer/rl.hpp"
#include "rbsteer/rng.hpp"
#include "rbsteer/strings.hpp"
#include "rbsteer/trace.hpp"

namespace rbsteer {

inline constexpr int kDefaultOrder = 3;
inline constexpr double kDefaultGamma = 0.98;
inline constexpr double kDefaultTau = 1.0;
inline constexpr double kDefaultConfidence = 10.0;

enum class PolicyKind {
    BackoffEmpirical,  // corpus conditional with back-off
    InjectCorrect,     // conditional fit on correct traces only
    InjectRl,          // reliability-aware softmax over Monte-Carlo action values
};

constexpr std::string_view to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::BackoffEmpirical: return "backoff-empirical";
        case PolicyKind::InjectCorrect: return "inject-correct";
        case PolicyKind::InjectRl: return "inject-rl";
    }
    return "?";
}

inline std::optional<PolicyKind> policy_kind_from(std::string_view name) {
    if (name == "backoff-empirical") return PolicyKind::BackoffEmpirical;
    if (name == "inject-correct") return PolicyKind::InjectCorrect;
    if (name == "inject-rl") return PolicyKind::InjectRl;
    return std::nullopt;
}

// Forbids one behavior whenever the current context equals `prefix` (a code
// string of length order - 1; shorter early-step contexts never match).
struct MaskRule {
    std::string prefix;
    Behavior banned;

    friend bool operator==(const MaskRule&, const MaskRule&) = default;
};

// A next-behavior distribution ready to steer with. `model` is the empirical
// conditional; for the inject-rl kind it doubles as the fallback at states
// the Q-table never saw.
struct InjectionPolicy {
    PolicyKind kind = PolicyKind::BackoffEmpirical;
    int order = kDefaultOrder;
    double gamma = kDefaultGamma;
    double tau = kDefaultTau;
    double c = kDefaultConfidence;
    ConditionalModel model;
    QTable qtable;
    std::vector<MaskRule> masks;
};

namespace detail {

inline void validate_policy_params(int order, double gamma, double tau, double c) {
    if (order < 1) throw UsageError("policy order must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
    if (!(tau > 0.0)) throw UsageError("temperature tau must be > 0");
    if (!(c > 0.0)) throw UsageError("confidence constant c must be > 0");
}

}  // namespace detail

// Maximum-entropy reference policy: an empty empirical model, which backs
// off straight to the uniform distribution at every context.
inline InjectionPolicy uniform_policy(int order = kDefaultOrder) {
    if (order < 1) throw UsageError("policy order must be >= 1");
    InjectionPolicy policy;
    policy.kind = PolicyKind::BackoffEmpirical;
    policy.order = order;
    policy.model = fit_conditional({}, order);
    return policy;
}

inline InjectionPolicy fit_backoff_empirical(const std::vector<BehaviorChain>& chains, int order) {
    if (order < 1) throw UsageError("policy order must be >= 1");
    InjectionPolicy policy;
    policy.kind = PolicyKind::BackoffEmpirical;
    policy.order = order;
    policy.model = fit_conditional(chains, order);
    return policy;
}

// Conditional fit exclusively on the correct traces of the corpus.
inline InjectionPolicy fit_inject_correct(const Corpus& corpus, int order = kDefaultOrder,
                                          const MarkerLexicon& lexicon = default_lexicon()) {
    if (order < 1) throw UsageError("policy order must be >= 1");
    Corpus correct = filter_correct(corpus);
    if (correct.empty()) throw UsageError("corpus has no correct traces to fit on");
    InjectionPolicy policy;
    policy.kind = PolicyKind::InjectCorrect;
    policy.order = order;
    policy.model = fit_conditional(extract_chains(correct, lexicon), order);
    return policy;
}

// Monte-Carlo action values from all traces (correct and incorrect), scored
// by terminal correctness discounted through the chain; sampling uses the
// reliability-aware softmax. The full-corpus conditional rides along as the
// fallback at unseen states.
inline InjectionPolicy fit_inject_rl(const Corpus& corpus, int order = kDefaultOrder,
                                     double gamma = kDefaultGamma, double tau = kDefaultTau,
                                     double c = kDefaultConfidence,
                                     const MarkerLexicon& lexicon = default_lexicon()) {
    detail::validate_policy_params(order, gamma, tau, c);
    if (corpus.empty()) throw UsageError("cannot fit a policy on an empty corpus");
    auto labeled = extract_labeled_chains(corpus, lexicon);
    InjectionPolicy policy;
    policy.kind = PolicyKind::InjectRl;
    policy.order = order;
    policy.gamma = gamma;
    policy.tau = tau;
    policy.c = c;
    policy.qtable = estimate_q(build_trajectories(labeled, order, gamma), gamma);
    std::vector<BehaviorChain> chains;
    chains.reserve(labeled.size());
    for (auto& [chain, _] : labeled) chains.push_back(std::move(chain));
    policy.model = fit_conditional(chains, order);
    return policy;
}

// Code string of the behaviors the policy conditions on: the last
// min(order, t) - 1 entries of the history, where t = history size + 1.
inline std::string context_of(const BehaviorChain& history, int order) {
    std::size_t ctx_len = std::min<std::size_t>(order - 1, history.size());
    std::string code;
    code.reserve(ctx_len);
    for (std::size_t i = history.size() - ctx_len; i < history.size(); ++i)
        code.push_back(to_code(history[i]));
    return code;
}

// Zeroes every behavior banned by a rule whose prefix equals `context`,
// then renormalizes. A context matching no rule (or rules that only ban
// already-zero behaviors) leaves the distribution bit-for-bit unchanged.
// Throws UnsatisfiableMaskError when the rules remove all remaining mass.
inline std::array<double, kBehaviorCount> apply_mask(std::array<double, kBehaviorCount> dist,
                                                     std::string_view context,
                                                     std::span<const MaskRule> rules) {
    double removed = 0.0;
    for (const MaskRule& rule : rules) {
        if (rule.prefix != context) continue;
        double& p = dist[static_cast<std::size_t>(rule.banned)];
        removed += p;
        p = 0.0;
    }
    if (removed == 0.0) return dist;
    double total = 0.0;
    for (double p : dist) total += p;
    if (total <= 0.0)
        throw UnsatisfiableMaskError("mask rules remove all probability mass at context \"" +
                                     std::string(context) + "\"");
    for (double& p : dist) p /= total;
    return dist;
}

// Next-behavior distribution before masking.
inline std::array<double, kBehaviorCount> policy_base_distribution(const InjectionPolicy& policy,
                                                                   const BehaviorChain& history) {
    std::string context = context_of(history, policy.order);
    if (policy.kind == PolicyKind::InjectRl)
        return reliability_softmax(policy.qtable, context, policy.tau, policy.c, policy.model);
    return conditional_distribution(policy.model, context);
}

// Next-behavior distribution with the policy's own mask rules applied.
inline std::array<double, kBehaviorCount> policy_distribution(const InjectionPolicy& policy,
                                                              const BehaviorChain& history) {
    return apply_mask(policy_base_distribution(policy, history),
                      context_of(history, policy.order), policy.masks);
}

inline Behavior sample_next(const InjectionPolicy& policy, const BehaviorChain& history,
                            RngStream& rng) {
    auto dist = policy_distribution(policy, history);
    return kAllBehaviors[rng.categorical(dist)];
}

// ---------------------------------------------------------------------------
// Policy and mask files. Plain line-oriented text: a fixed header followed by
// counted sections. Doubles are written in shortest round-trip form, so
// save/load/save is byte-stable.

namespace detail {

inline std::string context_token(std::string_view context) {
    return context.empty() ? "-" : std::string(context);
}

inline std::string parse_context_token(std::string_view token, const std::string& file,
                                       std::size_t line) {
    if (token == "-") return "";
    for (char ch : token) {
        if (!behavior_from_code(ch))
            throw ParseError(file, line, "bad behavior code in \"" + std::string(token) + "\"");
    }
    return std::string(token);
}

inline Behavior parse_behavior_token(std::string_view token, const std::string& file,
                                     std::size_t line) {
    if (token.size() == 1) {
        if (auto b = behavior_from_code(token[0])) return *b;
    }
    throw ParseError(file, line, "bad behavior code \"" + std::string(token) + "\"");
}

class LineReader {
  public:
    LineReader(std::istream& in, std::string file) : in_(in), file_(std::move(file)) {}

    std::string_view next() {
        if (!std::getline(in_, line_)) throw ParseError(file_, line_no_ + 1, "unexpected end of file");
        ++line_no_;
        if (!line_.empty() && line_.back() == '\r') line_.pop_back();
        return line_;
    }

    // "key value" -> value; enforces the key.
    std::string_view expect(std::string_view key) {
        std::string_view line = next();
        if (!line.starts_with(key) || line.size() <= key.size() || line[key.size()] != ' ')
            throw ParseError(file_, line_no_, "expected \"" + std::string(key) + " ...\"");
        return line.substr(key.size() + 1);
    }

    long long expect_count(std::string_view key) {
        long long n = 0;
        if (!parse_long(expect(key), n) || n < 0)
            throw ParseError(file_, line_no_, "bad count for \"" + std::string(key) + "\"");
        return n;
    }

    double expect_double(std::string_view key) {
        double v = 0.0;
        if (!parse_double(expect(key), v))
            throw ParseError(file_, line_no_, "bad number for \"" + std::string(key) + "\"");
        return v;
    }

    const std::string& file() const { return file_; }
    std::size_t line_no() const { return line_no_; }

  private:
    std::istream& in_;
    std::string file_;
    std::string line_;
    std::size_t line_no_ = 0;
};

}  // namespace detail

inline void save_policy(const InjectionPolicy& policy, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write policy file: " + path.string());
    out << "rbsteer-policy v1\n";
    out << "kind " << to_string(policy.kind) << '\n';
    out << "n " << policy.order << '\n';
    out << "gamma " << format_double(policy.gamma) << '\n';
    out << "tau " << format_double(policy.tau) << '\n';
    out << "c " << format_double(policy.c) << '\n';
    long long count_rows = 0;
    for (const auto& table : policy.model.tables) count_rows += static_cast<long long>(table.size());
    out << "counts " << count_rows << '\n';
    for (const auto& table : policy.model.tables) {
        for (const auto& [gram, count] : table) out << "count " << gram << ' ' << count << '\n';
    }
    long long q_rows = 0;
    for (const auto& [state, entries] : policy.qtable.states) {
        for (const QEntry& e : entries)
            if (e.visits > 0) ++q_rows;
    }
    out << "q " << q_rows << '\n';
    for (const auto& [state, entries] : policy.qtable.states) {
        for (std::size_t i = 0; i < kBehaviorCount; ++i) {
            const QEntry& e = entries[i];
            if (e.visits == 0) continue;
            out << "qrow " << detail::context_token(state) << ' ' << to_code(kAllBehaviors[i])
                << ' ' << format_double(e.value_sum) << ' ' << e.visits << '\n';
        }
    }
    out << "masks " << policy.masks.size() << '\n';
    for (const MaskRule& rule : policy.masks)
        out << "mask " << detail::context_token(rule.prefix) << ' ' << to_code(rule.banned) << '\n';
    if (!out) throw IoError("failed writing policy file: " + path.string());
}

inline InjectionPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open policy file: " + path.string());
    detail::LineReader reader(in, path.string());
    if (reader.next() != "rbsteer-policy v1")
        throw ParseError(path.string(), 1, "not a policy file (bad signature)");
    InjectionPolicy policy;
    std::string_view kind_name = reader.expect("kind");
    auto kind = policy_kind_from(kind_name);
    if (!kind) throw ParseError(path.string(), reader.line_no(),
                                "unknown policy kind \"" + std::string(kind_name) + "\"");
    policy.kind = *kind;
    policy.order = static_cast<int>(reader.expect_count("n"));
    policy.gamma = reader.expect_double("gamma");
    policy.tau = reader.expect_double("tau");
    policy.c = reader.expect_double("c");
    detail::validate_policy_params(policy.order, policy.gamma, policy.tau, policy.c);
    policy.model.max_order = policy.order;
    policy.model.tables.resize(policy.order);
    long long count_rows = reader.expect_count("counts");
    for (long long i = 0; i < count_rows; ++i) {
        auto fields = split_fields(reader.expect("count"));
        long long count = 0;
        if (fields.size() != 2 || !parse_long(fields[1], count) || count < 1)
            throw ParseError(path.string(), reader.line_no(), "bad count row");
        std::string gram = detail::parse_context_token(fields[0], path.string(), reader.line_no());
        if (gram.empty() || gram.size() > static_cast<std::size_t>(policy.order))
            throw ParseError(path.string(), reader.line_no(), "count row length out of range");
        auto [_, inserted] = policy.model.tables[gram.size() - 1].emplace(gram, count);
        if (!inserted) throw ParseError(path.string(), reader.line_no(), "duplicate count row");
    }
    policy.qtable.gamma = policy.gamma;
    long long q_rows = reader.expect_count("q");
    for (long long i = 0; i < q_rows; ++i) {
        auto fields = split_fields(reader.expect("qrow"));
        if (fields.size() != 4) throw ParseError(path.string(), reader.line_no(), "bad q row");
        std::string state = detail::parse_context_token(fields[0], path.string(), reader.line_no());
        if (state.size() > static_cast<std::size_t>(policy.order) - 1)
            throw ParseError(path.string(), reader.line_no(), "q row state longer than n - 1");
        Behavior action = detail::parse_behavior_token(fields[1], path.string(), reader.line_no());
        QEntry entry;
        if (!parse_double(fields[2], entry.value_sum) || !parse_long(fields[3], entry.visits) ||
            entry.visits < 1)
            throw ParseError(path.string(), reader.line_no(), "bad q row");
        QEntry& slot = policy.qtable.states[state][static_cast<std::size_t>(action)];
        if (slot.visits != 0) throw ParseError(path.string(), reader.line_no(), "duplicate q row");
        slot = entry;
    }
    long long mask_rows = reader.expect_count("masks");
    for (long long i = 0; i < mask_rows; ++i) {
        auto fields = split_fields(reader.expect("mask"));
        if (fields.size() != 2) throw ParseError(path.string(), reader.line_no(), "bad mask row");
        MaskRule rule;
        rule.prefix = detail::parse_context_token(fields[0], path.string(), reader.line_no());
        rule.banned = detail::parse_behavior_token(fields[1], path.string(), reader.line_no());
        if (rule.prefix.size() != static_cast<std::size_t>(policy.order) - 1)
            throw ParseError(path.string(), reader.line_no(),
                             "mask prefix length must be n - 1 = " +
                                 std::to_string(policy.order - 1));
        policy.masks.push_back(std::move(rule));
    }
    return policy;
}

// Mask file: one rule per line, "<prefix> <banned-code>", prefix "-" for
// empty (order 1). '#' and blank lines are skipped. Prefix length must be
// order - 1.
inline std::vector<MaskRule> load_mask_rules(const std::filesystem::path& path, int order) {
    if (order < 1) throw UsageError("policy order must be >= 1");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mask file: " + path.string());
    std::vector<MaskRule> rules;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        auto fields = split_fields(stripped);
        if (fields.size() != 2)
            throw ParseError(path.string(), line_no, "expected \"<prefix> <banned-code>\"");
        MaskRule rule;
        rule.prefix = detail::parse_context_token(fields[0], path.string(), line_no);
        rule.banned = detail::parse_behavior_token(fields[1], path.string(), line_no);
        if (rule.prefix.size() != static_cast<std::size_t>(order) - 1)
            throw ParseError(path.string(), line_no,
                             "mask prefix length must be " + std::to_string(order - 1));
        rules.push_back(std::move(rule));
    }
    return rules;
}

}  // namespace rbsteer
