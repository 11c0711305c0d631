#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/errors.hpp"

namespace rbsteer {

// Patterns longer than this are rarely interpretable and explode the table.
inline constexpr int kMaxPatternLength = 8;

// Overlapping n-gram window counts over a set of behavior chains.
// A chain of length L contributes max(0, L - n + 1) windows. Patterns are
// keyed by their code string ("PVV"), which keeps iteration order
// lexicographic and therefore deterministic.
struct NgramTable {
    int n = 0;
    std::map<std::string, long long> counts;
    long long total = 0;              // sum over counts
    std::size_t instance_count = 0;   // number of chains counted
};

inline NgramTable count_ngrams(const std::vector<BehaviorChain>& chains, int n) {
    if (n < 1) throw UsageError("n-gram order must be >= 1");
    if (n > kMaxPatternLength)
        throw UsageError("n-gram order must be <= " + std::to_string(kMaxPatternLength));
    NgramTable table;
    table.n = n;
    table.instance_count = chains.size();
    for (const BehaviorChain& chain : chains) {
        if (chain.size() < static_cast<std::size_t>(n)) continue;
        std::string code = chain_code(chain);
        for (std::size_t t = 0; t + n <= code.size(); ++t) {
            ++table.counts[code.substr(t, n)];
            ++table.total;
        }
    }
    return table;
}

// Window-normalized pattern probabilities; together they sum to 1.
inline std::map<std::string, double> empirical_distribution(const NgramTable& table) {
    if (table.total == 0) throw UsageError("n-gram table has no windows");
    std::map<std::string, double> dist;
    for (const auto& [pattern, count] : table.counts)
        dist[pattern] = static_cast<double>(count) / static_cast<double>(table.total);
    return dist;
}

// Average occurrences of `pattern_code` per chain (occurrences, not windows:
// a pattern can appear several times in one chain and each counts).
inline double per_instance_frequency(const std::vector<BehaviorChain>& chains,
                                     std::string_view pattern_code) {
    if (chains.empty()) throw UsageError("per-instance frequency over an empty chain set");
    BehaviorChain pattern = parse_chain_code(pattern_code);  // validates the code
    if (pattern.empty()) throw UsageError("empty pattern");
    if (pattern.size() > kMaxPatternLength)
        throw UsageError("pattern longer than " + std::to_string(kMaxPatternLength));
    long long occurrences = 0;
    for (const BehaviorChain& chain : chains) {
        if (chain.size() < pattern.size()) continue;
        std::string code = chain_code(chain);
        for (std::size_t t = 0; t + pattern_code.size() <= code.size(); ++t) {
            if (code.compare(t, pattern_code.size(), pattern_code) == 0) ++occurrences;
        }
    }
    return static_cast<double>(occurrences) / static_cast<double>(chains.size());
}

struct PatternStat {
    std::string pattern;
    long long count = 0;
    double per_instance = 0.0;  // count / instance_count

    friend bool operator==(const PatternStat&, const PatternStat&) = default;
};

// The k most frequent patterns, count descending; ties broken by
// lexicographic pattern code so the ordering is total and reproducible.
inline std::vector<PatternStat> top_k(const NgramTable& table, std::size_t k) {
    std::vector<PatternStat> stats;
    stats.reserve(table.counts.size());
    for (const auto& [pattern, count] : table.counts) {
        double per_instance = table.instance_count == 0
                                  ? 0.0
                                  : static_cast<double>(count) /
                                        static_cast<double>(table.instance_count);
        stats.push_back({pattern, count, per_instance});
    }
    // counts map iterates lexicographically, so a stable sort on count alone
    // leaves ties in pattern order.
    std::stable_sort(stats.begin(), stats.end(),
                     [](const PatternStat& a, const PatternStat& b) { return a.count > b.count; });
    if (stats.size() > k) stats.resize(k);
    return stats;
}

struct SubsetRow {
    std::string label;
    std::string pattern;
    long long count = 0;
    double per_instance = 0.0;
    double normalized_share = 0.0;  // over the union pattern set, sums to 1 per label
};

struct SubsetReport {
    int n = 0;
    std::vector<std::string> labels;    // sorted
    std::vector<std::string> patterns;  // union of per-label top-k, sorted
    std::vector<SubsetRow> rows;        // label-major, pattern order within
};

// Contrasts pattern usage across labeled subsets: takes each label's top-k
// patterns, forms the union, and reports each label's counts over that union
// with shares renormalized to sum to 1 per label.
inline SubsetReport compare_subsets(const std::map<std::string, std::vector<BehaviorChain>>& subsets,
                                    int n, std::size_t k) {
    if (subsets.empty()) throw UsageError("compare_subsets: no subsets given");
    SubsetReport report;
    report.n = n;
    std::map<std::string, NgramTable> tables;
    std::map<std::string, bool> in_union;
    for (const auto& [label, chains] : subsets) {
        NgramTable table = count_ngrams(chains, n);
        if (table.total == 0)
            throw UsageError("subset \"" + label + "\" has no length-" + std::to_string(n) +
                             " windows");
        for (const auto& stat : top_k(table, k)) in_union[stat.pattern] = true;
        report.labels.push_back(label);
        tables[label] = std::move(table);
    }
    for (const auto& [pattern, _] : in_union) report.patterns.push_back(pattern);
    for (const std::string& label : report.labels) {
        const NgramTable& table = tables[label];
        long long union_total = 0;
        for (const std::string& pattern : report.patterns) {
            auto it = table.counts.find(pattern);
            if (it != table.counts.end()) union_total += it->second;
        }
        for (const std::string& pattern : report.patterns) {
            auto it = table.counts.find(pattern);
            long long count = it == table.counts.end() ? 0 : it->second;
            SubsetRow row;
            row.label = label;
            row.pattern = pattern;
            row.count = count;
            row.per_instance = table.instance_count == 0
                                   ? 0.0
                                   : static_cast<double>(count) /
                                         static_cast<double>(table.instance_count);
            row.normalized_share = union_total == 0 ? 0.0
                                                    : static_cast<double>(count) /
                                                          static_cast<double>(union_total);
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

}  // namespace rbsteer
