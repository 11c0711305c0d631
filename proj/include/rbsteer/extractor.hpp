#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/lexicon.hpp"
#include "rbsteer/strings.hpp"
#include "rbsteer/trace.hpp"

namespace rbsteer {

// One aggregated reasoning step: a behavior plus the text it spans.
struct ControlNode {
    Behavior behavior;
    std::string text;

    friend bool operator==(const ControlNode&, const ControlNode&) = default;
};

// Splits reasoning text on the exact delimiter "\n\n". Segments are trimmed;
// segments that are empty after trimming are dropped. Order is preserved.
inline std::vector<std::string> segment_reasoning(std::string_view text) {
    std::vector<std::string> segments;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t next = text.find("\n\n", pos);
        std::string_view raw =
            next == std::string_view::npos ? text.substr(pos) : text.substr(pos, next - pos);
        std::string_view seg = trim(raw);
        if (!seg.empty()) segments.emplace_back(seg);
        if (next == std::string_view::npos) break;
        pos = next + 2;
    }
    return segments;
}

namespace detail {

inline bool ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool ascii_alnum(char c) { return ascii_alpha(c) || (c >= '0' && c <= '9'); }

}  // namespace detail

// Matches marker phrases at segment onset (after leading whitespace),
// case-sensitively and verbatim. A phrase that ends in a letter must be
// followed by end-of-segment or a non-alphanumeric character, so "Now" does
// not fire inside "Nowhere". The longest matching phrase wins; among equal
// lengths, the one listed earlier in the lexicon. Returns nullopt when no
// phrase matches.
inline std::optional<Behavior> classify_segment(std::string_view segment,
                                                const MarkerLexicon& lexicon) {
    std::string_view onset = trim_left(segment);
    const MarkerEntry* best = nullptr;
    for (const auto& e : lexicon.entries()) {
        const std::string& phrase = e.phrase;
        if (!onset.starts_with(phrase)) continue;
        if (detail::ascii_alpha(phrase.back()) && onset.size() > phrase.size() &&
            detail::ascii_alnum(onset[phrase.size()]))
            continue;
        if (!best || phrase.size() > best->phrase.size()) best = &e;
    }
    if (!best) return std::nullopt;
    return best->behavior;
}

// Aggregates segments into control nodes. The running behavior starts as
// Objective with empty text. A segment with no marker is appended to the
// current node's text; a marked segment closes the current node (if it has
// any text) and opens a new one. Empty input yields no nodes.
inline std::vector<ControlNode> extract_control_nodes(
    std::string_view text, const MarkerLexicon& lexicon = default_lexicon()) {
    std::vector<ControlNode> nodes;
    Behavior current = Behavior::Objective;
    std::string current_text;
    for (const std::string& seg : segment_reasoning(text)) {
        auto behavior = classify_segment(seg, lexicon);
        if (!behavior) {
            if (current_text.empty()) {
                current_text = seg;
            } else {
                current_text += ' ';
                current_text += seg;
            }
            continue;
        }
        if (!current_text.empty()) nodes.push_back({current, std::move(current_text)});
        current = *behavior;
        current_text = seg;
    }
    if (!current_text.empty()) nodes.push_back({current, std::move(current_text)});
    return nodes;
}

inline BehaviorChain chain_of(const std::vector<ControlNode>& nodes) {
    BehaviorChain chain;
    chain.reserve(nodes.size());
    for (const auto& node : nodes) chain.push_back(node.behavior);
    return chain;
}

inline BehaviorChain extract_chain(std::string_view text,
                                   const MarkerLexicon& lexicon = default_lexicon()) {
    return chain_of(extract_control_nodes(text, lexicon));
}

inline std::vector<BehaviorChain> extract_chains(const Corpus& corpus,
                                                 const MarkerLexicon& lexicon = default_lexicon()) {
    std::vector<BehaviorChain> chains;
    chains.reserve(corpus.traces.size());
    for (const auto& t : corpus.traces) chains.push_back(extract_chain(t.reasoning_text, lexicon));
    return chains;
}

// Chain of each trace paired with its correctness label.
inline std::vector<std::pair<BehaviorChain, bool>> extract_labeled_chains(
    const Corpus& corpus, const MarkerLexicon& lexicon = default_lexicon()) {
    std::vector<std::pair<BehaviorChain, bool>> out;
    out.reserve(corpus.traces.size());
    for (const auto& t : corpus.traces)
        out.emplace_back(extract_chain(t.reasoning_text, lexicon), t.correct);
    return out;
}

}  // namespace rbsteer
