#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rbsteer/behavior.hpp"
#include "rbsteer/errors.hpp"
#include "rbsteer/strings.hpp"

namespace rbsteer {

struct MarkerEntry {
    std::string phrase;  // matched verbatim, case-sensitively, at segment onset
    Behavior behavior;
};

// Ordered list of marker phrases. Order matters: when two distinct phrases of
// equal length both match a segment, the earlier entry wins, and the first
// entry listed for a behavior is its canonical marker when steering.
class MarkerLexicon {
  public:
    MarkerLexicon() = default;

    explicit MarkerLexicon(std::vector<MarkerEntry> entries) : entries_(std::move(entries)) {
        std::set<std::string> seen;
        for (const auto& e : entries_) {
            if (e.phrase.empty()) throw UsageError("lexicon: empty marker phrase");
            if (!seen.insert(e.phrase).second)
                throw UsageError("lexicon: duplicate marker phrase \"" + e.phrase + "\"");
        }
    }

    const std::vector<MarkerEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    // First phrase listed for b; nullptr when the lexicon has none.
    const std::string* canonical_phrase(Behavior b) const {
        for (const auto& e : entries_) {
            if (e.behavior == b) return &e.phrase;
        }
        return nullptr;
    }

    std::vector<std::string> phrases_for(Behavior b) const {
        std::vector<std::string> out;
        for (const auto& e : entries_) {
            if (e.behavior == b) out.push_back(e.phrase);
        }
        return out;
    }

  private:
    std::vector<MarkerEntry> entries_;
};

// Built-in marker lexicon. Phrases are verbatim, including capitalization,
// punctuation, trailing spaces, and one in-the-wild misspelling, because they
// are matched against model output exactly as models emit them.
inline const MarkerLexicon& default_lexicon() {
    static const MarkerLexicon lexicon{std::vector<MarkerEntry>{
        // Objective
        {"Okay,", Behavior::Objective},
        {"We need to", Behavior::Objective},
        // Progression
        {"Now", Behavior::Progression},
        {"First,", Behavior::Progression},
        {"Next,", Behavior::Progression},
        {"Hmm,", Behavior::Progression},
        {"Looking at", Behavior::Progression},
        {"Let me compute", Behavior::Progression},
        {"Let me calculate", Behavior::Progression},
        {"So, first, ", Behavior::Progression},
        {"Let's compute", Behavior::Progression},
        {"Let's consider", Behavior::Progression},
        {"Let's think", Behavior::Progression},
        // Summary
        {"In summary", Behavior::Summary},
        // Verification
        {"Let me verify", Behavior::Verification},
        {"But let me check", Behavior::Verification},
        {"But wait", Behavior::Verification},
        {"Wait", Behavior::Verification},
        {"But maybe I should check", Behavior::Verification},
        {"But just to make sure", Behavior::Verification},
        {"Let me re-examine", Behavior::Verification},
        {"Let me check", Behavior::Verification},
        {"But let me just make sure", Behavior::Verification},
        {"But let's check", Behavior::Verification},
        // Exploration
        {"Alternatively", Behavior::Exploration},
        {"But perhaps", Behavior::Exploration},
        {"Hmm. I remember", Behavior::Exploration},
        {"Another idea:", Behavior::Exploration},
        {"We might", Behavior::Exploration},
        {"Maybe", Behavior::Exploration},
        {"What if", Behavior::Exploration},
        {"Another approach", Behavior::Exploration},
        {"Another possibility", Behavior::Exploration},
        // Conclusion
        {"Therefore,", Behavior::Conclusion},
        {"**Final Answer**", Behavior::Conclusion},
        {"Final Answer", Behavior::Conclusion},
        {"So, in conclusion,", Behavior::Conclusion},
        {"In conslusion", Behavior::Conclusion},
        {"So the answer is", Behavior::Conclusion},
        {"Hence", Behavior::Conclusion},
        {"So, answer is", Behavior::Conclusion},
        {"So answer is", Behavior::Conclusion},
        {"So Answer: ", Behavior::Conclusion},
        {"So the correct answer is", Behavior::Conclusion},
        {"Thus, the correct answer is", Behavior::Conclusion},
        {"I'll select option ", Behavior::Conclusion},
        {"So yes, answer ", Behavior::Conclusion},
        {"So the answer should be", Behavior::Conclusion},
        {"So the answer must be", Behavior::Conclusion},
        {"Thus we have", Behavior::Conclusion},
        {"Thus answer", Behavior::Conclusion},
    }};
    return lexicon;
}

// Lexicon file: one entry per line, "CODE<TAB>phrase". The phrase is taken
// verbatim after the first tab (trailing spaces included; some markers end in
// one). '#' lines and blank lines are skipped. File order is kept.
inline MarkerLexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open lexicon file: " + path.string());
    std::vector<MarkerEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path.string(), line_no, "expected CODE<TAB>phrase");
        std::string_view code = trim(std::string_view(line).substr(0, tab));
        std::string phrase = line.substr(tab + 1);
        if (code.size() != 1 || !behavior_from_code(code[0]))
            throw ParseError(path.string(), line_no,
                             "unknown behavior code \"" + std::string(code) + "\"");
        if (phrase.empty()) throw ParseError(path.string(), line_no, "empty marker phrase");
        entries.push_back({std::move(phrase), *behavior_from_code(code[0])});
    }
    try {
        return MarkerLexicon(std::move(entries));
    } catch (const UsageError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

inline void save_lexicon(const MarkerLexicon& lexicon, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write lexicon file: " + path.string());
    for (const auto& e : lexicon.entries()) out << to_code(e.behavior) << '\t' << e.phrase << '\n';
    if (!out) throw IoError("failed writing lexicon file: " + path.string());
}

}  // namespace rbsteer
