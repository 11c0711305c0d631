#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "rbsteer/extractor.hpp"
#include "rbsteer/lexicon.hpp"

#include "extraction_fixtures.hpp"

using namespace rbsteer;

TEST_CASE("behavior codes round-trip in enum order") {
    REQUIRE(kBehaviorCount == 6);
    const char codes[] = {'O', 'P', 'S', 'E', 'V', 'C'};
    for (int i = 0; i < kBehaviorCount; ++i) {
        Behavior b = kAllBehaviors[i];
        REQUIRE(to_code(b) == codes[i]);
        REQUIRE(behavior_from_code(codes[i]) == b);
    }
    REQUIRE_FALSE(behavior_from_code('X').has_value());
    REQUIRE_FALSE(behavior_from_code('o').has_value());
    REQUIRE(parse_chain_code("OPSEVC").size() == 6);
    REQUIRE(chain_code(parse_chain_code("OVVC")) == "OVVC");
    REQUIRE_THROWS_AS(parse_chain_code("OXC"), ParseError);
}

TEST_CASE("segment_reasoning splits on the exact double-newline delimiter") {
    REQUIRE(segment_reasoning("").empty());
    REQUIRE(segment_reasoning("one").size() == 1);
    REQUIRE(segment_reasoning("a\n\nb") == std::vector<std::string>{"a", "b"});
    // Single newlines do not split.
    REQUIRE(segment_reasoning("a\nb") == std::vector<std::string>{"a\nb"});
    // Runs of blank segments are dropped, order preserved.
    REQUIRE(segment_reasoning("a\n\n\n\nb") == std::vector<std::string>{"a", "b"});
    REQUIRE(segment_reasoning("\n\na\n\n") == std::vector<std::string>{"a"});
    // Segments are trimmed.
    REQUIRE(segment_reasoning("  a  \n\n\tb\t") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("classify_segment maps marker phrases to behaviors") {
    const MarkerLexicon& lex = default_lexicon();
    REQUIRE(classify_segment("Wait, no", lex) == Behavior::Verification);
    REQUIRE(classify_segment("Alternatively we could", lex) == Behavior::Exploration);
    REQUIRE(classify_segment("**Final Answer** 7", lex) == Behavior::Conclusion);
    REQUIRE(classify_segment("Okay, so", lex) == Behavior::Objective);
    REQUIRE(classify_segment("In summary: done", lex) == Behavior::Summary);
    REQUIRE(classify_segment("Next, simplify", lex) == Behavior::Progression);
    REQUIRE_FALSE(classify_segment("no marker here", lex).has_value());
    // Onset means after leading whitespace only.
    REQUIRE(classify_segment("  \t Wait a second", lex) == Behavior::Verification);
    REQUIRE_FALSE(classify_segment("so Wait is mid-segment", lex).has_value());
    // Case-sensitive.
    REQUIRE_FALSE(classify_segment("wait lowercase", lex).has_value());
}

TEST_CASE("classify_segment longest match wins across categories") {
    const MarkerLexicon& lex = default_lexicon();
    REQUIRE(classify_segment("But wait, hmm", lex) == Behavior::Verification);
    REQUIRE(classify_segment("Hmm, next", lex) == Behavior::Progression);
    REQUIRE(classify_segment("Hmm. I remember now", lex) == Behavior::Exploration);
    // A shorter phrase in a custom lexicon loses to a longer one regardless of
    // listing order. (Two *distinct* phrases of equal length can never both
    // match one onset, so longest-match fully determines the winner.)
    MarkerLexicon custom{std::vector<MarkerEntry>{
        {"Check this twice", Behavior::Verification},
        {"Check", Behavior::Progression},
    }};
    REQUIRE(classify_segment("Check this twice, ok", custom) == Behavior::Verification);
    REQUIRE(classify_segment("Check this once", custom) == Behavior::Progression);
    MarkerLexicon reversed{std::vector<MarkerEntry>{
        {"Check", Behavior::Progression},
        {"Check this twice", Behavior::Verification},
    }};
    REQUIRE(classify_segment("Check this twice, ok", reversed) == Behavior::Verification);
}

TEST_CASE("boundary rule: letter-final phrases need a non-alphanumeric successor") {
    const MarkerLexicon& lex = default_lexicon();
    REQUIRE_FALSE(classify_segment("Nowhere to be found", lex).has_value());
    REQUIRE_FALSE(classify_segment("Waiting it out", lex).has_value());
    REQUIRE_FALSE(classify_segment("Wait2 seconds", lex).has_value());
    REQUIRE(classify_segment("Now", lex) == Behavior::Progression);
    REQUIRE(classify_segment("Now.", lex) == Behavior::Progression);
    REQUIRE(classify_segment("Wait—no", lex) == Behavior::Verification);
    // Phrases ending in punctuation have no successor requirement.
    REQUIRE(classify_segment("Okay,then", lex) == Behavior::Objective);
    REQUIRE(classify_segment("Hence5", lex) == std::nullopt);
}

TEST_CASE("extract_control_nodes matches every hand-traced fixture") {
    for (const auto& fixture : rbsteer::testing::extraction_fixtures()) {
        INFO("fixture: " << fixture.name);
        auto nodes = extract_control_nodes(fixture.text);
        REQUIRE(nodes == rbsteer::testing::expected_nodes(fixture));
    }
}

TEST_CASE("fixture suite covers the required shapes") {
    const auto& fixtures = rbsteer::testing::extraction_fixtures();
    REQUIRE(fixtures.size() >= 20);
    bool seen[kBehaviorCount] = {};
    for (const auto& f : fixtures)
        for (const auto& [code, text] : f.expected) seen[static_cast<int>(*behavior_from_code(code))] = true;
    for (int i = 0; i < kBehaviorCount; ++i) {
        INFO("category " << to_code(kAllBehaviors[i]));
        REQUIRE(seen[i]);
    }
}

TEST_CASE("chain_of and extract_chain agree with node extraction") {
    std::string text = "Okay, plan\n\nNow act\n\nWait check\n\nTherefore, done";
    auto nodes = extract_control_nodes(text);
    REQUIRE(chain_code(chain_of(nodes)) == "OPVC");
    REQUIRE(extract_chain(text) == chain_of(nodes));
    for (const auto& node : nodes) REQUIRE_FALSE(node.text.empty());
}

TEST_CASE("default lexicon carries the full built-in phrase table") {
    const MarkerLexicon& lex = default_lexicon();
    REQUIRE(lex.entries().size() == 51);
    REQUIRE(lex.phrases_for(Behavior::Objective).size() == 2);
    REQUIRE(lex.phrases_for(Behavior::Progression).size() == 11);
    REQUIRE(lex.phrases_for(Behavior::Summary).size() == 1);
    REQUIRE(lex.phrases_for(Behavior::Verification).size() == 10);
    REQUIRE(lex.phrases_for(Behavior::Exploration).size() == 9);
    REQUIRE(lex.phrases_for(Behavior::Conclusion).size() == 18);
    REQUIRE(*lex.canonical_phrase(Behavior::Objective) == "Okay,");
    REQUIRE(*lex.canonical_phrase(Behavior::Progression) == "Now");
    REQUIRE(*lex.canonical_phrase(Behavior::Summary) == "In summary");
    REQUIRE(*lex.canonical_phrase(Behavior::Verification) == "Let me verify");
    REQUIRE(*lex.canonical_phrase(Behavior::Exploration) == "Alternatively");
    REQUIRE(*lex.canonical_phrase(Behavior::Conclusion) == "Therefore,");
    // Trailing-space and misspelled phrases are preserved verbatim.
    auto conclusions = lex.phrases_for(Behavior::Conclusion);
    REQUIRE(std::find(conclusions.begin(), conclusions.end(), "So Answer: ") !=
            conclusions.end());
    REQUIRE(std::find(conclusions.begin(), conclusions.end(), "In conslusion") !=
            conclusions.end());
    auto progressions = lex.phrases_for(Behavior::Progression);
    REQUIRE(std::find(progressions.begin(), progressions.end(), "So, first, ") !=
            progressions.end());
}

TEST_CASE("lexicon construction validates entries") {
    REQUIRE_THROWS_AS(MarkerLexicon(std::vector<MarkerEntry>{{"", Behavior::Objective}}),
                      UsageError);
    REQUIRE_THROWS_AS(MarkerLexicon(std::vector<MarkerEntry>{{"Go", Behavior::Objective},
                                                             {"Go", Behavior::Conclusion}}),
                      UsageError);
    // Empty lexicon object is allowed; it simply never matches.
    MarkerLexicon empty;
    REQUIRE_FALSE(classify_segment("Wait", empty).has_value());
    REQUIRE(extract_chain("Wait\n\nWait", empty) == parse_chain_code("O"));
}

TEST_CASE("lexicon file round-trips and reports parse errors by line") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "rbsteer-lexicon-test";
    fs::create_directories(dir);

    fs::path path = dir / "lexicon.tsv";
    save_lexicon(default_lexicon(), path);
    MarkerLexicon reloaded = load_lexicon(path);
    REQUIRE(reloaded.entries().size() == default_lexicon().entries().size());
    for (std::size_t i = 0; i < reloaded.entries().size(); ++i) {
        REQUIRE(reloaded.entries()[i].phrase == default_lexicon().entries()[i].phrase);
        REQUIRE(reloaded.entries()[i].behavior == default_lexicon().entries()[i].behavior);
    }

    fs::path custom = dir / "custom.tsv";
    {
        std::ofstream out(custom, std::ios::binary);
        out << "# comment line\n";
        out << "V\tDouble-check \n";  // trailing space survives
        out << "\n";
        out << "C\tDone.\n";
    }
    MarkerLexicon custom_lex = load_lexicon(custom);
    REQUIRE(custom_lex.entries().size() == 2);
    REQUIRE(custom_lex.entries()[0].phrase == "Double-check ");
    REQUIRE(custom_lex.entries()[0].behavior == Behavior::Verification);
    REQUIRE(classify_segment("Double-check the sum", custom_lex) == Behavior::Verification);

    fs::path bad_code = dir / "bad_code.tsv";
    {
        std::ofstream out(bad_code, std::ios::binary);
        out << "V\tfine\n";
        out << "Z\toops\n";
    }
    try {
        load_lexicon(bad_code);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        REQUIRE(std::string(e.what()).find("bad_code.tsv") != std::string::npos);
        REQUIRE(std::string(e.what()).find("2") != std::string::npos);
    }

    fs::path no_tab = dir / "no_tab.tsv";
    {
        std::ofstream out(no_tab, std::ios::binary);
        out << "V fine\n";
    }
    REQUIRE_THROWS_AS(load_lexicon(no_tab), ParseError);
    REQUIRE_THROWS_AS(load_lexicon(dir / "missing.tsv"), IoError);
    fs::remove_all(dir);
}
