#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rbsteer/errors.hpp"

namespace rbsteer {

// One step of generation: the text produced after the forced prefix, and
// whether the generator considers its reasoning finished. `finished` latches:
// once a session reports true it stays true.
struct Continuation {
    std::string text;
    bool finished = false;
};

// A text generator that can be resumed with a forced continuation prefix.
// Each call appends `forced_prefix` to the generation so far and produces
// the next segment (up to the segment delimiter or the end of reasoning).
class GeneratorSession {
  public:
    virtual ~GeneratorSession() = default;
    virtual Continuation continue_with(const std::string& forced_prefix) = 0;
};

// Scripted mock step. When `expect_prefix` is non-empty, the incoming forced
// prefix must contain it, otherwise the mock reports a script error naming
// the step.
struct MockScriptEntry {
    std::string segment;
    bool finished = false;
    std::string expect_prefix;
};

// Replays a fixed script, one entry per call. Calling past the end of the
// script (without the script having finished the session) is an error: the
// test scenario did not anticipate that many steps.
class MockSession final : public GeneratorSession {
  public:
    explicit MockSession(std::vector<MockScriptEntry> script) : script_(std::move(script)) {}

    Continuation continue_with(const std::string& forced_prefix) override {
        ++step_;
        if (finished_) return {"", true};
        if (step_ > script_.size()) throw MockScriptError("script exhausted", step_);
        const MockScriptEntry& entry = script_[step_ - 1];
        if (!entry.expect_prefix.empty() &&
            forced_prefix.find(entry.expect_prefix) == std::string::npos)
            throw MockScriptError("forced prefix \"" + forced_prefix +
                                      "\" does not contain expected \"" + entry.expect_prefix +
                                      "\"",
                                  step_);
        finished_ = entry.finished;
        return {entry.segment, entry.finished};
    }

    std::size_t steps_taken() const { return step_; }

  private:
    std::vector<MockScriptEntry> script_;
    std::size_t step_ = 0;
    bool finished_ = false;
};

inline std::unique_ptr<GeneratorSession> open_mock_session(std::vector<MockScriptEntry> script) {
    return std::make_unique<MockSession>(std::move(script));
}

}  // namespace rbsteer
