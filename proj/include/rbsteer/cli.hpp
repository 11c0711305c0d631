#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rbsteer/behavior.hpp"
#include "rbsteer/extractor.hpp"
#include "rbsteer/lexicon.hpp"
#include "rbsteer/ngram.hpp"
#include "rbsteer/policy.hpp"
#include "rbsteer/remote.hpp"
#include "rbsteer/reporting.hpp"
#include "rbsteer/rng.hpp"
#include "rbsteer/session.hpp"
#include "rbsteer/steering.hpp"
#include "rbsteer/synthetic.hpp"
#include "rbsteer/trace.hpp"

namespace rbsteer::cli {

namespace fs = std::filesystem;

// Shared flags; subcommand options fall through to these.
struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string out;
    std::string base_url;
    std::string model;
    std::string api_key_env;

    fs::path out_dir() const {
        if (out.empty()) throw UsageError("--out directory is required");
        fs::create_directories(out);
        return fs::path(out);
    }

    std::string api_key() const {
        if (api_key_env.empty()) return "";
        const char* value = std::getenv(api_key_env.c_str());
        if (!value || !*value)
            throw UsageError("environment variable " + api_key_env +
                             " (from --api-key-env) is not set");
        return value;
    }
};

namespace detail {

using nlohmann::json;
using nlohmann::ordered_json;

inline MarkerLexicon load_lexicon_or_default(const std::string& path) {
    return path.empty() ? default_lexicon() : load_lexicon(path);
}

inline std::string item_id(const char* prefix, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%04d", prefix, index);
    return buf;
}

inline std::string sanitize_cell(std::string text) {
    for (char& c : text) {
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return text.empty() ? "-" : text;
}

struct ChainRecord {
    std::string id;
    BehaviorChain chain;
    bool correct = false;
};

inline std::vector<ChainRecord> load_chain_records(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open chain file: " + path.string());
    std::vector<ChainRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
        }
        ChainRecord rec;
        rec.id = rbsteer::detail::require_string(j, "id", path.string(), line_no);
        std::string code = rbsteer::detail::require_string(j, "chain", path.string(), line_no);
        try {
            rec.chain = parse_chain_code(code);
        } catch (const ParseError& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
        rec.correct = rbsteer::detail::require_bool(j, "correct", path.string(), line_no);
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<MockScriptEntry> load_mock_script(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mock script: " + path.string());
    std::vector<MockScriptEntry> script;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line_no, std::string("invalid JSON: ") + e.what());
        }
        MockScriptEntry entry;
        entry.segment = rbsteer::detail::require_string(j, "segment", path.string(), line_no);
        if (auto it = j.find("finished"); it != j.end()) {
            if (!it->is_boolean())
                throw ParseError(path.string(), line_no, "field \"finished\" must be a boolean");
            entry.finished = it->get<bool>();
        }
        if (auto it = j.find("expect_prefix"); it != j.end()) {
            if (!it->is_string())
                throw ParseError(path.string(), line_no,
                                 "field \"expect_prefix\" must be a string");
            entry.expect_prefix = it->get<std::string>();
        }
        script.push_back(std::move(entry));
    }
    if (script.empty()) throw ParseError(path.string() + ": mock script has no entries");
    return script;
}

inline std::vector<std::string> load_prompts(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open prompt file: " + path.string());
    std::vector<std::string> prompts;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        prompts.emplace_back(stripped);
    }
    if (prompts.empty()) throw ParseError(path.string() + ": prompt file has no prompts");
    return prompts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// extract: corpus -> one chain record per trace.

struct ExtractOptions {
    std::string corpus;
    std::string lexicon;
    bool with_node_texts = false;
};

inline int cmd_extract(const GlobalOptions& global, const ExtractOptions& opt) {
    fs::path out_dir = global.out_dir();
    MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.lexicon);
    Corpus corpus = load_corpus(opt.corpus);
    fs::path chains_path = out_dir / "chains.jsonl";
    std::ofstream out(chains_path, std::ios::binary);
    if (!out) throw IoError("cannot write chain file: " + chains_path.string());
    for (const auto& trace : corpus.traces) {
        auto nodes = extract_control_nodes(trace.reasoning_text, lexicon);
        nlohmann::ordered_json j;
        j["id"] = trace.id;
        j["chain"] = chain_code(chain_of(nodes));
        j["correct"] = trace.correct;
        if (opt.with_node_texts) {
            auto arr = nlohmann::ordered_json::array();
            for (const auto& node : nodes)
                arr.push_back({{"behavior", std::string(1, to_code(node.behavior))},
                               {"text", node.text}});
            j["nodes"] = std::move(arr);
        }
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("failed writing chain file: " + chains_path.string());
    std::cout << "extracted " << corpus.size() << " chains -> " << chains_path.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// stats: n-gram tables, top-k, and subset contrasts.

struct StatsOptions {
    std::string chains;
    std::string corpus;
    std::string lexicon;
    int n = 3;
    int k = 5;
    std::string partition = "none";  // none | correct | length
    int length_threshold = 0;
};

inline int cmd_stats(const GlobalOptions& global, const StatsOptions& opt) {
    fs::path out_dir = global.out_dir();
    if (opt.chains.empty() == opt.corpus.empty())
        throw UsageError("stats needs exactly one of --chains or --corpus");

    std::vector<detail::ChainRecord> records;
    if (!opt.chains.empty()) {
        records = detail::load_chain_records(opt.chains);
    } else {
        MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.lexicon);
        Corpus corpus = load_corpus(opt.corpus);
        for (const auto& trace : corpus.traces)
            records.push_back(
                {trace.id, extract_chain(trace.reasoning_text, lexicon), trace.correct});
    }

    std::map<std::string, std::vector<BehaviorChain>> subsets;
    if (opt.partition == "none") {
        auto& all = subsets["all"];
        for (auto& rec : records) all.push_back(rec.chain);
    } else if (opt.partition == "correct") {
        subsets["correct"];
        subsets["incorrect"];
        for (auto& rec : records)
            subsets[rec.correct ? "correct" : "incorrect"].push_back(rec.chain);
    } else if (opt.partition == "length") {
        if (opt.length_threshold < 1)
            throw UsageError("--length-threshold (>= 1) is required with --partition length");
        subsets["short"];
        subsets["long"];
        for (auto& rec : records)
            subsets[rec.chain.size() <= static_cast<std::size_t>(opt.length_threshold)
                        ? "short"
                        : "long"]
                .push_back(rec.chain);
    } else {
        throw UsageError("unknown partition \"" + opt.partition + "\"");
    }

    SubsetReport report = compare_subsets(subsets, opt.n, static_cast<std::size_t>(opt.k));

    ReportHeader header("stats");
    if (!opt.chains.empty()) header.add("chains", fs::path(opt.chains));
    if (!opt.corpus.empty()) header.add("corpus", fs::path(opt.corpus));
    header.add("n", std::to_string(opt.n));
    header.add("k", std::to_string(opt.k));
    header.add("partition", opt.partition);
    if (opt.partition == "length")
        header.add("length-threshold", std::to_string(opt.length_threshold));

    fs::path stats_path = out_dir / "stats.tsv";
    std::ofstream out(stats_path, std::ios::binary);
    if (!out) throw IoError("cannot write stats file: " + stats_path.string());
    header.write(out);
    out << "label\tpattern\tcount\tper_instance\tnormalized_share\n";
    for (const auto& row : report.rows) {
        out << row.label << '\t' << row.pattern << '\t' << row.count << '\t'
            << format_double(row.per_instance) << '\t' << format_double(row.normalized_share)
            << '\n';
    }
    if (!out) throw IoError("failed writing stats file: " + stats_path.string());

    TextTable table({"label", "pattern", "count", "per-instance", "share"});
    for (const auto& row : report.rows)
        table.add_row({row.label, row.pattern, std::to_string(row.count),
                       format_double(row.per_instance), format_double(row.normalized_share)});
    table.write(std::cout);
    std::cout << "wrote " << stats_path.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// fit: corpus -> policy file.

struct FitOptions {
    std::string corpus;
    std::string lexicon;
    std::string method;  // backoff-empirical | inject-correct | inject-rl
    int n = kDefaultOrder;
    double gamma = kDefaultGamma;
    double tau = kDefaultTau;
    double c = kDefaultConfidence;
};

inline InjectionPolicy fit_policy_for(const FitOptions& opt, const Corpus& corpus,
                                      const MarkerLexicon& lexicon) {
    auto kind = policy_kind_from(opt.method);
    if (!kind) throw UsageError("unknown fit method \"" + opt.method + "\"");
    switch (*kind) {
        case PolicyKind::BackoffEmpirical:
            return fit_backoff_empirical(extract_chains(corpus, lexicon), opt.n);
        case PolicyKind::InjectCorrect: return fit_inject_correct(corpus, opt.n, lexicon);
        case PolicyKind::InjectRl:
            return fit_inject_rl(corpus, opt.n, opt.gamma, opt.tau, opt.c, lexicon);
    }
    throw UsageError("unknown fit method");
}

inline int cmd_fit(const GlobalOptions& global, const FitOptions& opt) {
    fs::path out_dir = global.out_dir();
    MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.lexicon);
    Corpus corpus = load_corpus(opt.corpus);
    InjectionPolicy policy = fit_policy_for(opt, corpus, lexicon);
    fs::path policy_path = out_dir / "policy.txt";
    save_policy(policy, policy_path);
    std::cout << "fit " << to_string(policy.kind) << " policy on " << corpus.size()
              << " traces (n=" << policy.order << ") -> " << policy_path.string() << " (hash "
              << hash_file_hex(policy_path) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Steering targets shared by steer, mask-eval, and transfer.

struct SteerOptions {
    std::string policy;
    std::string lexicon;
    std::string prompts;
    std::string mock;
    std::string synthetic_pattern;
    std::string masks;
    int episodes = 200;
    int max_steps = 64;
    int streak = 2;
    std::string marker_strategy = "canonical-first";
    int n = kDefaultOrder;  // order of the default uniform policy (mask-eval)
    bool max_steps_set = false;
};

namespace detail {

struct ItemOutcome {
    std::string id;
    bool ok = false;
    StopReason stop_reason = StopReason::MaxSteps;
    int steps = 0;
    BehaviorChain chain;
    double success = -1.0;  // exact reward on synthetic targets; < 0 otherwise
    std::string error;
};

struct SteerRun {
    std::vector<ItemOutcome> outcomes;
    int failures = 0;
};

// A resolved generator target: which sessions to open and what to call them.
struct SteerTarget {
    enum class Kind { Mock, Remote, Synthetic } kind = Kind::Mock;
    std::vector<std::string> ids;
    std::vector<std::string> prompts;       // Remote: one per id
    std::vector<MockScriptEntry> script;    // Mock: replayed per id
    std::optional<SyntheticSpec> reward;    // Synthetic: ground-truth reward
    std::string tag;                        // label for report rows
};

inline SteerTarget resolve_target(const GlobalOptions& global, const SteerOptions& opt) {
    int generators = (!opt.mock.empty() ? 1 : 0) + (!global.base_url.empty() ? 1 : 0) +
                     (!opt.synthetic_pattern.empty() ? 1 : 0);
    if (generators != 1)
        throw UsageError(
            "choose exactly one generator: --mock SCRIPT, --base-url URL, or "
            "--synthetic-pattern CODE");
    SteerTarget target;
    if (!opt.synthetic_pattern.empty()) {
        SyntheticSpec spec;
        spec.rewarded_pattern = opt.synthetic_pattern;
        try {
            validate_spec(spec);
        } catch (const ParseError& e) {
            throw UsageError(std::string("bad --synthetic-pattern: ") + e.what());
        }
        if (opt.episodes < 1) throw UsageError("--episodes must be >= 1");
        target.kind = SteerTarget::Kind::Synthetic;
        target.reward = spec;
        target.tag = "synthetic-" + opt.synthetic_pattern;
        for (int i = 0; i < opt.episodes; ++i) target.ids.push_back(item_id("ep", i));
        return target;
    }
    if (opt.prompts.empty()) throw UsageError("--prompts is required with --mock or --base-url");
    target.prompts = load_prompts(opt.prompts);
    for (std::size_t i = 0; i < target.prompts.size(); ++i)
        target.ids.push_back(item_id("prompt", static_cast<int>(i + 1)));
    target.tag = fs::path(opt.prompts).stem().string();
    if (!opt.mock.empty()) {
        target.kind = SteerTarget::Kind::Mock;
        target.script = load_mock_script(opt.mock);
    } else {
        target.kind = SteerTarget::Kind::Remote;
    }
    return target;
}

// Synthetic targets default to the environment's evaluation step budget
// unless the user set a budget explicitly.
inline int effective_max_steps(const SteerTarget& target, const SteerOptions& opt) {
    if (!opt.max_steps_set && target.reward) return target.reward->eval_max_steps;
    return opt.max_steps;
}

// Runs every item through its own session, records per-item outcomes, and
// (optionally) writes one transcript per item. Partial transcripts are kept:
// a failed item still writes everything it produced before the error.
inline SteerRun run_target(const SteerTarget& target, const GlobalOptions& global,
                           const InjectionPolicy& policy, std::span<const MaskRule> extra_rules,
                           const MarkerLexicon& lexicon, const SteerOptions& opt,
                           std::uint64_t seed, const fs::path& transcript_dir,
                           bool save_transcripts) {
    auto strategy = marker_strategy_from(opt.marker_strategy);
    if (!strategy) throw UsageError("unknown marker strategy \"" + opt.marker_strategy + "\"");
    RemoteConfig remote;
    if (target.kind == SteerTarget::Kind::Remote) {
        remote.base_url = global.base_url;
        remote.model = global.model;
        remote.api_key = global.api_key();
    }
    if (save_transcripts) fs::create_directories(transcript_dir);
    const int max_steps = effective_max_steps(target, opt);
    SteerRun run;
    for (std::size_t i = 0; i < target.ids.size(); ++i) {
        SteeringConfig config;
        config.max_steps = max_steps;
        config.stop_on_conclusion_streak = opt.streak;
        config.marker_strategy = *strategy;
        config.policy = &policy;
        config.lexicon = &lexicon;
        config.seed = seed;
        config.stream_name = target.ids[i];
        std::unique_ptr<GeneratorSession> session;
        switch (target.kind) {
            case SteerTarget::Kind::Mock: session = open_mock_session(target.script); break;
            case SteerTarget::Kind::Remote:
                session = open_remote_session(remote, target.prompts[i]);
                break;
            case SteerTarget::Kind::Synthetic:
                session = std::make_unique<SyntheticSession>();
                break;
        }
        ItemOutcome outcome;
        outcome.id = target.ids[i];
        try {
            SteeredTranscript t = mask_steer(*session, config, extra_rules);
            outcome.ok = true;
            outcome.stop_reason = t.stop_reason;
            outcome.steps = static_cast<int>(t.events.size());
            outcome.chain = t.final_chain;
            if (target.reward)
                outcome.success = success_probability(*target.reward, t.final_chain);
            if (save_transcripts)
                save_transcript(t, transcript_dir / (target.ids[i] + ".jsonl"));
        } catch (const SteerError& e) {
            outcome.ok = false;
            outcome.steps = e.step() - 1;
            outcome.chain = e.partial().final_chain;
            outcome.error = e.what();
            if (save_transcripts)
                save_transcript(e.partial(), transcript_dir / (target.ids[i] + ".jsonl"));
            ++run.failures;
        }
        run.outcomes.push_back(std::move(outcome));
    }
    return run;
}

struct RunStats {
    std::size_t items = 0;
    int failures = 0;
    double mean_success = -1.0;  // < 0 when the target has no reward function
    double hit_rate = -1.0;
    double mean_length = 0.0;
};

inline RunStats summarize_run(const SteerRun& run, const SteerTarget& target) {
    RunStats stats;
    stats.items = run.outcomes.size();
    stats.failures = run.failures;
    if (run.outcomes.empty()) return stats;
    double length_sum = 0.0;
    for (const auto& o : run.outcomes) length_sum += static_cast<double>(o.chain.size());
    stats.mean_length = length_sum / static_cast<double>(run.outcomes.size());
    if (target.reward) {
        double success_sum = 0.0;
        long long hits = 0;
        for (const auto& o : run.outcomes) {
            success_sum += success_probability(*target.reward, o.chain);
            if (contains_pattern(o.chain, target.reward->rewarded_pattern)) ++hits;
        }
        stats.mean_success = success_sum / static_cast<double>(run.outcomes.size());
        stats.hit_rate =
            static_cast<double>(hits) / static_cast<double>(run.outcomes.size());
    }
    return stats;
}

// Seed for run r (1-based). Run 1 uses the user seed unchanged so that a
// single-run command and the first run of a multi-run command coincide.
inline std::uint64_t run_seed(std::uint64_t seed, int run) {
    return run == 1 ? seed : derive_seed(seed, "run/" + std::to_string(run));
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

// Sample standard deviation (n-1 denominator); zero for a single value.
inline MeanStd mean_std(const std::vector<double>& values) {
    MeanStd result;
    if (values.empty()) return result;
    double sum = 0.0;
    for (double v : values) sum += v;
    result.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - result.mean) * (v - result.mean);
        result.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return result;
}

inline void write_steer_summary(const fs::path& path, const ReportHeader& header,
                                const SteerRun& run, bool with_success) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write summary file: " + path.string());
    header.write(out);
    out << "id\tstatus\tstop_reason\tsteps\tchain\tsuccess\terror\n";
    for (const auto& o : run.outcomes) {
        out << o.id << '\t' << (o.ok ? "ok" : "failed") << '\t'
            << (o.ok ? to_string(o.stop_reason) : "-") << '\t' << o.steps << '\t'
            << (o.chain.empty() ? "-" : chain_code(o.chain)) << '\t'
            << (with_success && o.success >= 0.0 ? format_double(o.success) : "-") << '\t'
            << sanitize_cell(o.error) << '\n';
    }
    if (!out) throw IoError("failed writing summary file: " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// steer / mask-eval.

inline int run_steer_command(const GlobalOptions& global, const SteerOptions& opt,
                             bool is_mask_eval) {
    fs::path out_dir = global.out_dir();
    MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.lexicon);

    InjectionPolicy policy;
    if (!opt.policy.empty()) {
        policy = load_policy(opt.policy);
    } else if (is_mask_eval) {
        policy = uniform_policy(opt.n);  // mask-eval defaults to the uniform reference
    } else {
        throw UsageError("steer requires --policy");
    }

    if (is_mask_eval && opt.masks.empty())
        throw UsageError("mask-eval requires --masks (a rule-less file degrades to steer)");
    std::vector<MaskRule> extra_rules;
    if (!opt.masks.empty()) extra_rules = load_mask_rules(opt.masks, policy.order);

    detail::SteerTarget target = detail::resolve_target(global, opt);
    detail::SteerRun run = detail::run_target(target, global, policy, extra_rules, lexicon, opt,
                                              global.seed, out_dir / "transcripts", true);
    detail::RunStats stats = detail::summarize_run(run, target);

    ReportHeader header(is_mask_eval ? "mask-eval" : "steer");
    if (!opt.policy.empty())
        header.add("policy", fs::path(opt.policy));
    else
        header.add("policy", "uniform(n=" + std::to_string(opt.n) + ")");
    if (!opt.masks.empty()) header.add("masks", fs::path(opt.masks));
    if (!opt.mock.empty()) header.add("mock", fs::path(opt.mock));
    if (!opt.prompts.empty()) header.add("prompts", fs::path(opt.prompts));
    if (!global.base_url.empty()) header.add("base-url", global.base_url);
    if (!global.model.empty()) header.add("model", global.model);
    if (!opt.synthetic_pattern.empty()) {
        header.add("synthetic-pattern", opt.synthetic_pattern);
        header.add("episodes", std::to_string(opt.episodes));
    }
    header.add("seed", std::to_string(global.seed));
    header.add("max-steps", std::to_string(detail::effective_max_steps(target, opt)));
    header.add("conclusion-streak", std::to_string(opt.streak));
    header.add("marker-strategy", opt.marker_strategy);
    header.add("items", std::to_string(stats.items));
    header.add("failures", std::to_string(stats.failures));
    if (stats.mean_success >= 0.0) {
        header.add("mean-success", format_double(stats.mean_success));
        header.add("pattern-hit-rate", format_double(stats.hit_rate));
    }

    int exit_code = run.failures == 0 ? 0 : 1;
    if (is_mask_eval) {
        // Count masked patterns in everything that was produced; the whole
        // point of masked steering is that these counts are all zero.
        fs::path report_path = out_dir / "mask_report.tsv";
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw IoError("cannot write mask report: " + report_path.string());
        header.write(out);
        out << "pattern\toccurrences\titems\n";
        for (const auto& rule : extra_rules) {
            std::string pattern = rule.prefix + to_code(rule.banned);
            long long occurrences = 0;
            for (const auto& o : run.outcomes) {
                std::string code = chain_code(o.chain);
                for (std::size_t t = 0; t + pattern.size() <= code.size(); ++t)
                    if (code.compare(t, pattern.size(), pattern) == 0) ++occurrences;
            }
            out << pattern << '\t' << occurrences << '\t' << run.outcomes.size() << '\n';
            if (occurrences > 0) exit_code = 1;
        }
        if (!out) throw IoError("failed writing mask report: " + report_path.string());
        std::cout << "wrote " << report_path.string() << '\n';
    }

    detail::write_steer_summary(out_dir / "steer_summary.tsv", header, run,
                                target.reward.has_value());
    std::cout << "steered " << stats.items << " items (" << stats.failures << " failed) -> "
              << (out_dir / "steer_summary.tsv").string() << '\n';
    return exit_code;
}

// ---------------------------------------------------------------------------
// transfer: fit on a source corpus, steer the target, tag the report.

struct TransferOptions {
    std::string source;
    std::string source_tag;
    std::string target_tag;
    std::string method = "inject-rl";
    int n = kDefaultOrder;
    double gamma = kDefaultGamma;
    double tau = kDefaultTau;
    double c = kDefaultConfidence;
    int runs = 1;
    SteerOptions steer;  // target selection and steering knobs
};

inline int cmd_transfer(const GlobalOptions& global, const TransferOptions& opt) {
    fs::path out_dir = global.out_dir();
    MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.steer.lexicon);
    if (opt.runs < 1) throw UsageError("--runs must be >= 1");

    Corpus corpus = load_corpus(opt.source);
    FitOptions fit_opt;
    fit_opt.method = opt.method;
    fit_opt.n = opt.n;
    fit_opt.gamma = opt.gamma;
    fit_opt.tau = opt.tau;
    fit_opt.c = opt.c;
    InjectionPolicy policy = fit_policy_for(fit_opt, corpus, lexicon);
    fs::path policy_path = out_dir / "policy.txt";
    save_policy(policy, policy_path);

    std::vector<MaskRule> extra_rules;
    if (!opt.steer.masks.empty())
        extra_rules = load_mask_rules(opt.steer.masks, policy.order);

    detail::SteerTarget target = detail::resolve_target(global, opt.steer);
    std::string source_tag =
        opt.source_tag.empty() ? fs::path(opt.source).stem().string() : opt.source_tag;
    std::string target_tag = opt.target_tag.empty() ? target.tag : opt.target_tag;

    // Run 1 writes transcripts and the per-item summary; extra runs (derived
    // seeds) only feed the aggregate table.
    InjectionPolicy baseline = uniform_policy(opt.n);
    std::vector<double> fitted_success, baseline_success;
    detail::RunStats fitted_first, baseline_first;
    int total_failures = 0;
    detail::SteerRun first_run;
    for (int r = 1; r <= opt.runs; ++r) {
        std::uint64_t seed = detail::run_seed(global.seed, r);
        detail::SteerRun run = detail::run_target(target, global, policy, extra_rules, lexicon,
                                                  opt.steer, seed, out_dir / "transcripts",
                                                  r == 1);
        detail::RunStats stats = detail::summarize_run(run, target);
        total_failures += stats.failures;
        if (target.reward) fitted_success.push_back(stats.mean_success);
        if (r == 1) {
            fitted_first = stats;
            first_run = std::move(run);
        }
        if (target.reward) {
            detail::SteerRun base = detail::run_target(target, global, baseline, extra_rules,
                                                       lexicon, opt.steer, seed,
                                                       out_dir / "transcripts", false);
            detail::RunStats base_stats = detail::summarize_run(base, target);
            baseline_success.push_back(base_stats.mean_success);
            if (r == 1) baseline_first = base_stats;
        }
    }

    ReportHeader header("transfer");
    header.add("source", fs::path(opt.source));
    header.add("source-tag", source_tag);
    header.add("target-tag", target_tag);
    header.add("method", opt.method);
    header.add("n", std::to_string(opt.n));
    header.add("gamma", format_double(opt.gamma));
    header.add("tau", format_double(opt.tau));
    header.add("c", format_double(opt.c));
    header.add("runs", std::to_string(opt.runs));
    header.add("seed", std::to_string(global.seed));
    header.add("policy", policy_path);
    if (!opt.steer.masks.empty()) header.add("masks", fs::path(opt.steer.masks));
    if (!opt.steer.mock.empty()) header.add("mock", fs::path(opt.steer.mock));
    if (!opt.steer.prompts.empty()) header.add("prompts", fs::path(opt.steer.prompts));
    if (!opt.steer.synthetic_pattern.empty()) {
        header.add("synthetic-pattern", opt.steer.synthetic_pattern);
        header.add("episodes", std::to_string(opt.steer.episodes));
    }
    header.add("max-steps", std::to_string(detail::effective_max_steps(target, opt.steer)));
    header.add("conclusion-streak", std::to_string(opt.steer.streak));
    header.add("marker-strategy", opt.steer.marker_strategy);

    detail::write_steer_summary(out_dir / "steer_summary.tsv", header, first_run,
                                target.reward.has_value());

    fs::path report_path = out_dir / "transfer_report.tsv";
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw IoError("cannot write transfer report: " + report_path.string());
    header.write(out);
    out << "policy\ttarget\truns\titems\tfailures\tmean_success\tsuccess_std\thit_rate\t"
           "mean_length\n";
    auto row = [&](const std::string& name, const detail::RunStats& stats,
                   const std::vector<double>& successes) {
        out << name << '\t' << target_tag << '\t' << opt.runs << '\t' << stats.items << '\t'
            << stats.failures << '\t';
        if (target.reward) {
            detail::MeanStd ms = detail::mean_std(successes);
            out << format_double(ms.mean) << '\t' << format_double(ms.std) << '\t'
                << format_double(stats.hit_rate) << '\t';
        } else {
            out << "-\t-\t-\t";
        }
        out << format_double(stats.mean_length) << '\n';
    };
    row(source_tag, fitted_first, fitted_success);
    if (target.reward) row("uniform", baseline_first, baseline_success);
    if (!out) throw IoError("failed writing transfer report: " + report_path.string());

    if (target.reward) {
        detail::MeanStd fitted_ms = detail::mean_std(fitted_success);
        detail::MeanStd baseline_ms = detail::mean_std(baseline_success);
        std::cout << "transfer " << source_tag << " -> " << target_tag << ": success "
                  << format_double(fitted_ms.mean) << " vs uniform "
                  << format_double(baseline_ms.mean) << '\n';
    } else {
        std::cout << "transfer " << source_tag << " -> " << target_tag << ": "
                  << fitted_first.items << " items (" << fitted_first.failures << " failed)\n";
    }
    std::cout << "wrote " << report_path.string() << '\n';
    return total_failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// gamma-sweep: refit at several discounts, evaluate each on the target.

struct GammaSweepOptions {
    std::string corpus;
    std::string lexicon;
    std::string gammas = "1,0.99,0.98,0.96";
    std::string target_pattern;
    int episodes = 500;
    int runs = 1;
    int n = kDefaultOrder;
    double tau = kDefaultTau;
    double c = kDefaultConfidence;
};

inline int cmd_gamma_sweep(const GlobalOptions& global, const GammaSweepOptions& opt) {
    fs::path out_dir = global.out_dir();
    MarkerLexicon lexicon = detail::load_lexicon_or_default(opt.lexicon);
    if (opt.target_pattern.empty()) throw UsageError("gamma-sweep requires --synthetic-pattern");
    if (opt.episodes < 1) throw UsageError("--episodes must be >= 1");
    if (opt.runs < 1) throw UsageError("--runs must be >= 1");

    std::vector<double> gammas;
    for (std::string_view field : split_fields(opt.gammas, ',')) {
        double g = 0.0;
        if (!parse_double(trim(field), g))
            throw UsageError("bad gamma value \"" + std::string(field) + "\"");
        for (double seen : gammas) {
            if (seen == g) throw UsageError("duplicate gamma value " + format_double(g));
        }
        gammas.push_back(g);
    }
    if (gammas.empty()) throw UsageError("--gammas lists no values");

    SyntheticSpec target;
    target.rewarded_pattern = opt.target_pattern;
    try {
        validate_spec(target);
    } catch (const ParseError& e) {
        throw UsageError(std::string("bad --synthetic-pattern: ") + e.what());
    }

    Corpus corpus = load_corpus(opt.corpus);

    auto evaluate_runs = [&](const InjectionPolicy& policy) {
        std::vector<double> successes;
        double hit_sum = 0.0;
        double length_sum = 0.0;
        for (int r = 1; r <= opt.runs; ++r) {
            EvalResult result = evaluate_policy(target, policy, opt.episodes,
                                                detail::run_seed(global.seed, r));
            successes.push_back(result.mean_success);
            hit_sum += static_cast<double>(result.pattern_hits) /
                       static_cast<double>(result.episodes);
            length_sum += result.mean_length;
        }
        struct Summary {
            detail::MeanStd success;
            double hit_rate;
            double mean_length;
        };
        return Summary{detail::mean_std(successes), hit_sum / opt.runs, length_sum / opt.runs};
    };

    auto baseline = evaluate_runs(uniform_policy(opt.n));

    ReportHeader header("gamma-sweep");
    header.add("corpus", fs::path(opt.corpus));
    header.add("gammas", opt.gammas);
    header.add("target-pattern", opt.target_pattern);
    header.add("episodes", std::to_string(opt.episodes));
    header.add("runs", std::to_string(opt.runs));
    header.add("n", std::to_string(opt.n));
    header.add("tau", format_double(opt.tau));
    header.add("c", format_double(opt.c));
    header.add("seed", std::to_string(global.seed));
    header.add("uniform-baseline", format_double(baseline.success.mean));
    header.add("uniform-baseline-std", format_double(baseline.success.std));

    fs::path report_path = out_dir / "gamma_sweep.tsv";
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw IoError("cannot write gamma sweep report: " + report_path.string());
    header.write(out);
    out << "gamma\tmean_success\tsuccess_std\thit_rate\tmean_length\tdelta_vs_uniform\n";
    TextTable table({"gamma", "success", "std", "hit-rate", "delta"});
    for (double gamma : gammas) {
        InjectionPolicy policy = fit_inject_rl(corpus, opt.n, gamma, opt.tau, opt.c, lexicon);
        auto r = evaluate_runs(policy);
        double delta = r.success.mean - baseline.success.mean;
        out << format_double(gamma) << '\t' << format_double(r.success.mean) << '\t'
            << format_double(r.success.std) << '\t' << format_double(r.hit_rate) << '\t'
            << format_double(r.mean_length) << '\t' << format_double(delta) << '\n';
        table.add_row({format_double(gamma), format_double(r.success.mean),
                       format_double(r.success.std), format_double(r.hit_rate),
                       format_double(delta)});
    }
    if (!out) throw IoError("failed writing gamma sweep report: " + report_path.string());
    table.write(std::cout);
    std::cout << "uniform baseline " << format_double(baseline.success.mean) << '\n';
    std::cout << "wrote " << report_path.string() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring.

inline int run(const std::vector<std::string>& args) {
    CLI::App app{"reasoning-behavior chain extraction, pattern mining, and steering"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI/TOML file");

    GlobalOptions global;
    app.add_option("--seed", global.seed, "run seed; all randomness derives from it");
    app.add_option("--out", global.out, "output directory");
    app.add_option("--base-url", global.base_url, "chat-completions endpoint base URL");
    app.add_option("--model", global.model, "model name for the remote endpoint");
    app.add_option("--api-key-env", global.api_key_env,
                   "environment variable holding the endpoint API key");

    ExtractOptions extract_opt;
    auto* extract = app.add_subcommand("extract", "extract behavior chains from a trace corpus");
    extract->fallthrough();
    extract->add_option("--corpus", extract_opt.corpus, "trace corpus (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    extract->add_option("--lexicon", extract_opt.lexicon, "marker lexicon file (CODE<TAB>phrase)")
        ->check(CLI::ExistingFile);
    extract->add_flag("--with-node-texts", extract_opt.with_node_texts,
                      "include aggregated node texts in the output");

    StatsOptions stats_opt;
    auto* stats = app.add_subcommand("stats", "n-gram pattern statistics over chains");
    stats->fallthrough();
    stats->add_option("--chains", stats_opt.chains, "chain records from `extract`")
        ->check(CLI::ExistingFile);
    stats->add_option("--corpus", stats_opt.corpus, "trace corpus (extracts on the fly)")
        ->check(CLI::ExistingFile);
    stats->add_option("--lexicon", stats_opt.lexicon, "marker lexicon file")
        ->check(CLI::ExistingFile);
    stats->add_option("--n", stats_opt.n, "pattern length")->capture_default_str();
    stats->add_option("--k", stats_opt.k, "top patterns per subset")->capture_default_str();
    stats->add_option("--partition", stats_opt.partition, "subset split: none|correct|length")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "correct", "length"}));
    stats->add_option("--length-threshold", stats_opt.length_threshold,
                      "chains with more nodes than this count as long");

    FitOptions fit_opt;
    auto* fit = app.add_subcommand("fit", "fit an injection policy on a corpus");
    fit->fallthrough();
    fit->add_option("--corpus", fit_opt.corpus, "trace corpus (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    fit->add_option("--lexicon", fit_opt.lexicon, "marker lexicon file")
        ->check(CLI::ExistingFile);
    fit->add_option("--method", fit_opt.method, "backoff-empirical | inject-correct | inject-rl")
        ->required();
    fit->add_option("--n", fit_opt.n, "model order")->capture_default_str();
    fit->add_option("--gamma", fit_opt.gamma, "discount (inject-rl)")->capture_default_str();
    fit->add_option("--tau", fit_opt.tau, "softmax temperature (inject-rl)")
        ->capture_default_str();
    fit->add_option("--c", fit_opt.c, "reliability constant (inject-rl)")->capture_default_str();

    auto add_steer_options = [](CLI::App* cmd, SteerOptions& opt, bool with_policy) {
        cmd->fallthrough();
        if (with_policy) {
            cmd->add_option("--policy", opt.policy, "policy file from `fit`")
                ->check(CLI::ExistingFile);
            cmd->add_option("--lexicon", opt.lexicon, "marker lexicon file")
                ->check(CLI::ExistingFile);
            cmd->add_option("--n", opt.n, "order of the default uniform policy")
                ->capture_default_str();
        }
        cmd->add_option("--prompts", opt.prompts, "prompt file, one prompt per line")
            ->check(CLI::ExistingFile);
        cmd->add_option("--mock", opt.mock, "mock generator script (JSONL)")
            ->check(CLI::ExistingFile);
        cmd->add_option("--synthetic-pattern", opt.synthetic_pattern,
                        "steer the built-in synthetic environment rewarding this pattern");
        cmd->add_option("--episodes", opt.episodes, "episode count for synthetic targets")
            ->capture_default_str();
        cmd->add_option("--masks", opt.masks, "mask rule file: \"<prefix> <banned>\" per line")
            ->check(CLI::ExistingFile);
        cmd->add_option("--max-steps", opt.max_steps, "injection step budget")
            ->capture_default_str();
        cmd->add_option("--streak", opt.streak, "conclusion streak that ends a run")
            ->capture_default_str();
        cmd->add_option("--marker-strategy", opt.marker_strategy,
                        "canonical-first | uniform-random")
            ->capture_default_str()
            ->check(CLI::IsMember({"canonical-first", "uniform-random"}));
    };

    SteerOptions steer_opt;
    auto* steer = app.add_subcommand("steer", "inject behavior markers while generating");
    add_steer_options(steer, steer_opt, true);

    SteerOptions mask_opt;
    auto* mask_eval =
        app.add_subcommand("mask-eval", "steer under mask rules and verify zero violations");
    add_steer_options(mask_eval, mask_opt, true);

    TransferOptions transfer_opt;
    auto* transfer =
        app.add_subcommand("transfer", "fit on a source corpus, steer a different target");
    transfer->fallthrough();
    transfer->add_option("--source", transfer_opt.source, "source trace corpus")
        ->required()
        ->check(CLI::ExistingFile);
    transfer->add_option("--source-tag", transfer_opt.source_tag, "label for the source corpus");
    transfer->add_option("--target-tag", transfer_opt.target_tag, "label for the target");
    transfer->add_option("--lexicon", transfer_opt.steer.lexicon, "marker lexicon file")
        ->check(CLI::ExistingFile);
    transfer->add_option("--method", transfer_opt.method, "fit method")->capture_default_str();
    transfer->add_option("--n", transfer_opt.n, "model order")->capture_default_str();
    transfer->add_option("--gamma", transfer_opt.gamma, "discount")->capture_default_str();
    transfer->add_option("--tau", transfer_opt.tau, "softmax temperature")->capture_default_str();
    transfer->add_option("--c", transfer_opt.c, "reliability constant")->capture_default_str();
    transfer->add_option("--runs", transfer_opt.runs, "evaluation repetitions (derived seeds)")
        ->capture_default_str();
    add_steer_options(transfer, transfer_opt.steer, false);

    GammaSweepOptions sweep_opt;
    auto* sweep = app.add_subcommand("gamma-sweep", "compare discounts on a synthetic target");
    sweep->fallthrough();
    sweep->add_option("--corpus", sweep_opt.corpus, "training corpus")
        ->required()
        ->check(CLI::ExistingFile);
    sweep->add_option("--lexicon", sweep_opt.lexicon, "marker lexicon file")
        ->check(CLI::ExistingFile);
    sweep->add_option("--gammas", sweep_opt.gammas, "comma-separated discounts")
        ->capture_default_str();
    sweep
        ->add_option("--synthetic-pattern", sweep_opt.target_pattern,
                     "rewarded pattern of the target environment")
        ->required();
    sweep->add_option("--episodes", sweep_opt.episodes, "evaluation episodes")
        ->capture_default_str();
    sweep->add_option("--runs", sweep_opt.runs, "evaluation repetitions (derived seeds)")
        ->capture_default_str();
    sweep->add_option("--n", sweep_opt.n, "model order")->capture_default_str();
    sweep->add_option("--tau", sweep_opt.tau, "softmax temperature")->capture_default_str();
    sweep->add_option("--c", sweep_opt.c, "reliability constant")->capture_default_str();

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("rbsteer");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (extract->parsed()) return cmd_extract(global, extract_opt);
        if (stats->parsed()) return cmd_stats(global, stats_opt);
        if (fit->parsed()) return cmd_fit(global, fit_opt);
        if (steer->parsed()) {
            steer_opt.max_steps_set = steer->count("--max-steps") > 0;
            return run_steer_command(global, steer_opt, false);
        }
        if (mask_eval->parsed()) {
            mask_opt.max_steps_set = mask_eval->count("--max-steps") > 0;
            return run_steer_command(global, mask_opt, true);
        }
        if (transfer->parsed()) {
            transfer_opt.steer.max_steps_set = transfer->count("--max-steps") > 0;
            return cmd_transfer(global, transfer_opt);
        }
        if (sweep->parsed()) return cmd_gamma_sweep(global, sweep_opt);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}

inline int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace rbsteer::cli
