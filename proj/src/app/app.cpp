#include "sqlgan/app.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sqlgan/evaluation.hpp"

#ifndef SQLGAN_VERSION
#define SQLGAN_VERSION "unknown"
#endif

namespace sqlgan::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
        throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, value));
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
        throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, value));
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

bool is_training_key(const std::string& key) {
    static const auto keys = [] {
        std::set<std::string> out;
        for (const auto& [k, v] : TrainingConfig{}.entries()) out.insert(k);
        return out;
    }();
    return keys.contains(key);
}

std::string utc_now() {
    return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                    std::chrono::system_clock::now())));
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
    }
}

// Manifest of one command invocation. Written before any work, rewritten
// with the outputs and end time when the command exits.
class RunManifest {
public:
    RunManifest(std::string command, fs::path out, const AppConfig& cfg) : command_(std::move(command)), out_(out) {
        config_ = json::object();
        for (const auto& [k, v] : cfg.entries()) config_[k] = v;
        config_hash_ = cfg.training.hash();
        seed_ = cfg.training.seed;
        started_ = utc_now();
    }

    const fs::path& dir() const { return out_; }
    fs::path path() const { return out_ / "manifest.json"; }

    void add_input(const fs::path& p) { inputs_[p.string()] = sha256_file(p.string()); }
    // Path relative to the run directory.
    fs::path output(const std::string& name) {
        if (std::find(outputs_.begin(), outputs_.end(), name) == outputs_.end()) outputs_.push_back(name);
        return out_ / name;
    }
    void set_extra(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write(const std::string& status, const std::string& error = {}) const {
        json j;
        j["format_version"] = kRunManifestVersion;
        j["command"] = command_;
        j["status"] = status;
        j["version"] = SQLGAN_VERSION;
        j["seed"] = seed_;
        j["config_hash"] = config_hash_;
        j["config"] = config_;
        j["inputs"] = inputs_;
        json outs = json::object();
        for (const auto& name : outputs_) {
            const fs::path p = out_ / name;
            outs[name] = fs::exists(p) ? sha256_file(p.string()) : "";
        }
        j["outputs"] = outs;
        if (!extra_.empty()) j["details"] = extra_;
        j["started_at"] = started_;
        if (status != "running") j["finished_at"] = utc_now();
        if (!error.empty()) j["error"] = error;
        write_text(path(), j.dump(2) + "\n");
    }

    const std::string& config_hash() const { return config_hash_; }

private:
    std::string command_;
    fs::path out_;
    json config_;
    std::string config_hash_;
    std::uint64_t seed_ = 0;
    std::string started_;
    json inputs_ = json::object();
    std::vector<std::string> outputs_;
    json extra_ = json::object();
};

std::vector<CodeSample> load_input(RunManifest& run, const fs::path& path) {
    auto samples = load_alpaca_jsonl(path);
    run.add_input(path);
    return samples;
}

json label_counts(const std::vector<CodeSample>& samples) {
    json j;
    j["benign"] = count_label(samples, Label::benign);
    j["malicious"] = count_label(samples, Label::malicious);
    j["unlabeled"] = count_label(samples, Label::unlabeled);
    j["total"] = samples.size();
    return j;
}

// A run directory resolves to its <kind>.json checkpoint manifest.
fs::path checkpoint_manifest(const AppConfig& cfg, const std::string& kind) {
    if (cfg.checkpoint.empty()) throw ConfigError("checkpoint is not set (use --checkpoint)");
    fs::path p = cfg.checkpoint;
    if (fs::is_directory(p)) p /= kind + ".json";
    if (!fs::exists(p)) throw ConfigError("checkpoint manifest not found: " + p.string());
    const auto info = read_checkpoint_info(p);
    if (info.kind != kind) {
        throw ConfigError(fmt::format("{} holds a {} checkpoint, expected {}", p.string(), info.kind, kind));
    }
    return p;
}

Vocabulary checkpoint_vocab(RunManifest& run, const fs::path& manifest) {
    const auto info = read_checkpoint_info(manifest);
    const fs::path vocab_path = manifest.parent_path() / info.vocab_file;
    run.add_input(manifest);
    run.add_input(vocab_path);
    return Vocabulary::load(vocab_path);
}

// Prompt i of n cycles over the available prompts.
std::vector<Prompt> take_prompts(const std::vector<Prompt>& pool, std::size_t n) {
    if (n > 0 && pool.empty()) throw ConfigError("no prompts available");
    std::vector<Prompt> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[i % pool.size()]);
    return out;
}

GenerationEvalConfig eval_config(const AppConfig& cfg) {
    return {.max_len = cfg.training.max_gen_len,
            .temperature = cfg.training.temperature,
            .top_k = cfg.training.top_k,
            .seed = cfg.training.seed};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_make_corpus(const AppConfig& cfg, RunManifest& run) {
    const std::uint64_t seed = corpus_seed(cfg.training.seed);
    const auto parts = synthesize_split(cfg);
    run.write("running");
    write_alpaca_jsonl(run.output("train.jsonl"), parts.train);
    write_alpaca_jsonl(run.output("test.jsonl"), parts.test);
    run.set_extra("corpus_seed", seed);
    run.set_extra("counts", {{"train", label_counts(parts.train)}, {"test", label_counts(parts.test)}});
    fmt::print(stderr, "wrote {} train and {} test records to {}\n", parts.train.size(), parts.test.size(),
               run.dir().string());
}

void cmd_train(const AppConfig& cfg, RunManifest& run) {
    const auto corpus = load_input(run, cfg.train_path());
    const auto vocab = build_training_vocab(corpus, cfg.training.tokenizer);
    vocab.save(run.output("vocab.json"));
    run.write("running");

    const fs::path metrics_path = run.output("metrics.csv");
    std::ofstream metrics_out(metrics_path, std::ios::binary);
    if (!metrics_out) throw RuntimeAbort("cannot write " + metrics_path.string());
    metrics_out << kMetricsHeader << "\n" << std::flush;

    ClipMonitor monitor;
    TrainOptions options;
    options.monitor = &monitor;
    options.on_round = [&](const RoundMetrics& m) {
        metrics_out << metrics_csv_row(m) << "\n" << std::flush;
        fmt::print(stderr, "round {}/{}  lambda {}  mean_reward {}  disc_acc {}\n", m.round, cfg.training.rounds,
                   format_double(m.lambda), format_double(m.mean_reward), format_double(m.disc_acc));
    };
    fmt::print(stderr, "training on {} records, vocabulary of {}\n", corpus.size(), vocab.size());
    auto result = train(cfg.training, corpus, vocab, options);
    metrics_out.close();

    const CheckpointInfo info{.config_hash = run.config_hash(), .vocab_file = "vocab.json", .round = cfg.training.rounds};
    save_generator(run.dir(), "generator", result.generator, info);
    save_discriminator(run.dir(), "discriminator", result.discriminator, info);
    for (const char* name : {"generator.bin", "generator.json", "discriminator.bin", "discriminator.json"}) {
        run.output(name);
    }
    run.set_extra("clip", {{"steps", monitor.steps},
                           {"max_post_norm", monitor.max_post_norm},
                           {"violations", monitor.violations}});
}

void cmd_generate(const AppConfig& cfg, RunManifest& run) {
    const fs::path manifest = checkpoint_manifest(cfg, "generator");
    const auto vocab = checkpoint_vocab(run, manifest);
    const auto gen = load_generator(manifest);
    if (gen.dims.vocab_size != vocab.size()) throw RuntimeAbort("generator and vocabulary sizes differ");

    std::vector<Prompt> pool;
    if (!cfg.prompts.empty()) {
        for (const auto& s : load_input(run, cfg.prompts)) pool.push_back({s.instruction, s.input});
    } else {
        pool = malicious_prompts(load_input(run, cfg.test_path()));
    }
    const auto prompts = take_prompts(pool, cfg.n.value_or(100));
    run.write("running");

    const auto codes = generate_codes(gen, vocab, prompts, eval_config(cfg));
    std::vector<CodeSample> out;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        out.push_back({prompts[i].instruction, prompts[i].input, codes[i], Label::unlabeled, Source::generated});
    }
    write_alpaca_jsonl(run.output("generated.jsonl"), out);
    const auto empty = std::count_if(codes.begin(), codes.end(), [](const std::string& c) { return c.empty(); });
    run.set_extra("records", out.size());
    run.set_extra("empty_outputs", empty);
    fmt::print(stderr, "wrote {} generated records\n", out.size());
}

struct Prediction {
    Label label = Label::benign;
    std::optional<Vector> probs;
};

std::vector<Prediction> discriminator_predictions(const Discriminator& disc, const Vocabulary& vocab,
                                                  const std::vector<CodeSample>& samples, std::size_t max_len) {
    std::vector<Prediction> out;
    for (const auto& s : samples) {
        const auto tokens = code_tokens(s.output, vocab, max_len);
        if (tokens.empty()) {
            out.push_back({});
            continue;
        }
        out.push_back({predict_label(tokens, disc), classify(encode(tokens, disc), disc)});
    }
    return out;
}

void cmd_detect(const AppConfig& cfg, RunManifest& run) {
    const fs::path manifest = checkpoint_manifest(cfg, "discriminator");
    const auto vocab = checkpoint_vocab(run, manifest);
    const auto disc = load_discriminator(manifest);
    if (disc.dims.vocab_size != vocab.size()) throw RuntimeAbort("discriminator and vocabulary sizes differ");
    if (cfg.input.empty()) throw ConfigError("input is not set (use --input)");
    const auto samples = load_input(run, cfg.input);
    run.write("running");

    std::string csv = "index,label,p_benign,p_malicious,p_fake\n";
    const auto preds = discriminator_predictions(disc, vocab, samples, cfg.training.disc_max_len);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto& p = preds[i];
        if (p.probs) {
            csv += fmt::format("{},{},{},{},{}\n", i, to_string(p.label), format_double((*p.probs)(0)),
                               format_double((*p.probs)(1)), format_double((*p.probs)(2)));
        } else {
            csv += fmt::format("{},{},,,\n", i, to_string(p.label));
        }
    }
    write_text(run.output("predictions.csv"), csv);
    fmt::print(stderr, "wrote {} predictions\n", preds.size());
}

std::vector<Label> read_prediction_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": missing header");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) header.push_back(trim(cell));
    }
    const auto col = std::find(header.begin(), header.end(), "label");
    if (col == header.end()) throw ConfigError(path.string() + ": no 'label' column");
    const auto idx = static_cast<std::size_t>(col - header.begin());
    std::vector<Label> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(trim(cell));
        if (cells.size() <= idx) throw ConfigError(fmt::format("{}: line {} is too short", path.string(), line_no));
        try {
            out.push_back(parse_label(cells[idx]));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}: line {}: {}", path.string(), line_no, e.what()));
        }
    }
    return out;
}

DetectionMetrics score_labels(const std::vector<Label>& predicted, const std::vector<CodeSample>& samples) {
    if (predicted.size() != samples.size()) {
        throw ConfigError(
            fmt::format("{} predictions for {} input records", predicted.size(), samples.size()));
    }
    std::vector<Label> pred, truth;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label == Label::unlabeled) continue;
        pred.push_back(predicted[i]);
        truth.push_back(samples[i].label);
    }
    return metrics(confusion(pred, truth));
}

void add_metrics(std::map<std::string, double>& out, const std::string& prefix, const DetectionMetrics& m) {
    out[prefix + ".accuracy"] = m.accuracy;
    out[prefix + ".precision"] = m.precision;
    out[prefix + ".recall"] = m.recall;
    out[prefix + ".f1"] = m.f1;
}

void cmd_evaluate(const AppConfig& cfg, RunManifest& run) {
    const fs::path input = cfg.input.empty() ? cfg.test_path() : fs::path(cfg.input);
    const auto samples = load_input(run, input);
    std::vector<std::pair<std::string, DetectionMetrics>> rows;

    if (!cfg.predictions.empty()) {
        run.add_input(cfg.predictions);
        rows.emplace_back("predictions", score_labels(read_prediction_labels(cfg.predictions), samples));
    }
    if (!cfg.checkpoint.empty()) {
        const fs::path manifest = checkpoint_manifest(cfg, "discriminator");
        const auto vocab = checkpoint_vocab(run, manifest);
        const auto disc = load_discriminator(manifest);
        std::vector<Label> labels;
        for (const auto& p : discriminator_predictions(disc, vocab, samples, cfg.training.disc_max_len)) {
            labels.push_back(p.label);
        }
        rows.emplace_back("discriminator", score_labels(labels, samples));
    }
    std::vector<Label> oracle;
    for (const auto& s : samples) oracle.push_back(oracle_detect(s.output));
    rows.emplace_back("oracle", score_labels(oracle, samples));
    run.write("running");

    std::map<std::string, double> summary;
    for (const auto& [name, m] : rows) add_metrics(summary, name, m);
    write_text(run.output("detection.csv"), detection_csv(rows));
    write_text(run.output("summary.json"), summary_json(run.config_hash(), cfg.training.seed, summary));
    for (const auto& [name, m] : rows) {
        fmt::print(stderr, "{:<14} accuracy {}  precision {}  recall {}  f1 {}\n", name, format_double(m.accuracy),
                   format_double(m.precision), format_double(m.recall), format_double(m.f1));
    }
}

void cmd_augment(const AppConfig& cfg, RunManifest& run) {
    const auto train_set = load_input(run, cfg.train_path());
    const auto test_set = load_input(run, cfg.test_path());
    if (cfg.generated.empty()) throw ConfigError("generated is not set (use --generated)");
    std::vector<CodeSample> generated;
    for (auto& s : load_input(run, cfg.generated)) {
        if (!s.output.empty()) generated.push_back(std::move(s));
    }
    const std::size_t n = cfg.n.value_or(200);
    const std::uint64_t seed = Rng(cfg.training.seed).substream("augment").seed();
    run.write("running");

    const auto augmented = augment(train_set, generated, cfg.augment_mode, n, seed);
    write_alpaca_jsonl(run.output("augmented.jsonl"), augmented);
    const auto result = run_augmentation(train_set, test_set, generated, cfg.augment_mode, n, seed,
                                         NgramLogisticConfig{.seed = seed});
    const std::string setting = fmt::format("{}_{}", to_string(cfg.augment_mode), n);
    write_text(run.output("detection.csv"), detection_csv({{"baseline", result.baseline}, {setting, result.augmented}}));
    std::map<std::string, double> summary;
    add_metrics(summary, "baseline", result.baseline);
    add_metrics(summary, "augmented", result.augmented);
    summary["train_size"] = static_cast<double>(result.train_size);
    summary["augmented_size"] = static_cast<double>(result.augmented_size);
    write_text(run.output("summary.json"), summary_json(run.config_hash(), cfg.training.seed, summary));
    fmt::print(stderr, "{} -> {} training records; recall {} -> {}\n", result.train_size, result.augmented_size,
               format_double(result.baseline.recall), format_double(result.augmented.recall));
}

void cmd_ablate(const AppConfig& cfg, RunManifest& run) {
    const auto train_set = load_input(run, cfg.train_path());
    const auto test_set = load_input(run, cfg.test_path());
    const auto prompts = take_prompts(malicious_prompts(test_set), cfg.n.value_or(100));
    std::vector<AblationVariant> variants;
    if (cfg.explicit_keys.contains("variant")) {
        variants.push_back(cfg.training.variant);
    } else {
        variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
    }
    const auto vocab = build_training_vocab(train_set, cfg.training.tokenizer);
    vocab.save(run.output("vocab.json"));
    run.write("running");

    fmt::print(stderr, "warming up the shared generator\n");
    const Generator warm = warm_up_generator(cfg.training, train_set, vocab);
    std::vector<AblationResult> results;
    std::map<std::string, double> summary;
    for (const auto v : variants) {
        fmt::print(stderr, "variant {}\n", to_string(v));
        results.push_back(run_ablation(cfg.training, v, train_set, vocab, prompts, eval_config(cfg), &warm));
        const auto& r = results.back();
        write_text(run.output(fmt::format("metrics_{}.csv", to_string(v))), metrics_csv(r.metrics));
        summary[fmt::format("{}.overall", to_string(v))] = r.score.overall;
        fmt::print(stderr, "  overall {}\n", format_double(r.score.overall));
    }
    write_text(run.output("ablation.csv"), ablation_csv(results));
    write_text(run.output("summary.json"), summary_json(run.config_hash(), cfg.training.seed, summary));
}

using Command = void (*)(const AppConfig&, RunManifest&);

struct CommandSpec {
    const char* name;
    const char* help;
    Command fn;
};

constexpr CommandSpec kCommands[] = {
    {"make-corpus", "Synthesize the template corpus and write train/test JSONL", cmd_make_corpus},
    {"train", "Run the alternating generator/discriminator training", cmd_train},
    {"generate", "Sample completions from a generator checkpoint", cmd_generate},
    {"detect", "Classify JSONL records with a discriminator checkpoint", cmd_detect},
    {"evaluate", "Detection metrics for predictions, a checkpoint and the rule oracle", cmd_evaluate},
    {"augment", "Switch/add augmentation and downstream detector retraining", cmd_augment},
    {"ablate", "Train and score the ablation variants", cmd_ablate},
};

fs::path default_out(const std::string& command) {
    const char* root = std::getenv(kOutRootEnv);
    return fs::path(root && *root ? root : "runs") / command;
}

int execute(const CommandSpec& spec, const AppConfig& cfg, const fs::path& out, bool resume) {
    const fs::path manifest_path = out / "manifest.json";
    if (fs::exists(manifest_path)) {
        const json prev = read_json_file(manifest_path);
        const bool finished = prev.value("status", "") == "finished";
        if (finished && !resume) {
            throw ConfigError(fmt::format("{} already holds a finished run; pass --resume or choose another --out",
                                          out.string()));
        }
        if (finished) {
            if (prev.value("command", "") != spec.name || prev.value("config_hash", "") != cfg.training.hash()) {
                throw ConfigError(fmt::format("{} holds a finished run of a different command or config", out.string()));
            }
            fmt::print(stderr, "{}: run already finished, nothing to do\n", out.string());
            return kExitOk;
        }
        fmt::print(stderr, "{}: previous run did not finish; starting it over\n", out.string());
    }
    fs::create_directories(out);
    RunManifest run(spec.name, out, cfg);
    run.write("running");
    try {
        spec.fn(cfg, run);
    } catch (const std::exception& e) {
        run.write("failed", e.what());
        throw;
    }
    run.write("finished");
    fmt::print(stderr, "manifest: {}\n", run.path().string());
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// AppConfig
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, std::string>> AppConfig::entries() const {
    auto out = training.entries();
    out.emplace_back("n_benign", std::to_string(n_benign));
    out.emplace_back("n_malicious", std::to_string(n_malicious));
    out.emplace_back("n_unlabeled", std::to_string(n_unlabeled));
    out.emplace_back("train_fraction", format_double(train_fraction));
    out.emplace_back("corpus_dir", corpus_dir);
    out.emplace_back("train_file", train_file);
    out.emplace_back("test_file", test_file);
    out.emplace_back("checkpoint", checkpoint);
    out.emplace_back("prompts", prompts);
    out.emplace_back("input", input);
    out.emplace_back("predictions", predictions);
    out.emplace_back("generated", generated);
    out.emplace_back("augment_mode", std::string(to_string(augment_mode)));
    out.emplace_back("n", n ? std::to_string(*n) : "");
    return out;
}

void AppConfig::set(const std::string& key, const std::string& value) {
    if (is_training_key(key)) training.set(key, value);
    else if (key == "n_benign") n_benign = parse_count(key, value);
    else if (key == "n_malicious") n_malicious = parse_count(key, value);
    else if (key == "n_unlabeled") n_unlabeled = parse_count(key, value);
    else if (key == "train_fraction") train_fraction = parse_real(key, value);
    else if (key == "corpus_dir") corpus_dir = value;
    else if (key == "train_file") train_file = value;
    else if (key == "test_file") test_file = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "prompts") prompts = value;
    else if (key == "input") input = value;
    else if (key == "predictions") predictions = value;
    else if (key == "generated") generated = value;
    else if (key == "augment_mode") augment_mode = parse_augment_mode(value);
    else if (key == "n") n = value.empty() ? std::nullopt : std::optional(parse_count(key, value));
    else throw ConfigError("unknown config key '" + key + "'");
    explicit_keys.insert(key);
}

void AppConfig::validate() const {
    training.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError(fmt::format("train_fraction must be in (0, 1), got {}", format_double(train_fraction)));
    }
}

fs::path AppConfig::train_path() const {
    if (!train_file.empty()) return train_file;
    if (corpus_dir.empty()) throw ConfigError("corpus_dir is not set (use --corpus)");
    return fs::path(corpus_dir) / "train.jsonl";
}

fs::path AppConfig::test_path() const {
    if (!test_file.empty()) return test_file;
    if (corpus_dir.empty()) throw ConfigError("corpus_dir is not set (use --corpus)");
    return fs::path(corpus_dir) / "test.jsonl";
}

void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(fmt::format("{}:{}: expected key = value", origin, line_no));
        }
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, line_no, e.what()));
        }
    }
}

void apply_config_file(AppConfig& cfg, const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), path.string());
}

std::uint64_t corpus_seed(std::uint64_t root_seed) { return Rng(root_seed).substream("corpus").seed(); }

Split synthesize_split(const AppConfig& cfg) {
    const std::uint64_t seed = corpus_seed(cfg.training.seed);
    const auto samples = synthesize_corpus(
        {.n_benign = cfg.n_benign, .n_malicious = cfg.n_malicious, .n_unlabeled = cfg.n_unlabeled, .seed = seed});
    return split(samples, cfg.train_fraction, Rng(seed).substream("split").seed());
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

int run(const std::vector<std::string>& args) {
    CLI::App cli{"sqlgan: adversarial SQLi generator/discriminator co-training"};
    cli.require_subcommand(1);
    cli.set_version_flag("--version", SQLGAN_VERSION);

    // Flag values are kept as text and applied through AppConfig::set after
    // the config file, so both paths share one parser.
    struct Flag {
        const char* name;
        const char* key;
        const char* help;
    };
    static constexpr Flag kFlags[] = {
        {"--seed", "seed", "Root seed"},
        {"--rounds", "rounds", "Training rounds T"},
        {"--alpha", "alpha", "Initial reward weight"},
        {"--theta-decay", "theta_decay", "Reward weight decay over the run"},
        {"--reward-class", "reward_class", "malicious or fake"},
        {"--variant", "variant", "Ablation variant"},
        {"--mode", "augment_mode", "Augmentation mode: switch or add"},
        {"--n", "n", "Prompts (generate, ablate) or samples (augment)"},
        {"--corpus", "corpus_dir", "Directory with train.jsonl and test.jsonl"},
        {"--checkpoint", "checkpoint", "Run directory or checkpoint manifest"},
        {"--prompts", "prompts", "JSONL whose records supply prompts"},
        {"--input", "input", "Input JSONL"},
        {"--predictions", "predictions", "Predictions CSV from detect"},
        {"--generated", "generated", "Generated JSONL from generate"},
    };

    std::string config_path;
    std::string out_dir;
    bool resume = false;
    std::map<std::string, std::string> flag_values;
    std::vector<std::string> overrides;

    for (const auto& spec : kCommands) {
        CLI::App* sub = cli.add_subcommand(spec.name, spec.help);
        sub->add_option("--config", config_path, "Config file of key = value lines");
        sub->add_option("--out", out_dir, fmt::format("Run directory (default ${}/<command> or runs/<command>)",
                                                      kOutRootEnv));
        sub->add_flag("--resume", resume, "Treat a finished run in --out as done");
        for (const auto& f : kFlags) {
            sub->add_option_function<std::string>(
                f.name, [&flag_values, key = std::string(f.key)](const std::string& v) { flag_values[key] = v; },
                f.help);
        }
        sub->add_option("--set", overrides, "Any config key, as KEY=VALUE")->allow_extra_args(false);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        cli.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    const CommandSpec* chosen = nullptr;
    for (const auto& spec : kCommands) {
        if (cli.got_subcommand(spec.name)) chosen = &spec;
    }

    try {
        AppConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        for (const auto& [key, value] : flag_values) cfg.set(key, value);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
        }
        cfg.validate();
        const fs::path out = out_dir.empty() ? default_out(chosen->name) : fs::path(out_dir);
        return execute(*chosen, cfg, out, resume);
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfigError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "runtime abort: {}\n", e.what());
        return kExitRuntimeAbort;
    }
}

}  // namespace sqlgan::app
