#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sqlgan/training.hpp"

namespace sqlgan::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeAbort = 3;

// Default output root when --out is not given: $SQLGAN_OUT_ROOT/<command>,
// or runs/<command> when the variable is unset.
inline constexpr const char* kOutRootEnv = "SQLGAN_OUT_ROOT";

inline constexpr int kRunManifestVersion = 1;

// Everything a command can be configured with: the training keys plus the
// corpus, path and experiment keys below. One flat key space.
struct AppConfig {
    TrainingConfig training;

    std::size_t n_benign = 500;
    std::size_t n_malicious = 500;
    std::size_t n_unlabeled = 500;
    double train_fraction = 0.8;

    std::string corpus_dir;  // holds train.jsonl and test.jsonl
    std::string train_file;  // override corpus_dir/train.jsonl
    std::string test_file;   // override corpus_dir/test.jsonl
    std::string checkpoint;  // run directory or checkpoint manifest
    std::string prompts;
    std::string input;
    std::string predictions;
    std::string generated;
    AugmentMode augment_mode = AugmentMode::add;
    // Prompts for generate/ablate, samples for augment. Unset means the
    // command's default.
    std::optional<std::size_t> n;

    // Keys given explicitly by a config file or a flag.
    std::set<std::string> explicit_keys;

    std::vector<std::pair<std::string, std::string>> entries() const;
    void set(const std::string& key, const std::string& value);
    void validate() const;

    std::filesystem::path train_path() const;
    std::filesystem::path test_path() const;
};

// `key = value` lines; blank lines and lines starting with # are skipped.
void apply_config_text(AppConfig& cfg, std::string_view text, const std::string& origin);
void apply_config_file(AppConfig& cfg, const std::filesystem::path& path);

// Seed of the corpus substream of the root seed.
std::uint64_t corpus_seed(std::uint64_t root_seed);

// The corpus make-corpus writes for cfg: synthesized, then split.
Split synthesize_split(const AppConfig& cfg);

// Entry point of the sqlgan binary; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace sqlgan::app
