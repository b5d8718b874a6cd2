#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sqlgan/common.hpp"

namespace sqlgan {

enum class Label { benign, malicious, unlabeled };
enum class Source { manual, generated, template_ };

std::string_view to_string(Label label);
std::string_view to_string(Source source);
// Throws ConfigError listing the allowed values.
Label parse_label(std::string_view text);
Source parse_source(std::string_view text);

// One Alpaca-style record.
struct CodeSample {
    std::string instruction;
    std::string input;
    std::string output;
    Label label = Label::unlabeled;
    Source source = Source::manual;

    bool operator==(const CodeSample&) const = default;
};

// ---------------------------------------------------------------------------
// JSONL I/O
//
// Wire format, one object per line:
//   {"instruction": str, "input": str, "output": str, "label": "benign"|"malicious"|"unlabeled",
//    "source": "manual"|"generated"|"template"}
// "label" and "source" are optional on read (defaults: unlabeled, manual) and always written.
// ---------------------------------------------------------------------------

std::vector<CodeSample> load_alpaca_jsonl(const std::filesystem::path& path);
std::vector<CodeSample> parse_alpaca_jsonl(std::string_view text);
std::string to_jsonl_line(const CodeSample& sample);
void write_alpaca_jsonl(const std::filesystem::path& path, const std::vector<CodeSample>& samples);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

enum class Technique { error_based, boolean_blind, time_based, union_based };

inline constexpr Technique kAllTechniques[] = {Technique::error_based, Technique::boolean_blind,
                                               Technique::time_based, Technique::union_based};

std::string_view to_string(Technique t);
Technique parse_technique(std::string_view text);

struct CorpusSpec {
    std::size_t n_benign = 0;
    std::size_t n_malicious = 0;
    std::size_t n_unlabeled = 0;
    std::vector<Technique> techniques{std::begin(kAllTechniques), std::end(kAllTechniques)};
    std::uint64_t seed = 0;

    void validate() const;
};

// Exactly the requested counts, in the order benign, malicious, unlabeled.
// Malicious samples cycle over spec.techniques; unlabeled samples alternate
// benign-looking and malicious-looking payloads. Pure function of spec.
std::vector<CodeSample> synthesize_corpus(const CorpusSpec& spec);

// Single template draws, used by the corpus and by tests.
CodeSample synthesize_malicious(Technique technique, Rng& rng);
CodeSample synthesize_benign(Rng& rng);

// ---------------------------------------------------------------------------
// Vocabulary and tokenization
// ---------------------------------------------------------------------------

enum class TokenizerMode { character, word };

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr int kNumSpecials = 4;
inline constexpr std::string_view kUnkGlyph = "\xEF\xBF\xBD";  // U+FFFD
inline constexpr int kVocabFormatVersion = 1;

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> content_tokens, TokenizerMode mode);

    std::size_t size() const { return tokens_.size(); }
    TokenizerMode mode() const { return mode_; }
    // Includes the four specials at indices 0-3.
    const std::vector<std::string>& tokens() const { return tokens_; }
    TokenId id_of(std::string_view token) const;  // kUnk when absent
    const std::string& token_of(TokenId id) const;

    std::string to_json() const;
    static Vocabulary from_json(std::string_view json);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return mode_ == other.mode_ && tokens_ == other.tokens_; }

private:
    TokenizerMode mode_ = TokenizerMode::character;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

// Splits text into vocabulary units: UTF-8 code points (character mode) or
// maximal [A-Za-z0-9_] runs plus single other code points (word mode).
std::vector<std::string> split_units(std::string_view text, TokenizerMode mode);

Vocabulary build_vocab(const std::vector<CodeSample>& samples, TokenizerMode mode = TokenizerMode::character);

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab);
// Truncates to max_len ids.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);
// Specials other than UNK render as nothing; UNK renders as kUnkGlyph.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Splitting and augmentation
// ---------------------------------------------------------------------------

struct Split {
    std::vector<CodeSample> train;
    std::vector<CodeSample> test;
};

// Label-stratified, deterministic per seed. The train size is
// round(train_fraction * N); groups are apportioned by largest remainder.
// Relative order of the input is preserved inside each side.
Split split(const std::vector<CodeSample>& samples, double train_fraction, std::uint64_t seed);

enum class AugmentMode { switch_, add };
std::string_view to_string(AugmentMode mode);
AugmentMode parse_augment_mode(std::string_view text);

// switch: n uniformly chosen malicious train rows are replaced in place by n
// uniformly chosen generated rows. add: n uniformly chosen generated rows are
// appended. Generated rows enter as label=malicious, source=generated.
std::vector<CodeSample> augment(const std::vector<CodeSample>& train, const std::vector<CodeSample>& generated,
                                AugmentMode mode, std::size_t n, std::uint64_t seed);

std::size_t count_label(const std::vector<CodeSample>& samples, Label label);

}  // namespace sqlgan
