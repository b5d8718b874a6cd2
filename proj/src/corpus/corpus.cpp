#include "sqlgan/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace sqlgan {

using nlohmann::json;

std::string_view to_string(Label label) {
    switch (label) {
        case Label::benign:
            return "benign";
        case Label::malicious:
            return "malicious";
        case Label::unlabeled:
            return "unlabeled";
    }
    return "?";
}

std::string_view to_string(Source source) {
    switch (source) {
        case Source::manual:
            return "manual";
        case Source::generated:
            return "generated";
        case Source::template_:
            return "template";
    }
    return "?";
}

Label parse_label(std::string_view text) {
    if (text == "benign") return Label::benign;
    if (text == "malicious") return Label::malicious;
    if (text == "unlabeled") return Label::unlabeled;
    throw ConfigError(fmt::format("unknown label '{}' (allowed: benign, malicious, unlabeled)", text));
}

Source parse_source(std::string_view text) {
    if (text == "manual") return Source::manual;
    if (text == "generated") return Source::generated;
    if (text == "template") return Source::template_;
    throw ConfigError(fmt::format("unknown source '{}' (allowed: manual, generated, template)", text));
}

std::string_view to_string(Technique t) {
    switch (t) {
        case Technique::error_based:
            return "error_based";
        case Technique::boolean_blind:
            return "boolean_blind";
        case Technique::time_based:
            return "time_based";
        case Technique::union_based:
            return "union_based";
    }
    return "?";
}

Technique parse_technique(std::string_view text) {
    for (Technique t : kAllTechniques) {
        if (to_string(t) == text) return t;
    }
    throw ConfigError(fmt::format(
        "unknown technique '{}' (allowed: error_based, boolean_blind, time_based, union_based)", text));
}

std::string_view to_string(AugmentMode mode) { return mode == AugmentMode::add ? "add" : "switch"; }

AugmentMode parse_augment_mode(std::string_view text) {
    if (text == "add") return AugmentMode::add;
    if (text == "switch") return AugmentMode::switch_;
    throw ConfigError(fmt::format("unknown augment mode '{}' (allowed: switch, add)", text));
}

// --- JSONL -----------------------------------------------------------------

namespace {

std::string required_string(const json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(fmt::format("line {}: missing field \"{}\"", line_no, key));
    if (!it->is_string()) throw ConfigError(fmt::format("line {}: field \"{}\" is not a string", line_no, key));
    return it->get<std::string>();
}

bool is_blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

std::vector<CodeSample> parse_alpaca_jsonl(std::string_view text) {
    std::vector<CodeSample> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (is_blank(line)) continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError(fmt::format("line {}: malformed JSON ({})", line_no, e.what()));
        }
        if (!obj.is_object()) throw ConfigError(fmt::format("line {}: record is not a JSON object", line_no));

        CodeSample s;
        s.instruction = required_string(obj, "instruction", line_no);
        s.input = required_string(obj, "input", line_no);
        s.output = required_string(obj, "output", line_no);
        try {
            if (auto it = obj.find("label"); it != obj.end()) s.label = parse_label(it->get<std::string>());
            if (auto it = obj.find("source"); it != obj.end()) s.source = parse_source(it->get<std::string>());
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<CodeSample> load_alpaca_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_alpaca_jsonl(buf.str());
}

std::string to_jsonl_line(const CodeSample& sample) {
    // ordered_json keeps the documented field order in the output.
    nlohmann::ordered_json obj;
    obj["instruction"] = sample.instruction;
    obj["input"] = sample.input;
    obj["output"] = sample.output;
    obj["label"] = std::string(to_string(sample.label));
    obj["source"] = std::string(to_string(sample.source));
    return obj.dump();
}

void write_alpaca_jsonl(const std::filesystem::path& path, const std::vector<CodeSample>& samples) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    for (const auto& s : samples) out << to_jsonl_line(s) << '\n';
}

// --- synthesis -------------------------------------------------------------

void CorpusSpec::validate() const {
    if (n_malicious > 0 && techniques.empty()) {
        throw ConfigError("corpus spec: techniques must be non-empty when n_malicious > 0");
    }
}

std::vector<CodeSample> synthesize_corpus(const CorpusSpec& spec) {
    spec.validate();
    const Rng root(spec.seed);
    Rng benign_rng = root.substream("corpus.benign");
    Rng malicious_rng = root.substream("corpus.malicious");
    Rng unlabeled_rng = root.substream("corpus.unlabeled");
    const std::vector<Technique> unlabeled_techniques =
        spec.techniques.empty() ? std::vector<Technique>(std::begin(kAllTechniques), std::end(kAllTechniques))
                                : spec.techniques;

    std::vector<CodeSample> out;
    out.reserve(spec.n_benign + spec.n_malicious + spec.n_unlabeled);
    for (std::size_t i = 0; i < spec.n_benign; ++i) out.push_back(synthesize_benign(benign_rng));
    for (std::size_t i = 0; i < spec.n_malicious; ++i) {
        out.push_back(synthesize_malicious(spec.techniques[i % spec.techniques.size()], malicious_rng));
    }
    for (std::size_t i = 0; i < spec.n_unlabeled; ++i) {
        CodeSample s = (i % 2 == 0) ? synthesize_benign(unlabeled_rng)
                                    : synthesize_malicious(unlabeled_techniques[(i / 2) % unlabeled_techniques.size()],
                                                           unlabeled_rng);
        s.label = Label::unlabeled;
        out.push_back(std::move(s));
    }
    return out;
}

// --- vocabulary ------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, kNumSpecials> kSpecialTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;  // invalid lead byte: treat as a single unit
}

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

}  // namespace

std::vector<std::string> split_units(std::string_view text, TokenizerMode mode) {
    std::vector<std::string> units;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (mode == TokenizerMode::word && is_word_char(c)) {
            std::size_t j = i;
            while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
            units.emplace_back(text.substr(i, j - i));
            i = j;
            continue;
        }
        const std::size_t len = std::min(utf8_length(c), text.size() - i);
        units.emplace_back(text.substr(i, len));
        i += len;
    }
    return units;
}

Vocabulary::Vocabulary(std::vector<std::string> content_tokens, TokenizerMode mode) : mode_(mode) {
    tokens_.reserve(content_tokens.size() + kNumSpecials);
    for (auto s : kSpecialTokens) tokens_.emplace_back(s);
    for (auto& t : content_tokens) tokens_.push_back(std::move(t));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        auto [_, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
        if (!inserted) throw ConfigError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
}

TokenId Vocabulary::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range(fmt::format("token id {} outside vocabulary of size {}", id, tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json() const {
    nlohmann::ordered_json obj;
    obj["format_version"] = kVocabFormatVersion;
    obj["mode"] = mode_ == TokenizerMode::word ? "word" : "character";
    obj["tokens"] = tokens_;
    return obj.dump();
}

Vocabulary Vocabulary::from_json(std::string_view text) {
    json obj;
    try {
        obj = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("vocabulary: malformed JSON: ") + e.what());
    }
    if (obj.value("format_version", -1) != kVocabFormatVersion) {
        throw ConfigError("vocabulary: unsupported format_version");
    }
    const auto tokens = obj.at("tokens").get<std::vector<std::string>>();
    if (tokens.size() < kNumSpecials) throw ConfigError("vocabulary: missing special tokens");
    for (int i = 0; i < kNumSpecials; ++i) {
        if (tokens[static_cast<std::size_t>(i)] != kSpecialTokens[static_cast<std::size_t>(i)]) {
            throw ConfigError("vocabulary: special tokens out of place");
        }
    }
    const TokenizerMode mode = obj.value("mode", "character") == "word" ? TokenizerMode::word : TokenizerMode::character;
    return Vocabulary(std::vector<std::string>(tokens.begin() + kNumSpecials, tokens.end()), mode);
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << to_json() << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

Vocabulary build_vocab(const std::vector<CodeSample>& samples, TokenizerMode mode) {
    if (samples.empty()) throw ConfigError("build_vocab: empty corpus");
    std::set<std::string> units;
    for (const auto& s : samples) {
        for (const std::string* text : {&s.instruction, &s.input, &s.output}) {
            for (auto& u : split_units(*text, mode)) units.insert(std::move(u));
        }
    }
    for (auto special : kSpecialTokens) units.erase(std::string(special));
    return Vocabulary(std::vector<std::string>(units.begin(), units.end()), mode);
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab) {
    TokenSequence ids;
    for (const auto& u : split_units(text, vocab.mode())) ids.push_back(vocab.id_of(u));
    return ids;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
    TokenSequence ids = tokenize(text, vocab);
    if (ids.size() > max_len) ids.resize(max_len);
    return ids;
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
    std::string out;
    for (TokenId id : ids) {
        if (id == kUnk) {
            out += kUnkGlyph;
        } else if (id >= kNumSpecials) {
            out += vocab.token_of(id);
        }
    }
    return out;
}

// --- split / augment -------------------------------------------------------

std::size_t count_label(const std::vector<CodeSample>& samples, Label label) {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [label](const CodeSample& s) { return s.label == label; }));
}

Split split(const std::vector<CodeSample>& samples, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError(fmt::format("split: train_fraction must be in (0, 1), got {}", train_fraction));
    }
    std::map<Label, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].label].push_back(i);

    const auto total_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples.size()) + 0.5));
    struct Quota {
        Label label;
        std::size_t take;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [label, idx] : groups) {
        const double exact = train_fraction * static_cast<double>(idx.size());
        const auto take = static_cast<std::size_t>(std::floor(exact));
        quotas.push_back({label, take, exact - static_cast<double>(take)});
        assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < total_train && k < order.size(); ++k) {
        auto& q = quotas[order[k]];
        if (q.take < groups[q.label].size()) {
            ++q.take;
            ++assigned;
        }
    }

    Rng rng = Rng(seed).substream("split");
    std::vector<bool> in_train(samples.size(), false);
    for (const auto& q : quotas) {
        std::vector<std::size_t> idx = groups[q.label];
        rng.shuffle(idx);
        for (std::size_t k = 0; k < q.take; ++k) in_train[idx[k]] = true;
    }
    Split out;
    for (std::size_t i = 0; i < samples.size(); ++i) (in_train[i] ? out.train : out.test).push_back(samples[i]);
    return out;
}

namespace {

std::vector<std::size_t> choose_without_replacement(std::size_t population, std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.uniform_index(population - i)]);
    idx.resize(n);
    return idx;
}

CodeSample as_generated(CodeSample s) {
    s.label = Label::malicious;
    s.source = Source::generated;
    return s;
}

}  // namespace

std::vector<CodeSample> augment(const std::vector<CodeSample>& train, const std::vector<CodeSample>& generated,
                                AugmentMode mode, std::size_t n, std::uint64_t seed) {
    if (generated.size() < n) {
        throw ConfigError(fmt::format("augment: need {} generated samples, have {}", n, generated.size()));
    }
    std::vector<std::size_t> malicious_rows;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train[i].label == Label::malicious) malicious_rows.push_back(i);
    }
    if (mode == AugmentMode::switch_ && malicious_rows.size() < n) {
        throw ConfigError(
            fmt::format("augment: switch needs {} malicious train samples, have {}", n, malicious_rows.size()));
    }

    Rng rng = Rng(seed).substream("augment");
    const auto picked = choose_without_replacement(generated.size(), n, rng);
    std::vector<CodeSample> out = train;
    if (mode == AugmentMode::add) {
        for (std::size_t k : picked) out.push_back(as_generated(generated[k]));
        return out;
    }
    const auto targets = choose_without_replacement(malicious_rows.size(), n, rng);
    for (std::size_t k = 0; k < n; ++k) out[malicious_rows[targets[k]]] = as_generated(generated[picked[k]]);
    return out;
}

}  // namespace sqlgan
