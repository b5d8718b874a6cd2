#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqlgan/common.hpp"
#include "sqlgan/corpus.hpp"

namespace sqlgan {

struct Prompt {
    std::string instruction;
    std::string input;
};

// Bumped whenever the template text below changes.
inline constexpr int kPromptTemplateVersion = 1;

// "### Instruction:\n<instruction>\n\n### Input:\n<input>\n\n### Response:\n"
// Throws ConfigError on an empty instruction.
std::string format_prompt(const Prompt& p);
// Tokenized format_prompt, without BOS.
TokenSequence encode_prompt(const Prompt& p, const Vocabulary& vocab);

struct GeneratorDims {
    std::size_t vocab_size = 0;
    std::size_t hidden_dim = 128;  // also the embedding width
    std::size_t layers = 1;

    void validate() const;
    bool operator==(const GeneratorDims&) const = default;
};

// Gate rows are stacked [reset; update; candidate], as in torch.nn.GRU.
struct GruLayer {
    Matrix w_ih;  // 3H x input
    Matrix w_hh;  // 3H x H
    Vector b_ih;
    Vector b_hh;
};

struct Generator {
    GeneratorDims dims;
    Matrix embedding;  // H x vocab, one column per token
    std::vector<GruLayer> layers;
    Matrix out_weight;  // vocab x H
    Vector out_bias;

    static Generator zeros(const GeneratorDims& dims);
    static Generator initialize(const GeneratorDims& dims, Rng& rng);

    std::vector<TensorRef> tensors();
};

struct GenerationConfig {
    std::size_t max_len = 160;
    double temperature = 1.0;
    std::size_t top_k = 0;  // 0 = unlimited
    bool greedy = false;    // argmax decoding, the temperature -> 0 limit
    std::uint64_t seed = 0;

    void validate() const;
};

// Distribution of the token following BOS + prompt + prefix.
Vector next_token_dist(std::span<const TokenId> prompt_ids, std::span<const TokenId> prefix_ids, const Generator& gen);

// Autoregressive draw. The result ends with EOS unless max_len cut it short.
TokenSequence sample(std::span<const TokenId> prompt_ids, const GenerationConfig& cfg, const Generator& gen, Rng& rng);
// Uses a fresh Rng seeded from cfg.seed.
TokenSequence sample(std::span<const TokenId> prompt_ids, const GenerationConfig& cfg, const Generator& gen);

// Target with trailing PADs removed. Throws on an empty target or an interior PAD.
std::span<const TokenId> checked_target(std::span<const TokenId> target_ids);

// log P(y_t | y_<t, prompt) for every target token, under teacher forcing.
std::vector<double> token_log_probs(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids,
                                    const Generator& gen);
// Mean per-token negative log-likelihood of the target.
double mle_loss(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids, const Generator& gen);

// Adds weight * d(-sum_t log P(y_t))/d(params) into grad and returns the
// per-token log-probabilities of the forward pass.
std::vector<double> accumulate_nll_gradient(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids,
                                            double weight, const Generator& gen, Generator& grad);

// Same, for any token sequence (sampled sequences may contain specials).
std::vector<double> accumulate_sequence_gradient(std::span<const TokenId> prompt_ids,
                                                 std::span<const TokenId> tokens, double weight,
                                                 const Generator& gen, Generator& grad);

// -lambda * log r
double reward_loss(double r, double lambda);

}  // namespace sqlgan
