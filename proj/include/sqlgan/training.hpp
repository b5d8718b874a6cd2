#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sqlgan/corpus.hpp"
#include "sqlgan/discriminator.hpp"
#include "sqlgan/generator.hpp"
#include "sqlgan/optim.hpp"

namespace sqlgan {

enum class AblationVariant {
    no_disc,
    no_sim,
    no_adaptive_reward,
    no_total_sup,
    no_clf_unsup,
    no_clf_sup,
    no_sim_adv,
    no_sim_fm,
    full,
};
inline constexpr AblationVariant kAllVariants[] = {
    AblationVariant::no_disc,      AblationVariant::no_sim,     AblationVariant::no_adaptive_reward,
    AblationVariant::no_total_sup, AblationVariant::no_clf_unsup, AblationVariant::no_clf_sup,
    AblationVariant::no_sim_adv,   AblationVariant::no_sim_fm,  AblationVariant::full};
std::string_view to_string(AblationVariant v);
AblationVariant parse_variant(std::string_view text);

// likelihood_weighted: the reward reaches the generator as a score-function
// weight on the sampled sequence's log-likelihood. constant_term: the reward
// loss is reported but carries no gradient.
enum class RewardCoupling { likelihood_weighted, constant_term };
std::string_view to_string(RewardCoupling c);
RewardCoupling parse_coupling(std::string_view text);

// reward_augmented: MLE plus the lambda-weighted reward term.
// policy_gradient: the RL-only baseline, -sum_t log pi * R, no MLE.
enum class GeneratorObjective { reward_augmented, policy_gradient };
std::string_view to_string(GeneratorObjective o);
GeneratorObjective parse_objective(std::string_view text);

struct TrainingConfig {
    std::size_t rounds = 20;
    std::size_t batch_size = 64;      // discriminator batches
    std::size_t gen_batch_size = 10;  // generator batches
    double lr = 1e-3;
    double alpha = 0.05;
    double theta_decay = 0.9;
    std::size_t gen_per_round = 50;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    AblationVariant variant = AblationVariant::full;
    RewardClass reward_class = RewardClass::malicious;
    RewardCoupling reward_coupling = RewardCoupling::likelihood_weighted;
    GeneratorObjective objective = GeneratorObjective::reward_augmented;
    double fm_weight = 1.0;
    std::size_t disc_steps = 0;  // 0: one pass over the labeled set
    std::size_t warmup_steps = 400;
    double warmup_lr = 3e-3;
    std::size_t unk_pool_factor = 10;

    std::size_t gen_hidden = 128;
    std::size_t gen_layers = 1;
    std::size_t disc_embed = 64;
    std::size_t disc_hidden = 64;
    std::size_t noise_dim = 64;
    std::size_t sim_hidden = 64;
    std::size_t feature_dim = 64;
    std::size_t max_gen_len = 120;
    std::size_t disc_max_len = 256;
    double temperature = 1.0;
    std::size_t top_k = 0;
    TokenizerMode tokenizer = TokenizerMode::character;
    bool record_timing = false;

    void validate() const;
    // Flat key/value view used by config files, manifests and the config hash.
    std::vector<std::pair<std::string, std::string>> entries() const;
    // Throws ConfigError on an unknown key or a malformed value.
    void set(const std::string& key, const std::string& value);
    std::string hash() const;
};

// alpha * theta_decay^(t / T) for 0 <= t <= T.
double lambda_schedule(std::size_t t, const TrainingConfig& cfg);
// The weight actually used in round `round` (1-based), after ablations.
double round_lambda(std::size_t round, const TrainingConfig& cfg);

LossSwitches loss_switches(const TrainingConfig& cfg);

// Which discriminator terms are optimized and whether fake batches are drawn.
struct DiscriminatorMode {
    LossSwitches switches;
    bool simulator = true;
};
DiscriminatorMode discriminator_mode(const TrainingConfig& cfg);

struct RoundMetrics {
    std::size_t round = 0;
    double lambda = 0.0;
    double mean_reward = 0.0;
    double loss_mle = 0.0;
    double loss_rl = 0.0;
    double loss_c_sup = 0.0;
    double loss_c_unsup = 0.0;
    double loss_s = 0.0;
    double disc_acc = 0.0;
    double seconds = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "round,lambda,mean_reward,loss_mle,loss_rl,loss_c_sup,loss_c_unsup,loss_s,disc_acc,seconds";
std::string metrics_csv_row(const RoundMetrics& m);
std::string metrics_csv(const std::vector<RoundMetrics>& rows);

// -sum_t log_probs[t] * R
double policy_gradient_loss(std::span<const double> log_probs, double terminal_reward);

// Vocabulary over the corpus plus the prompt template text.
Vocabulary build_training_vocab(const std::vector<CodeSample>& corpus, TokenizerMode mode);

// One generation-training example.
struct GenExample {
    TokenSequence prompt;
    TokenSequence target;  // code tokens followed by EOS
};
GenExample make_example(const CodeSample& s, const Vocabulary& vocab);
TokenSequence code_tokens(const std::string& code, const Vocabulary& vocab, std::size_t max_len);

struct GeneratorBatchResult {
    Generator grad;
    double loss_mle = 0.0;  // mean per-token NLL of the real targets
    double loss_rl = 0.0;   // mean reward or policy-gradient loss
    double mean_reward = 0.0;
};

// Gradient of the generator objective for one batch, given the sampled
// sequences and their rewards. The discriminator enters only through
// `rewards`.
GeneratorBatchResult generator_batch_gradient(const Generator& gen, std::span<const GenExample> batch,
                                              std::span<const TokenSequence> sampled, std::span<const double> rewards,
                                              double lambda, const TrainingConfig& cfg);

// Reward of a sampled sequence: detokenized, re-tokenized and scored.
// Empty code gets the minimum reward.
double sampled_reward(const TokenSequence& sampled, const Vocabulary& vocab, const Discriminator& disc,
                      const TrainingConfig& cfg);

struct GeneratorPhaseResult {
    double loss_mle = 0.0;
    double loss_rl = 0.0;
    double mean_reward = 0.0;
    std::vector<TokenSequence> generated;  // discriminator-ready code tokens
};

GeneratorPhaseResult generator_phase(std::span<const GenExample> examples, double lambda, Generator& gen,
                                     const Discriminator& disc, const Vocabulary& vocab, Adam& opt,
                                     const TrainingConfig& cfg, Rng& sampling, ClipMonitor* monitor);

struct LabeledSet {
    std::vector<TokenSequence> tokens;
    std::vector<Label> labels;
};

struct DiscriminatorPhaseResult {
    double loss_c_sup = 0.0;
    double loss_c_unsup = 0.0;
    double loss_s = 0.0;
    double accuracy = 0.0;
    std::size_t steps = 0;
};

// Means over the phase's steps. `unlabeled` is the pool unlabeled batches are
// drawn from; it may be empty.
DiscriminatorPhaseResult discriminator_phase(const LabeledSet& labeled, std::span<const TokenSequence> unlabeled,
                                             Discriminator& disc, DiscriminatorOptimizers& opt,
                                             const TrainingConfig& cfg, const DiscriminatorMode& mode, Rng& batching,
                                             Rng& noise, ClipMonitor* monitor);

// Generated samples kept across rounds, oldest evicted first.
class UnkPool {
public:
    explicit UnkPool(std::size_t capacity) : capacity_(capacity) {}
    void add(std::span<const TokenSequence> seqs);
    std::vector<TokenSequence> contents() const { return {pool_.begin(), pool_.end()}; }
    std::size_t size() const { return pool_.size(); }

private:
    std::size_t capacity_;
    std::deque<TokenSequence> pool_;
};

struct TrainOptions {
    ClipMonitor* monitor = nullptr;
    std::function<void(const RoundMetrics&)> on_round;
    // Skips the warm-up and starts from this generator.
    const Generator* initial_generator = nullptr;
    // Only the discriminator phases run; the generator is never touched.
    bool discriminator_only = false;
    // Replaces the variant's discriminator mode, for combined ablations.
    std::optional<DiscriminatorMode> disc_mode;
};

struct TrainResult {
    Vocabulary vocab;
    Generator generator;
    Discriminator discriminator;
    std::vector<RoundMetrics> metrics;
};

// MLE fine-tuning of a freshly initialized generator on the malicious
// training records, the starting point shared by all variants of a seed.
Generator warm_up_generator(const TrainingConfig& cfg, const std::vector<CodeSample>& corpus, const Vocabulary& vocab,
                            ClipMonitor* monitor = nullptr);

// corpus: labeled (benign/malicious) and unlabeled training records.
TrainResult train(const TrainingConfig& cfg, const std::vector<CodeSample>& corpus, const Vocabulary& vocab,
                  const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints: raw little-endian tensors plus a JSON sidecar manifest.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointInfo {
    std::string kind;  // "generator" or "discriminator"
    std::string config_hash;
    std::string vocab_file;
    std::size_t round = 0;
    std::map<std::string, std::size_t> dims;
};

void save_tensors(const std::filesystem::path& path, std::span<const TensorRef> tensors);
// Shapes and names must match exactly.
void load_tensors(const std::filesystem::path& path, std::span<const TensorRef> tensors);

// Writes <stem>.bin and <stem>.json under dir.
void save_generator(const std::filesystem::path& dir, const std::string& stem, Generator& gen, CheckpointInfo info);
void save_discriminator(const std::filesystem::path& dir, const std::string& stem, Discriminator& disc,
                        CheckpointInfo info);
Generator load_generator(const std::filesystem::path& manifest);
Discriminator load_discriminator(const std::filesystem::path& manifest);
CheckpointInfo read_checkpoint_info(const std::filesystem::path& manifest);

}  // namespace sqlgan
