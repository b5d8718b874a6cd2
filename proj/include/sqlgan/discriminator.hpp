#pragma once

#include <span>
#include <vector>

#include "sqlgan/common.hpp"
#include "sqlgan/corpus.hpp"
#include "sqlgan/optim.hpp"

namespace sqlgan {

// Class indices of the k+1-way softmax.
inline constexpr int kBenignClass = 0;
inline constexpr int kMaliciousClass = 1;
inline constexpr int kFakeClass = 2;
inline constexpr int kNumClasses = 3;

inline constexpr double kLogEps = 1e-8;     // stability constant inside every log
inline constexpr double kRewardEps = 1e-7;  // reward clamp

enum class RewardClass { malicious, fake };
std::string_view to_string(RewardClass c);
RewardClass parse_reward_class(std::string_view text);

// Class index for a benign/malicious label; throws ConfigError otherwise.
int class_index(Label label);

struct DiscriminatorDims {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 64;  // encoder and simulator output width
    std::size_t noise_dim = 64;
    std::size_t sim_hidden_dim = 64;
    std::size_t feature_dim = 64;  // classifier penultimate width

    void validate() const;
    bool operator==(const DiscriminatorDims&) const = default;
};

// Token embeddings are stored one column per token id.
struct EncoderParams {
    Matrix embedding;  // embed_dim x vocab
    Matrix weight;     // hidden x embed_dim
    Vector bias;

    void append_tensors(std::vector<TensorRef>& out, const std::string& prefix);
};

struct SimulatorParams {
    Matrix weight1;  // sim_hidden x noise
    Vector bias1;
    Matrix weight2;  // hidden x sim_hidden
    Vector bias2;

    void append_tensors(std::vector<TensorRef>& out, const std::string& prefix);
};

struct ClassifierParams {
    Matrix feature_weight;  // feature x hidden
    Vector feature_bias;
    Matrix out_weight;  // classes x feature
    Vector out_bias;

    void append_tensors(std::vector<TensorRef>& out, const std::string& prefix);
};

struct Discriminator {
    DiscriminatorDims dims;
    EncoderParams encoder;
    SimulatorParams simulator;
    ClassifierParams classifier;

    // All tensors zero, with the shapes implied by dims.
    static Discriminator zeros(const DiscriminatorDims& dims);
    static Discriminator initialize(const DiscriminatorDims& dims, Rng& rng);

    std::vector<TensorRef> tensors();
    // Encoder + classifier, the parameters updated by the classifier loss.
    std::vector<TensorRef> classifier_tensors();
    std::vector<TensorRef> simulator_tensors();
};

// Mean-pooled embedding over non-PAD tokens, then tanh(W e + b).
Vector encode(std::span<const TokenId> seq, const Discriminator& disc);
// Two tanh layers from noise to a hidden vector.
Vector simulate(const Vector& z, const Discriminator& disc);
Vector penultimate_features(const Vector& h, const Discriminator& disc);
// Softmax over (benign, malicious, fake).
Vector classify(const Vector& h, const Discriminator& disc);
Vector softmax(const Vector& logits);

double clamp_reward(double p);
// Clamped probability of reward_class for the encoded sequence.
double reward(std::span<const TokenId> seq, const Discriminator& disc, RewardClass reward_class = RewardClass::malicious);
// argmax over benign/malicious, the fake class excluded.
Label predict_label(std::span<const TokenId> seq, const Discriminator& disc);

// ---------------------------------------------------------------------------
// Loss terms on precomputed class distributions (one column per sample) and
// penultimate features (one column per sample).
// ---------------------------------------------------------------------------

// Mean of -log p_y; labels must be benign or malicious.
double supervised_loss(const Matrix& probs, std::span<const Label> labels);
double unsupervised_loss(const Matrix& real_probs, const Matrix& fake_probs);
double adversarial_loss(const Matrix& fake_probs);
// (1/d_feat) * |mean(real) - mean(fake)|^2
double feature_matching_loss(const Matrix& real_features, const Matrix& fake_features);
double simulator_loss(const Matrix& fake_probs, const Matrix& real_features, const Matrix& fake_features,
                      double fm_weight);

// ---------------------------------------------------------------------------
// Batched forward/backward
// ---------------------------------------------------------------------------

struct DiscriminatorBatch {
    std::vector<TokenSequence> labeled;
    std::vector<Label> labels;
    std::vector<TokenSequence> unlabeled;
    Matrix noise;  // noise_dim x n_fake; zero columns disables the fake side
};

// Which loss terms are live. Disabled terms are neither reported nor trained.
struct LossSwitches {
    bool supervised = true;
    bool unsupervised = true;
    bool adversarial = true;
    bool feature_matching = true;
    double fm_weight = 1.0;
};

struct DiscriminatorLosses {
    double supervised = 0.0;
    double unsupervised = 0.0;
    double adversarial = 0.0;
    double feature_matching = 0.0;
    double classifier = 0.0;  // supervised + unsupervised
    double simulator = 0.0;   // adversarial + fm_weight * feature_matching
    double accuracy = 0.0;    // labeled batch, fake class excluded
};

// Activations of one batch. Real samples are the labeled rows followed by the
// unlabeled rows.
struct DiscriminatorForward {
    std::size_t n_labeled = 0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
    std::vector<TokenSequence> real_tokens;
    std::vector<int> label_classes;
    Matrix pooled;       // embed x n_real
    Matrix real_hidden;  // hidden x n_real
    Matrix noise;        // noise x n_fake
    Matrix sim_hidden;   // sim_hidden x n_fake
    Matrix fake_hidden;  // hidden x n_fake
    Matrix real_features, fake_features;
    Matrix real_probs, fake_probs;
};

DiscriminatorForward forward(const DiscriminatorBatch& batch, const Discriminator& disc);
DiscriminatorLosses evaluate_losses(const DiscriminatorForward& fwd, const LossSwitches& sw);

// Scalar weights of a linear combination of the four loss terms.
struct LossWeights {
    double supervised = 0.0;
    double unsupervised = 0.0;
    double adversarial = 0.0;
    double feature_matching = 0.0;
};

// Full gradient of the weighted objective with respect to every parameter,
// returned in a zero-initialized Discriminator of the same shape.
Discriminator backward(const DiscriminatorForward& fwd, const Discriminator& disc, const LossWeights& w);

LossWeights classifier_objective(const LossSwitches& sw);
LossWeights simulator_objective(const LossSwitches& sw);

struct DiscriminatorOptimizers {
    Adam classifier;
    Adam simulator;
};

// One update of encoder + classifier on supervised + unsupervised, and one of
// the simulator on adversarial + feature matching, both from the same forward
// pass. Returns the losses before the update. Throws RuntimeAbort when a loss
// is non-finite.
DiscriminatorLosses discriminator_step(Discriminator& disc, const DiscriminatorBatch& batch, const LossSwitches& sw,
                                       DiscriminatorOptimizers& opt, double clip_norm, bool train_simulator = true,
                                       ClipMonitor* monitor = nullptr);

}  // namespace sqlgan
