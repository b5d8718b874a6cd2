#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sqlgan/corpus.hpp"
#include "sqlgan/generator.hpp"
#include "sqlgan/training.hpp"

namespace sqlgan {

// ---------------------------------------------------------------------------
// Detection metrics. Positive class = malicious.
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

// Throws ConfigError on a length mismatch or an unlabeled entry.
ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> truths);

struct DetectionMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_undefined = false;  // no positive predictions
    bool recall_undefined = false;     // no positive truths
};

// Throws ConfigError on an empty matrix.
DetectionMetrics metrics(const ConfusionMatrix& cm);

// ---------------------------------------------------------------------------
// Rule-based SQLi oracle
// ---------------------------------------------------------------------------

inline constexpr int kOracleRulesVersion = 1;

// Names of the rule families that fire on `code` (empty when benign).
std::vector<std::string> oracle_matches(std::string_view code);
Label oracle_detect(std::string_view code);

// ---------------------------------------------------------------------------
// Mini SQL fragment validator
// ---------------------------------------------------------------------------

struct FragmentCheck {
    bool accepted = false;
    // Fraction of the payload read before the first error, in [0, 1].
    double progress = 0.0;
};

// Accepts a payload if it forms a well-formed statement on its own, or once
// spliced into a WHERE clause after up to two opening parentheses and, for
// payloads that contain one, an opening quote.
FragmentCheck check_sql_fragment(std::string_view payload);

// True when `sql` parses as a complete script in the supported subset.
bool parses_as_sql(std::string_view sql);

// ---------------------------------------------------------------------------
// Generation scorer
// ---------------------------------------------------------------------------

struct GenerationScore {
    double adherence = 1.0;
    double complexity = 1.0;
    double effectiveness = 1.0;
    double correctness = 1.0;
    double overall = 1.0;  // equal-weight mean of the four
};

// A keyword the prompt asks for, and the code evidence that satisfies it.
struct PromptKeyword {
    std::string name;
    bool present = false;
};

inline constexpr int kKeywordLexiconVersion = 1;

// Lexicon keywords mentioned by the instruction, each checked against code.
std::vector<PromptKeyword> prompt_keywords(std::string_view instruction, std::string_view code);

// Number of distinct SQL feature categories used by code (0..12).
std::size_t sql_feature_categories(std::string_view code);

GenerationScore score_generation(const Prompt& prompt, std::string_view code);

// Any judge with this shape can replace the rule-based scorer.
using Scorer = std::function<GenerationScore(const Prompt&, std::string_view)>;
Scorer default_scorer();

GenerationScore mean_score(std::span<const GenerationScore> scores);

// ---------------------------------------------------------------------------
// Downstream detectors
// ---------------------------------------------------------------------------

class DetectorModel {
public:
    virtual ~DetectorModel() = default;
    virtual std::string name() const = 0;
    // Rows must be labeled benign or malicious.
    virtual void fit(const std::vector<CodeSample>& train) = 0;
    virtual Label predict(std::string_view code) const = 0;
};

struct NgramLogisticConfig {
    std::size_t min_n = 1;
    std::size_t max_n = 3;
    std::size_t epochs = 20;
    double lr = 0.5;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

// Logistic regression over L2-normalized binary character n-gram features.
class NgramLogistic : public DetectorModel {
public:
    explicit NgramLogistic(NgramLogisticConfig cfg = {}) : cfg_(cfg) {}
    std::string name() const override { return "ngram_logistic"; }
    void fit(const std::vector<CodeSample>& train) override;
    Label predict(std::string_view code) const override;
    double probability(std::string_view code) const;

private:
    std::vector<std::pair<std::size_t, double>> features(std::string_view code) const;

    NgramLogisticConfig cfg_;
    std::map<std::string, std::size_t, std::less<>> index_;
    Vector weights_;
    double bias_ = 0.0;
};

// Fits the model on train and reports metrics on test. Unlabeled rows are
// ignored; a train set without both classes is a ConfigError.
DetectionMetrics run_downstream(const std::vector<CodeSample>& train, const std::vector<CodeSample>& test,
                                DetectorModel& model);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct GenerationEvalConfig {
    std::size_t max_len = 120;
    double temperature = 1.0;
    std::size_t top_k = 0;
    std::uint64_t seed = 0;
};

// One completion per prompt; prompt i always draws from substream i, so two
// generators are compared on common random numbers.
std::vector<std::string> generate_codes(const Generator& gen, const Vocabulary& vocab, std::span<const Prompt> prompts,
                                        const GenerationEvalConfig& cfg);

// Prompts of the malicious records, in order.
std::vector<Prompt> malicious_prompts(const std::vector<CodeSample>& samples);

struct AblationResult {
    AblationVariant variant = AblationVariant::full;
    GenerationScore score;
    std::vector<RoundMetrics> metrics;
};

// Trains `variant` from base_cfg and scores its completions of `prompts`.
// warm, when given, replaces the built-in generator warm-up.
AblationResult run_ablation(const TrainingConfig& base_cfg, AblationVariant variant,
                            const std::vector<CodeSample>& train_corpus, const Vocabulary& vocab,
                            std::span<const Prompt> prompts, const GenerationEvalConfig& eval,
                            const Generator* warm = nullptr, const Scorer& scorer = default_scorer());

// Same, for an explicit config (for example the policy-gradient objective).
AblationResult run_generation_experiment(const TrainingConfig& cfg, const std::vector<CodeSample>& train_corpus,
                                         const Vocabulary& vocab, std::span<const Prompt> prompts,
                                         const GenerationEvalConfig& eval, const Generator* warm = nullptr,
                                         const Scorer& scorer = default_scorer());

// Labeled accuracy of the discriminator's benign/malicious argmax.
double discriminator_accuracy(const Discriminator& disc, const std::vector<CodeSample>& test, const Vocabulary& vocab,
                              std::size_t max_len);

struct SemiSupervisedResult {
    double full_accuracy = 0.0;
    double supervised_accuracy = 0.0;  // no unsupervised term, no simulator
};

// Discriminator-only training of the full model and of the supervised-only
// model on the same labeled + unlabeled corpus, both scored on test.
SemiSupervisedResult run_semi_supervised(const TrainingConfig& cfg, const std::vector<CodeSample>& train_corpus,
                                         const std::vector<CodeSample>& test, const Vocabulary& vocab);

// Generated code as label-free records for augmentation.
std::vector<CodeSample> as_generated_samples(std::span<const Prompt> prompts, std::span<const std::string> codes);

struct AugmentationResult {
    DetectionMetrics baseline;
    DetectionMetrics augmented;
    std::size_t train_size = 0;
    std::size_t augmented_size = 0;
};

AugmentationResult run_augmentation(const std::vector<CodeSample>& train, const std::vector<CodeSample>& test,
                                    const std::vector<CodeSample>& generated, AugmentMode mode, std::size_t n,
                                    std::uint64_t seed, const NgramLogisticConfig& model = {});

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline constexpr std::string_view kAblationHeader =
    "variant,overall,adherence,complexity,effectiveness,correctness,final_mean_reward";
std::string ablation_csv(std::span<const AblationResult> rows);

inline constexpr std::string_view kDetectionHeader = "setting,accuracy,precision,recall,f1";
std::string detection_csv(const std::vector<std::pair<std::string, DetectionMetrics>>& rows);

// {"config_hash": ..., "seed": ..., "metrics": {name: value}}
std::string summary_json(const std::string& config_hash, std::uint64_t seed, const std::map<std::string, double>& values);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace sqlgan
