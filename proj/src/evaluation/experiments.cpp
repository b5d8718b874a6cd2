#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "sqlgan/evaluation.hpp"

namespace sqlgan {

std::vector<std::string> generate_codes(const Generator& gen, const Vocabulary& vocab, std::span<const Prompt> prompts,
                                        const GenerationEvalConfig& cfg) {
    const GenerationConfig gcfg{.max_len = cfg.max_len, .temperature = cfg.temperature, .top_k = cfg.top_k};
    gcfg.validate();
    const Rng root(cfg.seed);
    std::vector<std::string> out;
    out.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        Rng rng = root.substream(i);
        out.push_back(detokenize(sample(encode_prompt(prompts[i], vocab), gcfg, gen, rng), vocab));
    }
    return out;
}

std::vector<Prompt> malicious_prompts(const std::vector<CodeSample>& samples) {
    std::vector<Prompt> out;
    for (const auto& s : samples) {
        if (s.label == Label::malicious) out.push_back({s.instruction, s.input});
    }
    return out;
}

AblationResult run_generation_experiment(const TrainingConfig& cfg, const std::vector<CodeSample>& train_corpus,
                                         const Vocabulary& vocab, std::span<const Prompt> prompts,
                                         const GenerationEvalConfig& eval, const Generator* warm,
                                         const Scorer& scorer) {
    TrainOptions options;
    options.initial_generator = warm;
    const auto trained = train(cfg, train_corpus, vocab, options);
    const auto codes = generate_codes(trained.generator, vocab, prompts, eval);
    std::vector<GenerationScore> scores;
    for (std::size_t i = 0; i < prompts.size(); ++i) scores.push_back(scorer(prompts[i], codes[i]));
    return {cfg.variant, mean_score(scores), trained.metrics};
}

AblationResult run_ablation(const TrainingConfig& base_cfg, AblationVariant variant,
                            const std::vector<CodeSample>& train_corpus, const Vocabulary& vocab,
                            std::span<const Prompt> prompts, const GenerationEvalConfig& eval, const Generator* warm,
                            const Scorer& scorer) {
    TrainingConfig cfg = base_cfg;
    cfg.variant = variant;
    return run_generation_experiment(cfg, train_corpus, vocab, prompts, eval, warm, scorer);
}

double discriminator_accuracy(const Discriminator& disc, const std::vector<CodeSample>& test, const Vocabulary& vocab,
                              std::size_t max_len) {
    std::vector<Label> pred, truth;
    for (const auto& s : test) {
        if (s.label == Label::unlabeled) continue;
        const auto tokens = code_tokens(s.output, vocab, max_len);
        pred.push_back(tokens.empty() ? Label::benign : predict_label(tokens, disc));
        truth.push_back(s.label);
    }
    return metrics(confusion(pred, truth)).accuracy;
}

SemiSupervisedResult run_semi_supervised(const TrainingConfig& cfg, const std::vector<CodeSample>& train_corpus,
                                         const std::vector<CodeSample>& test, const Vocabulary& vocab) {
    TrainingConfig full_cfg = cfg;
    full_cfg.variant = AblationVariant::full;
    TrainOptions options;
    options.discriminator_only = true;
    const auto full = train(full_cfg, train_corpus, vocab, options);

    LossSwitches sup_only = loss_switches(full_cfg);
    sup_only.unsupervised = false;
    sup_only.adversarial = false;
    sup_only.feature_matching = false;
    options.disc_mode = DiscriminatorMode{sup_only, false};
    const auto sup = train(full_cfg, train_corpus, vocab, options);

    return {discriminator_accuracy(full.discriminator, test, vocab, cfg.disc_max_len),
            discriminator_accuracy(sup.discriminator, test, vocab, cfg.disc_max_len)};
}

std::vector<CodeSample> as_generated_samples(std::span<const Prompt> prompts, std::span<const std::string> codes) {
    if (prompts.size() != codes.size()) throw std::invalid_argument("as_generated_samples: size mismatch");
    std::vector<CodeSample> out;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i].empty()) continue;
        out.push_back({prompts[i].instruction, prompts[i].input, codes[i], Label::unlabeled, Source::generated});
    }
    return out;
}

AugmentationResult run_augmentation(const std::vector<CodeSample>& train, const std::vector<CodeSample>& test,
                                    const std::vector<CodeSample>& generated, AugmentMode mode, std::size_t n,
                                    std::uint64_t seed, const NgramLogisticConfig& model) {
    AugmentationResult out;
    const auto augmented = augment(train, generated, mode, n, seed);
    out.train_size = train.size();
    out.augmented_size = augmented.size();
    NgramLogistic base(model);
    out.baseline = run_downstream(train, test, base);
    NgramLogistic aug(model);
    out.augmented = run_downstream(augmented, test, aug);
    return out;
}

std::string ablation_csv(std::span<const AblationResult> rows) {
    std::string out(kAblationHeader);
    out += "\n";
    for (const auto& r : rows) {
        const double reward = r.metrics.empty() ? 0.0 : r.metrics.back().mean_reward;
        out += fmt::format("{},{},{},{},{},{},{}\n", to_string(r.variant), format_double(r.score.overall),
                           format_double(r.score.adherence), format_double(r.score.complexity),
                           format_double(r.score.effectiveness), format_double(r.score.correctness),
                           format_double(reward));
    }
    return out;
}

std::string detection_csv(const std::vector<std::pair<std::string, DetectionMetrics>>& rows) {
    std::string out(kDetectionHeader);
    out += "\n";
    for (const auto& [name, m] : rows) {
        out += fmt::format("{},{},{},{},{}\n", name, format_double(m.accuracy), format_double(m.precision),
                           format_double(m.recall), format_double(m.f1));
    }
    return out;
}

std::string summary_json(const std::string& config_hash, std::uint64_t seed,
                         const std::map<std::string, double>& values) {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["metrics"] = values;
    return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw RuntimeAbort("cannot write " + path.string());
}

}  // namespace sqlgan
