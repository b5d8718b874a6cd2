#include "sqlgan/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace sqlgan {

namespace {

template <class Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::pair<Enum, std::string_view> (&table)[N], const char* what) {
    for (const auto& [value, name] : table) {
        if (name == text) return value;
    }
    std::string allowed;
    for (const auto& [value, name] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    throw ConfigError(fmt::format("unknown {} '{}' (allowed: {})", what, text, allowed));
}

template <class Enum, std::size_t N>
std::string_view enum_name(Enum v, const std::pair<Enum, std::string_view> (&table)[N]) {
    for (const auto& [value, name] : table) {
        if (value == v) return name;
    }
    return "?";
}

constexpr std::pair<AblationVariant, std::string_view> kVariantNames[] = {
    {AblationVariant::no_disc, "no_disc"},
    {AblationVariant::no_sim, "no_sim"},
    {AblationVariant::no_adaptive_reward, "no_adaptive_reward"},
    {AblationVariant::no_total_sup, "no_total_sup"},
    {AblationVariant::no_clf_unsup, "no_clf_unsup"},
    {AblationVariant::no_clf_sup, "no_clf_sup"},
    {AblationVariant::no_sim_adv, "no_sim_adv"},
    {AblationVariant::no_sim_fm, "no_sim_fm"},
    {AblationVariant::full, "full"},
};
constexpr std::pair<RewardCoupling, std::string_view> kCouplingNames[] = {
    {RewardCoupling::likelihood_weighted, "likelihood_weighted"},
    {RewardCoupling::constant_term, "constant_term"},
};
constexpr std::pair<GeneratorObjective, std::string_view> kObjectiveNames[] = {
    {GeneratorObjective::reward_augmented, "reward_augmented"},
    {GeneratorObjective::policy_gradient, "policy_gradient"},
};
constexpr std::pair<TokenizerMode, std::string_view> kTokenizerNames[] = {
    {TokenizerMode::character, "character"},
    {TokenizerMode::word, "word"},
};

std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, value));
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
        throw ConfigError(fmt::format("{}: expected a real number, got '{}'", key, value));
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, value));
}

void check_finite(double value, const char* term) {
    if (!std::isfinite(value)) throw RuntimeAbort(fmt::format("non-finite {} loss", term));
}

double mean_of(std::span<const double> v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sequential passes over a shuffled index set, reshuffled at each wrap.
class CyclicOrder {
public:
    CyclicOrder(std::size_t n, Rng rng) : rng_(std::move(rng)), order_(n) { reshuffle(); }

    std::size_t next() {
        if (pos_ == order_.size()) reshuffle();
        return order_[pos_++];
    }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        rng_.shuffle(order_);
        pos_ = 0;
    }

    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

GenerationConfig sampling_config(const TrainingConfig& cfg) {
    return {.max_len = cfg.max_gen_len, .temperature = cfg.temperature, .top_k = cfg.top_k};
}

DiscriminatorDims disc_dims(const TrainingConfig& cfg, std::size_t vocab) {
    return {.vocab_size = vocab, .embed_dim = cfg.disc_embed, .hidden_dim = cfg.disc_hidden,
            .noise_dim = cfg.noise_dim, .sim_hidden_dim = cfg.sim_hidden, .feature_dim = cfg.feature_dim};
}

GeneratorDims gen_dims(const TrainingConfig& cfg, std::size_t vocab) {
    return {.vocab_size = vocab, .hidden_dim = cfg.gen_hidden, .layers = cfg.gen_layers};
}

std::vector<GenExample> malicious_examples(const std::vector<CodeSample>& corpus, const Vocabulary& vocab) {
    std::vector<GenExample> out;
    for (const auto& s : corpus) {
        if (s.label == Label::malicious) out.push_back(make_example(s, vocab));
    }
    if (out.empty()) throw ConfigError("training corpus has no labeled malicious records");
    return out;
}

}  // namespace

std::string_view to_string(AblationVariant v) { return enum_name(v, kVariantNames); }
AblationVariant parse_variant(std::string_view text) { return parse_enum(text, kVariantNames, "variant"); }
std::string_view to_string(RewardCoupling c) { return enum_name(c, kCouplingNames); }
RewardCoupling parse_coupling(std::string_view text) { return parse_enum(text, kCouplingNames, "reward_coupling"); }
std::string_view to_string(GeneratorObjective o) { return enum_name(o, kObjectiveNames); }
GeneratorObjective parse_objective(std::string_view text) { return parse_enum(text, kObjectiveNames, "objective"); }

void TrainingConfig::validate() const {
    if (rounds == 0) throw ConfigError("rounds must be >= 1");
    if (batch_size == 0 || gen_batch_size == 0) throw ConfigError("batch sizes must be >= 1");
    if (!(lr >= 0.0) || !(warmup_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (!(theta_decay > 0.0 && theta_decay <= 1.0)) throw ConfigError("theta_decay must lie in (0, 1]");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
    if (!(fm_weight >= 0.0)) throw ConfigError("fm_weight must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (max_gen_len == 0 || disc_max_len == 0) throw ConfigError("max lengths must be >= 1");
    if (gen_hidden == 0 || gen_layers == 0 || disc_embed == 0 || disc_hidden == 0 || noise_dim == 0 ||
        sim_hidden == 0 || feature_dim == 0) {
        throw ConfigError("model widths must be >= 1");
    }
}

std::vector<std::pair<std::string, std::string>> TrainingConfig::entries() const {
    auto n = [](std::size_t v) { return std::to_string(v); };
    return {
        {"rounds", n(rounds)},
        {"batch_size", n(batch_size)},
        {"gen_batch_size", n(gen_batch_size)},
        {"lr", format_double(lr)},
        {"alpha", format_double(alpha)},
        {"theta_decay", format_double(theta_decay)},
        {"gen_per_round", n(gen_per_round)},
        {"clip_norm", format_double(clip_norm)},
        {"seed", std::to_string(seed)},
        {"variant", std::string(to_string(variant))},
        {"reward_class", std::string(to_string(reward_class))},
        {"reward_coupling", std::string(to_string(reward_coupling))},
        {"objective", std::string(to_string(objective))},
        {"fm_weight", format_double(fm_weight)},
        {"disc_steps", n(disc_steps)},
        {"warmup_steps", n(warmup_steps)},
        {"warmup_lr", format_double(warmup_lr)},
        {"unk_pool_factor", n(unk_pool_factor)},
        {"gen_hidden", n(gen_hidden)},
        {"gen_layers", n(gen_layers)},
        {"disc_embed", n(disc_embed)},
        {"disc_hidden", n(disc_hidden)},
        {"noise_dim", n(noise_dim)},
        {"sim_hidden", n(sim_hidden)},
        {"feature_dim", n(feature_dim)},
        {"max_gen_len", n(max_gen_len)},
        {"disc_max_len", n(disc_max_len)},
        {"temperature", format_double(temperature)},
        {"top_k", n(top_k)},
        {"tokenizer", std::string(enum_name(tokenizer, kTokenizerNames))},
        {"record_timing", record_timing ? "true" : "false"},
    };
}

void TrainingConfig::set(const std::string& key, const std::string& value) {
    if (key == "rounds") rounds = parse_count(key, value);
    else if (key == "batch_size") batch_size = parse_count(key, value);
    else if (key == "gen_batch_size") gen_batch_size = parse_count(key, value);
    else if (key == "lr") lr = parse_real(key, value);
    else if (key == "alpha") alpha = parse_real(key, value);
    else if (key == "theta_decay") theta_decay = parse_real(key, value);
    else if (key == "gen_per_round") gen_per_round = parse_count(key, value);
    else if (key == "clip_norm") clip_norm = parse_real(key, value);
    else if (key == "seed") seed = parse_count(key, value);
    else if (key == "variant") variant = parse_variant(value);
    else if (key == "reward_class") reward_class = parse_reward_class(value);
    else if (key == "reward_coupling") reward_coupling = parse_coupling(value);
    else if (key == "objective") objective = parse_objective(value);
    else if (key == "fm_weight") fm_weight = parse_real(key, value);
    else if (key == "disc_steps") disc_steps = parse_count(key, value);
    else if (key == "warmup_steps") warmup_steps = parse_count(key, value);
    else if (key == "warmup_lr") warmup_lr = parse_real(key, value);
    else if (key == "unk_pool_factor") unk_pool_factor = parse_count(key, value);
    else if (key == "gen_hidden") gen_hidden = parse_count(key, value);
    else if (key == "gen_layers") gen_layers = parse_count(key, value);
    else if (key == "disc_embed") disc_embed = parse_count(key, value);
    else if (key == "disc_hidden") disc_hidden = parse_count(key, value);
    else if (key == "noise_dim") noise_dim = parse_count(key, value);
    else if (key == "sim_hidden") sim_hidden = parse_count(key, value);
    else if (key == "feature_dim") feature_dim = parse_count(key, value);
    else if (key == "max_gen_len") max_gen_len = parse_count(key, value);
    else if (key == "disc_max_len") disc_max_len = parse_count(key, value);
    else if (key == "temperature") temperature = parse_real(key, value);
    else if (key == "top_k") top_k = parse_count(key, value);
    else if (key == "tokenizer") tokenizer = parse_enum(value, kTokenizerNames, "tokenizer");
    else if (key == "record_timing") record_timing = parse_bool(key, value);
    else throw ConfigError("unknown training config key '" + key + "'");
}

std::string TrainingConfig::hash() const {
    std::string text;
    for (const auto& [k, v] : entries()) text += k + "=" + v + "\n";
    return sha256_hex(text);
}

double lambda_schedule(std::size_t t, const TrainingConfig& cfg) {
    if (t > cfg.rounds) throw std::invalid_argument(fmt::format("lambda_schedule: t={} exceeds T={}", t, cfg.rounds));
    return cfg.alpha * std::pow(cfg.theta_decay, static_cast<double>(t) / static_cast<double>(cfg.rounds));
}

double round_lambda(std::size_t round, const TrainingConfig& cfg) {
    if (round == 0) throw std::invalid_argument("rounds are numbered from 1");
    switch (cfg.variant) {
        case AblationVariant::no_disc: return 0.0;
        case AblationVariant::no_adaptive_reward: return cfg.alpha;
        default: return lambda_schedule(round - 1, cfg);
    }
}

LossSwitches loss_switches(const TrainingConfig& cfg) {
    LossSwitches sw;
    sw.fm_weight = cfg.fm_weight;
    switch (cfg.variant) {
        case AblationVariant::no_clf_unsup: sw.unsupervised = false; break;
        case AblationVariant::no_clf_sup: sw.supervised = false; break;
        case AblationVariant::no_sim_adv: sw.adversarial = false; break;
        case AblationVariant::no_sim_fm: sw.feature_matching = false; break;
        case AblationVariant::no_sim:
            sw.adversarial = false;
            sw.feature_matching = false;
            break;
        default: break;
    }
    return sw;
}

DiscriminatorMode discriminator_mode(const TrainingConfig& cfg) {
    return {loss_switches(cfg), cfg.variant != AblationVariant::no_sim};
}

std::string metrics_csv_row(const RoundMetrics& m) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{}", m.round, format_double(m.lambda), format_double(m.mean_reward),
                       format_double(m.loss_mle), format_double(m.loss_rl), format_double(m.loss_c_sup),
                       format_double(m.loss_c_unsup), format_double(m.loss_s), format_double(m.disc_acc),
                       format_double(m.seconds));
}

std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
    std::string out(kMetricsHeader);
    out += "\n";
    for (const auto& r : rows) out += metrics_csv_row(r) + "\n";
    return out;
}

double policy_gradient_loss(std::span<const double> log_probs, double terminal_reward) {
    double sum = 0.0;
    for (double lp : log_probs) sum += lp * terminal_reward;
    return -sum;
}

Vocabulary build_training_vocab(const std::vector<CodeSample>& corpus, TokenizerMode mode) {
    std::vector<CodeSample> with_template = corpus;
    with_template.push_back(CodeSample{format_prompt({"-", ""}), "", "-"});
    return build_vocab(with_template, mode);
}

GenExample make_example(const CodeSample& s, const Vocabulary& vocab) {
    GenExample ex;
    ex.prompt = encode_prompt({s.instruction, s.input}, vocab);
    ex.target = tokenize(s.output, vocab);
    ex.target.push_back(kEos);
    return ex;
}

TokenSequence code_tokens(const std::string& code, const Vocabulary& vocab, std::size_t max_len) {
    return tokenize(code, vocab, max_len);
}

GeneratorBatchResult generator_batch_gradient(const Generator& gen, std::span<const GenExample> batch,
                                              std::span<const TokenSequence> sampled, std::span<const double> rewards,
                                              double lambda, const TrainingConfig& cfg) {
    if (batch.size() != sampled.size() || batch.size() != rewards.size()) {
        throw std::invalid_argument("generator_batch_gradient: size mismatch");
    }
    GeneratorBatchResult out{Generator::zeros(gen.dims)};
    const auto B = static_cast<double>(batch.size());
    const bool rl_only = cfg.objective == GeneratorObjective::policy_gradient;
    const bool use_mle = !rl_only && cfg.variant != AblationVariant::no_total_sup;

    std::vector<double> mle(batch.size()), cost(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const auto n = static_cast<double>(ex.target.size());
        if (use_mle) {
            const auto lp = accumulate_nll_gradient(ex.prompt, ex.target, 1.0 / (B * n), gen, out.grad);
            mle[i] = -std::accumulate(lp.begin(), lp.end(), 0.0) / n;
        } else {
            mle[i] = mle_loss(ex.prompt, ex.target, gen);
        }
        cost[i] = -std::log(rewards[i]);
    }
    const double baseline = mean_of(cost);

    std::vector<double> rl(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& seq = sampled[i];
        const auto n = static_cast<double>(seq.size());
        if (rl_only) {
            // Ascend sum_t log pi * R: gradient weight R on the summed NLL.
            const auto lp = accumulate_sequence_gradient(batch[i].prompt, seq, rewards[i] / B, gen, out.grad);
            rl[i] = policy_gradient_loss(lp, rewards[i]);
            continue;
        }
        rl[i] = reward_loss(rewards[i], lambda);
        if (lambda > 0.0 && cfg.reward_coupling == RewardCoupling::likelihood_weighted) {
            // Score-function estimate of d(lambda * E[-log r]): samples whose
            // cost exceeds the batch mean become less likely.
            const double weight = -lambda * (cost[i] - baseline) / B;
            if (weight != 0.0) accumulate_sequence_gradient(batch[i].prompt, seq, weight / n, gen, out.grad);
        }
    }
    out.loss_mle = mean_of(mle);
    out.loss_rl = mean_of(rl);
    out.mean_reward = mean_of(rewards);
    return out;
}

double sampled_reward(const TokenSequence& sampled, const Vocabulary& vocab, const Discriminator& disc,
                      const TrainingConfig& cfg) {
    const auto tokens = code_tokens(detokenize(sampled, vocab), vocab, cfg.disc_max_len);
    if (tokens.empty()) return kRewardEps;
    return reward(tokens, disc, cfg.reward_class);
}

GeneratorPhaseResult generator_phase(std::span<const GenExample> examples, double lambda, Generator& gen,
                                     const Discriminator& disc, const Vocabulary& vocab, Adam& opt,
                                     const TrainingConfig& cfg, Rng& sampling, ClipMonitor* monitor) {
    GeneratorPhaseResult out;
    const auto gcfg = sampling_config(cfg);
    double mle_sum = 0.0, rl_sum = 0.0, reward_sum = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.gen_batch_size) {
        const auto batch = examples.subspan(start, std::min(cfg.gen_batch_size, examples.size() - start));
        std::vector<TokenSequence> sampled;
        std::vector<double> rewards;
        for (const auto& ex : batch) {
            sampled.push_back(sample(ex.prompt, gcfg, gen, sampling));
            rewards.push_back(sampled_reward(sampled.back(), vocab, disc, cfg));
            auto code = code_tokens(detokenize(sampled.back(), vocab), vocab, cfg.disc_max_len);
            if (!code.empty()) out.generated.push_back(std::move(code));
        }
        auto r = generator_batch_gradient(gen, batch, sampled, rewards, lambda, cfg);
        check_finite(r.loss_mle, "MLE");
        check_finite(r.loss_rl, cfg.objective == GeneratorObjective::policy_gradient ? "policy-gradient" : "reward");
        auto params = gen.tensors();
        auto grads = r.grad.tensors();
        clipped_step(opt, params, grads, cfg.clip_norm, monitor);
        const auto b = static_cast<double>(batch.size());
        mle_sum += r.loss_mle * b;
        rl_sum += r.loss_rl * b;
        reward_sum += r.mean_reward * b;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(examples.size(), 1));
    out.loss_mle = mle_sum / n;
    out.loss_rl = rl_sum / n;
    out.mean_reward = reward_sum / n;
    return out;
}

DiscriminatorPhaseResult discriminator_phase(const LabeledSet& labeled, std::span<const TokenSequence> unlabeled,
                                             Discriminator& disc, DiscriminatorOptimizers& opt,
                                             const TrainingConfig& cfg, const DiscriminatorMode& mode, Rng& batching,
                                             Rng& noise, ClipMonitor* monitor) {
    const std::size_t n = labeled.tokens.size();
    if (n == 0) throw ConfigError("discriminator phase needs labeled samples");
    const std::size_t steps = cfg.disc_steps > 0 ? cfg.disc_steps : (n + cfg.batch_size - 1) / cfg.batch_size;
    const bool use_sim = mode.simulator;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    batching.shuffle(order);
    std::size_t cursor = 0;

    DiscriminatorPhaseResult out;
    for (std::size_t step = 0; step < steps; ++step) {
        DiscriminatorBatch b;
        for (std::size_t k = 0; k < std::min(cfg.batch_size, n); ++k) {
            if (cursor == n) {
                batching.shuffle(order);
                cursor = 0;
            }
            const std::size_t idx = order[cursor++];
            b.labeled.push_back(labeled.tokens[idx]);
            b.labels.push_back(labeled.labels[idx]);
        }
        if (!unlabeled.empty()) {
            for (std::size_t k = 0; k < cfg.batch_size; ++k) {
                b.unlabeled.push_back(unlabeled[batching.uniform_index(unlabeled.size())]);
            }
        }
        if (use_sim) {
            b.noise.resize(static_cast<Eigen::Index>(cfg.noise_dim), static_cast<Eigen::Index>(cfg.batch_size));
            for (auto& v : b.noise.reshaped()) v = noise.normal();
        }
        const auto L = discriminator_step(disc, b, mode.switches, opt, cfg.clip_norm, use_sim, monitor);
        out.loss_c_sup += L.supervised;
        out.loss_c_unsup += L.unsupervised;
        out.loss_s += L.simulator;
        out.accuracy += L.accuracy;
    }
    const auto s = static_cast<double>(steps);
    out.loss_c_sup /= s;
    out.loss_c_unsup /= s;
    out.loss_s /= s;
    out.accuracy /= s;
    out.steps = steps;
    return out;
}

void UnkPool::add(std::span<const TokenSequence> seqs) {
    for (const auto& s : seqs) {
        pool_.push_back(s);
        while (pool_.size() > capacity_) pool_.pop_front();
    }
}

Generator warm_up_generator(const TrainingConfig& cfg, const std::vector<CodeSample>& corpus, const Vocabulary& vocab,
                            ClipMonitor* monitor) {
    cfg.validate();
    const Rng root(cfg.seed);
    Rng init = root.substream("init").substream("generator");
    Generator gen = Generator::initialize(gen_dims(cfg, vocab.size()), init);
    const auto examples = malicious_examples(corpus, vocab);
    CyclicOrder order(examples.size(), root.substream("warmup"));
    Adam opt({.lr = cfg.warmup_lr});
    for (std::size_t step = 0; step < cfg.warmup_steps; ++step) {
        Generator grad = Generator::zeros(gen.dims);
        const auto B = static_cast<double>(cfg.gen_batch_size);
        double loss = 0.0;
        for (std::size_t k = 0; k < cfg.gen_batch_size; ++k) {
            const auto& ex = examples[order.next()];
            const auto n = static_cast<double>(ex.target.size());
            const auto lp = accumulate_nll_gradient(ex.prompt, ex.target, 1.0 / (B * n), gen, grad);
            loss -= std::accumulate(lp.begin(), lp.end(), 0.0) / (B * n);
        }
        check_finite(loss, "warm-up MLE");
        auto params = gen.tensors();
        auto grads = grad.tensors();
        clipped_step(opt, params, grads, cfg.clip_norm, monitor);
    }
    return gen;
}

TrainResult train(const TrainingConfig& cfg, const std::vector<CodeSample>& corpus, const Vocabulary& vocab,
                  const TrainOptions& options) {
    cfg.validate();
    if (count_label(corpus, Label::benign) == 0 || count_label(corpus, Label::malicious) == 0) {
        throw ConfigError("training corpus needs at least one benign and one malicious labeled record");
    }
    const Rng root(cfg.seed);
    Rng disc_init = root.substream("init").substream("discriminator");
    Rng batching = root.substream("batching");
    Rng sampling = root.substream("sampling");
    Rng noise = root.substream("noise");

    TrainResult result;
    result.vocab = vocab;
    result.discriminator = Discriminator::initialize(disc_dims(cfg, vocab.size()), disc_init);
    if (options.initial_generator) {
        result.generator = *options.initial_generator;
    } else if (options.discriminator_only) {
        Rng gen_init = root.substream("init").substream("generator");
        result.generator = Generator::initialize(gen_dims(cfg, vocab.size()), gen_init);
    } else {
        result.generator = warm_up_generator(cfg, corpus, vocab, options.monitor);
    }
    if (result.generator.dims != gen_dims(cfg, vocab.size())) {
        throw ConfigError("initial generator does not match the configured dimensions");
    }

    LabeledSet labeled;
    std::vector<TokenSequence> corpus_unlabeled;
    for (const auto& s : corpus) {
        auto tokens = code_tokens(s.output, vocab, cfg.disc_max_len);
        if (tokens.empty()) continue;
        if (s.label == Label::unlabeled) {
            corpus_unlabeled.push_back(std::move(tokens));
        } else {
            labeled.tokens.push_back(std::move(tokens));
            labeled.labels.push_back(s.label);
        }
    }
    std::vector<GenExample> examples;
    std::optional<CyclicOrder> gen_order;
    if (!options.discriminator_only) {
        examples = malicious_examples(corpus, vocab);
        gen_order.emplace(examples.size(), batching.substream("generator_order"));
    }

    Adam gen_opt({.lr = cfg.lr});
    DiscriminatorOptimizers disc_opt{Adam({.lr = cfg.lr}), Adam({.lr = cfg.lr})};
    UnkPool pool(cfg.unk_pool_factor * labeled.tokens.size());
    const DiscriminatorMode mode = options.disc_mode.value_or(discriminator_mode(cfg));

    for (std::size_t round = 1; round <= cfg.rounds; ++round) {
        const auto start = std::chrono::steady_clock::now();
        RoundMetrics m;
        m.round = round;
        m.lambda = round_lambda(round, cfg);

        std::vector<TokenSequence> generated;
        if (!options.discriminator_only) {
            std::vector<GenExample> round_examples;
            for (std::size_t k = 0; k < cfg.gen_per_round; ++k) round_examples.push_back(examples[gen_order->next()]);
            auto g = generator_phase(round_examples, m.lambda, result.generator, result.discriminator, vocab, gen_opt,
                                     cfg, sampling, options.monitor);
            m.loss_mle = g.loss_mle;
            m.loss_rl = g.loss_rl;
            m.mean_reward = g.mean_reward;
            generated = std::move(g.generated);
        }

        if (cfg.variant != AblationVariant::no_disc) {
            std::vector<TokenSequence> unlabeled = corpus_unlabeled;
            unlabeled.insert(unlabeled.end(), generated.begin(), generated.end());
            const auto kept = pool.contents();
            unlabeled.insert(unlabeled.end(), kept.begin(), kept.end());
            const auto d = discriminator_phase(labeled, unlabeled, result.discriminator, disc_opt, cfg, mode,
                                               batching, noise, options.monitor);
            m.loss_c_sup = d.loss_c_sup;
            m.loss_c_unsup = d.loss_c_unsup;
            m.loss_s = d.loss_s;
            m.disc_acc = d.accuracy;
        }
        pool.add(generated);

        if (cfg.record_timing) {
            m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        for (double v : {m.lambda, m.mean_reward, m.loss_mle, m.loss_rl, m.loss_c_sup, m.loss_c_unsup, m.loss_s,
                         m.disc_acc}) {
            if (!std::isfinite(v)) throw RuntimeAbort(fmt::format("non-finite metric in round {}", round));
        }
        result.metrics.push_back(m);
        if (options.on_round) options.on_round(m);
    }
    return result;
}

}  // namespace sqlgan
