#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "sqlgan/training.hpp"
#include "support/gradcheck.hpp"

using namespace sqlgan;
using namespace sqlgan::testing;

namespace {

TrainingConfig tiny_config(std::uint64_t seed = 1) {
    TrainingConfig cfg;
    cfg.seed = seed;
    cfg.rounds = 2;
    cfg.batch_size = 8;
    cfg.gen_batch_size = 2;
    cfg.gen_per_round = 4;
    cfg.warmup_steps = 5;
    cfg.gen_hidden = 12;
    cfg.disc_embed = 8;
    cfg.disc_hidden = 8;
    cfg.noise_dim = 8;
    cfg.sim_hidden = 8;
    cfg.feature_dim = 8;
    cfg.max_gen_len = 24;
    return cfg;
}

std::vector<CodeSample> tiny_corpus(std::uint64_t seed = 3) {
    return synthesize_corpus({.n_benign = 8, .n_malicious = 8, .n_unlabeled = 8, .seed = seed});
}

bool same_tensors(std::vector<TensorRef> a, std::vector<TensorRef> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = a[i].values();
        const auto y = b[i].values();
        if (!std::equal(x.begin(), x.end(), y.begin(), y.end())) return false;
    }
    return true;
}

Generator small_generator(std::size_t vocab, std::size_t hidden, std::uint64_t seed) {
    Rng rng(seed);
    return Generator::initialize({.vocab_size = vocab, .hidden_dim = hidden}, rng);
}

}  // namespace

TEST_CASE("lambda schedule") {
    TrainingConfig cfg;
    cfg.rounds = 20;
    CHECK(std::abs(lambda_schedule(0, cfg) - 0.05) <= 1e-9);
    CHECK(std::abs(lambda_schedule(20, cfg) - 0.045) <= 1e-9);
    CHECK(std::abs(lambda_schedule(10, cfg) - 0.0474342) <= 1e-7);
    CHECK(std::abs(lambda_schedule(10, cfg) - 0.05 * std::sqrt(0.9)) <= 1e-15);
    for (std::size_t t = 1; t <= 20; ++t) CHECK(lambda_schedule(t, cfg) < lambda_schedule(t - 1, cfg));
    CHECK_THROWS(lambda_schedule(21, cfg));

    cfg.theta_decay = 1.0;
    for (std::size_t t = 0; t <= 20; ++t) CHECK(lambda_schedule(t, cfg) == 0.05);
    cfg.theta_decay = 0.9;
    cfg.alpha = 0.0;
    for (std::size_t r = 1; r <= 20; ++r) CHECK(round_lambda(r, cfg) == 0.0);

    cfg.alpha = 0.05;
    CHECK(round_lambda(1, cfg) == lambda_schedule(0, cfg));
    CHECK(round_lambda(20, cfg) == lambda_schedule(19, cfg));
    cfg.variant = AblationVariant::no_adaptive_reward;
    CHECK(round_lambda(7, cfg) == 0.05);
    cfg.variant = AblationVariant::no_disc;
    CHECK(round_lambda(7, cfg) == 0.0);
}

TEST_CASE("clip_gradients") {
    Vector g(4);
    auto refs = [&] { return std::vector<TensorRef>{tensor_ref("g", g)}; };
    SUBCASE("norm 2 is halved") {
        g << 1.0, -1.0, 1.0, 1.0;
        const Vector before = g;
        CHECK(clip_gradients(refs(), 1.0) == doctest::Approx(1.0));
        CHECK((g - before / 2.0).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("norm 0.5 is unchanged") {
        g << 0.25, 0.25, -0.25, 0.25;
        const Vector before = g;
        clip_gradients(refs(), 1.0);
        CHECK(g == before);
    }
    SUBCASE("zeros stay zero") {
        g.setZero();
        CHECK(clip_gradients(refs(), 1.0) == 0.0);
        CHECK(g.isZero(0.0));
    }
    SUBCASE("errors") {
        g << 1.0, NAN, 0.0, 0.0;
        CHECK_THROWS_AS(clip_gradients(refs(), 1.0), RuntimeAbort);
        g.setOnes();
        CHECK_THROWS_AS(clip_gradients(refs(), 0.0), ConfigError);
    }
}

TEST_CASE("config parsing and hashing") {
    TrainingConfig cfg;
    TrainingConfig copy;
    for (const auto& [k, v] : cfg.entries()) copy.set(k, v);
    CHECK(copy.hash() == cfg.hash());

    copy.set("alpha", "0.1");
    CHECK(copy.alpha == 0.1);
    CHECK(copy.hash() != cfg.hash());
    copy.set("variant", "no_sim");
    CHECK(copy.variant == AblationVariant::no_sim);
    copy.set("objective", "policy_gradient");
    CHECK(copy.objective == GeneratorObjective::policy_gradient);

    CHECK_THROWS_AS(copy.set("learning_rate", "0.1"), ConfigError);
    CHECK_THROWS_AS(copy.set("rounds", "-3"), ConfigError);
    CHECK_THROWS_AS(copy.set("lr", "fast"), ConfigError);
    CHECK_THROWS_AS(copy.set("variant", "no_everything"), ConfigError);

    TrainingConfig bad;
    bad.theta_decay = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.theta_decay = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.alpha = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.clip_norm = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    for (auto v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
}

TEST_CASE("loss switches per variant") {
    TrainingConfig cfg;
    auto sw = loss_switches(cfg);
    CHECK((sw.supervised && sw.unsupervised && sw.adversarial && sw.feature_matching));
    cfg.variant = AblationVariant::no_clf_unsup;
    CHECK(!loss_switches(cfg).unsupervised);
    cfg.variant = AblationVariant::no_clf_sup;
    CHECK(!loss_switches(cfg).supervised);
    cfg.variant = AblationVariant::no_sim_adv;
    CHECK(!loss_switches(cfg).adversarial);
    cfg.variant = AblationVariant::no_sim_fm;
    CHECK(!loss_switches(cfg).feature_matching);
    CHECK(discriminator_mode(cfg).simulator);
    cfg.variant = AblationVariant::no_sim;
    CHECK(!discriminator_mode(cfg).simulator);
}

TEST_CASE("policy_gradient_loss") {
    CHECK(policy_gradient_loss(std::vector<double>{-0.3, -1.2}, 0.0) == 0.0);
    CHECK(policy_gradient_loss(std::vector<double>{-0.5}, 1.0) == 0.5);
    CHECK(policy_gradient_loss(std::vector<double>{-0.5, -0.25}, 2.0) == doctest::Approx(1.5));
}

TEST_CASE("generator batch gradient") {
    const std::size_t V = 14;
    const auto gen = small_generator(V, 6, 30);
    Rng rng(31);
    std::vector<GenExample> batch;
    std::vector<TokenSequence> sampled;
    for (int i = 0; i < 3; ++i) {
        GenExample ex;
        for (int k = 0; k < 3; ++k) ex.prompt.push_back(static_cast<TokenId>(kNumSpecials + rng.uniform_index(V - 4)));
        for (int k = 0; k < 4; ++k) ex.target.push_back(static_cast<TokenId>(kNumSpecials + rng.uniform_index(V - 4)));
        ex.target.push_back(kEos);
        batch.push_back(ex);
        sampled.push_back(sample(ex.prompt, {.max_len = 6}, gen, rng));
    }
    const std::vector<double> rewards{0.9, 0.2, 0.5};
    TrainingConfig cfg;

    auto pure_mle = [&] {
        Generator g = Generator::zeros(gen.dims);
        for (const auto& ex : batch) {
            accumulate_nll_gradient(ex.prompt, ex.target, 1.0 / (3.0 * static_cast<double>(ex.target.size())), gen, g);
        }
        return g;
    };

    SUBCASE("lambda = 0 is pure MLE") {
        auto r = generator_batch_gradient(gen, batch, sampled, rewards, 0.0, cfg);
        auto mle = pure_mle();
        CHECK(same_tensors(r.grad.tensors(), mle.tensors()));
        double expected = 0.0;
        for (const auto& ex : batch) expected += mle_loss(ex.prompt, ex.target, gen) / 3.0;
        CHECK(r.loss_mle == doctest::Approx(expected).epsilon(1e-12));
        CHECK(r.mean_reward == doctest::Approx((0.9 + 0.2 + 0.5) / 3.0));
        CHECK(r.loss_rl == 0.0);
    }
    SUBCASE("constant_term coupling carries no gradient") {
        cfg.reward_coupling = RewardCoupling::constant_term;
        auto r = generator_batch_gradient(gen, batch, sampled, rewards, 0.05, cfg);
        auto mle = pure_mle();
        CHECK(same_tensors(r.grad.tensors(), mle.tensors()));
        double rl = 0.0;
        for (double x : rewards) rl += reward_loss(x, 0.05) / 3.0;
        CHECK(r.loss_rl == doctest::Approx(rl).epsilon(1e-12));
    }
    SUBCASE("gradient depends on the discriminator only through rewards") {
        // Rescaling every reward shifts all costs equally; the baseline absorbs it.
        std::vector<double> scaled;
        for (double x : rewards) scaled.push_back(x * 0.5);
        auto a = generator_batch_gradient(gen, batch, sampled, rewards, 0.05, cfg);
        auto b = generator_batch_gradient(gen, batch, sampled, scaled, 0.05, cfg);
        for (std::size_t i = 0; i < a.grad.tensors().size(); ++i) {
            const auto x = a.grad.tensors()[i].values();
            const auto y = b.grad.tensors()[i].values();
            for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::abs(x[k] - y[k]) <= 1e-12 * (1.0 + std::abs(x[k])));
        }
        auto mle = pure_mle();
        CHECK(!same_tensors(a.grad.tensors(), mle.tensors()));
    }
    SUBCASE("coupling gradient matches finite differences of its surrogate") {
        cfg.variant = AblationVariant::no_total_sup;
        const double lambda = 0.3;
        auto r = generator_batch_gradient(gen, batch, sampled, rewards, lambda, cfg);
        double cbar = 0.0;
        for (double x : rewards) cbar -= std::log(x) / 3.0;
        Generator probe = gen;
        auto surrogate = [&] {
            double s = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                const double w = -lambda * (-std::log(rewards[i]) - cbar) / 3.0;
                const auto lp = token_log_probs(batch[i].prompt, sampled[i], probe);
                s += w * -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(sampled[i].size());
            }
            return s;
        };
        for (const auto& res : check_gradients(probe.tensors(), r.grad.tensors(), surrogate)) {
            INFO(res.name);
            CHECK(res.rel_error <= 1e-4);
        }
    }
    SUBCASE("policy-gradient objective") {
        cfg.objective = GeneratorObjective::policy_gradient;
        auto r = generator_batch_gradient(gen, batch, sampled, rewards, 0.05, cfg);
        Generator expected = Generator::zeros(gen.dims);
        double loss = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const auto lp = accumulate_sequence_gradient(batch[i].prompt, sampled[i], rewards[i] / 3.0, gen, expected);
            loss += policy_gradient_loss(lp, rewards[i]) / 3.0;
        }
        CHECK(same_tensors(r.grad.tensors(), expected.tensors()));
        CHECK(r.loss_rl == doctest::Approx(loss).epsilon(1e-12));
    }
}

TEST_CASE("score-function estimate follows the exact expected-cost gradient") {
    // One-token generations: E[c] = sum_v p_v c_v, whose output-bias gradient
    // is p_u (c_u - E[c]). The sampled estimate must converge to lambda times it.
    const std::size_t V = 8;
    const auto gen = small_generator(V, 4, 40);
    const TokenSequence prompt{5, 6};
    const Vector p = next_token_dist(prompt, {}, gen);
    std::vector<double> cost(V);
    for (std::size_t v = 0; v < V; ++v) cost[v] = 0.3 * static_cast<double>(v % 5);
    double ec = 0.0;
    for (std::size_t v = 0; v < V; ++v) ec += p(Eigen::Index(v)) * cost[v];

    TrainingConfig cfg;
    cfg.variant = AblationVariant::no_total_sup;
    const std::size_t B = 20000;
    const double lambda = 1.0;
    Rng rng(41);
    std::vector<GenExample> batch(B, GenExample{prompt, {kEos}});
    std::vector<TokenSequence> sampled;
    std::vector<double> rewards;
    for (std::size_t i = 0; i < B; ++i) {
        sampled.push_back(sample(prompt, {.max_len = 1}, gen, rng));
        rewards.push_back(std::exp(-cost[static_cast<std::size_t>(sampled.back()[0])]));
    }
    const auto r = generator_batch_gradient(gen, batch, sampled, rewards, lambda, cfg);
    for (std::size_t u = 0; u < V; ++u) {
        const double pu = p(Eigen::Index(u));
        const double exact = lambda * pu * (cost[u] - ec);
        // Per-sample contribution is bounded by 2 * max cost; 5 sigma of that.
        const double tol = 5.0 * 2.4 / std::sqrt(double(B));
        CHECK(std::abs(r.grad.out_bias(Eigen::Index(u)) - exact) <= tol);
    }
}

TEST_CASE("sampled_reward") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_training_vocab(corpus, TokenizerMode::character);
    auto cfg = tiny_config();
    Rng rng(50);
    const auto disc = Discriminator::initialize(
        {.vocab_size = vocab.size(), .embed_dim = 8, .hidden_dim = 8, .noise_dim = 8, .sim_hidden_dim = 8,
         .feature_dim = 8},
        rng);
    CHECK(sampled_reward(TokenSequence{kEos}, vocab, disc, cfg) == kRewardEps);
    CHECK(sampled_reward(TokenSequence{kBos, kPad}, vocab, disc, cfg) == kRewardEps);
    const auto code = tokenize("' OR 1=1 --", vocab);
    TokenSequence with_eos = code;
    with_eos.push_back(kEos);
    CHECK(sampled_reward(with_eos, vocab, disc, cfg) == reward(code, disc, RewardClass::malicious));
    cfg.reward_class = RewardClass::fake;
    CHECK(sampled_reward(with_eos, vocab, disc, cfg) == reward(code, disc, RewardClass::fake));
}

TEST_CASE("generator_phase") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_training_vocab(corpus, TokenizerMode::character);
    auto cfg = tiny_config();
    Rng init(60);
    const auto gen0 = Generator::initialize({.vocab_size = vocab.size(), .hidden_dim = 12}, init);
    const auto disc = Discriminator::initialize(
        {.vocab_size = vocab.size(), .embed_dim = 8, .hidden_dim = 8, .noise_dim = 8, .sim_hidden_dim = 8,
         .feature_dim = 8},
        init);
    std::vector<GenExample> examples;
    for (const auto& s : corpus) {
        if (s.label == Label::malicious && examples.size() < 4) examples.push_back(make_example(s, vocab));
    }

    SUBCASE("lambda = 0 matches a pure MLE update") {
        Generator a = gen0;
        Adam opt_a({.lr = 1e-2});
        Rng sampling(61);
        generator_phase(examples, 0.0, a, disc, vocab, opt_a, cfg, sampling, nullptr);

        Generator b = gen0;
        Adam opt_b({.lr = 1e-2});
        for (std::size_t start = 0; start < examples.size(); start += cfg.gen_batch_size) {
            Generator grad = Generator::zeros(b.dims);
            for (std::size_t i = start; i < start + cfg.gen_batch_size; ++i) {
                const auto n = static_cast<double>(examples[i].target.size());
                accumulate_nll_gradient(examples[i].prompt, examples[i].target, 1.0 / (2.0 * n), b, grad);
            }
            auto params = b.tensors();
            auto grads = grad.tensors();
            clipped_step(opt_b, params, grads, cfg.clip_norm, nullptr);
        }
        CHECK(same_tensors(a.tensors(), b.tensors()));
    }
    SUBCASE("frozen generator gives the same mean reward on repeated phases") {
        cfg.lr = 0.0;
        Generator g = gen0;
        Adam opt({.lr = 0.0});
        Rng s1(62);
        const auto first = generator_phase(examples, 0.05, g, disc, vocab, opt, cfg, s1, nullptr);
        Rng s2(62);
        const auto second = generator_phase(examples, 0.05, g, disc, vocab, opt, cfg, s2, nullptr);
        CHECK(first.mean_reward == second.mean_reward);
        CHECK(same_tensors(g.tensors(), Generator(gen0).tensors()));
        CHECK(first.mean_reward > 0.0);
        CHECK(first.mean_reward < 1.0);
    }
}

TEST_CASE("discriminator_phase") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_training_vocab(corpus, TokenizerMode::character);
    auto cfg = tiny_config();
    LabeledSet labeled;
    for (const auto& s : corpus) {
        if (s.label == Label::unlabeled) continue;
        labeled.tokens.push_back(code_tokens(s.output, vocab, cfg.disc_max_len));
        labeled.labels.push_back(s.label);
    }
    Rng init(70);
    const auto disc0 = Discriminator::initialize(
        {.vocab_size = vocab.size(), .embed_dim = 8, .hidden_dim = 8, .noise_dim = 8, .sim_hidden_dim = 8,
         .feature_dim = 8},
        init);
    auto run = [&](std::span<const TokenSequence> unlabeled) {
        Discriminator d = disc0;
        DiscriminatorOptimizers opt{Adam({.lr = 1e-3}), Adam({.lr = 1e-3})};
        Rng batching(71), noise(72);
        return std::pair{discriminator_phase(labeled, unlabeled, d, opt, cfg, discriminator_mode(cfg), batching, noise, nullptr), d};
    };
    SUBCASE("runs with no unlabeled samples") {
        const auto [m, d] = run({});
        CHECK(m.steps == 2);
        CHECK(m.loss_c_unsup > 0.0);  // the real/fake terms on labeled and simulated samples
        CHECK(std::isfinite(m.loss_s));
    }
    SUBCASE("same seed, same metrics") {
        const std::vector<TokenSequence> unl{labeled.tokens[0], labeled.tokens[3]};
        const auto [a, da] = run(unl);
        const auto [b, db] = run(unl);
        CHECK(a.loss_c_sup == b.loss_c_sup);
        CHECK(a.loss_c_unsup == b.loss_c_unsup);
        CHECK(a.loss_s == b.loss_s);
        CHECK(a.accuracy == b.accuracy);
    }
    SUBCASE("disc_steps overrides the pass length") {
        cfg.disc_steps = 5;
        CHECK(run({}).first.steps == 5);
    }
}

TEST_CASE("unk pool keeps the newest samples") {
    UnkPool pool(3);
    const std::vector<TokenSequence> a{{5}, {6}};
    const std::vector<TokenSequence> b{{7}, {8}};
    pool.add(a);
    CHECK(pool.size() == 2);
    pool.add(b);
    CHECK(pool.contents() == std::vector<TokenSequence>{{6}, {7}, {8}});
}

TEST_CASE("train") {
    const auto corpus = tiny_corpus();
    const auto vocab = build_training_vocab(corpus, TokenizerMode::character);

    SUBCASE("one round gives one row") {
        auto cfg = tiny_config();
        cfg.rounds = 1;
        const auto r = train(cfg, corpus, vocab);
        REQUIRE(r.metrics.size() == 1);
        CHECK(r.metrics[0].round == 1);
        CHECK(r.metrics[0].lambda == lambda_schedule(0, cfg));
        CHECK(r.metrics[0].seconds == 0.0);
    }
    SUBCASE("byte-identical metrics across runs and a clean clip record") {
        const auto cfg = tiny_config(7);
        ClipMonitor m1;
        const auto a = train(cfg, corpus, vocab, {.monitor = &m1});
        const auto b = train(cfg, corpus, vocab);
        CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
        CHECK(metrics_csv(a.metrics).starts_with(std::string(kMetricsHeader) + "\n"));
        CHECK(m1.steps > 0);
        CHECK(m1.violations == 0);
        CHECK(m1.max_post_norm <= cfg.clip_norm + 1e-6);
        const auto c = train(tiny_config(8), corpus, vocab);
        CHECK(metrics_csv(a.metrics) != metrics_csv(c.metrics));
    }
    SUBCASE("no_disc reproduces MLE training step for step") {
        auto cfg = tiny_config();
        cfg.variant = AblationVariant::no_disc;
        const auto a = train(cfg, corpus, vocab);
        cfg.variant = AblationVariant::full;
        cfg.alpha = 0.0;
        const auto b = train(cfg, corpus, vocab);
        CHECK(same_tensors(Generator(a.generator).tensors(), Generator(b.generator).tensors()));
        for (const auto& m : a.metrics) {
            CHECK(m.lambda == 0.0);
            CHECK(m.loss_c_sup == 0.0);
        }
    }
    SUBCASE("shared warm-up equals the built-in one") {
        const auto cfg = tiny_config();
        const auto warm = warm_up_generator(cfg, corpus, vocab);
        const auto a = train(cfg, corpus, vocab, {.initial_generator = &warm});
        const auto b = train(cfg, corpus, vocab);
        CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
    }
    SUBCASE("corpus needs both labeled classes") {
        std::vector<CodeSample> only_benign;
        for (const auto& s : corpus) {
            if (s.label != Label::malicious) only_benign.push_back(s);
        }
        CHECK_THROWS_AS(train(tiny_config(), only_benign, vocab), ConfigError);
    }
}

TEST_CASE("discriminator reaches high accuracy on a separable toy set") {
    const auto corpus = synthesize_corpus({.n_benign = 40, .n_malicious = 40, .seed = 80});
    const auto vocab = build_training_vocab(corpus, TokenizerMode::character);
    auto cfg = tiny_config(81);
    cfg.rounds = 20;
    cfg.batch_size = 16;
    cfg.disc_embed = cfg.disc_hidden = cfg.feature_dim = 16;
    cfg.lr = 3e-3;
    const auto r = train(cfg, corpus, vocab, {.discriminator_only = true});
    REQUIRE(r.metrics.size() == 20);
    CHECK(r.metrics.back().disc_acc >= 0.95);
    std::size_t correct = 0;
    for (const auto& s : corpus) correct += predict_label(code_tokens(s.output, vocab, 256), r.discriminator) == s.label;
    CHECK(double(correct) / double(corpus.size()) >= 0.95);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "sqlgan_ckpt_test";
    std::filesystem::remove_all(dir);
    Rng rng(90);
    Generator gen = Generator::initialize({.vocab_size = 11, .hidden_dim = 5, .layers = 2}, rng);
    Discriminator disc = Discriminator::initialize(
        {.vocab_size = 11, .embed_dim = 4, .hidden_dim = 3, .noise_dim = 2, .sim_hidden_dim = 3, .feature_dim = 4}, rng);
    save_generator(dir, "gen", gen, {.config_hash = "abc", .vocab_file = "vocab.json", .round = 3});
    save_discriminator(dir, "disc", disc, {.config_hash = "abc", .vocab_file = "vocab.json", .round = 3});

    auto g2 = load_generator(dir / "gen.json");
    auto d2 = load_discriminator(dir / "disc.json");
    CHECK(g2.dims == gen.dims);
    CHECK(same_tensors(g2.tensors(), gen.tensors()));
    CHECK(same_tensors(d2.tensors(), disc.tensors()));
    const auto info = read_checkpoint_info(dir / "gen.json");
    CHECK(info.kind == "generator");
    CHECK(info.config_hash == "abc");
    CHECK(info.round == 3);
    CHECK(info.dims.at("layers") == 2);

    CHECK_THROWS_AS(load_discriminator(dir / "gen.json"), RuntimeAbort);
    {
        std::fstream f(dir / "gen.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-3, std::ios::end);
        f.put('\x7f');
    }
    CHECK_THROWS_AS(load_generator(dir / "gen.json"), RuntimeAbort);
    std::filesystem::remove_all(dir);
}
