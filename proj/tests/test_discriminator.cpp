#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sqlgan/discriminator.hpp"
#include "support/disc_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace sqlgan;
using namespace sqlgan::testing;

namespace {

DiscriminatorDims small_dims(std::size_t vocab = 14, std::size_t d = 8) {
    return {.vocab_size = vocab, .embed_dim = d, .hidden_dim = d, .noise_dim = d, .sim_hidden_dim = d,
            .feature_dim = d};
}

Discriminator randomized(const DiscriminatorDims& dims, std::uint64_t seed) {
    Rng rng(seed);
    Discriminator d = Discriminator::initialize(dims, rng);
    // Non-zero biases so their gradients are exercised.
    for (auto& t : d.tensors()) {
        if (t.cols == 1) {
            for (double& v : t.values()) v = 0.3 * rng.normal();
        }
    }
    return d;
}

TokenSequence random_seq(Rng& rng, std::size_t vocab, std::size_t max_len = 7) {
    TokenSequence s(1 + rng.uniform_index(max_len));
    for (auto& t : s) t = static_cast<TokenId>(kNumSpecials + rng.uniform_index(vocab - kNumSpecials));
    return s;
}

struct RandomBatch {
    DiscriminatorBatch batch;
    std::vector<int> label_ids;
    std::vector<Vec> noise;
};

RandomBatch random_batch(Rng& rng, const DiscriminatorDims& dims, std::size_t n_lab, std::size_t n_unl,
                         std::size_t n_fake) {
    RandomBatch r;
    for (std::size_t i = 0; i < n_lab; ++i) {
        r.batch.labeled.push_back(random_seq(rng, dims.vocab_size));
        const bool mal = rng.uniform() < 0.5;
        r.batch.labels.push_back(mal ? Label::malicious : Label::benign);
        r.label_ids.push_back(mal ? 1 : 0);
    }
    for (std::size_t i = 0; i < n_unl; ++i) r.batch.unlabeled.push_back(random_seq(rng, dims.vocab_size));
    r.batch.noise.resize(static_cast<Eigen::Index>(dims.noise_dim), static_cast<Eigen::Index>(n_fake));
    for (std::size_t j = 0; j < n_fake; ++j) {
        Vec z(dims.noise_dim);
        for (std::size_t i = 0; i < dims.noise_dim; ++i) {
            z[i] = rng.normal();
            r.batch.noise(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = z[i];
        }
        r.noise.push_back(z);
    }
    return r;
}

Matrix prob_columns(std::initializer_list<std::array<double, 3>> cols) {
    Matrix m(3, static_cast<Eigen::Index>(cols.size()));
    Eigen::Index j = 0;
    for (const auto& c : cols) {
        for (int i = 0; i < 3; ++i) m(i, j) = c[i];
        ++j;
    }
    return m;
}

}  // namespace

TEST_CASE("encode") {
    const auto dims = small_dims();
    const auto d = randomized(dims, 1);
    SUBCASE("single token, PAD-masked, equals its transformed embedding") {
        const Vector expected = (d.encoder.weight * d.encoder.embedding.col(5) + d.encoder.bias).array().tanh().matrix();
        CHECK((encode(TokenSequence{5}, d) - expected).norm() == doctest::Approx(0.0));
        CHECK((encode(TokenSequence{kPad, 5, kPad, kPad}, d) - expected).norm() == doctest::Approx(0.0));
    }
    SUBCASE("mean-pool symmetry") {
        CHECK(encode(TokenSequence{6, 6, 7}, d) == encode(TokenSequence{6, 6, 7}, d));
        CHECK((encode(TokenSequence{6, 7, 6}, d) - encode(TokenSequence{7, 6, 6}, d)).norm() < 1e-15);
    }
    SUBCASE("shape") {
        Rng rng(3);
        const Vector h = encode(random_seq(rng, dims.vocab_size), d);
        CHECK(h.size() == 8);
        CHECK(h.allFinite());
    }
    SUBCASE("errors") {
        CHECK_THROWS(encode(TokenSequence{}, d));
        CHECK_THROWS(encode(TokenSequence{kPad, kPad}, d));
        CHECK_THROWS(encode(TokenSequence{99}, d));
    }
}

TEST_CASE("simulate") {
    const auto dims = small_dims();
    auto d = randomized(dims, 2);
    SUBCASE("zero noise and zero biases give zero") {
        d.simulator.bias1.setZero();
        d.simulator.bias2.setZero();
        CHECK(simulate(Vector::Zero(8), d).norm() == 0.0);
    }
    SUBCASE("deterministic, distinct across draws") {
        Rng rng(4);
        std::vector<Vector> outs;
        for (int i = 0; i < 64; ++i) {
            Vector z(8);
            for (auto& v : z) v = rng.normal();
            CHECK(simulate(z, d) == simulate(z, d));
            outs.push_back(simulate(z, d));
        }
        for (std::size_t i = 0; i < outs.size(); ++i) {
            for (std::size_t j = i + 1; j < outs.size(); ++j) CHECK(outs[i] != outs[j]);
        }
    }
    SUBCASE("dimension mismatch") { CHECK_THROWS(simulate(Vector::Zero(3), d)); }
}

TEST_CASE("classify") {
    const auto dims = small_dims();
    auto d = randomized(dims, 5);
    Rng rng(6);
    Vector h(8);
    for (auto& v : h) v = rng.normal();

    SUBCASE("zero logits give the uniform distribution") {
        d.classifier.out_weight.setZero();
        d.classifier.out_bias.setZero();
        const Vector p = classify(h, d);
        for (int c = 0; c < 3; ++c) CHECK(p(c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("shift invariance") {
        const Vector p = classify(h, d);
        d.classifier.out_bias.array() += 7.5;
        CHECK((classify(h, d) - p).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("softmax of (10, 0, 0)") {
        Vector logits(3);
        logits << 10.0, 0.0, 0.0;
        const double oracle = std::exp(10.0) / (std::exp(10.0) + 2.0);
        CHECK(softmax(logits)(0) == doctest::Approx(oracle).epsilon(1e-14));
        CHECK(softmax(logits)(0) == doctest::Approx(0.99991).epsilon(1e-5));
    }
    SUBCASE("normalization over random inputs") {
        for (int trial = 0; trial < 200; ++trial) {
            Vector x(8);
            for (auto& v : x) v = 3.0 * rng.normal();
            const Vector p = classify(x, d);
            CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
            CHECK(p.minCoeff() >= 0.0);
        }
    }
    SUBCASE("non-finite input") {
        h(0) = std::nan("");
        CHECK_THROWS(classify(h, d));
    }
}

TEST_CASE("penultimate_features") {
    const auto dims = small_dims();
    auto d = randomized(dims, 7);
    Rng rng(8);
    const auto rb = random_batch(rng, dims, 3, 2, 4);
    const auto f = forward(rb.batch, d);
    for (std::size_t i = 0; i < 5; ++i) {
        const Vector h = f.real_hidden.col(static_cast<Eigen::Index>(i));
        CHECK(penultimate_features(h, d) == f.real_features.col(static_cast<Eigen::Index>(i)));
        CHECK(penultimate_features(h, d).size() == 8);
    }
    d.classifier.feature_weight.setZero();
    d.classifier.feature_bias.setZero();
    CHECK(penultimate_features(Vector::Ones(8), d).norm() == 0.0);
}

TEST_CASE("loss terms on fixed distributions") {
    SUBCASE("supervised") {
        const Matrix uniform = Matrix::Constant(3, 2, 1.0 / 3.0);
        const std::vector<Label> labels = {Label::benign, Label::malicious};
        CHECK(supervised_loss(uniform, labels) == doctest::Approx(1.098612).epsilon(1e-6));
        CHECK(supervised_loss(prob_columns({{1, 0, 0}, {0, 1, 0}}), labels) == 0.0);
        CHECK(supervised_loss(prob_columns({{0.5, 0.3, 0.2}, {0.5, 0.25, 0.25}}), labels) ==
              doctest::Approx(1.039721).epsilon(1e-6));
        const std::vector<Label> bad = {Label::benign, Label::unlabeled};
        CHECK_THROWS_AS(supervised_loss(uniform, bad), ConfigError);
    }
    SUBCASE("unsupervised") {
        CHECK(std::abs(unsupervised_loss(prob_columns({{0.5, 0.5, 0}}), prob_columns({{0, 0, 1}}))) < 1e-7);
        CHECK(unsupervised_loss(prob_columns({{0.25, 0.25, 0.5}}), prob_columns({{0.2, 0.3, 0.5}})) ==
              doctest::Approx(1.386294).epsilon(1e-6));
        CHECK_THROWS(unsupervised_loss(Matrix(3, 0), prob_columns({{0, 0, 1}})));
    }
    SUBCASE("simulator") {
        Matrix a(2, 2), b(2, 2);
        a << 1, 3, 0, 2;
        b << 2, 2, 1, 1;
        CHECK(feature_matching_loss(a, b) == 0.0);
        Matrix c(2, 1), z(2, 1);
        c << 1, 0;
        z << 0, 0;
        CHECK(feature_matching_loss(c, z) == doctest::Approx(0.5));
        CHECK(simulator_loss(prob_columns({{0.25, 0.25, 0.5}}), c, z, 0.0) == doctest::Approx(0.693147).epsilon(1e-6));
    }
    SUBCASE("feature matching symmetry") {
        Rng rng(9);
        for (int trial = 0; trial < 20; ++trial) {
            Matrix a(5, 4), b(5, 3);
            for (auto& v : a.reshaped()) v = rng.normal();
            for (auto& v : b.reshaped()) v = rng.normal();
            CHECK(feature_matching_loss(a, b) == doctest::Approx(feature_matching_loss(b, a)).epsilon(1e-14));
            CHECK(feature_matching_loss(a, a) == 0.0);
        }
    }
}

TEST_CASE("batched losses match the scalar-loop oracle") {
    const auto dims = small_dims();
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto d = randomized(dims, 100 + trial);
        const auto rb = random_batch(rng, dims, 5, 3, 5);
        const auto f = forward(rb.batch, d);
        const auto L = evaluate_losses(f, {});
        const auto O = oracle_losses(d, rb.batch.labeled, rb.label_ids, rb.batch.unlabeled, rb.noise);
        CHECK(rel_diff(L.supervised, O.supervised) <= 1e-9);
        CHECK(rel_diff(L.unsupervised, O.unsupervised) <= 1e-9);
        CHECK(rel_diff(L.adversarial, O.adversarial) <= 1e-9);
        CHECK(rel_diff(L.feature_matching, O.feature_matching) <= 1e-9);
        CHECK(rel_diff(L.simulator, O.adversarial + O.feature_matching) <= 1e-9);

        // Classifier loss is exactly the sum of its two terms on the same batch.
        const Matrix lab = f.real_probs.leftCols(5);
        CHECK(L.classifier == supervised_loss(lab, rb.batch.labels) + unsupervised_loss(f.real_probs, f.fake_probs));
    }
}

TEST_CASE("analytic gradients match central differences") {
    const auto dims = small_dims(12, 8);
    Rng rng(11);
    auto d = randomized(dims, 12);
    const auto rb = random_batch(rng, dims, 5, 5, 5);

    auto check = [&](const LossWeights& w) {
        const Discriminator g = backward(forward(rb.batch, d), d, w);
        auto loss = [&] {
            const auto L = evaluate_losses(forward(rb.batch, d), {});
            return w.supervised * L.supervised + w.unsupervised * L.unsupervised + w.adversarial * L.adversarial +
                   w.feature_matching * L.feature_matching;
        };
        auto gc = g;
        const auto results = check_gradients(d.tensors(), gc.tensors(), loss);
        for (const auto& r : results) {
            INFO(r.name, " analytic ", r.analytic_norm, " numeric ", r.numeric_norm);
            CHECK(r.rel_error <= 1e-4);
        }
        return results;
    };
    SUBCASE("supervised") {
        const auto r = check({1, 0, 0, 0});
        CHECK(r[0].analytic_norm > 0.0);  // embedding receives gradient
    }
    SUBCASE("unsupervised") { check({0, 1, 0, 0}); }
    SUBCASE("simulator objective") { check({0, 0, 1, 1.0}); }
    SUBCASE("adversarial alone") { check({0, 0, 1, 0}); }
    SUBCASE("feature matching alone") { check({0, 0, 0, 1}); }
}

TEST_CASE("reward") {
    const auto dims = small_dims();
    auto d = randomized(dims, 13);
    SUBCASE("uniform classifier gives one third") {
        d.classifier.out_weight.setZero();
        d.classifier.out_bias.setZero();
        CHECK(reward(TokenSequence{5, 6}, d) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(reward(TokenSequence{5, 6}, d, RewardClass::fake) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("clamped at both ends") {
        d.classifier.out_weight.setZero();
        d.classifier.out_bias << 0.0, 25.0, 0.0;
        CHECK(reward(TokenSequence{5}, d) == 1.0 - 1e-7);
        CHECK(reward(TokenSequence{5}, d, RewardClass::fake) == 1e-7);
        CHECK(predict_label(TokenSequence{5}, d) == Label::malicious);
    }
    SUBCASE("empty sequence") { CHECK_THROWS(reward(TokenSequence{}, d)); }
}

TEST_CASE("discriminator_step") {
    const auto dims = small_dims(10, 8);
    // Separable toy set: benign uses tokens 4-6, malicious uses 7-9.
    DiscriminatorBatch batch;
    for (int i = 0; i < 8; ++i) {
        batch.labeled.push_back({TokenId(4 + i % 3), TokenId(4 + (i + 1) % 3)});
        batch.labels.push_back(Label::benign);
        batch.labeled.push_back({TokenId(7 + i % 3), TokenId(7 + (i + 2) % 3)});
        batch.labels.push_back(Label::malicious);
    }
    Rng noise_rng(14);
    batch.noise.resize(8, 8);
    for (auto& v : batch.noise.reshaped()) v = noise_rng.normal();

    SUBCASE("classifier loss decreases on a separable batch with a frozen simulator") {
        auto d = randomized(dims, 15);
        DiscriminatorOptimizers opt{Adam({.lr = 0.01}), Adam({.lr = 0.01})};
        const LossSwitches sw{.fm_weight = 0.0};
        std::vector<double> series;
        for (int step = 0; step < 50; ++step) {
            const Matrix sim_before = d.simulator.weight1;
            series.push_back(discriminator_step(d, batch, sw, opt, 1.0, false).classifier);
            CHECK(d.simulator.weight1 == sim_before);
        }
        // Five-step moving average is strictly decreasing.
        std::vector<double> smooth;
        for (std::size_t i = 0; i + 5 <= series.size(); ++i) {
            smooth.push_back(std::accumulate(series.begin() + i, series.begin() + i + 5, 0.0) / 5.0);
        }
        for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] < smooth[i - 1]);
        CHECK(series.back() < series.front());
    }
    SUBCASE("zero learning rate leaves parameters unchanged") {
        auto d = randomized(dims, 16);
        const auto before = d;
        DiscriminatorOptimizers opt{Adam({.lr = 0.0}), Adam({.lr = 0.0})};
        discriminator_step(d, batch, {}, opt, 1.0);
        CHECK(d.encoder.embedding == before.encoder.embedding);
        CHECK(d.classifier.out_weight == before.classifier.out_weight);
        CHECK(d.simulator.weight2 == before.simulator.weight2);
    }
    SUBCASE("identical seeds give identical trajectories") {
        auto run = [&] {
            auto d = randomized(dims, 17);
            DiscriminatorOptimizers opt{Adam(), Adam()};
            std::vector<double> out;
            for (int i = 0; i < 10; ++i) {
                const auto L = discriminator_step(d, batch, {}, opt, 1.0);
                out.push_back(L.classifier);
                out.push_back(L.simulator);
            }
            return out;
        };
        CHECK(run() == run());
    }
    SUBCASE("post-clip norms stay within the limit") {
        auto d = randomized(dims, 18);
        DiscriminatorOptimizers opt{Adam(), Adam()};
        ClipMonitor monitor;
        for (int i = 0; i < 10; ++i) discriminator_step(d, batch, {}, opt, 0.01, true, &monitor);
        CHECK(monitor.steps == 20);
        CHECK(monitor.violations == 0);
        CHECK(monitor.max_post_norm <= 0.01 + 1e-6);
    }
}

TEST_CASE("trained discriminator prefers a union-all payload over a benign template") {
    std::vector<double> gaps;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        CorpusSpec spec{.n_benign = 200, .n_malicious = 200, .n_unlabeled = 200, .seed = seed};
        const auto corpus = synthesize_corpus(spec);
        const auto vocab = build_vocab(corpus);
        Rng root(seed);
        Rng init = root.substream("init");
        Rng batching = root.substream("batching");
        DiscriminatorDims dims{.vocab_size = vocab.size(), .embed_dim = 16, .hidden_dim = 16, .noise_dim = 16,
                               .sim_hidden_dim = 16, .feature_dim = 16};
        auto d = Discriminator::initialize(dims, init);
        DiscriminatorOptimizers opt{Adam(), Adam()};
        std::vector<std::size_t> labeled, unlabeled;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            (corpus[i].label == Label::unlabeled ? unlabeled : labeled).push_back(i);
        }
        for (int step = 0; step < 150; ++step) {
            DiscriminatorBatch b;
            for (int k = 0; k < 16; ++k) {
                const auto& s = corpus[labeled[batching.uniform_index(labeled.size())]];
                b.labeled.push_back(tokenize(s.output, vocab));
                b.labels.push_back(s.label);
                b.unlabeled.push_back(tokenize(corpus[unlabeled[batching.uniform_index(unlabeled.size())]].output, vocab));
            }
            b.noise.resize(16, 16);
            for (auto& v : b.noise.reshaped()) v = batching.normal();
            discriminator_step(d, b, {}, opt, 1.0);
        }
        const double r_attack = reward(tokenize("1%'union all select null,null,null--", vocab), d);
        const double r_benign = reward(tokenize("SELECT name FROM products WHERE id = 42", vocab), d);
        gaps.push_back(r_attack - r_benign);
    }
    std::sort(gaps.begin(), gaps.end());
    CHECK(gaps[1] > 0.0);
}
