#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sqlgan/generator.hpp"
#include "support/gen_oracle.hpp"
#include "support/gradcheck.hpp"

using namespace sqlgan;
using namespace sqlgan::testing;

namespace {

Generator random_generator(std::size_t vocab, std::size_t hidden, std::size_t layers, std::uint64_t seed,
                           double scale = 1.0) {
    Rng rng(seed);
    Generator g = Generator::initialize({.vocab_size = vocab, .hidden_dim = hidden, .layers = layers}, rng);
    for (auto& t : g.tensors()) {
        for (double& v : t.values()) v *= scale;
    }
    return g;
}

TokenSequence random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
    TokenSequence s(n);
    for (auto& t : s) t = static_cast<TokenId>(kNumSpecials + rng.uniform_index(vocab - kNumSpecials));
    return s;
}

const std::string kUnionAllInstruction =
    "Please help me genarate a sql injection code.The SQL injection uses a single-quote to break out of the original "
    "query, followed by a UNION ALL statement to combine results from another SELECT statement with all NULL values, "
    "and ends with a comment symbol `--` to ignore any remaining original query.";

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST_CASE("format_prompt") {
    const std::string a = format_prompt({"A", ""});
    CHECK(count_occurrences(a, "A") == 1);
    CHECK(a.ends_with("### Response:\n"));
    CHECK(a == "### Instruction:\nA\n\n### Input:\n\n\n### Response:\n");
    CHECK(format_prompt({"x", "y"}) == format_prompt({"x", "y"}));
    const std::string t = format_prompt({kUnionAllInstruction, "\\"});
    CHECK(t.find(kUnionAllInstruction) != std::string::npos);
    CHECK_THROWS_AS(format_prompt({"", "y"}), ConfigError);
}

TEST_CASE("next_token_dist") {
    auto g = random_generator(12, 6, 1, 1);
    const TokenSequence prompt{5, 6, 7};
    SUBCASE("zero output projection gives the uniform distribution") {
        g.out_weight.setZero();
        g.out_bias.setZero();
        const Vector p = next_token_dist(prompt, TokenSequence{8}, g);
        for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
    }
    SUBCASE("shift invariance and normalization") {
        const Vector p = next_token_dist(prompt, TokenSequence{8, 9}, g);
        CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
        g.out_bias.array() += 3.0;
        CHECK((next_token_dist(prompt, TokenSequence{8, 9}, g) - p).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("chained conditionals equal exp(-mle * n)") {
        Rng rng(2);
        for (int trial = 0; trial < 10; ++trial) {
            const auto target = random_tokens(rng, 1 + rng.uniform_index(8), 12);
            double chain = 1.0;
            for (std::size_t j = 0; j < target.size(); ++j) {
                const TokenSequence prefix(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(j));
                chain *= next_token_dist(prompt, prefix, g)(target[j]);
            }
            const double via_mle = std::exp(-mle_loss(prompt, target, g) * static_cast<double>(target.size()));
            CHECK(std::abs(chain - via_mle) / via_mle <= 1e-6);
        }
    }
}

TEST_CASE("mle_loss") {
    SUBCASE("probability one on every target token") {
        auto g = random_generator(10, 4, 1, 3);
        g.out_weight.setZero();
        g.out_bias.setZero();
        g.out_bias(7) = 1000.0;
        CHECK(mle_loss(TokenSequence{5}, TokenSequence{7, 7, 7}, g) == 0.0);
    }
    SUBCASE("uniform model gives log V") {
        auto g = random_generator(17, 4, 1, 4);
        g.out_weight.setZero();
        g.out_bias.setZero();
        CHECK(mle_loss(TokenSequence{5, 6}, TokenSequence{8, 9, 10}, g) == doctest::Approx(std::log(17.0)).epsilon(1e-14));
    }
    SUBCASE("matches the scalar-loop oracle") {
        Rng rng(5);
        for (std::size_t layers : {1, 2}) {
            const auto g = random_generator(20, 8, layers, 6 + layers);
            for (int trial = 0; trial < 20; ++trial) {
                const auto prompt = random_tokens(rng, rng.uniform_index(6), 20);
                const auto target = random_tokens(rng, 5, 20);
                const auto lp = oracle_token_log_probs(g, prompt, target);
                const double oracle = -std::accumulate(lp.begin(), lp.end(), 0.0) / 5.0;
                const double got = mle_loss(prompt, target, g);
                CHECK(std::abs(got - oracle) / oracle <= 1e-9);
                const auto tl = token_log_probs(prompt, target, g);
                for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(tl[j] - lp[j]) <= 1e-9 * std::abs(lp[j]));
            }
        }
    }
    SUBCASE("PAD handling") {
        const auto g = random_generator(10, 4, 1, 8);
        CHECK_THROWS(mle_loss(TokenSequence{5}, TokenSequence{6, kPad, 7}, g));
        CHECK_THROWS(mle_loss(TokenSequence{5}, TokenSequence{}, g));
        CHECK_THROWS(mle_loss(TokenSequence{5}, TokenSequence{kPad, kPad}, g));
        CHECK(mle_loss(TokenSequence{5}, TokenSequence{6, 7, kPad, kPad}, g) == mle_loss(TokenSequence{5}, TokenSequence{6, 7}, g));
    }
}

TEST_CASE("nll gradient matches central differences") {
    Rng rng(9);
    for (std::size_t layers : {1, 2}) {
        auto g = random_generator(16, 8, layers, 10 + layers);
        const auto prompt = random_tokens(rng, 4, 16);
        TokenSequence target = random_tokens(rng, 5, 16);
        target.push_back(kEos);
        const double weight = 0.7;
        Generator grad = Generator::zeros(g.dims);
        const auto lp = accumulate_nll_gradient(prompt, target, weight, g, grad);
        CHECK(std::abs(-std::accumulate(lp.begin(), lp.end(), 0.0) / 6.0 - mle_loss(prompt, target, g)) < 1e-12);
        auto loss = [&] { return weight * 6.0 * mle_loss(prompt, target, g); };
        const auto results = check_gradients(g.tensors(), grad.tensors(), loss);
        for (const auto& r : results) {
            INFO("layers ", layers, " ", r.name, " analytic ", r.analytic_norm, " numeric ", r.numeric_norm);
            CHECK(r.rel_error <= 1e-4);
            CHECK(r.analytic_norm > 0.0);
        }
    }
}

TEST_CASE("sample") {
    const auto g = random_generator(12, 6, 1, 20);
    const TokenSequence prompt{5, 6};
    SUBCASE("greedy decoding ignores the seed") {
        GenerationConfig cfg{.max_len = 20, .greedy = true, .seed = 1};
        const auto a = sample(prompt, cfg, g);
        cfg.seed = 999;
        CHECK(sample(prompt, cfg, g) == a);
    }
    SUBCASE("same seed, same sequence") {
        const GenerationConfig cfg{.max_len = 30, .seed = 42};
        CHECK(sample(prompt, cfg, g) == sample(prompt, cfg, g));
    }
    SUBCASE("max_len respected across seeds") {
        Rng rng(21);
        for (int i = 0; i < 1000; ++i) {
            const GenerationConfig cfg{.max_len = 1 + rng.uniform_index(12), .temperature = 0.5 + rng.uniform(),
                                       .top_k = rng.uniform_index(5), .seed = rng.next_u64()};
            const auto s = sample(prompt, cfg, g);
            CHECK(s.size() <= cfg.max_len);
            CHECK(!s.empty());
            for (std::size_t j = 0; j + 1 < s.size(); ++j) CHECK(s[j] != kEos);
        }
    }
    SUBCASE("single-token frequencies follow next_token_dist") {
        const Vector p = next_token_dist(prompt, {}, g);
        const GenerationConfig cfg{.max_len = 1};
        Rng rng(22);
        const int N = 10000;
        std::vector<int> counts(12, 0);
        for (int i = 0; i < N; ++i) ++counts[static_cast<std::size_t>(sample(prompt, cfg, g, rng)[0])];
        for (std::size_t v = 0; v < 12; ++v) {
            const double sigma = std::sqrt(p(Eigen::Index(v)) * (1.0 - p(Eigen::Index(v))) / N);
            CHECK(std::abs(counts[v] / double(N) - p(Eigen::Index(v))) <= 3.0 * sigma + 1e-12);
        }
    }
    SUBCASE("top_k restricts the support") {
        const Vector p = next_token_dist(prompt, {}, g);
        std::vector<Eigen::Index> idx(12);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p(a) > p(b); });
        Rng rng(23);
        for (int i = 0; i < 500; ++i) {
            const TokenId t = sample(prompt, {.max_len = 1, .top_k = 2}, g, rng)[0];
            CHECK((t == idx[0] || t == idx[1]));
        }
    }
    SUBCASE("bad config") {
        CHECK_THROWS_AS(sample(prompt, {.max_len = 0}, g), ConfigError);
        CHECK_THROWS_AS(sample(prompt, {.temperature = 0.0}, g), ConfigError);
    }
}

TEST_CASE("reward_loss") {
    CHECK(reward_loss(1.0 - 1e-7, 0.05) == doctest::Approx(0.05 * 1e-7).epsilon(1e-6));
    CHECK(reward_loss(1.0 - 1e-7, 0.05) < 1e-8);
    CHECK(reward_loss(0.2, 0.0) == 0.0);
    CHECK(reward_loss(1.0 / 3.0, 0.05) == doctest::Approx(0.054931).epsilon(1e-5));
    double prev = INFINITY;
    for (double r = 1e-7; r < 1.0; r += 0.01) {
        CHECK(reward_loss(r, 0.05) < prev);
        prev = reward_loss(r, 0.05);
    }
}
