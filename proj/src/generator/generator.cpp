#include "sqlgan/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sqlgan {

namespace {

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
    return m;
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab) {
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
        }
    }
}

// Activations of one layer over T steps. Column t of h is the state before
// step t, so h has T + 1 columns and h.col(0) is the zero initial state.
struct LayerTrace {
    Matrix input;  // in x T
    Matrix gi;     // 3H x T, includes b_ih
    Matrix gh;     // 3H x T, includes b_hh
    Matrix reset, update, cand;
    Matrix h;
};

struct Trace {
    std::vector<TokenId> inputs;
    Matrix token_gates;  // W_ih E + b_ih of the first layer, 3H x vocab
    std::vector<LayerTrace> layers;

    const Matrix& top_states() const { return layers.back().h; }
};

// Vectorized logistic and tanh; Eigen vectorizes exp for doubles but not tanh.
template <class X>
auto logistic(const X& x) {
    return (1.0 + (-x).exp()).inverse();
}

template <class X>
auto fast_tanh(const X& x) {
    return 2.0 * (1.0 + (-2.0 * x).exp()).inverse() - 1.0;
}

// One GRU update. gi and gh are the input and recurrent pre-activations.
void gru_cell(const GruLayer& layer, Eigen::Ref<const Vector> gi, Eigen::Ref<const Vector> h_prev,
              Eigen::Ref<Vector> gh, Eigen::Ref<Vector> r, Eigen::Ref<Vector> z, Eigen::Ref<Vector> n,
              Eigen::Ref<Vector> h_next) {
    const Eigen::Index H = h_prev.size();
    gh.noalias() = layer.w_hh * h_prev;
    gh += layer.b_hh;
    r.array() = logistic(gi.head(H).array() + gh.head(H).array());
    z.array() = logistic(gi.segment(H, H).array() + gh.segment(H, H).array());
    n.array() = fast_tanh(gi.tail(H).array() + r.array() * gh.tail(H).array());
    h_next.array() = (1.0 - z.array()) * n.array() + z.array() * h_prev.array();
}

Trace run(const Generator& gen, std::vector<TokenId> inputs) {
    check_ids(inputs, gen.dims.vocab_size);
    const auto T = static_cast<Eigen::Index>(inputs.size());
    const auto H = static_cast<Eigen::Index>(gen.dims.hidden_dim);
    Trace tr;
    tr.inputs = std::move(inputs);
    // The first layer's input is an embedding lookup, so its input
    // projection is a lookup into a per-token table.
    tr.token_gates = (gen.layers[0].w_ih * gen.embedding).colwise() + gen.layers[0].b_ih;
    Matrix x;
    for (std::size_t l = 0; l < gen.layers.size(); ++l) {
        const auto& layer = gen.layers[l];
        LayerTrace lt;
        if (l == 0) {
            lt.gi.resize(3 * H, T);
            for (Eigen::Index t = 0; t < T; ++t) lt.gi.col(t) = tr.token_gates.col(tr.inputs[static_cast<std::size_t>(t)]);
        } else {
            lt.input = std::move(x);
            lt.gi = (layer.w_ih * lt.input).colwise() + layer.b_ih;
        }
        lt.gh.resize(3 * H, T);
        lt.reset.resize(H, T);
        lt.update.resize(H, T);
        lt.cand.resize(H, T);
        lt.h = Matrix::Zero(H, T + 1);
        for (Eigen::Index t = 0; t < T; ++t) {
            gru_cell(layer, lt.gi.col(t), lt.h.col(t), lt.gh.col(t), lt.reset.col(t), lt.update.col(t),
                     lt.cand.col(t), lt.h.col(t + 1));
        }
        x = lt.h.rightCols(T);
        tr.layers.push_back(std::move(lt));
    }
    return tr;
}

std::vector<TokenId> teacher_inputs(std::span<const TokenId> prompt, std::span<const TokenId> target) {
    std::vector<TokenId> in;
    in.reserve(1 + prompt.size() + target.size());
    in.push_back(kBos);
    in.insert(in.end(), prompt.begin(), prompt.end());
    in.insert(in.end(), target.begin(), target.end() - 1);
    return in;
}

Vector log_softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
}

// Incremental state for sampling.
struct Stepper {
    const Generator& gen;
    std::vector<Vector> h;
    Vector gi, gh, r, z, n, next;

    const Matrix& token_gates;

    // warm must outlive the stepper.
    Stepper(const Generator& g, const Trace& warm) : gen(g), token_gates(warm.token_gates) {
        for (const auto& lt : warm.layers) h.push_back(lt.h.col(lt.h.cols() - 1));
        const auto H = static_cast<Eigen::Index>(g.dims.hidden_dim);
        gh.resize(3 * H);
        r.resize(H);
        z.resize(H);
        n.resize(H);
        next.resize(H);
    }

    Vector logits() const { return gen.out_weight * h.back() + gen.out_bias; }

    void feed(TokenId token) {
        Vector x;
        for (std::size_t l = 0; l < gen.layers.size(); ++l) {
            const auto& layer = gen.layers[l];
            if (l == 0) {
                gi = token_gates.col(token);
            } else {
                gi = layer.w_ih * x + layer.b_ih;
            }
            gru_cell(layer, gi, h[l], gh, r, z, n, next);
            h[l] = next;
            x = h[l];
        }
    }
};

TokenId draw(const Vector& logits, const GenerationConfig& cfg, Rng& rng) {
    const auto V = logits.size();
    if (!logits.allFinite()) throw RuntimeAbort("generator produced non-finite logits");
    if (cfg.greedy) {
        Eigen::Index best = 0;
        logits.maxCoeff(&best);
        return static_cast<TokenId>(best);
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(V));
    std::iota(order.begin(), order.end(), 0);
    std::size_t keep = order.size();
    if (cfg.top_k > 0 && cfg.top_k < order.size()) {
        keep = cfg.top_k;
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) { return logits(a) > logits(b) || (logits(a) == logits(b) && a < b); });
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    double m = -INFINITY;
    for (std::size_t i = 0; i < keep; ++i) m = std::max(m, logits(order[i]) / cfg.temperature);
    std::vector<double> w(keep);
    double total = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        w[i] = std::exp(logits(order[i]) / cfg.temperature - m);
        total += w[i];
    }
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < keep; ++i) {
        if (u < w[i]) return static_cast<TokenId>(order[i]);
        u -= w[i];
    }
    return static_cast<TokenId>(order[keep - 1]);
}

}  // namespace

std::string format_prompt(const Prompt& p) {
    if (p.instruction.empty()) throw ConfigError("prompt instruction must be non-empty");
    return "### Instruction:\n" + p.instruction + "\n\n### Input:\n" + p.input + "\n\n### Response:\n";
}

TokenSequence encode_prompt(const Prompt& p, const Vocabulary& vocab) { return tokenize(format_prompt(p), vocab); }

void GeneratorDims::validate() const {
    if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) throw ConfigError("generator: vocabulary too small");
    if (hidden_dim == 0) throw ConfigError("generator: hidden_dim must be >= 1");
    if (layers == 0) throw ConfigError("generator: layers must be >= 1");
}

void GenerationConfig::validate() const {
    if (max_len == 0) throw ConfigError("max_len must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
}

Generator Generator::zeros(const GeneratorDims& dims) {
    dims.validate();
    const auto V = static_cast<Eigen::Index>(dims.vocab_size);
    const auto H = static_cast<Eigen::Index>(dims.hidden_dim);
    Generator g;
    g.dims = dims;
    g.embedding = Matrix::Zero(H, V);
    for (std::size_t l = 0; l < dims.layers; ++l) {
        g.layers.push_back({Matrix::Zero(3 * H, H), Matrix::Zero(3 * H, H), Vector::Zero(3 * H), Vector::Zero(3 * H)});
    }
    g.out_weight = Matrix::Zero(V, H);
    g.out_bias = Vector::Zero(V);
    return g;
}

Generator Generator::initialize(const GeneratorDims& dims, Rng& rng) {
    Generator g = zeros(dims);
    const double k = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
    for (Eigen::Index j = 0; j < g.embedding.cols(); ++j) {
        for (Eigen::Index i = 0; i < g.embedding.rows(); ++i) g.embedding(i, j) = rng.normal();
    }
    for (auto& layer : g.layers) {
        layer.w_ih = uniform_matrix(layer.w_ih.rows(), layer.w_ih.cols(), k, rng);
        layer.w_hh = uniform_matrix(layer.w_hh.rows(), layer.w_hh.cols(), k, rng);
        layer.b_ih = uniform_matrix(layer.b_ih.rows(), 1, k, rng);
        layer.b_hh = uniform_matrix(layer.b_hh.rows(), 1, k, rng);
    }
    g.out_weight = uniform_matrix(g.out_weight.rows(), g.out_weight.cols(), k, rng);
    g.out_bias = uniform_matrix(g.out_bias.rows(), 1, k, rng);
    return g;
}

std::vector<TensorRef> Generator::tensors() {
    std::vector<TensorRef> out;
    out.push_back(tensor_ref("embedding", embedding));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "gru" + std::to_string(l) + ".";
        out.push_back(tensor_ref(p + "w_ih", layers[l].w_ih));
        out.push_back(tensor_ref(p + "w_hh", layers[l].w_hh));
        out.push_back(tensor_ref(p + "b_ih", layers[l].b_ih));
        out.push_back(tensor_ref(p + "b_hh", layers[l].b_hh));
    }
    out.push_back(tensor_ref("out_weight", out_weight));
    out.push_back(tensor_ref("out_bias", out_bias));
    return out;
}

Vector next_token_dist(std::span<const TokenId> prompt_ids, std::span<const TokenId> prefix_ids, const Generator& gen) {
    std::vector<TokenId> in{kBos};
    in.insert(in.end(), prompt_ids.begin(), prompt_ids.end());
    in.insert(in.end(), prefix_ids.begin(), prefix_ids.end());
    const Trace tr = run(gen, std::move(in));
    const Vector logits = gen.out_weight * tr.top_states().rightCols(1) + gen.out_bias;
    if (!logits.allFinite()) throw RuntimeAbort("generator produced non-finite logits");
    return log_softmax(logits).array().exp().matrix();
}

TokenSequence sample(std::span<const TokenId> prompt_ids, const GenerationConfig& cfg, const Generator& gen, Rng& rng) {
    cfg.validate();
    std::vector<TokenId> in{kBos};
    in.insert(in.end(), prompt_ids.begin(), prompt_ids.end());
    const Trace warm = run(gen, std::move(in));
    Stepper stepper(gen, warm);
    TokenSequence out;
    while (out.size() < cfg.max_len) {
        const TokenId next = draw(stepper.logits(), cfg, rng);
        out.push_back(next);
        if (next == kEos) break;
        if (out.size() < cfg.max_len) stepper.feed(next);
    }
    return out;
}

TokenSequence sample(std::span<const TokenId> prompt_ids, const GenerationConfig& cfg, const Generator& gen) {
    Rng rng(cfg.seed);
    return sample(prompt_ids, cfg, gen, rng);
}

std::span<const TokenId> checked_target(std::span<const TokenId> target_ids) {
    std::size_t n = target_ids.size();
    while (n > 0 && target_ids[n - 1] == kPad) --n;
    if (n == 0) throw std::invalid_argument("target sequence is empty");
    for (std::size_t i = 0; i < n; ++i) {
        if (target_ids[i] == kPad) throw std::invalid_argument("target contains an interior PAD at position " + std::to_string(i));
    }
    return target_ids.first(n);
}

std::vector<double> token_log_probs(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids,
                                    const Generator& gen) {
    const auto target = checked_target(target_ids);
    check_ids(target, gen.dims.vocab_size);
    const Trace tr = run(gen, teacher_inputs(prompt_ids, target));
    const auto P = static_cast<Eigen::Index>(prompt_ids.size());
    const auto n = static_cast<Eigen::Index>(target.size());
    const Matrix logits = (gen.out_weight * tr.top_states().middleCols(P + 1, n)).colwise() + gen.out_bias;
    std::vector<double> out;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!logits.col(j).allFinite()) throw RuntimeAbort("generator produced non-finite logits");
        out.push_back(log_softmax(logits.col(j))(target[static_cast<std::size_t>(j)]));
    }
    return out;
}

double mle_loss(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids, const Generator& gen) {
    const auto lp = token_log_probs(prompt_ids, target_ids, gen);
    return -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(lp.size());
}

std::vector<double> accumulate_nll_gradient(std::span<const TokenId> prompt_ids, std::span<const TokenId> target_ids,
                                            double weight, const Generator& gen, Generator& grad) {
    return accumulate_sequence_gradient(prompt_ids, checked_target(target_ids), weight, gen, grad);
}

std::vector<double> accumulate_sequence_gradient(std::span<const TokenId> prompt_ids, std::span<const TokenId> target,
                                                 double weight, const Generator& gen, Generator& grad) {
    if (target.empty()) throw std::invalid_argument("target sequence is empty");
    check_ids(target, gen.dims.vocab_size);
    const Trace tr = run(gen, teacher_inputs(prompt_ids, target));
    const auto H = static_cast<Eigen::Index>(gen.dims.hidden_dim);
    const auto T = static_cast<Eigen::Index>(tr.inputs.size());
    const auto P = static_cast<Eigen::Index>(prompt_ids.size());
    const auto n = static_cast<Eigen::Index>(target.size());

    // Column P + 1 + j of h is the state after consuming the input that
    // precedes target token j.
    const auto states = tr.top_states().middleCols(P + 1, n);
    const Matrix logits = (gen.out_weight * states).colwise() + gen.out_bias;
    Matrix dlogits(logits.rows(), n);
    std::vector<double> log_probs;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!logits.col(j).allFinite()) throw RuntimeAbort("generator produced non-finite logits");
        const Vector lp = log_softmax(logits.col(j));
        const TokenId y = target[static_cast<std::size_t>(j)];
        log_probs.push_back(lp(y));
        dlogits.col(j) = weight * lp.array().exp().matrix();
        dlogits(y, j) -= weight;
    }
    if (weight == 0.0) return log_probs;

    grad.out_weight.noalias() += dlogits * states.transpose();
    grad.out_bias += dlogits.rowwise().sum();
    Matrix dout = Matrix::Zero(H, T);
    dout.middleCols(P, n).noalias() = gen.out_weight.transpose() * dlogits;

    Vector dh_next(H), dh(H), dz_pre(H), dn_pre(H), dr_pre(H);
    for (std::size_t li = gen.layers.size(); li-- > 0;) {
        const auto& layer = gen.layers[li];
        const auto& lt = tr.layers[li];
        Matrix d_gi(3 * H, T), d_gh(3 * H, T);
        dh_next.setZero();
        for (Eigen::Index t = T - 1; t >= 0; --t) {
            dh = dout.col(t) + dh_next;
            const auto r = lt.reset.col(t);
            const auto z = lt.update.col(t);
            const auto c = lt.cand.col(t);
            const auto h_prev = lt.h.col(t);
            const auto dn = dh.array() * (1.0 - z.array());
            dn_pre.array() = dn * (1.0 - c.array().square());
            dz_pre.array() = dh.array() * (h_prev.array() - c.array()) * z.array() * (1.0 - z.array());
            dr_pre.array() = dn_pre.array() * lt.gh.col(t).tail(H).array() * r.array() * (1.0 - r.array());
            d_gi.col(t) << dr_pre, dz_pre, dn_pre;
            d_gh.col(t).head(2 * H) = d_gi.col(t).head(2 * H);
            d_gh.col(t).tail(H).array() = dn_pre.array() * r.array();
            dh_next.array() = dh.array() * z.array();
            dh_next.noalias() += layer.w_hh.transpose() * d_gh.col(t);
        }
        auto& gl = grad.layers[li];
        gl.w_hh.noalias() += d_gh * lt.h.leftCols(T).transpose();
        gl.b_hh += d_gh.rowwise().sum();
        gl.b_ih += d_gi.rowwise().sum();
        if (li > 0) {
            gl.w_ih.noalias() += d_gi * lt.input.transpose();
            dout.noalias() = layer.w_ih.transpose() * d_gi;
        } else {
            // Gather the gate gradients per token id, then one product each
            // for the input weights and the embedding table.
            Matrix per_token = Matrix::Zero(3 * H, gen.embedding.cols());
            for (Eigen::Index t = 0; t < T; ++t) per_token.col(tr.inputs[static_cast<std::size_t>(t)]) += d_gi.col(t);
            gl.w_ih.noalias() += per_token * gen.embedding.transpose();
            grad.embedding.noalias() += layer.w_ih.transpose() * per_token;
        }
    }
    return log_probs;
}

double reward_loss(double r, double lambda) { return -lambda * std::log(r); }

}  // namespace sqlgan
