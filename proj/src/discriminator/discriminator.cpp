#include "sqlgan/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sqlgan {

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Matrix m(rows, cols);
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
    }
    return m;
}

void check_tokens(std::span<const TokenId> seq, std::size_t vocab) {
    for (TokenId id : seq) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary of size " +
                                        std::to_string(vocab));
        }
    }
}

// Mean of the non-PAD embedding columns.
Vector pool(std::span<const TokenId> seq, const Matrix& embedding) {
    check_tokens(seq, static_cast<std::size_t>(embedding.cols()));
    Vector sum = Vector::Zero(embedding.rows());
    std::size_t n = 0;
    for (TokenId id : seq) {
        if (id == kPad) continue;
        sum += embedding.col(id);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("encode: empty sequence");
    return sum / static_cast<double>(n);
}

double real_term(const Matrix& real_probs) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < real_probs.cols(); ++j) sum += std::log(1.0 - real_probs(kFakeClass, j) + kLogEps);
    return -sum / static_cast<double>(real_probs.cols());
}

double fake_term(const Matrix& fake_probs) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < fake_probs.cols(); ++j) sum += std::log(fake_probs(kFakeClass, j) + kLogEps);
    return -sum / static_cast<double>(fake_probs.cols());
}

// d/dlogits of a scalar that depends on the fake-class probability only.
void add_fake_prob_grad(Matrix& dlogits, Eigen::Index col, const Matrix& probs, double dloss_dpfake) {
    const double pf = probs(kFakeClass, col);
    for (int c = 0; c < kNumClasses; ++c) {
        const double delta = c == kFakeClass ? 1.0 : 0.0;
        dlogits(c, col) += dloss_dpfake * pf * (delta - probs(c, col));
    }
}

}  // namespace

std::string_view to_string(RewardClass c) { return c == RewardClass::malicious ? "malicious" : "fake"; }

RewardClass parse_reward_class(std::string_view text) {
    if (text == "malicious") return RewardClass::malicious;
    if (text == "fake") return RewardClass::fake;
    throw ConfigError("unknown reward_class '" + std::string(text) + "' (allowed: malicious, fake)");
}

int class_index(Label label) {
    switch (label) {
        case Label::benign: return kBenignClass;
        case Label::malicious: return kMaliciousClass;
        case Label::unlabeled: break;
    }
    throw ConfigError("supervised batch contains an unlabeled sample");
}

void DiscriminatorDims::validate() const {
    if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) throw ConfigError("discriminator: vocabulary too small");
    if (embed_dim == 0 || hidden_dim == 0 || noise_dim == 0 || sim_hidden_dim == 0 || feature_dim == 0) {
        throw ConfigError("discriminator: all widths must be >= 1");
    }
}

void EncoderParams::append_tensors(std::vector<TensorRef>& out, const std::string& prefix) {
    out.push_back(tensor_ref(prefix + "embedding", embedding));
    out.push_back(tensor_ref(prefix + "weight", weight));
    out.push_back(tensor_ref(prefix + "bias", bias));
}

void SimulatorParams::append_tensors(std::vector<TensorRef>& out, const std::string& prefix) {
    out.push_back(tensor_ref(prefix + "weight1", weight1));
    out.push_back(tensor_ref(prefix + "bias1", bias1));
    out.push_back(tensor_ref(prefix + "weight2", weight2));
    out.push_back(tensor_ref(prefix + "bias2", bias2));
}

void ClassifierParams::append_tensors(std::vector<TensorRef>& out, const std::string& prefix) {
    out.push_back(tensor_ref(prefix + "feature_weight", feature_weight));
    out.push_back(tensor_ref(prefix + "feature_bias", feature_bias));
    out.push_back(tensor_ref(prefix + "out_weight", out_weight));
    out.push_back(tensor_ref(prefix + "out_bias", out_bias));
}

Discriminator Discriminator::zeros(const DiscriminatorDims& dims) {
    dims.validate();
    const auto V = static_cast<Eigen::Index>(dims.vocab_size);
    const auto E = static_cast<Eigen::Index>(dims.embed_dim);
    const auto H = static_cast<Eigen::Index>(dims.hidden_dim);
    const auto Z = static_cast<Eigen::Index>(dims.noise_dim);
    const auto S = static_cast<Eigen::Index>(dims.sim_hidden_dim);
    const auto F = static_cast<Eigen::Index>(dims.feature_dim);
    Discriminator d;
    d.dims = dims;
    d.encoder = {Matrix::Zero(E, V), Matrix::Zero(H, E), Vector::Zero(H)};
    d.simulator = {Matrix::Zero(S, Z), Vector::Zero(S), Matrix::Zero(H, S), Vector::Zero(H)};
    d.classifier = {Matrix::Zero(F, H), Vector::Zero(F), Matrix::Zero(kNumClasses, F), Vector::Zero(kNumClasses)};
    return d;
}

Discriminator Discriminator::initialize(const DiscriminatorDims& dims, Rng& rng) {
    Discriminator d = zeros(dims);
    auto scaled = [&](Matrix& m) { m = random_matrix(m.rows(), m.cols(), 1.0 / std::sqrt(double(m.cols())), rng); };
    d.encoder.embedding = random_matrix(d.encoder.embedding.rows(), d.encoder.embedding.cols(), 1.0, rng);
    scaled(d.encoder.weight);
    scaled(d.simulator.weight1);
    scaled(d.simulator.weight2);
    scaled(d.classifier.feature_weight);
    scaled(d.classifier.out_weight);
    return d;
}

std::vector<TensorRef> Discriminator::tensors() {
    std::vector<TensorRef> out;
    encoder.append_tensors(out, "encoder.");
    simulator.append_tensors(out, "simulator.");
    classifier.append_tensors(out, "classifier.");
    return out;
}

std::vector<TensorRef> Discriminator::classifier_tensors() {
    std::vector<TensorRef> out;
    encoder.append_tensors(out, "encoder.");
    classifier.append_tensors(out, "classifier.");
    return out;
}

std::vector<TensorRef> Discriminator::simulator_tensors() {
    std::vector<TensorRef> out;
    simulator.append_tensors(out, "simulator.");
    return out;
}

namespace {

Vector probs_from_features(const Vector& f, const Discriminator& disc) {
    return softmax(disc.classifier.out_weight * f + disc.classifier.out_bias);
}

}  // namespace

Vector encode(std::span<const TokenId> seq, const Discriminator& disc) {
    const Vector pooled = pool(seq, disc.encoder.embedding);
    return (disc.encoder.weight * pooled + disc.encoder.bias).array().tanh().matrix();
}

Vector simulate(const Vector& z, const Discriminator& disc) {
    if (static_cast<std::size_t>(z.size()) != disc.dims.noise_dim) {
        throw std::invalid_argument("simulate: noise has dimension " + std::to_string(z.size()) + ", expected " +
                                    std::to_string(disc.dims.noise_dim));
    }
    const auto& s = disc.simulator;
    const Vector a = (s.weight1 * z + s.bias1).array().tanh().matrix();
    return (s.weight2 * a + s.bias2).array().tanh().matrix();
}

Vector penultimate_features(const Vector& h, const Discriminator& disc) {
    if (static_cast<std::size_t>(h.size()) != disc.dims.hidden_dim) {
        throw std::invalid_argument("classify: hidden vector has the wrong width");
    }
    if (!h.allFinite()) throw std::invalid_argument("classify: non-finite hidden vector");
    return (disc.classifier.feature_weight * h + disc.classifier.feature_bias).array().tanh().matrix();
}

Vector softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

Vector classify(const Vector& h, const Discriminator& disc) { return probs_from_features(penultimate_features(h, disc), disc); }

double clamp_reward(double p) { return std::clamp(p, kRewardEps, 1.0 - kRewardEps); }

double reward(std::span<const TokenId> seq, const Discriminator& disc, RewardClass reward_class) {
    const Vector p = classify(encode(seq, disc), disc);
    return clamp_reward(p(reward_class == RewardClass::malicious ? kMaliciousClass : kFakeClass));
}

Label predict_label(std::span<const TokenId> seq, const Discriminator& disc) {
    const Vector p = classify(encode(seq, disc), disc);
    return p(kMaliciousClass) > p(kBenignClass) ? Label::malicious : Label::benign;
}

double supervised_loss(const Matrix& probs, std::span<const Label> labels) {
    if (labels.empty()) throw std::invalid_argument("supervised_loss: empty batch");
    if (static_cast<std::size_t>(probs.cols()) != labels.size()) {
        throw std::invalid_argument("supervised_loss: probs/labels size mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        sum += std::log(probs(class_index(labels[i]), static_cast<Eigen::Index>(i)));
    }
    return -sum / static_cast<double>(labels.size());
}

double unsupervised_loss(const Matrix& real_probs, const Matrix& fake_probs) {
    if (real_probs.cols() == 0 || fake_probs.cols() == 0) throw std::invalid_argument("unsupervised_loss: empty batch");
    return real_term(real_probs) + fake_term(fake_probs);
}

double adversarial_loss(const Matrix& fake_probs) {
    if (fake_probs.cols() == 0) throw std::invalid_argument("adversarial_loss: empty batch");
    return real_term(fake_probs);
}

double feature_matching_loss(const Matrix& real_features, const Matrix& fake_features) {
    if (real_features.cols() == 0 || fake_features.cols() == 0) {
        throw std::invalid_argument("feature_matching_loss: empty batch");
    }
    const Vector diff = real_features.rowwise().mean() - fake_features.rowwise().mean();
    return diff.squaredNorm() / static_cast<double>(diff.size());
}

double simulator_loss(const Matrix& fake_probs, const Matrix& real_features, const Matrix& fake_features,
                      double fm_weight) {
    return adversarial_loss(fake_probs) + fm_weight * feature_matching_loss(real_features, fake_features);
}

DiscriminatorForward forward(const DiscriminatorBatch& batch, const Discriminator& disc) {
    if (batch.labeled.size() != batch.labels.size()) throw std::invalid_argument("forward: labels size mismatch");
    if (batch.noise.cols() > 0 && static_cast<std::size_t>(batch.noise.rows()) != disc.dims.noise_dim) {
        throw std::invalid_argument("forward: noise dimension mismatch");
    }
    DiscriminatorForward f;
    f.n_labeled = batch.labeled.size();
    f.real_tokens = batch.labeled;
    f.real_tokens.insert(f.real_tokens.end(), batch.unlabeled.begin(), batch.unlabeled.end());
    f.n_real = f.real_tokens.size();
    f.n_fake = static_cast<std::size_t>(batch.noise.cols());
    for (Label l : batch.labels) f.label_classes.push_back(class_index(l));

    const auto n_real = static_cast<Eigen::Index>(f.n_real);
    const auto n_fake = static_cast<Eigen::Index>(f.n_fake);
    const auto& enc = disc.encoder;
    const auto& sim = disc.simulator;
    f.pooled.resize(enc.embedding.rows(), n_real);
    f.real_hidden.resize(enc.weight.rows(), n_real);
    f.real_features.resize(disc.classifier.feature_weight.rows(), n_real);
    f.real_probs.resize(kNumClasses, n_real);
    for (Eigen::Index i = 0; i < n_real; ++i) {
        f.pooled.col(i) = pool(f.real_tokens[static_cast<std::size_t>(i)], enc.embedding);
        f.real_hidden.col(i) = (enc.weight * f.pooled.col(i) + enc.bias).array().tanh().matrix();
        f.real_features.col(i) = penultimate_features(f.real_hidden.col(i), disc);
        f.real_probs.col(i) = probs_from_features(f.real_features.col(i), disc);
    }

    f.noise = batch.noise;
    f.sim_hidden.resize(sim.weight1.rows(), n_fake);
    f.fake_hidden.resize(sim.weight2.rows(), n_fake);
    f.fake_features.resize(disc.classifier.feature_weight.rows(), n_fake);
    f.fake_probs.resize(kNumClasses, n_fake);
    for (Eigen::Index i = 0; i < n_fake; ++i) {
        f.sim_hidden.col(i) = (sim.weight1 * f.noise.col(i) + sim.bias1).array().tanh().matrix();
        f.fake_hidden.col(i) = (sim.weight2 * f.sim_hidden.col(i) + sim.bias2).array().tanh().matrix();
        f.fake_features.col(i) = penultimate_features(f.fake_hidden.col(i), disc);
        f.fake_probs.col(i) = probs_from_features(f.fake_features.col(i), disc);
    }
    return f;
}

DiscriminatorLosses evaluate_losses(const DiscriminatorForward& f, const LossSwitches& sw) {
    DiscriminatorLosses out;
    const auto n_lab = static_cast<Eigen::Index>(f.n_labeled);
    if (sw.supervised && f.n_labeled > 0) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n_lab; ++i) sum += std::log(f.real_probs(f.label_classes[i], i));
        out.supervised = -sum / static_cast<double>(n_lab);
    }
    if (sw.unsupervised) {
        if (f.n_real > 0) out.unsupervised += real_term(f.real_probs);
        if (f.n_fake > 0) out.unsupervised += fake_term(f.fake_probs);
    }
    if (f.n_fake > 0) {
        if (sw.adversarial) out.adversarial = adversarial_loss(f.fake_probs);
        if (sw.feature_matching && f.n_real > 0) {
            out.feature_matching = feature_matching_loss(f.real_features, f.fake_features);
        }
    }
    out.classifier = out.supervised + out.unsupervised;
    out.simulator = out.adversarial + sw.fm_weight * out.feature_matching;

    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < n_lab; ++i) {
        const int pred = f.real_probs(kMaliciousClass, i) > f.real_probs(kBenignClass, i) ? kMaliciousClass : kBenignClass;
        if (pred == f.label_classes[i]) ++correct;
    }
    out.accuracy = n_lab > 0 ? static_cast<double>(correct) / static_cast<double>(n_lab) : 0.0;
    return out;
}

LossWeights classifier_objective(const LossSwitches& sw) {
    return {sw.supervised ? 1.0 : 0.0, sw.unsupervised ? 1.0 : 0.0, 0.0, 0.0};
}

LossWeights simulator_objective(const LossSwitches& sw) {
    return {0.0, 0.0, sw.adversarial ? 1.0 : 0.0, sw.feature_matching ? sw.fm_weight : 0.0};
}

Discriminator backward(const DiscriminatorForward& f, const Discriminator& disc, const LossWeights& w) {
    Discriminator g = Discriminator::zeros(disc.dims);
    const auto n_real = static_cast<Eigen::Index>(f.n_real);
    const auto n_fake = static_cast<Eigen::Index>(f.n_fake);
    const auto n_lab = static_cast<Eigen::Index>(f.n_labeled);

    Matrix dlogits_real = Matrix::Zero(kNumClasses, n_real);
    Matrix dlogits_fake = Matrix::Zero(kNumClasses, n_fake);
    Matrix dfeat_real = Matrix::Zero(f.real_features.rows(), n_real);
    Matrix dfeat_fake = Matrix::Zero(f.fake_features.rows(), n_fake);

    if (w.supervised != 0.0 && n_lab > 0) {
        for (Eigen::Index i = 0; i < n_lab; ++i) {
            dlogits_real.col(i) += w.supervised * f.real_probs.col(i) / double(n_lab);
            dlogits_real(f.label_classes[i], i) -= w.supervised / double(n_lab);
        }
    }
    if (w.unsupervised != 0.0) {
        for (Eigen::Index i = 0; i < n_real; ++i) {
            const double d = w.unsupervised / (double(n_real) * (1.0 - f.real_probs(kFakeClass, i) + kLogEps));
            add_fake_prob_grad(dlogits_real, i, f.real_probs, d);
        }
        for (Eigen::Index i = 0; i < n_fake; ++i) {
            const double d = -w.unsupervised / (double(n_fake) * (f.fake_probs(kFakeClass, i) + kLogEps));
            add_fake_prob_grad(dlogits_fake, i, f.fake_probs, d);
        }
    }
    if (w.adversarial != 0.0) {
        for (Eigen::Index i = 0; i < n_fake; ++i) {
            const double d = w.adversarial / (double(n_fake) * (1.0 - f.fake_probs(kFakeClass, i) + kLogEps));
            add_fake_prob_grad(dlogits_fake, i, f.fake_probs, d);
        }
    }
    if (w.feature_matching != 0.0 && n_real > 0 && n_fake > 0) {
        const Vector diff = f.real_features.rowwise().mean() - f.fake_features.rowwise().mean();
        const Vector scaled = w.feature_matching * 2.0 / double(diff.size()) * diff;
        dfeat_real.colwise() += scaled / double(n_real);
        dfeat_fake.colwise() -= scaled / double(n_fake);
    }

    const auto& clf = disc.classifier;
    auto& gc = g.classifier;
    gc.out_weight = dlogits_real * f.real_features.transpose() + dlogits_fake * f.fake_features.transpose();
    gc.out_bias = dlogits_real.rowwise().sum() + dlogits_fake.rowwise().sum();

    const Matrix dpre_real =
        ((clf.out_weight.transpose() * dlogits_real + dfeat_real).array() * (1.0 - f.real_features.array().square()))
            .matrix();
    const Matrix dpre_fake =
        ((clf.out_weight.transpose() * dlogits_fake + dfeat_fake).array() * (1.0 - f.fake_features.array().square()))
            .matrix();
    gc.feature_weight = dpre_real * f.real_hidden.transpose() + dpre_fake * f.fake_hidden.transpose();
    gc.feature_bias = dpre_real.rowwise().sum() + dpre_fake.rowwise().sum();

    if (n_real > 0) {
        const Matrix dh = clf.feature_weight.transpose() * dpre_real;
        const Matrix dz = (dh.array() * (1.0 - f.real_hidden.array().square())).matrix();
        g.encoder.weight = dz * f.pooled.transpose();
        g.encoder.bias = dz.rowwise().sum();
        const Matrix dpooled = disc.encoder.weight.transpose() * dz;
        for (Eigen::Index i = 0; i < n_real; ++i) {
            const auto& seq = f.real_tokens[static_cast<std::size_t>(i)];
            const auto n = static_cast<double>(std::count_if(seq.begin(), seq.end(), [](TokenId t) { return t != kPad; }));
            for (TokenId t : seq) {
                if (t != kPad) g.encoder.embedding.col(t) += dpooled.col(i) / n;
            }
        }
    }
    if (n_fake > 0) {
        const auto& sim = disc.simulator;
        const Matrix dh = clf.feature_weight.transpose() * dpre_fake;
        const Matrix dz2 = (dh.array() * (1.0 - f.fake_hidden.array().square())).matrix();
        g.simulator.weight2 = dz2 * f.sim_hidden.transpose();
        g.simulator.bias2 = dz2.rowwise().sum();
        const Matrix dz1 = ((sim.weight2.transpose() * dz2).array() * (1.0 - f.sim_hidden.array().square())).matrix();
        g.simulator.weight1 = dz1 * f.noise.transpose();
        g.simulator.bias1 = dz1.rowwise().sum();
    }
    return g;
}

DiscriminatorLosses discriminator_step(Discriminator& disc, const DiscriminatorBatch& batch, const LossSwitches& sw,
                                       DiscriminatorOptimizers& opt, double clip_norm, bool train_simulator,
                                       ClipMonitor* monitor) {
    const DiscriminatorForward f = forward(batch, disc);
    const DiscriminatorLosses losses = evaluate_losses(f, sw);
    const std::pair<const char*, double> terms[] = {{"supervised", losses.supervised},
                                                    {"unsupervised", losses.unsupervised},
                                                    {"adversarial", losses.adversarial},
                                                    {"feature_matching", losses.feature_matching}};
    for (const auto& [name, value] : terms) {
        if (!std::isfinite(value)) throw RuntimeAbort(std::string("discriminator: non-finite ") + name + " loss");
    }

    const LossWeights cw = classifier_objective(sw);
    const LossWeights sw_sim = simulator_objective(sw);
    const bool update_clf = cw.supervised != 0.0 || cw.unsupervised != 0.0;
    const bool update_sim = train_simulator && f.n_fake > 0 && (sw_sim.adversarial != 0.0 || sw_sim.feature_matching != 0.0);

    // Both gradients come from the pre-update parameters.
    Discriminator g_clf, g_sim;
    if (update_clf) g_clf = backward(f, disc, cw);
    if (update_sim) g_sim = backward(f, disc, sw_sim);
    if (update_clf) {
        auto params = disc.classifier_tensors();
        auto grads = g_clf.classifier_tensors();
        clipped_step(opt.classifier, params, grads, clip_norm, monitor);
    }
    if (update_sim) {
        auto params = disc.simulator_tensors();
        auto grads = g_sim.simulator_tensors();
        clipped_step(opt.simulator, params, grads, clip_norm, monitor);
    }
    return losses;
}

}  // namespace sqlgan
