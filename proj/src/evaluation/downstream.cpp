#include <cmath>
#include <numeric>
#include <set>

#include "sqlgan/evaluation.hpp"

namespace sqlgan {

namespace {

std::set<std::string, std::less<>> ngrams(std::string_view code, std::size_t min_n, std::size_t max_n) {
    std::set<std::string, std::less<>> out;
    for (std::size_t n = min_n; n <= max_n; ++n) {
        for (std::size_t i = 0; i + n <= code.size(); ++i) out.emplace(code.substr(i, n));
    }
    return out;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<std::pair<std::size_t, double>> NgramLogistic::features(std::string_view code) const {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& g : ngrams(code, cfg_.min_n, cfg_.max_n)) {
        const auto it = index_.find(g);
        if (it != index_.end()) out.emplace_back(it->second, 1.0);
    }
    const double norm = std::sqrt(static_cast<double>(out.size()));
    for (auto& f : out) f.second /= norm;
    return out;
}

void NgramLogistic::fit(const std::vector<CodeSample>& train) {
    if (cfg_.min_n == 0 || cfg_.min_n > cfg_.max_n) throw ConfigError("n-gram range must satisfy 1 <= min_n <= max_n");
    index_.clear();
    for (const auto& s : train) {
        if (s.label == Label::unlabeled) throw ConfigError("downstream training rows must be labeled");
        for (const auto& g : ngrams(s.output, cfg_.min_n, cfg_.max_n)) index_.emplace(g, 0);
    }
    std::size_t next = 0;
    for (auto& [g, id] : index_) id = next++;

    std::vector<std::vector<std::pair<std::size_t, double>>> x;
    std::vector<double> y;
    for (const auto& s : train) {
        x.push_back(features(s.output));
        y.push_back(s.label == Label::malicious ? 1.0 : 0.0);
    }
    weights_ = Vector::Zero(static_cast<Eigen::Index>(index_.size()));
    bias_ = 0.0;
    Rng rng(cfg_.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t i : order) {
            double z = bias_;
            for (const auto& [j, v] : x[i]) z += weights_(static_cast<Eigen::Index>(j)) * v;
            const double g = sigmoid(z) - y[i];
            for (const auto& [j, v] : x[i]) {
                auto& w = weights_(static_cast<Eigen::Index>(j));
                w -= cfg_.lr * (g * v + cfg_.l2 * w);
            }
            bias_ -= cfg_.lr * g;
        }
    }
}

double NgramLogistic::probability(std::string_view code) const {
    double z = bias_;
    for (const auto& [j, v] : features(code)) z += weights_(static_cast<Eigen::Index>(j)) * v;
    return sigmoid(z);
}

Label NgramLogistic::predict(std::string_view code) const {
    return probability(code) >= 0.5 ? Label::malicious : Label::benign;
}

DetectionMetrics run_downstream(const std::vector<CodeSample>& train, const std::vector<CodeSample>& test,
                                DetectorModel& model) {
    std::vector<CodeSample> labeled;
    for (const auto& s : train) {
        if (s.label != Label::unlabeled) labeled.push_back(s);
    }
    if (count_label(labeled, Label::benign) == 0 || count_label(labeled, Label::malicious) == 0) {
        throw ConfigError("downstream training set needs both benign and malicious rows");
    }
    model.fit(labeled);
    std::vector<Label> pred, truth;
    for (const auto& s : test) {
        if (s.label == Label::unlabeled) continue;
        pred.push_back(model.predict(s.output));
        truth.push_back(s.label);
    }
    return metrics(confusion(pred, truth));
}

}  // namespace sqlgan
