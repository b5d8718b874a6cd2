#include <regex>

#include "sqlgan/evaluation.hpp"

namespace sqlgan {

ConfusionMatrix confusion(std::span<const Label> predictions, std::span<const Label> truths) {
    if (predictions.size() != truths.size()) {
        throw ConfigError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(truths.size()) + " truths");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (predictions[i] == Label::unlabeled || truths[i] == Label::unlabeled) {
            throw ConfigError("confusion: labels must be benign or malicious");
        }
        const bool pred = predictions[i] == Label::malicious;
        const bool truth = truths[i] == Label::malicious;
        if (pred && truth) ++cm.tp;
        else if (pred) ++cm.fp;
        else if (truth) ++cm.fn;
        else ++cm.tn;
    }
    return cm;
}

DetectionMetrics metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ConfigError("metrics of an empty confusion matrix");
    DetectionMetrics m;
    const auto d = [](std::size_t x) { return static_cast<double>(x); };
    m.accuracy = d(cm.tp + cm.tn) / d(cm.total());
    m.precision_undefined = cm.tp + cm.fp == 0;
    m.recall_undefined = cm.tp + cm.fn == 0;
    m.precision = m.precision_undefined ? 0.0 : d(cm.tp) / d(cm.tp + cm.fp);
    m.recall = m.recall_undefined ? 0.0 : d(cm.tp) / d(cm.tp + cm.fn);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

namespace {

struct OracleRule {
    const char* name;
    std::regex pattern;
};

const std::vector<OracleRule>& rules() {
    constexpr auto flags = std::regex::ECMAScript | std::regex::icase | std::regex::optimize;
    static const std::vector<OracleRule> table = {
        // OR/AND followed by a self-comparison: 1=1, 'a'='a, "x"="x"
        {"tautology", std::regex(R"(\b(or|and)\s+(['"]?)(\w+)\2\s*=\s*\2\3(?!\w))", flags)},
        {"union_select", std::regex(R"(\bunion(\s+(all|distinct))?\s+select\b)", flags)},
        // a closing quote or parenthesis, an injected predicate, then a comment
        {"comment_truncation", std::regex(R"(['")]\s*(or|and)\b.*(--|#|/\*))", flags)},
        {"time_delay", std::regex(R"(\b(sleep|pg_sleep|benchmark)\s*\(|\bwaitfor\s+delay\b)", flags)},
    };
    return table;
}

}  // namespace

std::vector<std::string> oracle_matches(std::string_view code) {
    std::vector<std::string> out;
    for (const auto& r : rules()) {
        if (std::regex_search(code.begin(), code.end(), r.pattern)) out.emplace_back(r.name);
    }
    return out;
}

Label oracle_detect(std::string_view code) {
    for (const auto& r : rules()) {
        if (std::regex_search(code.begin(), code.end(), r.pattern)) return Label::malicious;
    }
    return Label::benign;
}

}  // namespace sqlgan
