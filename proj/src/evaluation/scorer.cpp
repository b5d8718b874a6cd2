#include <regex>

#include "sqlgan/evaluation.hpp"

namespace sqlgan {
namespace {

constexpr auto kFlags = std::regex::ECMAScript | std::regex::optimize;
constexpr auto kIcase = kFlags | std::regex::icase;

struct LexiconEntry {
    const char* name;
    std::regex trigger;   // on the instruction
    std::regex evidence;  // on the code
};

// Keywords a prompt can ask for. SQL keywords that double as English words
// (OR, AND) only trigger when written in capitals.
const std::vector<LexiconEntry>& lexicon() {
    static const std::vector<LexiconEntry> table = {
        {"single_quote", std::regex(R"(single[- ]quote)", kIcase), std::regex("'", kFlags)},
        {"double_quote", std::regex(R"(double[- ]quote)", kIcase), std::regex("\"", kFlags)},
        {"union_all", std::regex(R"(\bunion\s+all\b)", kIcase), std::regex(R"(\bunion\s+all\b)", kIcase)},
        {"union", std::regex(R"(\bunion\b)", kIcase), std::regex(R"(\bunion\b)", kIcase)},
        {"select", std::regex(R"(\bselect\b)", kIcase), std::regex(R"(\bselect\b)", kIcase)},
        {"null", std::regex(R"(\bnull\b)", kIcase), std::regex(R"(\bnull\b)", kIcase)},
        {"comment", std::regex(R"(--|\bcomment)", kIcase), std::regex(R"(--|#|/\*)", kFlags)},
        {"or", std::regex(R"(\bOR\b)", kFlags), std::regex(R"(\bor\b)", kIcase)},
        {"and", std::regex(R"(\bAND\b)", kFlags), std::regex(R"(\band\b)", kIcase)},
        {"tautology", std::regex(R"(always[- ]true|tautolog)", kIcase),
         std::regex(R"((['"]?)(\w+)\1\s*=\s*\1\2(?!\w))", kIcase)},
        {"extractvalue", std::regex(R"(extractvalue)", kIcase), std::regex(R"(extractvalue\s*\()", kIcase)},
        {"updatexml", std::regex(R"(updatexml)", kIcase), std::regex(R"(updatexml\s*\()", kIcase)},
        {"concat", std::regex(R"(\bconcat)", kIcase), std::regex(R"(concat\s*\()", kIcase)},
        {"convert", std::regex(R"(\bconver(t|sion)\b)", kIcase), std::regex(R"(convert\s*\()", kIcase)},
        {"substring", std::regex(R"(\bsubstring\b)", kIcase), std::regex(R"(substring\s*\()", kIcase)},
        {"ascii", std::regex(R"(\bascii\b)", kIcase), std::regex(R"(ascii\s*\()", kIcase)},
        {"sleep", std::regex(R"(sleep)", kIcase), std::regex(R"(sleep\s*\()", kIcase)},
        {"waitfor_delay", std::regex(R"(\bwaitfor\s+delay\b)", kIcase), std::regex(R"(\bwaitfor\s+delay\b)", kIcase)},
        {"benchmark", std::regex(R"(\bbenchmark\b)", kIcase), std::regex(R"(benchmark\s*\()", kIcase)},
        {"md5", std::regex(R"(\bmd5\b)", kIcase), std::regex(R"(md5\s*\()", kIcase)},
        {"count", std::regex(R"(\bcount\s*\(\*\))", kIcase), std::regex(R"(\bcount\s*\(\s*\*\s*\))", kIcase)},
        {"limit", std::regex(R"(\blimit\b)", kIcase), std::regex(R"(\blimit\s+\d)", kIcase)},
        {"parenthesis", std::regex(R"(parenthes[ie]s)", kIcase), std::regex(R"(\))", kFlags)},
        {"semicolon", std::regex(R"(semicolon)", kIcase), std::regex(";", kFlags)},
    };
    return table;
}

const std::vector<std::regex>& feature_categories() {
    static const std::vector<std::regex> table = {
        std::regex(R"(['"])", kFlags),                                        // quoting
        std::regex(R"(--|#|/\*)", kFlags),                                    // comments
        std::regex(R"(\b(or|and|not)\b)", kIcase),                            // boolean logic
        std::regex(R"(=|<|>|\blike\b|\bbetween\b)", kIcase),                  // comparison
        std::regex(R"(\bunion\b)", kIcase),                                   // union
        std::regex(R"(\bselect\b)", kIcase),                                  // select
        std::regex(R"(\(\s*select\b)", kIcase),                               // subquery
        std::regex(R"(\b[a-z_]\w*\s*\()", kIcase),                            // function call
        std::regex(R"(sleep\s*\(|benchmark\s*\(|\bwaitfor\b)", kIcase),       // timing
        std::regex(R"(extractvalue|updatexml|convert\s*\(|cast\s*\()", kIcase),  // error primitives
        std::regex(R"(;)", kFlags),                                           // stacking
        std::regex(R"(\b0x[0-9a-f]+|\bchar\s*\(|concat\s*\()", kIcase),       // encodings
    };
    return table;
}

bool search(std::string_view s, const std::regex& re) { return std::regex_search(s.begin(), s.end(), re); }

double scale(double fraction) { return 1.0 + 9.0 * fraction; }

// Features counted toward full complexity.
constexpr double kComplexityCap = 6.0;

}  // namespace

std::vector<PromptKeyword> prompt_keywords(std::string_view instruction, std::string_view code) {
    std::vector<PromptKeyword> out;
    for (const auto& e : lexicon()) {
        if (search(instruction, e.trigger)) out.push_back({e.name, search(code, e.evidence)});
    }
    return out;
}

std::size_t sql_feature_categories(std::string_view code) {
    std::size_t n = 0;
    for (const auto& re : feature_categories()) n += search(code, re);
    return n;
}

GenerationScore score_generation(const Prompt& prompt, std::string_view code) {
    GenerationScore s;
    if (code.find_first_not_of(" \t\r\n") == std::string_view::npos) return s;

    const auto keywords = prompt_keywords(prompt.instruction + "\n" + prompt.input, code);
    if (keywords.empty()) {
        s.adherence = 10.0;  // nothing specific was asked for
    } else {
        std::size_t hit = 0;
        for (const auto& k : keywords) hit += k.present;
        s.adherence = scale(static_cast<double>(hit) / static_cast<double>(keywords.size()));
    }
    const double cats = static_cast<double>(sql_feature_categories(code));
    s.complexity = scale(std::min(cats, kComplexityCap) / kComplexityCap);
    s.effectiveness = oracle_detect(code) == Label::malicious ? 10.0 : 1.0;
    const auto check = check_sql_fragment(code);
    s.correctness = check.accepted ? 10.0 : 1.0 + 8.0 * check.progress;
    s.overall = (s.adherence + s.complexity + s.effectiveness + s.correctness) / 4.0;
    return s;
}

Scorer default_scorer() { return [](const Prompt& p, std::string_view code) { return score_generation(p, code); }; }

GenerationScore mean_score(std::span<const GenerationScore> scores) {
    GenerationScore m{0, 0, 0, 0, 0};
    if (scores.empty()) return GenerationScore{};
    for (const auto& s : scores) {
        m.adherence += s.adherence;
        m.complexity += s.complexity;
        m.effectiveness += s.effectiveness;
        m.correctness += s.correctness;
        m.overall += s.overall;
    }
    const auto n = static_cast<double>(scores.size());
    m.adherence /= n;
    m.complexity /= n;
    m.effectiveness /= n;
    m.correctness /= n;
    m.overall /= n;
    return m;
}

}  // namespace sqlgan
