// A small recursive-descent parser for the SQL subset that payloads and the
// benign templates use. It only answers "does this parse" and "how far did
// it get"; there is no AST.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

#include "sqlgan/evaluation.hpp"

namespace sqlgan {
namespace {

enum class Tok { number, string, word, op, lparen, rparen, comma, semicolon, dot, star, end };

struct Token {
    Tok kind;
    std::string text;  // upper-cased for words
    std::size_t offset;
};

struct LexResult {
    std::vector<Token> tokens;
    std::optional<std::size_t> error_at;  // offset of an unlexable character
};

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '@' || c == '$'; }

LexResult lex_tokens(std::string_view s) {
    LexResult out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (s.substr(i, 2) == "--" || c == '#') {
            while (i < s.size() && s[i] != '\n') ++i;
        } else if (s.substr(i, 2) == "/*") {
            const auto close = s.find("*/", i + 2);
            if (close == std::string_view::npos) {
                out.error_at = i;
                return out;
            }
            i = close + 2;
        } else if (c == '\'' || c == '"') {
            std::size_t j = i + 1;
            for (;;) {
                if (j >= s.size()) {
                    out.error_at = i;
                    return out;
                }
                if (s[j] == c) {
                    if (j + 1 < s.size() && s[j + 1] == c) {
                        j += 2;  // doubled quote escape
                        continue;
                    }
                    break;
                }
                ++j;
            }
            out.tokens.push_back({Tok::string, std::string(s.substr(i, j + 1 - i)), i});
            i = j + 1;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            if (s.substr(i, 2) == "0x" || s.substr(i, 2) == "0X") {
                j += 2;
                while (j < s.size() && std::isxdigit(static_cast<unsigned char>(s[j]))) ++j;
            } else {
                while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
            }
            if (j < s.size() && word_char(s[j])) {
                // 1abc is not a number; lex it as a word
                while (j < s.size() && word_char(s[j])) ++j;
                std::string w(s.substr(i, j - i));
                std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::toupper(ch); });
                out.tokens.push_back({Tok::word, w, i});
            } else {
                out.tokens.push_back({Tok::number, std::string(s.substr(i, j - i)), i});
            }
            i = j;
        } else if (word_char(c)) {
            std::size_t j = i;
            while (j < s.size() && word_char(s[j])) ++j;
            std::string w(s.substr(i, j - i));
            std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::toupper(ch); });
            out.tokens.push_back({Tok::word, w, i});
            i = j;
        } else if (c == '(') {
            out.tokens.push_back({Tok::lparen, "(", i++});
        } else if (c == ')') {
            out.tokens.push_back({Tok::rparen, ")", i++});
        } else if (c == ',') {
            out.tokens.push_back({Tok::comma, ",", i++});
        } else if (c == ';') {
            out.tokens.push_back({Tok::semicolon, ";", i++});
        } else if (c == '.') {
            out.tokens.push_back({Tok::dot, ".", i++});
        } else if (c == '*') {
            out.tokens.push_back({Tok::star, "*", i++});
        } else {
            static constexpr std::array<std::string_view, 4> two = {"<=", ">=", "<>", "!="};
            const auto pair = s.substr(i, 2);
            if (std::find(two.begin(), two.end(), pair) != two.end() || pair == "||") {
                out.tokens.push_back({Tok::op, std::string(pair), i});
                i += 2;
            } else if (std::string_view("=<>+-/%").find(c) != std::string_view::npos) {
                out.tokens.push_back({Tok::op, std::string(1, c), i++});
            } else {
                out.error_at = i;
                return out;
            }
        }
    }
    out.tokens.push_back({Tok::end, "", s.size()});
    return out;
}

// Always terminated by an end token, even after a lexing error.
LexResult lex(std::string_view s) {
    LexResult out = lex_tokens(s);
    if (out.error_at) out.tokens.push_back({Tok::end, "", *out.error_at});
    return out;
}

constexpr std::array<std::string_view, 31> kReserved = {
    "SELECT", "FROM",   "WHERE",  "UNION", "ALL",     "DISTINCT", "AND",    "OR",     "NOT",     "ORDER", "BY",
    "LIMIT",  "OFFSET", "GROUP",  "HAVING", "INSERT", "INTO",     "VALUES", "UPDATE", "SET",     "DELETE", "BETWEEN",
    "LIKE",   "IS",     "IN",     "AS",    "WAITFOR", "DELAY",    "ASC",    "DESC",   "EXISTS"};

bool reserved(const std::string& w) { return std::find(kReserved.begin(), kReserved.end(), w) != kReserved.end(); }

struct ParseError {};

class Parser {
public:
    explicit Parser(const std::vector<Token>& toks) : t_(toks) {}

    void script() {
        statement();
        while (accept(Tok::semicolon)) {
            if (peek().kind != Tok::end) statement();
        }
        expect(Tok::end);
    }

    std::size_t furthest_offset() const { return t_[furthest_].offset; }

private:
    const Token& peek() const { return t_[pos_]; }
    bool is_word(std::string_view w) const { return peek().kind == Tok::word && peek().text == w; }

    void advance() {
        if (t_[pos_].kind != Tok::end) ++pos_;
        furthest_ = std::max(furthest_, pos_);
    }
    bool accept(Tok k) {
        if (peek().kind != k) return false;
        advance();
        return true;
    }
    bool accept_word(std::string_view w) {
        if (!is_word(w)) return false;
        advance();
        return true;
    }
    bool accept_op(std::string_view op) {
        if (peek().kind != Tok::op || peek().text != op) return false;
        advance();
        return true;
    }
    void expect(Tok k) {
        if (!accept(k)) throw ParseError{};
    }
    void expect_word(std::string_view w) {
        if (!accept_word(w)) throw ParseError{};
    }
    void identifier() {
        if (peek().kind != Tok::word || reserved(peek().text)) throw ParseError{};
        advance();
    }

    void statement() {
        if (is_word("SELECT")) return select_union();
        if (accept_word("UPDATE")) {
            identifier();
            expect_word("SET");
            do {
                identifier();
                if (!accept_op("=")) throw ParseError{};
                expr();
            } while (accept(Tok::comma));
            if (accept_word("WHERE")) expr();
            return;
        }
        if (accept_word("INSERT")) {
            expect_word("INTO");
            identifier();
            if (accept(Tok::lparen)) {
                do identifier();
                while (accept(Tok::comma));
                expect(Tok::rparen);
            }
            expect_word("VALUES");
            do {
                expect(Tok::lparen);
                expr_list();
                expect(Tok::rparen);
            } while (accept(Tok::comma));
            return;
        }
        if (accept_word("DELETE")) {
            expect_word("FROM");
            identifier();
            if (accept_word("WHERE")) expr();
            return;
        }
        if (accept_word("WAITFOR")) {
            expect_word("DELAY");
            expect(Tok::string);
            return;
        }
        throw ParseError{};
    }

    void select_union() {
        select_core();
        while (accept_word("UNION")) {
            if (!accept_word("ALL")) accept_word("DISTINCT");
            select_core();
        }
        tail();
    }

    void select_core() {
        expect_word("SELECT");
        accept_word("DISTINCT");
        do {
            if (accept(Tok::star)) continue;
            expr();
            if (accept_word("AS")) identifier();
        } while (accept(Tok::comma));
        if (accept_word("FROM")) {
            identifier();
            if (accept(Tok::dot)) identifier();
            if (accept_word("AS")) identifier();
        }
        if (accept_word("WHERE")) expr();
        if (accept_word("GROUP")) {
            expect_word("BY");
            expr_list();
        }
        if (accept_word("HAVING")) expr();
    }

    void tail() {
        if (accept_word("ORDER")) {
            expect_word("BY");
            do {
                expr();
                if (!accept_word("ASC")) accept_word("DESC");
            } while (accept(Tok::comma));
        }
        if (accept_word("LIMIT")) {
            expect(Tok::number);
            if (accept(Tok::comma) || accept_word("OFFSET")) expect(Tok::number);
        }
    }

    void expr_list() {
        do expr();
        while (accept(Tok::comma));
    }

    void expr() {
        and_expr();
        while (accept_word("OR") || accept_op("||")) and_expr();
    }
    void and_expr() {
        not_expr();
        while (accept_word("AND")) not_expr();
    }
    void not_expr() {
        if (accept_word("NOT")) return not_expr();
        comparison();
    }
    void comparison() {
        additive();
        for (;;) {
            if (peek().kind == Tok::op && (peek().text == "=" || peek().text == "<" || peek().text == ">" ||
                                           peek().text == "<=" || peek().text == ">=" || peek().text == "<>" ||
                                           peek().text == "!=")) {
                advance();
                additive();
                continue;
            }
            const bool negated = accept_word("NOT");
            if (accept_word("LIKE")) {
                additive();
            } else if (accept_word("BETWEEN")) {
                additive();
                expect_word("AND");
                additive();
            } else if (accept_word("IN")) {
                expect(Tok::lparen);
                if (is_word("SELECT")) select_union();
                else expr_list();
                expect(Tok::rparen);
            } else if (!negated && accept_word("IS")) {
                accept_word("NOT");
                expect_word("NULL");
            } else {
                if (negated) throw ParseError{};
                return;
            }
        }
    }
    void additive() {
        multiplicative();
        while (peek().kind == Tok::op && (peek().text == "+" || peek().text == "-")) {
            advance();
            multiplicative();
        }
    }
    void multiplicative() {
        unary();
        for (;;) {
            if (accept(Tok::star)) {
                unary();
            } else if (peek().kind == Tok::op && (peek().text == "/" || peek().text == "%")) {
                advance();
                unary();
            } else {
                return;
            }
        }
    }
    void unary() {
        if (accept_op("-") || accept_op("+")) return unary();
        primary();
    }
    void primary() {
        if (accept(Tok::number) || accept(Tok::string) || accept_word("NULL")) return;
        if (accept_word("EXISTS")) {
            expect(Tok::lparen);
            select_union();
            expect(Tok::rparen);
            return;
        }
        if (accept(Tok::lparen)) {
            if (is_word("SELECT")) select_union();
            else expr_list();
            expect(Tok::rparen);
            return;
        }
        identifier();
        if (accept(Tok::dot)) {
            identifier();
        } else if (accept(Tok::lparen)) {
            if (!accept(Tok::rparen)) {
                if (!accept(Tok::star)) {
                    accept_word("DISTINCT");
                    expr_list();
                }
                expect(Tok::rparen);
            }
        }
    }

    const std::vector<Token>& t_;
    std::size_t pos_ = 0;
    std::size_t furthest_ = 0;
};

// Offset in `sql` up to which it is well formed; nullopt when it all parses.
std::optional<std::size_t> first_error(std::string_view sql) {
    const auto lexed = lex(sql);
    Parser p(lexed.tokens);
    try {
        p.script();
        if (!lexed.error_at) return std::nullopt;
        return lexed.error_at;
    } catch (const ParseError&) {
        return p.furthest_offset();
    }
}

}  // namespace

bool parses_as_sql(std::string_view sql) { return !first_error(sql).has_value(); }

FragmentCheck check_sql_fragment(std::string_view payload) {
    FragmentCheck out;
    if (payload.empty()) return out;
    const double len = static_cast<double>(payload.size());
    auto consider = [&](const std::string& prefix, const std::string& suffix) {
        const std::string sql = prefix + std::string(payload) + suffix;
        const auto err = first_error(sql);
        if (!err) {
            out.accepted = true;
            out.progress = 1.0;
            return;
        }
        const double read = static_cast<double>(*err) - static_cast<double>(prefix.size());
        out.progress = std::max(out.progress, std::clamp(read / len, 0.0, 1.0));
    };
    consider("", "");
    for (const std::string quote : {"'", "\"", ""}) {
        // A quoted context only counts when the payload breaks out of it;
        // otherwise any text would pass as a string literal.
        if (!quote.empty() && payload.find(quote) == std::string_view::npos) continue;
        for (std::size_t depth = 0; depth <= 2 && !out.accepted; ++depth) {
            consider("SELECT * FROM t WHERE c = " + std::string(depth, '(') + quote, quote + std::string(depth, ')'));
        }
    }
    if (!out.accepted) out.progress = std::min(out.progress, 1.0 - 1e-9);
    return out;
}

}  // namespace sqlgan
