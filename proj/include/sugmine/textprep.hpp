#pragma once

#include <cctype>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "sugmine/common.hpp"
#include "sugmine/corpus.hpp"

namespace sugmine {

/// Lowercased token sequence produced by the preprocessing chain.
struct TokenSeq {
    std::vector<std::string> tokens;
    std::string source_id;

    bool operator==(const TokenSeq&) const = default;
};

/// Known-good words with corpus frequencies, used as the spelling-correction
/// reference. Built from the training corpus plus an optional wordlist file.
struct Lexicon {
    std::unordered_map<std::string, long long> frequency;

    bool contains(const std::string& w) const { return frequency.count(w) != 0; }
    long long freq(const std::string& w) const {
        auto it = frequency.find(w);
        return it == frequency.end() ? 0 : it->second;
    }
};

inline bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

/// Lowercases, splits on whitespace, and breaks punctuation characters out as
/// single-character tokens.
inline TokenSeq tokenize(const std::string& text, const std::string& source_id = "") {
    TokenSeq out;
    out.source_id = source_id;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        const auto uc = static_cast<unsigned char>(raw);
        if (std::isspace(uc)) {
            flush();
        } else if (uc < 0x80 && is_ascii_punct(raw)) {
            flush();
            out.tokens.emplace_back(1, raw);
        } else {
            cur += static_cast<char>(uc < 0x80 ? std::tolower(uc) : uc);
        }
    }
    flush();
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

inline size_t levenshtein(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<size_t> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = j;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= m; ++j) {
            const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

/// 1 - Levenshtein/max(|a|,|b|); 1.0 for two empty strings.
inline double similarity(const std::string& a, const std::string& b) {
    const size_t mx = std::max(a.size(), b.size());
    if (mx == 0) return 1.0;
    return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(mx);
}

inline constexpr size_t kSpellMinLen = 3;  // shorter tokens are left alone

/// Returns the most similar lexicon word when its similarity clears the
/// threshold; ties prefer higher corpus frequency, then lexicographic order.
/// Tokens already in the lexicon, short tokens, and pure punctuation pass through.
inline std::string correct_spelling(const std::string& token, const Lexicon& lex,
                                    double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw UsageError("spelling threshold must be in (0,1]");
    if (token.size() < kSpellMinLen) return token;
    bool all_punct = true;
    for (char c : token)
        if (!is_ascii_punct(c)) {
            all_punct = false;
            break;
        }
    if (all_punct) return token;
    if (lex.contains(token)) return token;

    // similarity >= threshold bounds the usable length difference
    const double t = threshold;
    std::string best;
    double best_sim = 0.0;
    long long best_freq = -1;
    for (const auto& [word, freq] : lex.frequency) {
        const size_t mx = std::max(word.size(), token.size());
        const size_t max_dist = static_cast<size_t>((1.0 - t) * static_cast<double>(mx) + 1e-9);
        const size_t len_diff = word.size() > token.size() ? word.size() - token.size()
                                                           : token.size() - word.size();
        if (len_diff > max_dist) continue;
        const double sim = similarity(token, word);
        if (sim + 1e-12 < t) continue;
        if (sim > best_sim + 1e-12 ||
            (std::abs(sim - best_sim) <= 1e-12 &&
             (freq > best_freq || (freq == best_freq && word < best)))) {
            best = word;
            best_sim = sim;
            best_freq = freq;
        }
    }
    return best.empty() ? token : best;
}

namespace detail {

inline const std::unordered_map<std::string, std::string>& lemma_exceptions() {
    static const std::unordered_map<std::string, std::string> map = {
        {"was", "be"},       {"been", "be"},      {"being", "be"},
        {"has", "have"},     {"had", "have"},     {"having", "have"},
        {"does", "do"},      {"did", "do"},       {"done", "do"},
        {"better", "good"},  {"best", "good"},    {"worse", "bad"},
        {"worst", "bad"},    {"went", "go"},      {"goes", "go"},
        {"made", "make"},    {"making", "make"},  {"took", "take"},
        {"taking", "take"},  {"came", "come"},    {"coming", "come"},
        {"using", "use"},    {"used", "use"},     {"gave", "give"},
        {"giving", "give"},  {"said", "say"},     {"got", "get"},
        {"getting", "get"},  {"children", "child"}, {"men", "man"},
        {"women", "woman"},  {"feet", "foot"},    {"teeth", "tooth"},
        {"mice", "mouse"},   {"people", "person"},
        // -ing lookalikes that are not progressive forms
        {"during", "during"}, {"thing", "thing"},  {"something", "something"},
        {"nothing", "nothing"}, {"anything", "anything"}, {"everything", "everything"},
        {"morning", "morning"}, {"evening", "evening"}, {"string", "string"},
        {"bring", "bring"},  {"spring", "spring"}, {"king", "king"},
        {"building", "building"},
    };
    return map;
}

inline bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// undouble trailing consonant pairs produced by -ing/-ed doubling (runn -> run);
// ll/ss/ff are natural English doubles and stay.
inline void undouble(std::string& s) {
    const size_t n = s.size();
    if (n < 2) return;
    const char c = s[n - 1];
    if (s[n - 2] != c) return;
    if (is_vowel(c) || c == 'l' || c == 's' || c == 'f') return;
    s.pop_back();
}

}  // namespace detail

/// Rule-table lemmatizer: exception map first, then the first matching suffix
/// rule. Idempotent on its own outputs.
inline std::string lemmatize(const std::string& token) {
    const auto& exc = detail::lemma_exceptions();
    if (auto it = exc.find(token); it != exc.end()) return it->second;
    const size_t n = token.size();
    auto ends = [&](const char* suf) {
        const size_t m = std::strlen(suf);
        return n >= m && token.compare(n - m, m, suf) == 0;
    };

    if (ends("ies") && n > 3) return token.substr(0, n - 3) + "y";
    if (ends("sses")) return token.substr(0, n - 2);
    if (ends("es") && n > 3) {
        // drop "es" after sibilant endings and o; otherwise drop the bare s
        const std::string stem = token.substr(0, n - 2);
        auto stem_ends = [&](const char* suf) {
            const size_t m = std::strlen(suf);
            return stem.size() >= m && stem.compare(stem.size() - m, m, suf) == 0;
        };
        if (stem_ends("ch") || stem_ends("sh") || stem_ends("x") || stem_ends("z") ||
            stem_ends("o"))
            return stem;
        return token.substr(0, n - 1);
    }
    if (ends("s") && !ends("ss") && n > 1) return token.substr(0, n - 1);
    if (ends("ing") && n >= 6) {
        std::string stem = token.substr(0, n - 3);
        detail::undouble(stem);
        return stem;
    }
    if (ends("ed") && n >= 5) {
        std::string stem = token.substr(0, n - 2);
        detail::undouble(stem);
        return stem;
    }
    return token;
}

/// tokenize -> per-token spelling correction -> per-token lemmatization.
inline TokenSeq preprocess_review(const Review& r, const Lexicon& lex, double threshold) {
    TokenSeq seq = tokenize(r.text, r.id);
    for (auto& tok : seq.tokens) tok = lemmatize(correct_spelling(tok, lex, threshold));
    return seq;
}

/// Lexicon from corpus token counts plus an optional wordlist (one word per
/// line; wordlist entries get count 1 unless already present).
inline Lexicon build_lexicon(const std::vector<TokenSeq>& corpus,
                             const std::vector<std::string>& wordlist = {}) {
    Lexicon lex;
    for (const auto& seq : corpus)
        for (const auto& t : seq.tokens) ++lex.frequency[t];
    for (const auto& raw : wordlist) {
        TokenSeq toks = tokenize(raw);
        for (const auto& t : toks.tokens)
            if (!lex.frequency.count(t)) lex.frequency[t] = 1;
    }
    return lex;
}

inline std::vector<std::string> load_wordlist(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline std::string serialize_lexicon(const Lexicon& lex) {
    std::map<std::string, long long> sorted(lex.frequency.begin(), lex.frequency.end());
    std::string out;
    for (const auto& [w, c] : sorted) out += w + "\t" + std::to_string(c) + "\n";
    return out;
}

inline Lexicon load_lexicon_from_string(const std::string& contents) {
    Lexicon lex;
    std::istringstream in(contents);
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        lex.frequency[line.substr(0, tab)] = std::stoll(line.substr(tab + 1));
    }
    return lex;
}

}  // namespace sugmine
