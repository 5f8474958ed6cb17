#pragma once

#include <optional>
#include <unordered_set>

#include "sugmine/common.hpp"
#include "sugmine/corpus.hpp"
#include "sugmine/embed.hpp"
#include "sugmine/textprep.hpp"

#include <json.hpp>

namespace sugmine {

inline const std::vector<std::string> kDefaultMarkers = {"and", "but", "because"};

/// (head, marker, tail) decomposition of a review; head ++ [marker] ++ tail
/// reproduces the original token sequence.
struct DiscourseSplit {
    TokenSeq head;
    std::string marker;
    TokenSeq tail;
};

/// Splits at the first occurrence of `marker` with non-empty head and tail.
inline std::optional<DiscourseSplit> split_at_marker(const TokenSeq& seq,
                                                     const std::string& marker) {
    const auto& toks = seq.tokens;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (toks[i] != marker) continue;
        if (i == 0 || i + 1 == toks.size()) return std::nullopt;
        DiscourseSplit s;
        s.marker = marker;
        s.head.source_id = seq.source_id;
        s.tail.source_id = seq.source_id;
        s.head.tokens.assign(toks.begin(), toks.begin() + static_cast<long>(i));
        s.tail.tokens.assign(toks.begin() + static_cast<long>(i) + 1, toks.end());
        return s;
    }
    return std::nullopt;
}

/// SWAP: tail ++ [marker] ++ head.
inline TokenSeq swap_clauses(const DiscourseSplit& s) {
    TokenSeq out;
    out.source_id = s.head.source_id;
    out.tokens = s.tail.tokens;
    out.tokens.push_back(s.marker);
    out.tokens.insert(out.tokens.end(), s.head.tokens.begin(), s.head.tokens.end());
    return out;
}

/// CROP: the two clauses as standalone candidate sub-reviews (marker dropped).
inline std::pair<TokenSeq, TokenSeq> crop_clauses(const DiscourseSplit& s) {
    return {s.head, s.tail};
}

/// Logistic regression over mean-pooled token embeddings; the pruning
/// classifier C of the oversampling phase.
struct BaselineClassifier {
    std::vector<double> weights;
    double bias = 0.0;

    bool trained() const { return !weights.empty(); }
};

struct BaselineConfig {
    int epochs = 60;
    double lr = 0.5;
    std::uint64_t seed = 42;
};

inline std::vector<double> mean_pool_features(const TokenSeq& seq, const EmbeddingMatrix& emb,
                                              const Vocabulary& vocab) {
    std::vector<double> mean(emb.d_emb, 0.0);
    if (seq.tokens.empty()) return mean;
    for (const auto& t : seq.tokens) {
        const double* row = emb.vectors.row_ptr(vocab.lookup(t));
        for (int j = 0; j < emb.d_emb; ++j) mean[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(seq.tokens.size());
    for (double& v : mean) v *= inv;
    return mean;
}

inline double baseline_score(const BaselineClassifier& c, const std::vector<double>& features) {
    return sigmoid(dot(c.weights, features) + c.bias);
}

/// C(r) = 1 iff sigmoid(w . mean + b) >= 0.5.
inline bool baseline_predicts_suggestion(const BaselineClassifier& c, const TokenSeq& seq,
                                         const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    if (!c.trained()) throw UsageError("baseline classifier is untrained");
    return baseline_score(c, mean_pool_features(seq, emb, vocab)) >= 0.5;
}

inline BaselineClassifier train_baseline(const Dataset& train, const EmbeddingMatrix& emb,
                                         const Vocabulary& vocab, const BaselineConfig& cfg) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    for (const auto& r : train.reviews) {
        if (r.split != Split::train) continue;
        xs.push_back(mean_pool_features(tokenize(r.text, r.id), emb, vocab));
        ys.push_back(r.label == Label::suggestion ? 1.0 : 0.0);
    }
    if (xs.empty()) throw DataError("baseline: empty training set");
    const bool has_pos = std::find(ys.begin(), ys.end(), 1.0) != ys.end();
    const bool has_neg = std::find(ys.begin(), ys.end(), 0.0) != ys.end();
    if (!has_pos || !has_neg) throw DataError("baseline: training set has a single class");

    BaselineClassifier c;
    c.weights.assign(emb.d_emb, 0.0);
    Rng rng(cfg.seed);
    std::vector<size_t> order(xs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (size_t i : order) {
            const double p = baseline_score(c, xs[i]);
            const double g = p - ys[i];
            for (int j = 0; j < emb.d_emb; ++j) c.weights[j] -= cfg.lr * g * xs[i][j];
            c.bias -= cfg.lr * g;
        }
    }
    for (double w : c.weights)
        if (!std::isfinite(w)) throw NumericError("baseline training diverged");
    return c;
}

inline std::string serialize_baseline(const BaselineClassifier& c) {
    nlohmann::ordered_json j;
    j["bias"] = c.bias;
    j["weights"] = c.weights;
    return j.dump();
}

inline BaselineClassifier load_baseline_from_string(const std::string& contents) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(contents);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad baseline file: ") + e.what());
    }
    BaselineClassifier c;
    c.bias = j.at("bias").get<double>();
    c.weights = j.at("weights").get<std::vector<double>>();
    return c;
}

/// Discourse-marker oversampling, single pass. For every train review the
/// classifier flags as a suggestion and every configured marker present in it:
/// the SWAP sequence is appended unconditionally; head/tail crops are appended
/// only when C also flags them. All generated rows are labeled suggestion,
/// get id "<parent>::swap-<m>" / "<parent>::crop-<m>-{head,tail}", and land in
/// the train split. Originals are untouched; duplicates (per domain, by token
/// sequence) are dropped.
inline Dataset oversample_discourse(const Dataset& train, const BaselineClassifier& c,
                                    const std::vector<std::string>& markers,
                                    const EmbeddingMatrix& emb, const Vocabulary& vocab) {
    if (!c.trained()) throw UsageError("oversample_discourse: untrained classifier");

    Dataset out = train;
    std::unordered_set<std::string> seen;
    auto key = [](Domain d, const std::vector<std::string>& toks) {
        return std::string(to_string(d)) + "\x1f" + join_tokens(toks);
    };
    for (const auto& r : train.reviews)
        if (r.split == Split::train) seen.insert(key(r.domain, tokenize(r.text).tokens));

    std::vector<Review> added;
    auto push = [&](const Review& parent, const std::string& suffix, const TokenSeq& toks,
                    Provenance prov) {
        if (toks.tokens.empty()) return;
        if (!seen.insert(key(parent.domain, toks.tokens)).second) return;
        Review nr;
        nr.id = parent.id + suffix;
        nr.text = join_tokens(toks.tokens);
        nr.domain = parent.domain;
        nr.label = Label::suggestion;
        nr.split = Split::train;
        nr.provenance = prov;
        added.push_back(std::move(nr));
    };

    for (const auto& r : train.reviews) {
        if (r.split != Split::train) continue;
        const TokenSeq toks = tokenize(r.text, r.id);
        if (!baseline_predicts_suggestion(c, toks, emb, vocab)) continue;
        for (const auto& m : markers) {
            const auto split = split_at_marker(toks, m);
            if (!split) continue;
            push(r, "::swap-" + m, swap_clauses(*split), Provenance::swap_aug);
            auto [head, tail] = crop_clauses(*split);
            if (baseline_predicts_suggestion(c, head, emb, vocab))
                push(r, "::crop-" + m + "-head", head, Provenance::crop_aug);
            if (baseline_predicts_suggestion(c, tail, emb, vocab))
                push(r, "::crop-" + m + "-tail", tail, Provenance::crop_aug);
        }
    }
    out.reviews.insert(out.reviews.end(), added.begin(), added.end());
    out.rebuild_domains();
    out.validate();
    return out;
}

/// A point in embedding space with its class label; the currency of SMOTE.
struct FeatureExample {
    std::vector<double> vector;
    Label label = Label::suggestion;
};

/// SMOTE: each synthetic point is x_i + lambda * (x_z - x_i) with lambda ~
/// U(0,1) and x_z one of the k Euclidean nearest minority neighbors of x_i.
/// Seeds rotate round-robin through the minority set; deterministic per seed.
inline std::vector<FeatureExample> oversample_smote(const std::vector<FeatureExample>& minority,
                                                    int k, int n_new, std::uint64_t seed) {
    if (k < 1) throw UsageError("smote: k must be >= 1");
    if (minority.size() < static_cast<size_t>(k) + 1)
        throw DataError("smote: minority class too small for k=" + std::to_string(k));
    const size_t n = minority.size();

    // brute-force k-NN inside the minority class; ties broken by index
    std::vector<std::vector<size_t>> knn(n);
    for (size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, size_t>> dist;
        dist.reserve(n - 1);
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (size_t t = 0; t < minority[i].vector.size(); ++t) {
                const double diff = minority[i].vector[t] - minority[j].vector[t];
                d2 += diff * diff;
            }
            dist.emplace_back(d2, j);
        }
        std::sort(dist.begin(), dist.end());
        for (int t = 0; t < k; ++t) knn[i].push_back(dist[static_cast<size_t>(t)].second);
    }

    Rng rng(seed);
    std::vector<FeatureExample> synthetic;
    synthetic.reserve(static_cast<size_t>(std::max(n_new, 0)));
    for (int t = 0; t < n_new; ++t) {
        const size_t i = static_cast<size_t>(t) % n;
        const size_t z = knn[i][uniform_index(rng, static_cast<std::uint64_t>(k))];
        const double lambda = uniform_real(rng, 0.0, 1.0);
        FeatureExample ex;
        ex.label = minority[i].label;
        ex.vector.resize(minority[i].vector.size());
        for (size_t j = 0; j < ex.vector.size(); ++j)
            ex.vector[j] =
                minority[i].vector[j] + lambda * (minority[z].vector[j] - minority[i].vector[j]);
        synthetic.push_back(std::move(ex));
    }
    return synthetic;
}

}  // namespace sugmine
