#pragma once

#include <algorithm>
#include <unordered_map>

#include "sugmine/common.hpp"
#include "sugmine/textprep.hpp"

#include <json.hpp>

namespace sugmine {

/// Token <-> index bijection with three reserved rows. Indices are assigned by
/// descending corpus frequency, ties broken lexicographically.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kReserved = 3;

    std::vector<std::string> index_to_token;
    std::unordered_map<std::string, int> token_to_index;
    std::vector<long long> counts;  // parallel to index_to_token; 0 for reserved rows

    int size() const { return static_cast<int>(index_to_token.size()); }

    /// UNK for tokens outside the vocabulary.
    int lookup(const std::string& tok) const {
        auto it = token_to_index.find(tok);
        return it == token_to_index.end() ? kUnk : it->second;
    }
};

inline Vocabulary build_vocab(const std::vector<TokenSeq>& corpus, int min_count) {
    if (min_count < 1) throw UsageError("min_count must be >= 1");
    if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    std::unordered_map<std::string, long long> freq;
    for (const auto& seq : corpus)
        for (const auto& t : seq.tokens) ++freq[t];

    std::vector<std::pair<std::string, long long>> kept;
    for (auto& [tok, c] : freq)
        if (c >= min_count) kept.emplace_back(tok, c);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.index_to_token = {"<pad>", "<unk>", "<cls>"};
    v.counts = {0, 0, 0};
    for (auto& [tok, c] : kept) {
        v.token_to_index[tok] = static_cast<int>(v.index_to_token.size());
        v.index_to_token.push_back(tok);
        v.counts.push_back(c);
    }
    v.token_to_index["<pad>"] = Vocabulary::kPad;
    v.token_to_index["<unk>"] = Vocabulary::kUnk;
    v.token_to_index["<cls>"] = Vocabulary::kCls;
    return v;
}

/// |V| x d_emb table of word vectors. Row kPad is all zeros; row kCls is a
/// plain trainable row that skip-gram never touches (the classifier owns it).
struct EmbeddingMatrix {
    int d_emb = 0;
    Mat vectors;
};

struct SkipgramConfig {
    int d_emb = 64;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double lr = 0.025;
    std::uint64_t seed = 42;
};

/// Loss and gradients of one skip-gram pair with negative samples:
///   L = -log sigmoid(u_o . v_c) - sum_k log sigmoid(-u_k . v_c)
/// Gradients are written into g_center (w.r.t. v_c) and g_ctx[i] (w.r.t. the
/// i-th context/negative vector, positive first). This is the exact quantity
/// the trainer steps on, so tests can finite-difference it directly.
inline double sgns_pair_loss_grad(const Mat& syn0, const Mat& syn1, int center, int positive,
                                  const std::vector<int>& negatives,
                                  std::vector<double>* g_center,
                                  std::vector<std::vector<double>>* g_ctx) {
    const int d = syn0.cols;
    const double* vc = syn0.row_ptr(center);
    if (g_center) g_center->assign(d, 0.0);
    if (g_ctx) g_ctx->assign(negatives.size() + 1, std::vector<double>(d, 0.0));

    double loss = 0.0;
    auto accumulate = [&](int ctx_row, double sign, size_t slot) {
        const double* u = syn1.row_ptr(ctx_row);
        double z = 0.0;
        for (int j = 0; j < d; ++j) z += u[j] * vc[j];
        const double s = sigmoid(sign * z);
        loss += -std::log(std::max(s, 1e-12));
        // d/dz of -log sigmoid(sign*z) = sign*(sigmoid(sign*z)-1)
        const double gz = sign * (s - 1.0);
        if (g_center)
            for (int j = 0; j < d; ++j) (*g_center)[j] += gz * u[j];
        if (g_ctx)
            for (int j = 0; j < d; ++j) (*g_ctx)[slot][j] += gz * vc[j];
    };
    accumulate(positive, 1.0, 0);
    for (size_t k = 0; k < negatives.size(); ++k) accumulate(negatives[k], -1.0, k + 1);
    return loss;
}

namespace detail {

// cumulative unigram^0.75 table over vocab indices with nonzero counts
struct NegativeSampler {
    std::vector<double> cumulative;
    std::vector<int> index;

    NegativeSampler(const Vocabulary& vocab) {
        double total = 0.0;
        for (int i = 0; i < vocab.size(); ++i) {
            if (vocab.counts[i] <= 0) continue;
            total += std::pow(static_cast<double>(vocab.counts[i]), 0.75);
            cumulative.push_back(total);
            index.push_back(i);
        }
    }

    int sample(Rng& rng) const {
        const double u = uniform_real(const_cast<Rng&>(rng), 0.0, cumulative.back());
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        return index[static_cast<size_t>(it - cumulative.begin())];
    }
};

}  // namespace detail

/// Skip-gram with negative sampling over the tokenized corpus. Deterministic
/// for a fixed seed; single-threaded. Returns the center-vector table. When
/// `init` is given, its vectors seed the table and training continues from
/// them (the fine-tuning path).
inline EmbeddingMatrix train_skipgram(const std::vector<TokenSeq>& corpus,
                                      const Vocabulary& vocab, const SkipgramConfig& cfg,
                                      const EmbeddingMatrix* init = nullptr,
                                      std::vector<double>* epoch_loss = nullptr) {
    if (corpus.empty()) throw DataError("skip-gram: empty corpus");
    if (cfg.d_emb < 2) throw UsageError("skip-gram: d_emb must be >= 2");
    if (vocab.size() < cfg.negatives + 1)
        throw DataError("skip-gram: vocabulary smaller than negatives+1");

    const int n = vocab.size();
    const int d = cfg.d_emb;
    Rng rng(cfg.seed);

    Mat syn0(n, d);
    Mat syn1(n, d);
    if (init) {
        if (init->vectors.rows != n || init->vectors.cols != d)
            throw DataError("skip-gram: init vectors shape does not match vocabulary");
        syn0 = init->vectors;
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) syn0(i, j) = uniform_real(rng, -0.5, 0.5) / d;
    }
    // PAD stays a zero vector
    for (int j = 0; j < d; ++j) syn0(Vocabulary::kPad, j) = 0.0;

    std::vector<std::vector<int>> indexed;
    long long total_positions = 0;
    for (const auto& seq : corpus) {
        std::vector<int> ids;
        ids.reserve(seq.tokens.size());
        for (const auto& t : seq.tokens) ids.push_back(vocab.lookup(t));
        total_positions += static_cast<long long>(ids.size());
        indexed.push_back(std::move(ids));
    }
    if (total_positions == 0) throw DataError("skip-gram: corpus has no tokens");

    detail::NegativeSampler sampler(vocab);
    if (epoch_loss) epoch_loss->clear();

    std::vector<double> g_center;
    std::vector<std::vector<double>> g_ctx;
    std::vector<int> negs;
    const double lr_floor = cfg.lr * 1e-4;
    long long seen = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        long long pair_count = 0;
        for (const auto& ids : indexed) {
            const int len = static_cast<int>(ids.size());
            for (int pos = 0; pos < len; ++pos, ++seen) {
                const double progress = static_cast<double>(seen) /
                                        static_cast<double>(cfg.epochs * total_positions);
                const double lr = std::max(cfg.lr * (1.0 - progress), lr_floor);
                const int center = ids[pos];
                for (int off = -cfg.window; off <= cfg.window; ++off) {
                    if (off == 0) continue;
                    const int q = pos + off;
                    if (q < 0 || q >= len) continue;
                    const int context = ids[q];
                    negs.clear();
                    for (int k = 0; k < cfg.negatives; ++k) {
                        int cand = sampler.sample(rng);
                        for (int attempt = 0; attempt < 8 && cand == context; ++attempt)
                            cand = sampler.sample(rng);
                        if (cand == context) continue;
                        negs.push_back(cand);
                    }
                    loss_sum += sgns_pair_loss_grad(syn0, syn1, center, context, negs,
                                                    &g_center, &g_ctx);
                    ++pair_count;
                    double* vc = syn0.row_ptr(center);
                    for (int j = 0; j < d; ++j) vc[j] -= lr * g_center[j];
                    double* uo = syn1.row_ptr(context);
                    for (int j = 0; j < d; ++j) uo[j] -= lr * g_ctx[0][j];
                    for (size_t k = 0; k < negs.size(); ++k) {
                        double* uk = syn1.row_ptr(negs[k]);
                        for (int j = 0; j < d; ++j) uk[j] -= lr * g_ctx[k + 1][j];
                    }
                }
            }
        }
        if (epoch_loss)
            epoch_loss->push_back(pair_count ? loss_sum / static_cast<double>(pair_count) : 0.0);
    }

    EmbeddingMatrix emb;
    emb.d_emb = d;
    emb.vectors = std::move(syn0);
    for (int j = 0; j < d; ++j) emb.vectors(Vocabulary::kPad, j) = 0.0;
    if (!emb.vectors.all_finite()) throw NumericError("skip-gram produced non-finite vectors");
    return emb;
}

/// CLS row prepended, then tokens, truncated/padded to exactly max_len rows.
/// PAD rows are zero vectors.
inline Mat embed_sequence(const TokenSeq& seq, const Vocabulary& vocab,
                          const EmbeddingMatrix& emb, int max_len) {
    if (max_len < 1) throw UsageError("max_len must be >= 1");
    Mat out(max_len, emb.d_emb);
    for (int j = 0; j < emb.d_emb; ++j) out(0, j) = emb.vectors(Vocabulary::kCls, j);
    const int n_tokens = std::min<int>(static_cast<int>(seq.tokens.size()), max_len - 1);
    for (int i = 0; i < n_tokens; ++i) {
        const int row = vocab.lookup(seq.tokens[i]);
        for (int j = 0; j < emb.d_emb; ++j) out(i + 1, j) = emb.vectors(row, j);
    }
    return out;
}

/// true marks PAD positions; position 0 (CLS) is never padding.
inline std::vector<char> pad_mask_for(size_t token_count, int max_len) {
    std::vector<char> mask(max_len, 0);
    const int real = std::min<int>(static_cast<int>(token_count), max_len - 1);
    for (int i = real + 1; i < max_len; ++i) mask[i] = 1;
    return mask;
}

/// Text format: JSON header line {d_emb, vocab_size, seed}, then one line per
/// vocab row: token<TAB>v1 v2 ... vd.
inline std::string serialize_embeddings(const Vocabulary& vocab, const EmbeddingMatrix& emb,
                                        std::uint64_t seed) {
    nlohmann::ordered_json header;
    header["d_emb"] = emb.d_emb;
    header["vocab_size"] = vocab.size();
    header["seed"] = seed;
    std::string out = header.dump();
    out += '\n';
    char buf[32];
    for (int i = 0; i < vocab.size(); ++i) {
        out += vocab.index_to_token[i];
        out += '\t';
        for (int j = 0; j < emb.d_emb; ++j) {
            if (j) out += ' ';
            std::snprintf(buf, sizeof(buf), "%.17g", emb.vectors(i, j));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline void save_embeddings(const Vocabulary& vocab, const EmbeddingMatrix& emb,
                            std::uint64_t seed, const std::string& path) {
    write_file(path, serialize_embeddings(vocab, emb, seed));
}

inline std::pair<Vocabulary, EmbeddingMatrix> load_embeddings_from_string(
    const std::string& contents) {
    std::istringstream in(contents);
    std::string line;
    if (!std::getline(in, line)) throw DataError("embeddings file is empty");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad embeddings header: ") + e.what());
    }
    const int d = header.at("d_emb").get<int>();
    const int n = header.at("vocab_size").get<int>();

    Vocabulary vocab;
    EmbeddingMatrix emb;
    emb.d_emb = d;
    emb.vectors = Mat(n, d);
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= n) throw DataError("embeddings file has more rows than its header claims");
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError("embeddings row missing tab separator");
        const std::string tok = line.substr(0, tab);
        vocab.index_to_token.push_back(tok);
        vocab.token_to_index[tok] = row;
        std::istringstream vs(line.substr(tab + 1));
        for (int j = 0; j < d; ++j)
            if (!(vs >> emb.vectors(row, j)))
                throw DataError("embeddings row " + std::to_string(row) + " is too short");
        ++row;
    }
    if (row != n) throw DataError("embeddings file has fewer rows than its header claims");
    vocab.counts.assign(n, 0);
    return {std::move(vocab), std::move(emb)};
}

inline std::pair<Vocabulary, EmbeddingMatrix> load_embeddings(const std::string& path) {
    return load_embeddings_from_string(read_file(path));
}

}  // namespace sugmine
