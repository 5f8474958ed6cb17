#pragma once

#include "sugmine/autodiff.hpp"
#include "sugmine/corpus.hpp"
#include "sugmine/embed.hpp"

#include <json.hpp>

namespace sugmine {

inline constexpr int kSuggestionClasses = 2;  // 0 = non_suggestion, 1 = suggestion
inline constexpr int kDomainClasses = 4;      // enum order: hotel, electronics, travel, software
inline constexpr char kCheckpointMagic[9] = "SUGMINE1";

struct TransformerConfig {
    int n_layers = 2;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 128;
    int adapter_dim = 32;
    int max_len = 64;
    int d_emb = 64;
    double base_lr = 0.05;
    double adapter_lr_multiplier = 10.0;
    double dropout = 0.0;
    int accum_steps = 2;
    int epochs = 10;
    int batch_size = 8;
    std::uint64_t seed = 42;
    bool use_adapters = true;

    void validate() const {
        if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 || max_len < 1 || d_emb < 1 ||
            adapter_dim < 1 || accum_steps < 1 || epochs < 0 || batch_size < 1)
            throw UsageError("transformer config: all sizes must be positive");
        if (d_model % n_heads != 0) throw UsageError("transformer config: n_heads must divide d_model");
        if (adapter_dim >= d_model)
            throw UsageError("transformer config: adapter_dim must be smaller than d_model");
        if (dropout < 0.0 || dropout >= 1.0) throw UsageError("transformer config: dropout in [0,1)");
    }
};

/// Sinusoidal position features, positions indexed from 0:
///   P[i][2j]   = sin(i / 10000^(2j/d))
///   P[i][2j+1] = cos(i / 10000^(2j/d))
/// Odd d is padded to even internally (the exponent uses the padded width) and
/// the last column dropped.
inline Mat positional_encoding(int h, int d) {
    if (h < 1 || d < 1) throw UsageError("positional_encoding: h and d must be positive");
    const int d_use = d + (d % 2);
    Mat p(h, d);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; 2 * j < d_use; ++j) {
            const double angle =
                static_cast<double>(i) / std::pow(10000.0, (2.0 * j) / static_cast<double>(d_use));
            if (2 * j < d) p(i, 2 * j) = std::sin(angle);
            if (2 * j + 1 < d) p(i, 2 * j + 1) = std::cos(angle);
        }
    }
    return p;
}

/// Bottleneck adapter: down-project to adapter_dim, ReLU, up-project, residual
/// skip. Exactly 2*m*d + d + m parameters per adapter.
struct Adapter {
    ad::Param down_w, down_b, up_w, up_b;

    size_t parameter_count() const {
        return down_w.count() + down_b.count() + up_w.count() + up_b.count();
    }
};

struct EncoderLayer {
    std::vector<ad::Param> wq, wk, wv;  // per head, (d_model/n_heads) x d_model
    ad::Param wo;                        // d_model x d_model
    ad::Param ff1_w, ff1_b, ff2_w, ff2_b;
    ad::Param ln1_g, ln1_b, ln2_g, ln2_b;
    Adapter adapter_attn, adapter_ff;
};

/// Attention weights of one forward pass: an h x h matrix per (layer, head),
/// plus the position labels they refer to.
struct AttentionMap {
    int n_layers = 0;
    int n_heads = 0;
    int h = 0;
    std::vector<Mat> maps;  // layer-major: maps[layer * n_heads + head]
    std::vector<std::string> tokens;

    const Mat& at(int layer, int head) const {
        return maps[static_cast<size_t>(layer) * n_heads + head];
    }
};

struct TransformerModel {
    TransformerConfig cfg;
    ad::Param input_w, input_b;  // d_emb x d_model projection
    ad::Param cls_emb;           // 1 x d_emb, the classifier-owned CLS row
    std::vector<EncoderLayer> layers;
    ad::Param head_sugg_w, head_sugg_b;
    ad::Param head_dom_w, head_dom_b;
    Mat pos;  // max_len x d_model, fixed

    std::vector<ad::Param*> params() {
        std::vector<ad::Param*> out = {&input_w, &input_b, &cls_emb};
        for (auto& L : layers) {
            for (auto& p : L.wq) out.push_back(&p);
            for (auto& p : L.wk) out.push_back(&p);
            for (auto& p : L.wv) out.push_back(&p);
            out.push_back(&L.wo);
            out.push_back(&L.ff1_w);
            out.push_back(&L.ff1_b);
            out.push_back(&L.ff2_w);
            out.push_back(&L.ff2_b);
            out.push_back(&L.ln1_g);
            out.push_back(&L.ln1_b);
            out.push_back(&L.ln2_g);
            out.push_back(&L.ln2_b);
            for (ad::Param* p : {&L.adapter_attn.down_w, &L.adapter_attn.down_b,
                                 &L.adapter_attn.up_w, &L.adapter_attn.up_b,
                                 &L.adapter_ff.down_w, &L.adapter_ff.down_b,
                                 &L.adapter_ff.up_w, &L.adapter_ff.up_b})
                out.push_back(p);
        }
        out.push_back(&head_sugg_w);
        out.push_back(&head_sugg_b);
        out.push_back(&head_dom_w);
        out.push_back(&head_dom_b);
        return out;
    }

    void zero_grads() {
        for (ad::Param* p : params()) p->zero_grad();
    }
};

enum class TrainMode { full, adapter_only };

inline bool param_trainable(const ad::Param& p, TrainMode mode) {
    if (mode == TrainMode::full) return true;
    return p.adapter || p.name.rfind("head.", 0) == 0;
}

namespace detail {

inline void xavier_fill(Mat& m, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
    for (double& v : m.a) v = uniform_real(rng, -limit, limit);
}

inline Adapter make_adapter(const std::string& prefix, int d_model, int m_a, Rng& rng) {
    Adapter a;
    a.down_w = ad::Param(prefix + ".down.w", d_model, m_a, true);
    a.down_b = ad::Param(prefix + ".down.b", 1, m_a, true);
    a.up_w = ad::Param(prefix + ".up.w", m_a, d_model, true);
    a.up_b = ad::Param(prefix + ".up.b", 1, d_model, true);
    // small random down-projection, zero up-projection: exact identity at init
    for (double& v : a.down_w.value.a) v = uniform_real(rng, -0.01, 0.01);
    return a;
}

}  // namespace detail

/// Fresh model with deterministic initialization. When `cls_init` is given it
/// seeds the trainable CLS row (normally the embedding matrix's CLS vector).
inline TransformerModel init_model(const TransformerConfig& cfg, const Mat* cls_init = nullptr) {
    cfg.validate();
    TransformerModel m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    const int d = cfg.d_model;
    const int dk = d / cfg.n_heads;

    m.input_w = ad::Param("input.w", cfg.d_emb, d);
    detail::xavier_fill(m.input_w.value, rng);
    m.input_b = ad::Param("input.b", 1, d);
    m.cls_emb = ad::Param("cls_emb", 1, cfg.d_emb);
    if (cls_init) {
        if (cls_init->rows != 1 || cls_init->cols != cfg.d_emb)
            throw DataError("init_model: cls_init shape mismatch");
        m.cls_emb.value = *cls_init;
    } else {
        detail::xavier_fill(m.cls_emb.value, rng);
    }

    for (int l = 0; l < cfg.n_layers; ++l) {
        EncoderLayer L;
        const std::string lp = "layer" + std::to_string(l);
        for (int hIdx = 0; hIdx < cfg.n_heads; ++hIdx) {
            const std::string hp = lp + ".head" + std::to_string(hIdx);
            L.wq.emplace_back(hp + ".wq", dk, d);
            L.wk.emplace_back(hp + ".wk", dk, d);
            L.wv.emplace_back(hp + ".wv", dk, d);
            detail::xavier_fill(L.wq.back().value, rng);
            detail::xavier_fill(L.wk.back().value, rng);
            detail::xavier_fill(L.wv.back().value, rng);
        }
        L.wo = ad::Param(lp + ".wo", d, d);
        detail::xavier_fill(L.wo.value, rng);
        L.ff1_w = ad::Param(lp + ".ff1.w", d, cfg.d_ff);
        detail::xavier_fill(L.ff1_w.value, rng);
        L.ff1_b = ad::Param(lp + ".ff1.b", 1, cfg.d_ff);
        L.ff2_w = ad::Param(lp + ".ff2.w", cfg.d_ff, d);
        detail::xavier_fill(L.ff2_w.value, rng);
        L.ff2_b = ad::Param(lp + ".ff2.b", 1, d);
        L.ln1_g = ad::Param(lp + ".ln1.g", 1, d);
        L.ln1_g.value.fill(1.0);
        L.ln1_b = ad::Param(lp + ".ln1.b", 1, d);
        L.ln2_g = ad::Param(lp + ".ln2.g", 1, d);
        L.ln2_g.value.fill(1.0);
        L.ln2_b = ad::Param(lp + ".ln2.b", 1, d);
        L.adapter_attn = detail::make_adapter(lp + ".adapter_attn", d, cfg.adapter_dim, rng);
        L.adapter_ff = detail::make_adapter(lp + ".adapter_ff", d, cfg.adapter_dim, rng);
        m.layers.push_back(std::move(L));
    }

    m.head_sugg_w = ad::Param("head.sugg.w", d, kSuggestionClasses);
    detail::xavier_fill(m.head_sugg_w.value, rng);
    m.head_sugg_b = ad::Param("head.sugg.b", 1, kSuggestionClasses);
    m.head_dom_w = ad::Param("head.dom.w", d, kDomainClasses);
    detail::xavier_fill(m.head_dom_w.value, rng);
    m.head_dom_b = ad::Param("head.dom.b", 1, kDomainClasses);

    m.pos = positional_encoding(cfg.max_len, d);
    return m;
}

// ---- tape builders -------------------------------------------------------

inline ad::Var adapter_on_tape(ad::Tape& t, ad::Var x, Adapter& a) {
    ad::Var mid = t.relu(t.add_row(t.matmul(x, t.param(a.down_w)), t.param(a.down_b)));
    ad::Var up = t.add_row(t.matmul(mid, t.param(a.up_w)), t.param(a.up_b));
    return t.add(x, up);
}

inline ad::Var multi_head_attention_on_tape(ad::Tape& t, ad::Var x, EncoderLayer& L,
                                            const std::vector<char>& pad_mask,
                                            std::vector<ad::Var>* attn_out) {
    const int n_heads = static_cast<int>(L.wq.size());
    const int dk = t.val(x).cols / n_heads;
    std::vector<ad::Var> heads;
    for (int l = 0; l < n_heads; ++l) {
        ad::Var q = t.matmul_nt(x, t.param(L.wq[static_cast<size_t>(l)]));
        ad::Var k = t.matmul_nt(x, t.param(L.wk[static_cast<size_t>(l)]));
        ad::Var v = t.matmul_nt(x, t.param(L.wv[static_cast<size_t>(l)]));
        ad::Var scores = t.scale(t.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dk)));
        ad::Var w = t.softmax_rows(scores, pad_mask);
        if (attn_out) attn_out->push_back(w);
        heads.push_back(t.matmul(w, v));
    }
    return t.matmul(t.concat_cols(heads), t.param(L.wo));
}

struct EncodeVars {
    ad::Var cls;                 // 1 x d_model
    std::vector<ad::Var> attn;  // layer-major per-head weight matrices
};

/// Input projection -> positional encoding -> encoder stack; returns the CLS
/// position. Row 0 of the input is replaced by the model's trainable CLS row.
inline EncodeVars encode_on_tape(ad::Tape& t, const Mat& x_emb, const std::vector<char>& pad_mask,
                                 TransformerModel& m, bool training = false, Rng* rng = nullptr) {
    if (x_emb.rows > m.cfg.max_len)
        throw DataError("encode: sequence longer than max_len; truncate first");
    if (x_emb.cols != m.cfg.d_emb) throw DataError("encode: embedding width mismatch");
    if (static_cast<int>(pad_mask.size()) != x_emb.rows)
        throw DataError("encode: pad mask length mismatch");

    EncodeVars out;
    ad::Var x0 = t.overlay_row(x_emb, 0, t.param(m.cls_emb));
    ad::Var h = t.add_row(t.matmul(x0, t.param(m.input_w)), t.param(m.input_b));
    Mat pos_slice(x_emb.rows, m.cfg.d_model);
    for (int i = 0; i < x_emb.rows; ++i)
        for (int j = 0; j < m.cfg.d_model; ++j) pos_slice(i, j) = m.pos(i, j);
    h = t.add_const(h, pos_slice);

    const bool drop = training && m.cfg.dropout > 0.0;
    for (auto& L : m.layers) {
        ad::Var a = multi_head_attention_on_tape(t, h, L, pad_mask, &out.attn);
        if (drop) a = t.dropout(a, m.cfg.dropout, *rng);
        if (m.cfg.use_adapters) a = adapter_on_tape(t, a, L.adapter_attn);
        h = t.layer_norm(t.add(h, a), t.param(L.ln1_g), t.param(L.ln1_b));

        ad::Var f = t.add_row(
            t.matmul(t.relu(t.add_row(t.matmul(h, t.param(L.ff1_w)), t.param(L.ff1_b))),
                     t.param(L.ff2_w)),
            t.param(L.ff2_b));
        if (drop) f = t.dropout(f, m.cfg.dropout, *rng);
        if (m.cfg.use_adapters) f = adapter_on_tape(t, f, L.adapter_ff);
        h = t.layer_norm(t.add(h, f), t.param(L.ln2_g), t.param(L.ln2_b));
    }
    out.cls = t.rows(h, 0, 1);
    return out;
}

struct ClassifyVars {
    EncodeVars enc;
    ad::Var sugg_logits;  // 1 x 2
    ad::Var dom_logits;   // 1 x 4
};

inline ClassifyVars classify_on_tape(ad::Tape& t, const Mat& x_emb,
                                     const std::vector<char>& pad_mask, TransformerModel& m,
                                     bool training = false, Rng* rng = nullptr) {
    ClassifyVars out;
    out.enc = encode_on_tape(t, x_emb, pad_mask, m, training, rng);
    out.sugg_logits = t.add_row(t.matmul(out.enc.cls, t.param(m.head_sugg_w)), t.param(m.head_sugg_b));
    out.dom_logits = t.add_row(t.matmul(out.enc.cls, t.param(m.head_dom_w)), t.param(m.head_dom_b));
    return out;
}

// ---- value-level wrappers --------------------------------------------------

/// Scaled dot-product attention over already-projected Q/K/V, returning
/// (output, weights). Pure function; runs on a throwaway tape so tests and the
/// encoder exercise the same kernel.
inline std::pair<Mat, Mat> scaled_dot_attention(const Mat& q, const Mat& k, const Mat& v,
                                                const std::vector<char>& pad_mask) {
    if (q.cols != k.cols || k.rows != v.rows) throw NumericError("attention: shape mismatch");
    ad::Tape t;
    ad::Var qv = t.constant(q), kv = t.constant(k), vv = t.constant(v);
    ad::Var scores = t.scale(t.matmul_nt(qv, kv), 1.0 / std::sqrt(static_cast<double>(q.cols)));
    ad::Var w = t.softmax_rows(scores, pad_mask);
    ad::Var out = t.matmul(w, vv);
    return {t.val(out), t.val(w)};
}

/// One multi-head attention sublayer outside the tape; returns the projected
/// output and the per-head attention weights.
inline std::pair<Mat, std::vector<Mat>> multi_head_attention(const Mat& x, EncoderLayer& layer,
                                                             const std::vector<char>& pad_mask) {
    ad::Tape t;
    std::vector<ad::Var> attn;
    ad::Var out = multi_head_attention_on_tape(t, t.constant(x), layer, pad_mask, &attn);
    std::vector<Mat> weights;
    for (ad::Var w : attn) weights.push_back(t.val(w));
    return {t.val(out), std::move(weights)};
}

/// Adapter applied to a single d-vector.
inline std::vector<double> adapter_forward(const std::vector<double>& x, Adapter& a) {
    Mat xm(1, static_cast<int>(x.size()));
    for (size_t j = 0; j < x.size(); ++j) xm(0, j) = x[j];
    ad::Tape t;
    ad::Var out = adapter_on_tape(t, t.constant(xm), a);
    const Mat& o = t.val(out);
    return {o.a.begin(), o.a.end()};
}

inline AttentionMap attention_map_from_vars(const ad::Tape& t, const EncodeVars& enc,
                                            const TransformerModel& m,
                                            std::vector<std::string> tokens) {
    AttentionMap map;
    map.n_layers = m.cfg.n_layers;
    map.n_heads = m.cfg.n_heads;
    map.h = tokens.empty() ? 0 : static_cast<int>(tokens.size());
    map.tokens = std::move(tokens);
    for (ad::Var w : enc.attn) map.maps.push_back(t.val(w));
    if (!map.maps.empty()) map.h = map.maps[0].rows;
    return map;
}

/// Inference-mode encoder: (CLS vector, attention map).
inline std::pair<std::vector<double>, AttentionMap> encode(const Mat& x_emb,
                                                           const std::vector<char>& pad_mask,
                                                           TransformerModel& m) {
    ad::Tape t;
    EncodeVars enc = encode_on_tape(t, x_emb, pad_mask, m, false, nullptr);
    const Mat& cls = t.val(enc.cls);
    return {std::vector<double>(cls.a.begin(), cls.a.end()),
            attention_map_from_vars(t, enc, m, {})};
}

struct ClassifyResult {
    std::vector<double> sugg_logits;
    std::vector<double> dom_logits;
    AttentionMap attention;
};

/// Inference on a token sequence: embeds, encodes, applies both heads.
inline ClassifyResult forward_classify(const TokenSeq& seq, TransformerModel& m,
                                       const Vocabulary& vocab, const EmbeddingMatrix& emb) {
    if (vocab.size() <= Vocabulary::kReserved) throw DataError("forward_classify: empty vocabulary");
    const Mat x = embed_sequence(seq, vocab, emb, m.cfg.max_len);
    const std::vector<char> mask = pad_mask_for(seq.tokens.size(), m.cfg.max_len);

    ad::Tape t;
    ClassifyVars vars = classify_on_tape(t, x, mask, m, false, nullptr);

    std::vector<std::string> labels;
    labels.emplace_back("<cls>");
    const int real = std::min<int>(static_cast<int>(seq.tokens.size()), m.cfg.max_len - 1);
    for (int i = 0; i < real; ++i) labels.push_back(seq.tokens[static_cast<size_t>(i)]);
    while (static_cast<int>(labels.size()) < m.cfg.max_len) labels.emplace_back("<pad>");

    ClassifyResult out;
    const Mat& s = t.val(vars.sugg_logits);
    const Mat& d = t.val(vars.dom_logits);
    out.sugg_logits.assign(s.a.begin(), s.a.end());
    out.dom_logits.assign(d.a.begin(), d.a.end());
    out.attention = attention_map_from_vars(t, vars.enc, m, std::move(labels));
    return out;
}

// ---- training ---------------------------------------------------------------

/// One training example, already embedded. Synthetic feature-space examples
/// (the SMOTE route) use a single non-PAD row carrying the feature vector.
struct EncodedExample {
    Mat x;                       // max_len x d_emb
    std::vector<char> pad_mask;  // length max_len
    int sugg_label = 0;          // 1 = suggestion
    int domain_label = 0;        // Domain enum order
    bool train_domain = false;   // gold suggestions only
};

struct TrainResult {
    std::vector<double> epoch_mean_loss;
};

/// Joint loss of one example: suggestion cross-entropy, plus domain
/// cross-entropy when the gold label is suggestion.
inline ad::Var example_loss_on_tape(ad::Tape& t, const EncodedExample& ex, TransformerModel& m,
                                    bool training, Rng* rng) {
    ClassifyVars vars = classify_on_tape(t, ex.x, ex.pad_mask, m, training, rng);
    ad::Var loss = t.cross_entropy_logits(vars.sugg_logits, ex.sugg_label);
    if (ex.train_domain)
        loss = t.add(loss, t.cross_entropy_logits(vars.dom_logits, ex.domain_label));
    return loss;
}

/// Plain SGD with gradient accumulation: grads accumulate over `accum_steps`
/// minibatches, then one step on the mean gradient. Adapter parameters use
/// base_lr * adapter_lr_multiplier, everything else base_lr. Deterministic for
/// a fixed seed; single-threaded.
inline TrainResult train_transformer(TransformerModel& m,
                                     const std::vector<EncodedExample>& examples,
                                     TrainMode mode = TrainMode::full) {
    if (examples.empty()) throw DataError("train: empty dataset");
    const TransformerConfig& cfg = m.cfg;
    Rng rng(cfg.seed);
    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    m.zero_grads();
    TrainResult result;
    auto step = [&](long long count) {
        if (count <= 0) return;
        const double inv = 1.0 / static_cast<double>(count);
        for (ad::Param* p : m.params()) {
            if (param_trainable(*p, mode)) {
                const double lr = cfg.base_lr * (p->adapter ? cfg.adapter_lr_multiplier : 1.0);
                for (size_t i = 0; i < p->value.size(); ++i)
                    p->value.a[i] -= lr * p->grad.a[i] * inv;
            }
            p->zero_grad();
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        long long accum_count = 0;
        int batches_accumulated = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            for (size_t i = start; i < end; ++i) {
                const EncodedExample& ex = examples[order[i]];
                ad::Tape t;
                ad::Var loss = example_loss_on_tape(t, ex, m, true, &rng);
                const double lv = t.val(loss)(0, 0);
                if (!std::isfinite(lv))
                    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                       ", batch " + std::to_string(start / cfg.batch_size) +
                                       ", example '" + std::to_string(order[i]) + "'");
                epoch_loss += lv;
                t.backward(loss);
            }
            accum_count += static_cast<long long>(end - start);
            if (++batches_accumulated == cfg.accum_steps) {
                step(accum_count);
                accum_count = 0;
                batches_accumulated = 0;
            }
        }
        step(accum_count);  // flush a partial accumulation window at epoch end
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
    }
    return result;
}

// ---- checkpoint io ----------------------------------------------------------

inline nlohmann::ordered_json config_to_json(const TransformerConfig& c) {
    nlohmann::ordered_json j;
    j["n_layers"] = c.n_layers;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["d_ff"] = c.d_ff;
    j["adapter_dim"] = c.adapter_dim;
    j["max_len"] = c.max_len;
    j["d_emb"] = c.d_emb;
    j["base_lr"] = c.base_lr;
    j["adapter_lr_multiplier"] = c.adapter_lr_multiplier;
    j["dropout"] = c.dropout;
    j["accum_steps"] = c.accum_steps;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["use_adapters"] = c.use_adapters;
    return j;
}

inline TransformerConfig config_from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.adapter_dim = j.at("adapter_dim").get<int>();
    c.max_len = j.at("max_len").get<int>();
    c.d_emb = j.at("d_emb").get<int>();
    c.base_lr = j.at("base_lr").get<double>();
    c.adapter_lr_multiplier = j.at("adapter_lr_multiplier").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.accum_steps = j.at("accum_steps").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.use_adapters = j.at("use_adapters").get<bool>();
    return c;
}

/// Checkpoint layout: magic "SUGMINE1", u64 little-endian header length, JSON
/// header {config, tensors:[{name,rows,cols}...]}, then the tensors' doubles
/// back-to-back in header order, little-endian.
inline std::string serialize_checkpoint(TransformerModel& m) {
    nlohmann::ordered_json header;
    header["config"] = config_to_json(m.cfg);
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    for (ad::Param* p : m.params()) {
        nlohmann::ordered_json t;
        t["name"] = p->name;
        t["rows"] = p->value.rows;
        t["cols"] = p->value.cols;
        tensors.push_back(t);
    }
    header["tensors"] = tensors;
    const std::string hjson = header.dump();

    std::string out;
    out.append(kCheckpointMagic, 8);
    const std::uint64_t hlen = hjson.size();
    char lenbuf[8];
    std::memcpy(lenbuf, &hlen, 8);
    out.append(lenbuf, 8);
    out += hjson;
    for (ad::Param* p : m.params()) {
        const auto bytes = p->value.size() * sizeof(double);
        const size_t at = out.size();
        out.resize(at + bytes);
        std::memcpy(out.data() + at, p->value.a.data(), bytes);
    }
    return out;
}

inline void save_checkpoint(TransformerModel& m, const std::string& path) {
    write_file(path, serialize_checkpoint(m));
}

inline TransformerModel load_checkpoint_from_string(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 8, kCheckpointMagic, 8) != 0)
        throw DataError("checkpoint: bad magic (expected SUGMINE1)");
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 8, 8);
    if (bytes.size() < 16 + hlen) throw DataError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad header: ") + e.what());
    }

    TransformerModel m = init_model(config_from_json(header.at("config")));
    size_t off = 16 + hlen;
    auto params = m.params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw DataError("checkpoint: tensor count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != params[i]->name ||
            t.at("rows").get<int>() != params[i]->value.rows ||
            t.at("cols").get<int>() != params[i]->value.cols)
            throw DataError("checkpoint: tensor directory mismatch at '" + params[i]->name + "'");
        const size_t nbytes = params[i]->value.size() * sizeof(double);
        if (off + nbytes > bytes.size()) throw DataError("checkpoint: truncated tensor data");
        std::memcpy(params[i]->value.a.data(), bytes.data() + off, nbytes);
        off += nbytes;
    }
    return m;
}

inline TransformerModel load_checkpoint(const std::string& path) {
    return load_checkpoint_from_string(read_file(path));
}

}  // namespace sugmine
