// Copyright (c) 2026 the qglab authors
// SPDX-License-Identifier: Apache-2.0
//
// Transformer encoder-decoder with shared parameters: token/positional
// embeddings, self-attention, feed-forward and layer norms are one storage
// used by both stacks; cross-attention (and its norm) is decoder-only. The
// output projection is tied to the token embedding.
//
// forward(src, tgt) returns logits where logits[:, t, :] is the next-token
// distribution after tgt[:, :t]; the decoder input is BOS + tgt shifted
// right, built internally.

#pragma once

#include <string>
#include <utility>

#include "qglab/bpe.h"
#include "qglab/ops.h"

namespace qglab {

struct ModelConfig {
    int num_layers = 2;
    int hidden_size = 64;
    int filter_size = 256;
    int num_heads = 4;
    int vocab_size = 8000;
    int max_src_len = 512;
    int max_tgt_len = 64;

    static ModelConfig preset(const std::string& name) {
        ModelConfig c;
        if (name == "base") {
            c.num_layers = 12;
            c.hidden_size = 768;
            c.filter_size = 3072;
            c.num_heads = 12;
        } else if (name == "large") {
            c.num_layers = 24;
            c.hidden_size = 1024;
            c.filter_size = 4096;
            c.num_heads = 16;
        } else if (name == "tiny") {
            c.num_layers = 2;
            c.hidden_size = 64;
            c.filter_size = 256;
            c.num_heads = 4;
        } else {
            throw std::invalid_argument("unknown model preset '" + name + "'");
        }
        return c;
    }

    void validate() const {
        if (num_layers < 1 || hidden_size < 1 || filter_size < 1 ||
            num_heads < 1 || vocab_size <= Vocabulary::kNumSpecials ||
            max_src_len < 2 || max_tgt_len < 2) {
            throw std::invalid_argument("model config: non-positive dimension");
        }
        if (hidden_size % num_heads != 0) {
            throw std::invalid_argument("model config: hidden_size " +
                                        std::to_string(hidden_size) +
                                        " not divisible by num_heads " +
                                        std::to_string(num_heads));
        }
    }

    int max_pos() const { return std::max(max_src_len, max_tgt_len); }

    bool operator==(const ModelConfig&) const = default;
};

// Parameter names and shapes implied by a config, in canonical order. Also
// serves as the shape audit for presets (no allocation happens here).
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& config);

inline bool is_cross_param(const std::string& name) {
    return name.find(".cross") != std::string::npos;
}

template <class S>
struct LayerParamsT {
    // Shared by encoder and decoder.
    TensorT<S> ln1_gain, ln1_bias;
    TensorT<S> self_wq, self_bq, self_wk, self_bk, self_wv, self_bv;
    TensorT<S> self_wo, self_bo;
    TensorT<S> ln2_gain, ln2_bias;
    TensorT<S> ff_w_in, ff_b_in, ff_w_out, ff_b_out;
    // Decoder-only.
    TensorT<S> cross_ln_gain, cross_ln_bias;
    TensorT<S> cross_wq, cross_bq, cross_wk, cross_bk, cross_wv, cross_bv;
    TensorT<S> cross_wo, cross_bo;
};

template <class S>
struct SeqToSeqParamsT {
    ModelConfig config;
    TensorT<S> tok_emb;  // [vocab, hidden]; doubles as the output projection
    TensorT<S> pos_emb;  // [max_pos, hidden]
    std::vector<LayerParamsT<S>> layers;
    TensorT<S> lnf_gain, lnf_bias;  // final norm, shared by both stacks

    std::vector<std::pair<std::string, TensorT<S>*>> named_params();

    std::int64_t param_count() {
        std::int64_t n = 0;
        for (auto& [name, t] : named_params()) n += t->size();
        return n;
    }

    void enable_grads() {
        for (auto& [name, t] : named_params()) t->enable_grad();
    }

    void zero_grads() {
        for (auto& [name, t] : named_params()) t->zero_grad();
    }
};

using SeqToSeqParams = SeqToSeqParamsT<float>;

inline std::vector<std::pair<std::string, Shape>> param_shapes(
    const ModelConfig& c) {
    const std::int64_t h = c.hidden_size;
    const std::int64_t f = c.filter_size;
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("tok_emb", Shape{c.vocab_size, h});
    out.emplace_back("pos_emb", Shape{c.max_pos(), h});
    for (int l = 0; l < c.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        out.emplace_back(p + "ln1.gain", Shape{h});
        out.emplace_back(p + "ln1.bias", Shape{h});
        for (const char* n : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
            const bool w = n[0] == 'w';
            out.emplace_back(p + "self." + n, w ? Shape{h, h} : Shape{h});
        }
        out.emplace_back(p + "ln2.gain", Shape{h});
        out.emplace_back(p + "ln2.bias", Shape{h});
        out.emplace_back(p + "ff.w_in", Shape{h, f});
        out.emplace_back(p + "ff.b_in", Shape{f});
        out.emplace_back(p + "ff.w_out", Shape{f, h});
        out.emplace_back(p + "ff.b_out", Shape{h});
        out.emplace_back(p + "cross_ln.gain", Shape{h});
        out.emplace_back(p + "cross_ln.bias", Shape{h});
        for (const char* n : {"wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"}) {
            const bool w = n[0] == 'w';
            out.emplace_back(p + "cross." + n, w ? Shape{h, h} : Shape{h});
        }
    }
    out.emplace_back("lnf.gain", Shape{h});
    out.emplace_back("lnf.bias", Shape{h});
    return out;
}

template <class S>
std::vector<std::pair<std::string, TensorT<S>*>> SeqToSeqParamsT<S>::named_params() {
    std::vector<std::pair<std::string, TensorT<S>*>> out;
    out.emplace_back("tok_emb", &tok_emb);
    out.emplace_back("pos_emb", &pos_emb);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lp = layers[l];
        out.emplace_back(p + "ln1.gain", &lp.ln1_gain);
        out.emplace_back(p + "ln1.bias", &lp.ln1_bias);
        out.emplace_back(p + "self.wq", &lp.self_wq);
        out.emplace_back(p + "self.bq", &lp.self_bq);
        out.emplace_back(p + "self.wk", &lp.self_wk);
        out.emplace_back(p + "self.bk", &lp.self_bk);
        out.emplace_back(p + "self.wv", &lp.self_wv);
        out.emplace_back(p + "self.bv", &lp.self_bv);
        out.emplace_back(p + "self.wo", &lp.self_wo);
        out.emplace_back(p + "self.bo", &lp.self_bo);
        out.emplace_back(p + "ln2.gain", &lp.ln2_gain);
        out.emplace_back(p + "ln2.bias", &lp.ln2_bias);
        out.emplace_back(p + "ff.w_in", &lp.ff_w_in);
        out.emplace_back(p + "ff.b_in", &lp.ff_b_in);
        out.emplace_back(p + "ff.w_out", &lp.ff_w_out);
        out.emplace_back(p + "ff.b_out", &lp.ff_b_out);
        out.emplace_back(p + "cross_ln.gain", &lp.cross_ln_gain);
        out.emplace_back(p + "cross_ln.bias", &lp.cross_ln_bias);
        out.emplace_back(p + "cross.wq", &lp.cross_wq);
        out.emplace_back(p + "cross.bq", &lp.cross_bq);
        out.emplace_back(p + "cross.wk", &lp.cross_wk);
        out.emplace_back(p + "cross.bk", &lp.cross_bk);
        out.emplace_back(p + "cross.wv", &lp.cross_wv);
        out.emplace_back(p + "cross.bv", &lp.cross_bv);
        out.emplace_back(p + "cross.wo", &lp.cross_wo);
        out.emplace_back(p + "cross.bo", &lp.cross_bo);
    }
    out.emplace_back("lnf.gain", &lnf_gain);
    out.emplace_back("lnf.bias", &lnf_bias);
    return out;
}

namespace detail {

// Layer norms start at gain 1 / bias 0, biases at 0, weight matrices and
// embeddings from a truncated normal (sigma 0.02, cut at two sigma).
template <class S>
void init_param(const std::string& name, TensorT<S>& t, Rng& rng) {
    const bool is_gain = name.size() >= 5 && name.ends_with(".gain");
    const bool is_norm_bias =
        name.ends_with("ln1.bias") || name.ends_with("ln2.bias") ||
        name.ends_with("cross_ln.bias") || name.ends_with("lnf.bias");
    const bool is_matrix = t.rank() == 2;
    S* d = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        if (is_matrix) {
            d[i] = static_cast<S>(rng.truncated_normal(0.02));
        } else {
            d[i] = is_gain ? S(1) : S(0);
        }
    }
    (void)is_norm_bias;
}

}  // namespace detail

template <class S>
SeqToSeqParamsT<S> init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    SeqToSeqParamsT<S> params;
    params.config = config;
    params.layers.resize(static_cast<std::size_t>(config.num_layers));
    const auto shapes = param_shapes(config);
    auto named = [&params]() { return params.named_params(); };
    // Allocate in canonical order, then fill with a single deterministic
    // stream in the same order.
    {
        auto np = named();
        if (np.size() != shapes.size()) {
            throw std::logic_error("param table size mismatch");
        }
        for (std::size_t i = 0; i < np.size(); ++i) {
            *np[i].second = TensorT<S>(shapes[i].second);
        }
    }
    Rng rng(seed);
    for (auto& [name, t] : params.named_params()) {
        detail::init_param(name, *t, rng);
    }
    return params;
}

// ---------------------------------------------------------------------------
// Forward pass.
// ---------------------------------------------------------------------------

// A padded batch: src and tgt are row-major [batch, len] id matrices padded
// with PAD. tgt rows are the target tokens (no leading BOS).
struct TokenBatch {
    int batch = 0;
    int src_len = 0;
    int tgt_len = 0;
    std::shared_ptr<std::vector<int>> src;
    std::shared_ptr<std::vector<int>> tgt;
};

TokenBatch make_token_batch(const std::vector<std::vector<int>>& srcs,
                            const std::vector<std::vector<int>>& tgts);

namespace detail {

template <class S>
struct AttnRefs {
    const TensorT<S>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
};

template <class S>
TensorT<S> attention(Tape<S>* tape, const AttnRefs<S>& w, const TensorT<S>& q_in,
                     const TensorT<S>& kv_in, int num_heads,
                     std::shared_ptr<std::vector<unsigned char>> mask) {
    const i64 b = q_in.dim(0), tq = q_in.dim(1), h = q_in.dim(2);
    const i64 tk = kv_in.dim(1);
    const i64 hd = h / num_heads;
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

    auto heads = [&](const TensorT<S>& x, i64 t) {
        return ops::transpose_12(tape, x.reshaped({b, t, num_heads, hd}));
    };
    auto q = heads(ops::add(tape, ops::matmul(tape, q_in, *w.wq), *w.bq), tq);
    auto k = heads(ops::add(tape, ops::matmul(tape, kv_in, *w.wk), *w.bk), tk);
    auto v = heads(ops::add(tape, ops::matmul(tape, kv_in, *w.wv), *w.bv), tk);

    auto scores = ops::scale(tape, ops::matmul(tape, q, k, false, true), inv_sqrt);
    auto attn = ops::masked_softmax(tape, scores, std::move(mask));
    auto ctx = ops::transpose_12(tape, ops::matmul(tape, attn, v))
                   .reshaped({b, tq, h});
    return ops::add(tape, ops::matmul(tape, ctx, *w.wo), *w.bo);
}

}  // namespace detail

template <class S>
TensorT<S> forward(Tape<S>* tape, SeqToSeqParamsT<S>& params,
                   const TokenBatch& batch) {
    const ModelConfig& cfg = params.config;
    if (batch.src_len > cfg.max_src_len) {
        throw std::invalid_argument("forward: src length " +
                                    std::to_string(batch.src_len) +
                                    " exceeds max_src_len " +
                                    std::to_string(cfg.max_src_len));
    }
    if (batch.tgt_len > cfg.max_tgt_len) {
        throw std::invalid_argument("forward: tgt length " +
                                    std::to_string(batch.tgt_len) +
                                    " exceeds max_tgt_len " +
                                    std::to_string(cfg.max_tgt_len));
    }
    const i64 b = batch.batch;
    const i64 ts = batch.src_len;
    const i64 tt = batch.tgt_len;
    const int heads = cfg.num_heads;
    const S eps = static_cast<S>(1e-5);

    // Decoder input: BOS then tgt shifted right one position.
    auto dec_in = std::make_shared<std::vector<int>>(
        static_cast<std::size_t>(b * tt));
    for (i64 r = 0; r < b; ++r) {
        (*dec_in)[static_cast<std::size_t>(r * tt)] = Vocabulary::kBos;
        for (i64 t = 1; t < tt; ++t) {
            (*dec_in)[static_cast<std::size_t>(r * tt + t)] =
                (*batch.tgt)[static_cast<std::size_t>(r * tt + t - 1)];
        }
    }

    auto src_pos = std::make_shared<std::vector<int>>(
        static_cast<std::size_t>(b * ts));
    auto tgt_pos = std::make_shared<std::vector<int>>(
        static_cast<std::size_t>(b * tt));
    for (i64 r = 0; r < b; ++r) {
        for (i64 t = 0; t < ts; ++t)
            (*src_pos)[static_cast<std::size_t>(r * ts + t)] = static_cast<int>(t);
        for (i64 t = 0; t < tt; ++t)
            (*tgt_pos)[static_cast<std::size_t>(r * tt + t)] = static_cast<int>(t);
    }

    // Attention masks. Encoder and cross attention admit non-pad source keys;
    // decoder self-attention is causal over non-pad decoder-input keys.
    auto enc_mask = std::make_shared<std::vector<unsigned char>>(
        static_cast<std::size_t>(b * ts * ts));
    auto cross_mask = std::make_shared<std::vector<unsigned char>>(
        static_cast<std::size_t>(b * tt * ts));
    auto dec_mask = std::make_shared<std::vector<unsigned char>>(
        static_cast<std::size_t>(b * tt * tt));
    for (i64 r = 0; r < b; ++r) {
        for (i64 j = 0; j < ts; ++j) {
            const unsigned char ok =
                (*batch.src)[static_cast<std::size_t>(r * ts + j)] !=
                        Vocabulary::kPad
                    ? 1
                    : 0;
            for (i64 i = 0; i < ts; ++i) {
                (*enc_mask)[static_cast<std::size_t>((r * ts + i) * ts + j)] = ok;
            }
            for (i64 i = 0; i < tt; ++i) {
                (*cross_mask)[static_cast<std::size_t>((r * tt + i) * ts + j)] = ok;
            }
        }
        for (i64 i = 0; i < tt; ++i) {
            for (i64 j = 0; j < tt; ++j) {
                const bool ok =
                    j <= i && (*dec_in)[static_cast<std::size_t>(r * tt + j)] !=
                                  Vocabulary::kPad;
                (*dec_mask)[static_cast<std::size_t>((r * tt + i) * tt + j)] =
                    ok ? 1 : 0;
            }
        }
    }

    // Encoder stack.
    auto x = ops::add(tape,
                      ops::embedding(tape, params.tok_emb, batch.src, {b, ts}),
                      ops::embedding(tape, params.pos_emb, src_pos, {b, ts}));
    for (auto& lp : params.layers) {
        detail::AttnRefs<S> self{&lp.self_wq, &lp.self_bq, &lp.self_wk,
                                 &lp.self_bk, &lp.self_wv, &lp.self_bv,
                                 &lp.self_wo, &lp.self_bo};
        auto h1 = ops::layer_norm(tape, x, lp.ln1_gain, lp.ln1_bias, eps);
        x = ops::add(tape, x, detail::attention(tape, self, h1, h1, heads, enc_mask));
        auto h2 = ops::layer_norm(tape, x, lp.ln2_gain, lp.ln2_bias, eps);
        auto ff = ops::matmul(
            tape,
            ops::gelu(tape, ops::add(tape, ops::matmul(tape, h2, lp.ff_w_in),
                                     lp.ff_b_in)),
            lp.ff_w_out);
        x = ops::add(tape, x, ops::add(tape, ff, lp.ff_b_out));
    }
    auto enc_out = ops::layer_norm(tape, x, params.lnf_gain, params.lnf_bias, eps);

    // Decoder stack over the same shared blocks plus cross attention.
    auto y = ops::add(tape,
                      ops::embedding(tape, params.tok_emb, dec_in, {b, tt}),
                      ops::embedding(tape, params.pos_emb, tgt_pos, {b, tt}));
    for (auto& lp : params.layers) {
        detail::AttnRefs<S> self{&lp.self_wq, &lp.self_bq, &lp.self_wk,
                                 &lp.self_bk, &lp.self_wv, &lp.self_bv,
                                 &lp.self_wo, &lp.self_bo};
        detail::AttnRefs<S> cross{&lp.cross_wq, &lp.cross_bq, &lp.cross_wk,
                                  &lp.cross_bk, &lp.cross_wv, &lp.cross_bv,
                                  &lp.cross_wo, &lp.cross_bo};
        auto h1 = ops::layer_norm(tape, y, lp.ln1_gain, lp.ln1_bias, eps);
        y = ops::add(tape, y, detail::attention(tape, self, h1, h1, heads, dec_mask));
        auto hc = ops::layer_norm(tape, y, lp.cross_ln_gain, lp.cross_ln_bias, eps);
        y = ops::add(tape, y,
                     detail::attention(tape, cross, hc, enc_out, heads, cross_mask));
        auto h2 = ops::layer_norm(tape, y, lp.ln2_gain, lp.ln2_bias, eps);
        auto ff = ops::matmul(
            tape,
            ops::gelu(tape, ops::add(tape, ops::matmul(tape, h2, lp.ff_w_in),
                                     lp.ff_b_in)),
            lp.ff_w_out);
        y = ops::add(tape, y, ops::add(tape, ff, lp.ff_b_out));
    }
    auto dec_out = ops::layer_norm(tape, y, params.lnf_gain, params.lnf_bias, eps);

    // Output projection tied to the token embedding.
    return ops::matmul(tape, dec_out, params.tok_emb, false, true);
}

// Teacher-forced mean cross-entropy of a batch (PAD targets carry no weight).
template <class S>
TensorT<S> teacher_forced_loss(Tape<S>* tape, SeqToSeqParamsT<S>& params,
                               const TokenBatch& batch) {
    auto logits = forward(tape, params, batch);
    return ops::cross_entropy(tape, logits, batch.tgt, Vocabulary::kPad);
}

// ---------------------------------------------------------------------------
// Checkpoints (f32): magic "QGPT1\0", a length-prefixed JSON config block,
// then named parameter records. See save_checkpoint in model.cpp.
// ---------------------------------------------------------------------------

void save_checkpoint(SeqToSeqParams& params, const std::string& path);
std::pair<SeqToSeqParams, ModelConfig> load_checkpoint(const std::string& path);

// Loads shared blocks and embeddings from the checkpoint; cross-attention
// parameters (projections and their norm) are freshly initialized from
// `seed`. Shape mismatches raise CheckpointError naming the parameter.
void warm_start(SeqToSeqParams& params, const std::string& checkpoint_path,
                std::uint64_t seed);

}  // namespace qglab
