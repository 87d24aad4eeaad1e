#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rim/param_store.hpp"
#include "rim/tensor.hpp"

namespace rim {

enum class BackboneKind { mlp_mixer, attention };

struct BackboneConfig {
    BackboneKind kind = BackboneKind::mlp_mixer;
    int depth = 2;
    int d = 128;
    int vocab = 5;
    int seq_len = 16;
    int heads = 4;
    int mlp_expand = 2;
    bool positional = true;
};

// Affine map over the last axis.
template <typename S>
class Linear {
public:
    Linear() = default;
    Linear(ParamStore<S>& store, const std::string& prefix, int in, int out,
           std::mt19937_64& rng, bool bias = true) {
        w_ = &store.create_normal(prefix + ".w", {in, out}, rng, 1.0 / std::sqrt(in));
        if (bias) b_ = &store.create_zeros(prefix + ".b", {out});
    }

    // Zero-init weight, used for final residual projections.
    static Linear zeroed(ParamStore<S>& store, const std::string& prefix, int in, int out) {
        Linear l;
        l.w_ = &store.create_zeros(prefix + ".w", {in, out});
        return l;
    }

    Tensor<S> operator()(const Tensor<S>& x) const {
        Tensor<S> y = matmul(x, *w_);
        if (b_) y = add(y, *b_);
        return y;
    }

    Tensor<S>& weight() { return *w_; }
    Tensor<S>* bias() { return b_; }

private:
    Tensor<S>* w_ = nullptr;
    Tensor<S>* b_ = nullptr;
};

template <typename S>
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<S>& store, const std::string& prefix, int d, int heads,
                       std::mt19937_64& rng, bool zero_out_proj = false)
        : d_(d), heads_(heads) {
        check(d % heads == 0, "attention: width not divisible by head count");
        wq_ = Linear<S>(store, prefix + ".q", d, d, rng);
        wk_ = Linear<S>(store, prefix + ".k", d, d, rng);
        wv_ = Linear<S>(store, prefix + ".v", d, d, rng);
        wo_ = zero_out_proj ? Linear<S>::zeroed(store, prefix + ".o", d, d)
                            : Linear<S>(store, prefix + ".o", d, d, rng, /*bias=*/false);
    }

    // Full self-attention over the sequence axis of h [.., L, d]; no residual.
    Tensor<S> operator()(const Tensor<S>& h) const { return (*this)(h, h); }

    // Cross-attention: queries from q_in [.., Lq, d], keys and values from
    // kv_in [.., Lk, d]. Row i of the output equals row i of self-attention
    // over a sequence whose first Lq positions are q_in, so callers that only
    // need a query slice can skip the rest of the score matrix.
    Tensor<S> operator()(const Tensor<S>& q_in, const Tensor<S>& kv_in) const {
        Tensor<S> q = wq_(q_in), k = wk_(kv_in), v = wv_(kv_in);
        const int dh = d_ / heads_;
        const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
        std::vector<Tensor<S>> outs;
        outs.reserve(static_cast<size_t>(heads_));
        for (int hh = 0; hh < heads_; ++hh) {
            Tensor<S> qh = slice_last(q, hh * dh, dh);
            Tensor<S> kh = slice_last(k, hh * dh, dh);
            Tensor<S> vh = slice_last(v, hh * dh, dh);
            Tensor<S> scores = scale(matmul(qh, transpose_last(kh)), inv_sqrt);
            outs.push_back(matmul(softmax_last(scores), vh));
        }
        return wo_(concat_last(outs));
    }

private:
    int d_ = 0, heads_ = 0;
    Linear<S> wq_, wk_, wv_, wo_;
};

// Two-layer SiLU MLP over channels; final projection has no bias so zeroing
// it makes the sublayer vanish.
template <typename S>
class ChannelMlp {
public:
    ChannelMlp() = default;
    ChannelMlp(ParamStore<S>& store, const std::string& prefix, int d, int expand,
               std::mt19937_64& rng, bool zero_down = false) {
        up_ = Linear<S>(store, prefix + ".up", d, d * expand, rng);
        down_ = zero_down ? Linear<S>::zeroed(store, prefix + ".down", d * expand, d)
                          : Linear<S>(store, prefix + ".down", d * expand, d, rng, /*bias=*/false);
    }

    Tensor<S> operator()(const Tensor<S>& x) const { return down_(silu(up_(x))); }

private:
    Linear<S> up_, down_;
};

template <typename S>
class Block {
public:
    Block(ParamStore<S>& store, const std::string& prefix, const BackboneConfig& cfg,
          std::mt19937_64& rng)
        : kind_(cfg.kind) {
        norm1_ = &store.create(prefix + ".norm1", {cfg.d}, std::vector<S>(cfg.d, S(1)));
        norm2_ = &store.create(prefix + ".norm2", {cfg.d}, std::vector<S>(cfg.d, S(1)));
        if (kind_ == BackboneKind::attention) {
            attn_ = MultiHeadAttention<S>(store, prefix + ".attn", cfg.d, cfg.heads, rng);
        } else {
            tok_up_ = Linear<S>(store, prefix + ".tok_up", cfg.seq_len, cfg.seq_len, rng);
            tok_down_ =
                Linear<S>(store, prefix + ".tok_down", cfg.seq_len, cfg.seq_len, rng, false);
        }
        mlp_ = ChannelMlp<S>(store, prefix + ".mlp", cfg.d, cfg.mlp_expand, rng);
    }

    Tensor<S> operator()(const Tensor<S>& h) const {
        Tensor<S> x = h;
        if (kind_ == BackboneKind::attention) {
            x = add(x, attn_(rmsnorm(x, *norm1_)));
        } else {
            // token mixing: act on the position axis via transpose
            Tensor<S> t = transpose_last(rmsnorm(x, *norm1_));
            Tensor<S> mixed = transpose_last(tok_down_(silu(tok_up_(t))));
            x = add(x, mixed);
        }
        return add(x, mlp_(rmsnorm(x, *norm2_)));
    }

private:
    BackboneKind kind_;
    Tensor<S>* norm1_ = nullptr;
    Tensor<S>* norm2_ = nullptr;
    MultiHeadAttention<S> attn_;
    Linear<S> tok_up_, tok_down_;
    ChannelMlp<S> mlp_;
};

// Embedding, positional term, output head, and the learned initial solution /
// state vectors. Shared between Solver and Generator roles.
template <typename S>
class IoHead {
public:
    IoHead(ParamStore<S>& store, const std::string& prefix, const BackboneConfig& cfg,
           std::mt19937_64& rng)
        : cfg_(cfg) {
        table_ = &store.create_normal(prefix + ".embed", {cfg.vocab, cfg.d}, rng, 0.02);
        pos_ = &store.create_normal(prefix + ".pos", {cfg.seq_len, cfg.d}, rng, 0.02);
        head_ = Linear<S>(store, prefix + ".head", cfg.d, cfg.vocab, rng);
        y0_ = &store.create_normal(prefix + ".y0", {cfg.d}, rng, 0.02);
        z0_ = &store.create_normal(prefix + ".z0", {cfg.d}, rng, 0.02);
    }

    // tokens: batch * seq_len ints, row-major.
    Tensor<S> embed(const std::vector<int>& tokens, int batch) const {
        check(static_cast<int>(tokens.size()) == batch * cfg_.seq_len,
              "embed: token count does not match batch * seq_len");
        Tensor<S> e = embedding(*table_, tokens, Shape{batch, cfg_.seq_len});
        if (cfg_.positional) e = add(e, *pos_);
        return e;
    }

    Tensor<S> initial_solution(int batch) const { return broadcast(*y0_, batch); }
    Tensor<S> initial_state(int batch) const { return broadcast(*z0_, batch); }

    Tensor<S> logits(const Tensor<S>& y) const { return head_(y); }

    // Per-token argmax; exact ties break toward the lowest token index.
    std::vector<int> decode(const Tensor<S>& y) const {
        NoGradGuard ng;
        Tensor<S> l = logits(y);
        const int v = cfg_.vocab;
        const std::int64_t rows = numel(l.shape()) / v;
        std::vector<int> out(static_cast<size_t>(rows));
        for (std::int64_t r = 0; r < rows; ++r) {
            const S* x = l.values().data() + r * v;
            int best = 0;
            for (int i = 1; i < v; ++i)
                if (x[i] > x[best]) best = i;
            out[static_cast<size_t>(r)] = best;
        }
        return out;
    }

    const BackboneConfig& config() const { return cfg_; }

private:
    Tensor<S> broadcast(Tensor<S>& vec, int batch) const {
        return add(Tensor<S>::zeros({batch, cfg_.seq_len, cfg_.d}), vec);
    }

    BackboneConfig cfg_;
    Tensor<S>* table_ = nullptr;
    Tensor<S>* pos_ = nullptr;
    Linear<S> head_;
    Tensor<S>* y0_ = nullptr;
    Tensor<S>* z0_ = nullptr;
};

// Residual block stack; inputs are fused by summation so the Solver call
// f(z, y, x) and the Generator call f(y, z) share one signature.
template <typename S>
class Backbone {
public:
    Backbone(ParamStore<S>& store, const std::string& prefix, const BackboneConfig& cfg,
             std::mt19937_64& rng) {
        for (int i = 0; i < cfg.depth; ++i)
            blocks_.emplace_back(store, prefix + ".block" + std::to_string(i), cfg, rng);
    }

    Tensor<S> forward(const Tensor<S>& a, const Tensor<S>& b, const Tensor<S>* c = nullptr) const {
        check(a.all_finite() && b.all_finite() && (!c || c->all_finite()),
              "backbone: non-finite input");
        Tensor<S> h = add(a, b);
        if (c) h = add(h, *c);
        for (const auto& block : blocks_) h = block(h);
        return h;
    }

private:
    std::vector<Block<S>> blocks_;
};

}  // namespace rim
