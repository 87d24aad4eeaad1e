#pragma once

#include <cmath>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rim/backbones.hpp"
#include "rim/config.hpp"
#include "rim/param_store.hpp"
#include "rim/tensor.hpp"

namespace rim {

// Free-function forms of the simple reweighting rules; the classes below wrap
// these with per-run history.

template <typename S>
Tensor<S> identity_reweight(const Tensor<S>& candidate, const Tensor<S>& prev) {
    check(candidate.shape() == prev.shape(), "identity_reweight: shape mismatch " +
                                                 shape_str(candidate.shape()) + " vs " +
                                                 shape_str(prev.shape()));
    return candidate;
}

// alpha may be a scalar tensor or match candidate's shape elementwise.
// Written as prev + alpha * (candidate - prev), one algebraic form of the
// convex blend that broadcasts for both alpha shapes.
template <typename S>
Tensor<S> ema_reweight(const Tensor<S>& candidate, const Tensor<S>& prev, const Tensor<S>& alpha) {
    return add(prev, mul(sub(candidate, prev), alpha));
}

template <typename S>
Tensor<S> ema_reweight(const Tensor<S>& candidate, const Tensor<S>& prev, S alpha) {
    return ema_reweight(candidate, prev, Tensor<S>::filled({1}, alpha));
}

// Per-stream reweighter: holds parameter pointers plus a most-recent-first
// history ring buffer of accepted values (capacity lookback+1).
template <typename S>
class Reweighter {
public:
    virtual ~Reweighter() = default;

    void reset(const Tensor<S>& initial) {
        history_.clear();
        history_.push_front(initial);
    }

    Tensor<S> accept(const Tensor<S>& candidate) {
        check(!history_.empty(), "reweighter: history not seeded; call reset first");
        Tensor<S> accepted = combine(candidate);
        history_.push_front(accepted);
        while (static_cast<int>(history_.size()) > capacity()) history_.pop_back();
        return accepted;
    }

    const Tensor<S>& prev() const { return history_.front(); }
    const std::deque<Tensor<S>>& history() const { return history_; }

    // Mean acceptance coefficient of the last combine, for trace dumps.
    // NaN when the kind has no such notion.
    virtual double last_stat() const { return std::nan(""); }

protected:
    virtual Tensor<S> combine(const Tensor<S>& candidate) = 0;
    virtual int capacity() const { return 1; }

    std::deque<Tensor<S>> history_;
};

template <typename S>
class IdentityReweighter final : public Reweighter<S> {
protected:
    Tensor<S> combine(const Tensor<S>& candidate) override {
        return identity_reweight(candidate, this->prev());
    }
};

template <typename S>
class EmaFixedReweighter final : public Reweighter<S> {
public:
    explicit EmaFixedReweighter(S alpha) : alpha_(alpha) {
        check(alpha >= 0 && alpha <= 1, "ema_fixed: alpha outside [0,1]");
    }

    double last_stat() const override { return static_cast<double>(alpha_); }

protected:
    Tensor<S> combine(const Tensor<S>& candidate) override {
        return ema_reweight(candidate, this->prev(), alpha_);
    }

private:
    S alpha_;
};

// alpha = sigmoid(theta); theta initialized so alpha starts near 0.9 and the
// update begins close to plain candidate acceptance.
template <typename S>
class EmaLearnableReweighter final : public Reweighter<S> {
public:
    EmaLearnableReweighter(ParamStore<S>& store, const std::string& name) {
        theta_ = store.contains(name) ? &store.at(name)
                                      : &store.create(name, {1}, std::vector<S>{S(2.2)});
    }

    S alpha_value() const { return S(1) / (S(1) + std::exp(-theta_->values()[0])); }

    double last_stat() const override { return static_cast<double>(alpha_value()); }

protected:
    Tensor<S> combine(const Tensor<S>& candidate) override {
        return ema_reweight(candidate, this->prev(), sigmoid(*theta_));
    }

private:
    Tensor<S>* theta_ = nullptr;
};

// Input-dependent gating: alpha = sigmoid(LinLayer(candidate)), one value per
// token per channel, conditioned on the candidate only.
template <typename S>
class EmaGatedReweighter final : public Reweighter<S> {
public:
    EmaGatedReweighter(ParamStore<S>& store, const std::string& prefix, int d,
                       std::mt19937_64& rng) {
        gate_ = Linear<S>(store, prefix + ".gate", d, d, rng);
        // positive bias: start near candidate acceptance
        auto& b = store.at(prefix + ".gate.b");
        std::fill(b.values().begin(), b.values().end(), S(2.0));
    }

    Tensor<S> gate_alpha(const Tensor<S>& candidate) const { return sigmoid(gate_(candidate)); }

    double last_stat() const override { return last_mean_; }

protected:
    Tensor<S> combine(const Tensor<S>& candidate) override {
        Tensor<S> alpha = gate_alpha(candidate);
        double s = 0;
        for (S v : alpha.values()) s += static_cast<double>(v);
        last_mean_ = s / static_cast<double>(alpha.size());
        return ema_reweight(candidate, this->prev(), alpha);
    }

private:
    Linear<S> gate_;
    double last_mean_ = std::nan("");
};

// k-lookback transformer reweighter: self-attention over the concatenated
// (candidate, history...) sequence with learned per-slot recency encodings,
// then MLP(Norm(A')) + A' at the candidate positions. Attention out-projection
// and the MLP down-projection are zero-initialized, so the reweighter starts
// as the identity on the candidate.
template <typename S>
class LookbackReweighter final : public Reweighter<S> {
public:
    LookbackReweighter(ParamStore<S>& store, const std::string& prefix, int d, int lookback,
                       std::mt19937_64& rng, int heads = 4)
        : lookback_(lookback) {
        attn_ = MultiHeadAttention<S>(store, prefix + ".attn", d, heads, rng, /*zero_out_proj=*/true);
        mlp_ = ChannelMlp<S>(store, prefix + ".mlp", d, 4, rng, /*zero_down=*/true);
        norm_attn_ = &store.create(prefix + ".norm_attn", {d}, std::vector<S>(d, S(1)));
        norm_mlp_ = &store.create(prefix + ".norm_mlp", {d}, std::vector<S>(d, S(1)));
        recency_ = &store.create_normal(prefix + ".recency", {lookback + 2, d}, rng, 0.02);
    }

protected:
    int capacity() const override { return lookback_ + 1; }

    Tensor<S> combine(const Tensor<S>& candidate) override {
        const int seq = candidate.dim(candidate.rank() - 2);
        const int d = candidate.dim(candidate.rank() - 1);
        std::vector<Tensor<S>> slots;
        slots.push_back(add(candidate, slice_row(*recency_, 0, d)));
        int slot = 1;
        for (const Tensor<S>& h : this->history_) {
            slots.push_back(add(h, slice_row(*recency_, slot, d)));
            ++slot;
        }
        // rmsnorm is per-position, so querying only the candidate slot gives
        // exactly the candidate rows of full self-attention at (k+1)x less cost
        Tensor<S> hn = rmsnorm(concat_seq(slots), *norm_attn_);
        Tensor<S> attn_out = attn_(slice_seq(hn, 0, seq), hn);
        Tensor<S> a_prime = add(candidate, attn_out);
        return add(mlp_(rmsnorm(a_prime, *norm_mlp_)), a_prime);
    }

private:
    // one recency row, shaped [d] so it suffix-broadcasts over [.., s, d]
    static Tensor<S> slice_row(Tensor<S>& table, int row, int d) {
        return reshape(slice_seq(table, row, 1), {d});
    }

    int lookback_;
    MultiHeadAttention<S> attn_;
    ChannelMlp<S> mlp_;
    Tensor<S>* norm_attn_ = nullptr;
    Tensor<S>* norm_mlp_ = nullptr;
    Tensor<S>* recency_ = nullptr;
};

// Builds the (L, H) reweighter pair for a config; scope flags replace one
// stream with the identity.
template <typename S>
struct ReweighterPair {
    std::unique_ptr<Reweighter<S>> solver;     // L stream
    std::unique_ptr<Reweighter<S>> generator;  // H stream
};

template <typename S>
ReweighterPair<S> make_reweighters(const RimConfig& cfg, ParamStore<S>& store,
                                   std::mt19937_64& rng) {
    auto make_stream = [&](const std::string& stream, double alpha) -> std::unique_ptr<Reweighter<S>> {
        switch (cfg.reweighter_kind) {
            case ReweighterKind::identity:
                return std::make_unique<IdentityReweighter<S>>();
            case ReweighterKind::ema_fixed:
                return std::make_unique<EmaFixedReweighter<S>>(static_cast<S>(alpha));
            case ReweighterKind::ema_learnable_scalar:
                return std::make_unique<EmaLearnableReweighter<S>>(store, "rw." + stream + ".theta");
            case ReweighterKind::ema_gated_vector:
                return std::make_unique<EmaGatedReweighter<S>>(store, "rw." + stream, cfg.d, rng);
            case ReweighterKind::transformer_lookback:
                return std::make_unique<LookbackReweighter<S>>(store, "rw." + stream, cfg.d,
                                                               cfg.lookback, rng);
        }
        throw std::logic_error("unreachable");
    };
    ReweighterPair<S> pair;
    pair.solver = cfg.reweighter_scope == ReweighterScope::generator_only
                      ? std::make_unique<IdentityReweighter<S>>()
                      : make_stream("L", cfg.alpha_L);
    pair.generator = cfg.reweighter_scope == ReweighterScope::solver_only
                         ? std::make_unique<IdentityReweighter<S>>()
                         : make_stream("H", cfg.alpha_H);
    return pair;
}

}  // namespace rim
