#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rim/rim_loop.hpp"
#include "rim/tasks.hpp"

namespace rim {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    int eval_cadence = 1;          // epochs between eval passes
    int eval_batch = 128;
    double max_seconds = 0;        // 0 = no wall-clock budget
    double lr_final_frac = 1.0;    // lr anneals linearly to lr * frac over the budget
    bool supervise_all_outer = false;

    void validate() const {
        check(epochs >= 1 && batch_size >= 1 && eval_cadence >= 1, "TrainConfig: counts must be >= 1");
        check(learning_rate >= 0 && weight_decay >= 0 && clip_norm > 0,
              "TrainConfig: rates must be non-negative, clip_norm positive");
        check(lr_final_frac > 0 && lr_final_frac <= 1.0,
              "TrainConfig: lr_final_frac must lie in (0, 1]");
    }
};

struct EvalResult {
    double exact_match = 0;
    double per_token_accuracy = 0;
};

// Adam with decoupled weight decay and global-norm gradient clipping.
template <typename S>
class AdamW {
public:
    AdamW(double lr, double weight_decay, double clip_norm, double beta1 = 0.9,
          double beta2 = 0.95, double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), clip_(clip_norm), b1_(beta1), b2_(beta2), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }

    void step(ParamStore<S>& store) {
        ++t_;
        double sq = 0;
        for (auto& [name, p] : store)
            for (S g : p.grad()) sq += double(g) * double(g);
        const double norm = std::sqrt(sq);
        const double scale = (norm > clip_) ? clip_ / (norm + 1e-12) : 1.0;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (auto& [name, p] : store) {
            if (p.grad().empty()) continue;
            auto& mo = store.moments(name);
            for (size_t i = 0; i < p.values().size(); ++i) {
                const double g = double(p.grad()[i]) * scale;
                mo.m[i] = static_cast<S>(b1_ * double(mo.m[i]) + (1 - b1_) * g);
                mo.v[i] = static_cast<S>(b2_ * double(mo.v[i]) + (1 - b2_) * g * g);
                const double mhat = double(mo.m[i]) / bc1;
                const double vhat = double(mo.v[i]) / bc2;
                double x = double(p.values()[i]);
                x -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * x);
                p.values()[i] = static_cast<S>(x);
            }
        }
    }

private:
    double lr_, wd_, clip_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

template <typename S>
struct SegmentCarry {
    Tensor<S> y, z;  // detached
    bool valid = false;
};

template <typename S>
struct SegmentResult {
    Tensor<S> loss;
    SegmentCarry<S> carry;
};

// One deep-supervision segment: a full (T inner, N outer) pass from the
// carried states, cross-entropy on the decoded final solution, carry returned
// with gradients severed.
template <typename S>
SegmentResult<S> supervised_segment(const RimModel<S>& model, const std::vector<int>& x_tokens,
                                    const std::vector<int>& targets, int batch,
                                    const SegmentCarry<S>& carry, bool supervise_all_outer = false) {
    std::optional<Tensor<S>> y0, z0;
    if (carry.valid) {
        y0 = carry.y;
        z0 = carry.z;
    }
    RunResult<S> run =
        model.run(x_tokens, batch, y0, z0, /*record_trace=*/supervise_all_outer);
    Tensor<S> loss;
    if (supervise_all_outer) {
        const auto& sols = run.trace.solutions;  // y(0)..y(N)
        std::vector<Tensor<S>> losses;
        for (size_t i = 1; i < sols.size(); ++i)
            losses.push_back(cross_entropy(model.io().logits(sols[i]), targets));
        loss = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
        loss = scale(loss, S(1) / static_cast<S>(losses.size()));
    } else {
        loss = cross_entropy(model.io().logits(run.y_final), targets);
    }
    SegmentResult<S> out;
    out.loss = loss;
    out.carry.y = run.y_final.detach();
    out.carry.z = run.z_final.detach();
    out.carry.valid = true;
    return out;
}

// Exact match over full decoded sequences; the forward pass mirrors training
// (all supervision segments, carried states).
template <typename S>
EvalResult evaluate(const RimModel<S>& model, const std::vector<PuzzleInstance>& data,
                    int eval_batch = 128) {
    check(!data.empty(), "evaluate: empty dataset");
    check(data.front().vocab == model.backbone_config().vocab,
          "evaluate: dataset vocabulary does not match model");
    NoGradGuard ng;
    const int seq = model.config().seq_len;
    const int segments = model.config().supervision_segments;
    std::int64_t exact = 0, token_hits = 0, tokens = 0;
    for (size_t off = 0; off < data.size(); off += static_cast<size_t>(eval_batch)) {
        const int batch = static_cast<int>(std::min(data.size() - off, static_cast<size_t>(eval_batch)));
        std::vector<int> x_tokens, targets;
        for (int b = 0; b < batch; ++b) {
            const auto& inst = data[off + static_cast<size_t>(b)];
            x_tokens.insert(x_tokens.end(), inst.input.begin(), inst.input.end());
            targets.insert(targets.end(), inst.target.begin(), inst.target.end());
        }
        SegmentCarry<S> carry;
        std::vector<int> decoded;
        for (int s = 0; s < segments; ++s) {
            std::optional<Tensor<S>> y0, z0;
            if (carry.valid) {
                y0 = carry.y;
                z0 = carry.z;
            }
            RunResult<S> run = model.run(x_tokens, batch, y0, z0);
            carry.y = run.y_final;
            carry.z = run.z_final;
            carry.valid = true;
            decoded = std::move(run.decoded);
        }
        for (int b = 0; b < batch; ++b) {
            bool all = true;
            for (int t = 0; t < seq; ++t) {
                const bool hit = decoded[static_cast<size_t>(b * seq + t)] ==
                                 targets[static_cast<size_t>(b * seq + t)];
                token_hits += hit;
                all = all && hit;
            }
            exact += all;
            tokens += seq;
        }
    }
    EvalResult r;
    r.exact_match = static_cast<double>(exact) / static_cast<double>(data.size());
    r.per_token_accuracy = static_cast<double>(token_hits) / static_cast<double>(tokens);
    return r;
}

struct TrainLogRow {
    int epoch, segment;
    double loss, exact_match, wall_seconds;
};

struct TrainOutcome {
    EvalResult final_eval;
    std::vector<TrainLogRow> log;
    int skipped_batches = 0;
};

// Deep-supervision training: per batch, S segments each followed by one
// optimizer step; metrics appended per eval cadence.
template <typename S>
TrainOutcome train(RimModel<S>& model, const PuzzleDataset& data, const TrainConfig& cfg,
                   const std::string& metrics_csv = "", const std::string& checkpoint_path = "") {
    cfg.validate();
    check(!data.train.empty(), "train: empty training set");
    const int seq = model.config().seq_len;
    const int segments = model.config().supervision_segments;
    AdamW<S> opt(cfg.learning_rate, cfg.weight_decay, cfg.clip_norm);
    auto rng = stream(cfg.seed, "train-shuffle");
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    std::ofstream csv;
    if (!metrics_csv.empty()) {
        csv.open(metrics_csv);
        check(csv.good(), "cannot open metrics csv: " + metrics_csv);
        csv << "epoch,segment,loss,exact_match,wall_seconds\n";
    }

    TrainOutcome outcome;
    std::vector<size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    bool out_of_budget = false;
    for (int epoch = 1; epoch <= cfg.epochs && !out_of_budget; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        int loss_count = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(cfg.batch_size)) {
            if (cfg.max_seconds > 0 && elapsed() > cfg.max_seconds) {
                out_of_budget = true;
                break;
            }
            const int batch = static_cast<int>(
                std::min(order.size() - off, static_cast<size_t>(cfg.batch_size)));
            std::vector<int> x_tokens, targets;
            for (int b = 0; b < batch; ++b) {
                const auto& inst = data.train[order[off + static_cast<size_t>(b)]];
                x_tokens.insert(x_tokens.end(), inst.input.begin(), inst.input.end());
                targets.insert(targets.end(), inst.target.begin(), inst.target.end());
            }
            // linear anneal over the budget tames late loss spikes; wall-clock
            // budgets anneal by elapsed time, fixed-epoch runs by progress
            if (cfg.lr_final_frac < 1.0) {
                const double progress =
                    cfg.max_seconds > 0
                        ? std::min(1.0, elapsed() / cfg.max_seconds)
                        : (static_cast<double>(epoch - 1) +
                           static_cast<double>(off) / static_cast<double>(order.size())) /
                              static_cast<double>(cfg.epochs);
                opt.set_lr(cfg.learning_rate * (1.0 - (1.0 - cfg.lr_final_frac) * progress));
            }
            SegmentCarry<S> carry;
            try {
                for (int s = 0; s < segments; ++s) {
                    SegmentResult<S> seg = supervised_segment(model, x_tokens, targets, batch,
                                                              carry, cfg.supervise_all_outer);
                    const double l = static_cast<double>(seg.loss.item());
                    if (!std::isfinite(l)) throw RimRuntimeError(-1, s);
                    model.params().zero_grad();
                    backward(seg.loss);
                    opt.step(model.params());
                    carry = seg.carry;
                    loss_sum += l;
                    ++loss_count;
                }
            } catch (const RimRuntimeError&) {
                ++outcome.skipped_batches;  // batch skipped, training continues
            }
            (void)seq;
        }
        if (epoch % cfg.eval_cadence == 0 || epoch == cfg.epochs || out_of_budget) {
            EvalResult ev;
            try {
                ev = evaluate(model, data.test, cfg.eval_batch);
            } catch (const RimRuntimeError&) {
                // model currently non-finite; metrics stay NaN for this row
                ev.exact_match = std::nan("");
                ev.per_token_accuracy = std::nan("");
            }
            TrainLogRow row{epoch, segments, loss_count ? loss_sum / loss_count : 0.0,
                            ev.exact_match, elapsed()};
            outcome.log.push_back(row);
            outcome.final_eval = ev;
            if (csv.is_open())
                csv << row.epoch << ',' << row.segment << ',' << row.loss << ',' << row.exact_match
                    << ',' << row.wall_seconds << '\n'
                    << std::flush;
        }
    }
    if (!checkpoint_path.empty()) model.params().save(checkpoint_path);
    return outcome;
}

}  // namespace rim
