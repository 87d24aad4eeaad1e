#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rim/backbones.hpp"
#include "rim/config.hpp"
#include "rim/param_store.hpp"
#include "rim/reweighters.hpp"
#include "rim/rng.hpp"
#include "rim/tensor.hpp"

namespace rim {

struct RimRuntimeError : std::runtime_error {
    int outer, inner;
    RimRuntimeError(int i, int j)
        : std::runtime_error("non-finite value at outer step " + std::to_string(i) +
                             ", inner step " + std::to_string(j)),
          outer(i),
          inner(j) {}
};

// Full per-run record: problem embedding, accepted solutions y(0..N), and per
// outer step the accepted states and every candidate.
template <typename S>
struct LatentTrace {
    Tensor<S> x;
    std::vector<Tensor<S>> solutions;                     // y(0)..y(N)
    std::vector<Tensor<S>> candidate_solutions;           // y~(1)..y~(N)
    std::vector<std::vector<Tensor<S>>> states;           // [outer][0..T], states[i][0] = carry-in
    std::vector<std::vector<Tensor<S>>> candidate_states; // [outer][1..T]
    std::vector<std::vector<double>> gate_means;          // [outer][T+1], last entry = H stream

    int num_candidate_states() const {
        int n = 0;
        for (const auto& v : candidate_states) n += static_cast<int>(v.size());
        return n;
    }
};

template <typename S>
struct RunResult {
    Tensor<S> y_final;  // embedded solution, graph-attached
    Tensor<S> z_final;
    LatentTrace<S> trace;
    std::vector<int> decoded;
};

template <typename S>
Tensor<S> solver_step(const Tensor<S>& z_prev, const Tensor<S>& y_cur, const Tensor<S>& x,
                      const Backbone<S>& solver) {
    return solver.forward(z_prev, y_cur, &x);
}

// The Generator never sees x.
template <typename S>
Tensor<S> generator_step(const Tensor<S>& y_prev, const Tensor<S>& z_last,
                         const Backbone<S>& generator) {
    return generator.forward(y_prev, z_last);
}

// One machine: embedding/decoding head, shared or decoupled backbones, and
// the reweighter pair. Owns its parameters. Run state (reweighter history) is
// per-run, so a model instance executes one run at a time.
template <typename S>
class RimModel {
public:
    RimModel(const RimConfig& cfg, const BackboneConfig& bcfg, std::uint64_t seed)
        : cfg_(cfg), bcfg_(bcfg) {
        cfg_.validate();
        check(bcfg_.d == cfg_.d && bcfg_.seq_len == cfg_.seq_len,
              "backbone config width/seq_len must match RimConfig");
        auto rng = stream(seed, "model-init");
        io_ = std::make_unique<IoHead<S>>(store_, "io", bcfg_, rng);
        solver_ = std::make_unique<Backbone<S>>(store_, "f", bcfg_, rng);
        if (cfg_.backbone_mode == BackboneMode::decoupled)
            generator_ = std::make_unique<Backbone<S>>(store_, "g", bcfg_, rng);
        reweighters_ = make_reweighters<S>(cfg_, store_, rng);
    }

    const RimConfig& config() const { return cfg_; }
    const BackboneConfig& backbone_config() const { return bcfg_; }
    ParamStore<S>& params() { return store_; }
    IoHead<S>& io() const { return *io_; }
    const Backbone<S>& solver_backbone() const { return *solver_; }
    const Backbone<S>& generator_backbone() const { return generator_ ? *generator_ : *solver_; }

    // Unrolls T inner / N outer steps starting from the learned initial
    // vectors, or from a carried (y, z) pair when provided.
    RunResult<S> run(const std::vector<int>& x_tokens, int batch,
                     std::optional<Tensor<S>> y_init = std::nullopt,
                     std::optional<Tensor<S>> z_init = std::nullopt,
                     bool record_trace = false) const {
        Tensor<S> x = io_->embed(x_tokens, batch);
        Tensor<S> y = y_init ? *y_init : io_->initial_solution(batch);
        Tensor<S> z = z_init ? *z_init : io_->initial_state(batch);

        RunResult<S> out;
        LatentTrace<S>& tr = out.trace;
        if (record_trace) {
            tr.x = x;
            tr.solutions.push_back(y);
        }

        Reweighter<S>& rw_l = *reweighters_.solver;
        Reweighter<S>& rw_h = *reweighters_.generator;
        rw_h.reset(y);
        const Backbone<S>& gen = generator_ ? *generator_ : *solver_;

        for (int i = 1; i <= cfg_.N; ++i) {
            // L history restarts each outer phase, seeded with the carry-in state
            rw_l.reset(z);
            if (record_trace) {
                tr.states.emplace_back();
                tr.candidate_states.emplace_back();
                tr.gate_means.emplace_back();
                tr.states.back().push_back(z);
            }
            for (int j = 1; j <= cfg_.T; ++j) {
                Tensor<S> z_cand = solver_step(z, y, x, *solver_);
                if (!z_cand.all_finite()) throw RimRuntimeError(i, j);
                z = rw_l.accept(z_cand);
                if (!z.all_finite()) throw RimRuntimeError(i, j);
                if (record_trace) {
                    tr.candidate_states.back().push_back(z_cand);
                    tr.states.back().push_back(z);
                    tr.gate_means.back().push_back(rw_l.last_stat());
                }
            }
            Tensor<S> y_cand = generator_step(y, z, gen);
            if (!y_cand.all_finite()) throw RimRuntimeError(i, 0);
            y = rw_h.accept(y_cand);
            if (!y.all_finite()) throw RimRuntimeError(i, 0);
            if (record_trace) {
                tr.candidate_solutions.push_back(y_cand);
                tr.solutions.push_back(y);
                tr.gate_means.back().push_back(rw_h.last_stat());
            }
        }
        out.y_final = y;
        out.z_final = z;
        out.decoded = io_->decode(y);
        return out;
    }

    void dump_trace(const LatentTrace<S>& tr, std::ostream& os) const {
        auto norm = [](const Tensor<S>& t) {
            double s = 0;
            for (S v : t.values()) s += double(v) * double(v);
            return std::sqrt(s);
        };
        for (size_t i = 0; i < tr.candidate_states.size(); ++i) {
            for (size_t j = 0; j < tr.candidate_states[i].size(); ++j) {
                os << "outer=" << i + 1 << " inner=" << j + 1
                   << " cand_norm=" << norm(tr.candidate_states[i][j])
                   << " accepted_norm=" << norm(tr.states[i][j + 1])
                   << " gate_mean=" << tr.gate_means[i][j] << '\n';
            }
            os << "outer=" << i + 1 << " inner=G"
               << " cand_norm=" << norm(tr.candidate_solutions[i])
               << " accepted_norm=" << norm(tr.solutions[i + 1])
               << " gate_mean=" << tr.gate_means[i].back() << '\n';
        }
    }

private:
    RimConfig cfg_;
    BackboneConfig bcfg_;
    ParamStore<S> store_;
    std::unique_ptr<IoHead<S>> io_;
    std::unique_ptr<Backbone<S>> solver_;
    std::unique_ptr<Backbone<S>> generator_;  // null in shared mode
    mutable ReweighterPair<S> reweighters_;
};

}  // namespace rim
