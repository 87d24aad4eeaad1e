#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

#include "rim/backbones.hpp"

namespace rim {

enum class ReweighterKind {
    identity,
    ema_fixed,
    ema_learnable_scalar,
    ema_gated_vector,
    transformer_lookback,
};

enum class ReweighterScope { both, solver_only, generator_only };

enum class BackboneMode { shared, decoupled };

inline std::string to_string(ReweighterKind k) {
    switch (k) {
        case ReweighterKind::identity: return "identity";
        case ReweighterKind::ema_fixed: return "ema_fixed";
        case ReweighterKind::ema_learnable_scalar: return "ema_learnable_scalar";
        case ReweighterKind::ema_gated_vector: return "ema_gated_vector";
        case ReweighterKind::transformer_lookback: return "transformer_lookback";
    }
    return "?";
}

inline ReweighterKind reweighter_kind_from(const std::string& s) {
    if (s == "identity") return ReweighterKind::identity;
    if (s == "ema_fixed") return ReweighterKind::ema_fixed;
    if (s == "ema_learnable_scalar") return ReweighterKind::ema_learnable_scalar;
    if (s == "ema_gated_vector" || s == "ema_gated") return ReweighterKind::ema_gated_vector;
    if (s == "transformer_lookback" || s == "transformer") return ReweighterKind::transformer_lookback;
    throw std::invalid_argument("unknown reweighter kind: " + s);
}

inline ReweighterScope scope_from(const std::string& s) {
    if (s == "both") return ReweighterScope::both;
    if (s == "solver_only") return ReweighterScope::solver_only;
    if (s == "generator_only") return ReweighterScope::generator_only;
    throw std::invalid_argument("unknown reweighter scope: " + s);
}

// The machine tuple: loop counts, width, reweighter choice, backbone layout.
struct RimConfig {
    int T = 3;  // inner Solver steps per outer step
    int N = 2;  // outer Generator steps
    int d = 128;
    int seq_len = 16;
    ReweighterKind reweighter_kind = ReweighterKind::identity;
    ReweighterScope reweighter_scope = ReweighterScope::both;
    double alpha_L = 0.5;  // ema_fixed only
    double alpha_H = 0.5;
    int lookback = 1;  // transformer_lookback only
    BackboneMode backbone_mode = BackboneMode::shared;
    int supervision_segments = 4;

    void validate() const {
        if (T < 1 || N < 1 || d < 1 || seq_len < 1)
            throw std::invalid_argument("RimConfig: T, N, d, seq_len must be >= 1");
        if (supervision_segments < 1)
            throw std::invalid_argument("RimConfig: supervision_segments must be >= 1");
        if (reweighter_kind == ReweighterKind::ema_fixed) {
            if (alpha_L < 0.0 || alpha_L > 1.0 || alpha_H < 0.0 || alpha_H > 1.0)
                throw std::invalid_argument("RimConfig: fixed alpha must lie in [0,1], got alpha_L=" +
                                            std::to_string(alpha_L) + " alpha_H=" +
                                            std::to_string(alpha_H));
        }
        if (reweighter_kind == ReweighterKind::transformer_lookback) {
            if (lookback < 0 || lookback > std::max(T, N))
                throw std::invalid_argument("RimConfig: lookback must lie in [0, max(T,N)]");
        }
    }
};

}  // namespace rim
