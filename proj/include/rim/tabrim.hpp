#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rim/rng.hpp"
#include "rim/tasks.hpp"
#include "rim/tensor.hpp"

namespace rim {

// ---- emission model ------------------------------------------------------

struct EmissionModel {
    double eps;

    explicit EmissionModel(double e) : eps(e) {
        check(e > 0.0 && e < 1.0, "emission model: eps must lie in (0,1)");
    }

    // Indicator emission counts mismatches; with uniform replacement over a
    // domain of size |D| the effective mismatch rate of corruption p is
    // p * (1 - 1/|D|).
    static EmissionModel from_corruption_rate(double p, int domain_size) {
        return EmissionModel(p * (1.0 - 1.0 / domain_size));
    }
};

// w = (1-eps)^m * eps^(n-m), m = #agreeing features; computed in log space.
inline double emission_weight(const std::vector<int>& xhat, const std::vector<int>& e,
                              const EmissionModel& model) {
    check(xhat.size() == e.size(), "emission_weight: feature count mismatch");
    int m = 0;
    for (size_t i = 0; i < xhat.size(); ++i) m += (xhat[i] == e[i]);
    const int n = static_cast<int>(xhat.size());
    return std::exp(m * std::log1p(-model.eps) + (n - m) * std::log(model.eps));
}

// ---- conditional models --------------------------------------------------

class ConditionalModel {
public:
    virtual ~ConditionalModel() = default;
    virtual int n_features() const = 0;
    virtual int domain_size(int feature) const = 0;
    virtual int n_classes() const = 0;
    // P(X_i | x_{-i}[, y]); normalized.
    virtual std::vector<double> feature_conditional(int i, const std::vector<int>& x,
                                                    std::optional<int> y) const = 0;
    // P(Y | x); normalized.
    virtual std::vector<double> target_conditional(const std::vector<int>& x) const = 0;
};

inline void normalize_dist(std::vector<double>& p, const std::string& what) {
    double z = std::accumulate(p.begin(), p.end(), 0.0);
    check(z > 0, what + ": all-zero distribution");
    for (double& v : p) v /= z;
}

inline int sample_categorical(const std::vector<double>& p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng), c = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        c += p[i];
        if (r < c) return static_cast<int>(i);
    }
    return static_cast<int>(p.size()) - 1;
}

// In-context k-NN conditional over the training split: Hamming-nearest rows
// on x_{-i} (plus the label when conditioning is joint), Laplace-smoothed
// histogram of feature i among them. Distance ties break by row index.
class KnnConditional final : public ConditionalModel {
public:
    KnnConditional(const TabularTask& task, int k, double lambda)
        : x_(task.train_x), y_(task.train_y), domains_(task.domain_sizes), k_(k), lambda_(lambda) {
        check(!x_.empty(), "knn conditional: empty training set");
        check(k >= 1 && lambda > 0, "knn conditional: k >= 1 and lambda > 0 required");
    }

    int n_features() const override { return static_cast<int>(domains_.size()); }
    int domain_size(int f) const override { return domains_[static_cast<size_t>(f)]; }
    int n_classes() const override { return 2; }

    std::vector<double> feature_conditional(int i, const std::vector<int>& x,
                                            std::optional<int> y) const override {
        auto nearest = k_nearest([&](size_t row) {
            int d = 0;
            for (int f = 0; f < n_features(); ++f)
                if (f != i) d += (x_[row][static_cast<size_t>(f)] != x[static_cast<size_t>(f)]);
            if (y) d += (y_[row] != *y);
            return d;
        });
        std::vector<double> p(static_cast<size_t>(domain_size(i)), lambda_);
        for (size_t row : nearest) p[static_cast<size_t>(x_[row][static_cast<size_t>(i)])] += 1.0;
        normalize_dist(p, "knn feature conditional " + std::to_string(i));
        return p;
    }

    std::vector<double> target_conditional(const std::vector<int>& x) const override {
        auto nearest = k_nearest([&](size_t row) {
            int d = 0;
            for (int f = 0; f < n_features(); ++f)
                d += (x_[row][static_cast<size_t>(f)] != x[static_cast<size_t>(f)]);
            return d;
        });
        std::vector<double> p(2, lambda_);
        for (size_t row : nearest) p[static_cast<size_t>(y_[row])] += 1.0;
        normalize_dist(p, "knn target conditional");
        return p;
    }

private:
    template <typename Dist>
    std::vector<size_t> k_nearest(Dist dist) const {
        std::vector<std::pair<int, size_t>> scored(x_.size());
        for (size_t r = 0; r < x_.size(); ++r) scored[r] = {dist(r), r};
        const size_t k = std::min(static_cast<size_t>(k_), x_.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k),
                          scored.end());
        std::vector<size_t> out(k);
        for (size_t i = 0; i < k; ++i) out[i] = scored[i].second;
        return out;
    }

    const std::vector<std::vector<int>>& x_;
    const std::vector<int>& y_;
    std::vector<int> domains_;
    int k_;
    double lambda_;
};

// ---- exact tabulated model (oracle tasks) --------------------------------

// Small discrete generative model: full joint P(X) plus P(Y|X) tables.
// Assignments index row-major over the feature domains.
struct BayesNetSpec {
    std::vector<int> domain_sizes;
    int classes = 2;
    std::vector<double> joint_x;               // size = prod(domains)
    std::vector<std::vector<double>> y_given_x;  // [assignment][class]

    std::int64_t n_assignments() const {
        std::int64_t n = 1;
        for (int d : domain_sizes) n *= d;
        return n;
    }

    std::int64_t index_of(const std::vector<int>& x) const {
        std::int64_t idx = 0;
        for (size_t f = 0; f < domain_sizes.size(); ++f)
            idx = idx * domain_sizes[f] + x[f];
        return idx;
    }

    std::vector<int> assignment(std::int64_t idx) const {
        std::vector<int> x(domain_sizes.size());
        for (size_t f = domain_sizes.size(); f-- > 0;) {
            x[f] = static_cast<int>(idx % domain_sizes[f]);
            idx /= domain_sizes[f];
        }
        return x;
    }

    nlohmann::json to_json() const {
        return {{"domain_sizes", domain_sizes},
                {"classes", classes},
                {"joint_x", joint_x},
                {"y_given_x", y_given_x}};
    }

    static BayesNetSpec from_json(const nlohmann::json& j) {
        BayesNetSpec s;
        s.domain_sizes = j.at("domain_sizes").get<std::vector<int>>();
        s.classes = j.at("classes").get<int>();
        s.joint_x = j.at("joint_x").get<std::vector<double>>();
        s.y_given_x = j.at("y_given_x").get<std::vector<std::vector<double>>>();
        check(static_cast<std::int64_t>(s.joint_x.size()) == s.n_assignments(),
              "bayes net spec: joint table size mismatch");
        return s;
    }

    static BayesNetSpec load(const std::string& path) {
        std::ifstream in(path);
        check(in.good(), "cannot open fixture: " + path);
        return from_json(nlohmann::json::parse(in));
    }

    // Chain-structured random net: P(X1) P(X2|X1) ... with random CPTs.
    static BayesNetSpec random_chain(const std::vector<int>& domains, int classes,
                                     std::uint64_t seed) {
        BayesNetSpec s;
        s.domain_sizes = domains;
        s.classes = classes;
        auto rng = stream(seed, "refnet");
        std::uniform_real_distribution<double> u(0.2, 1.0);
        const std::int64_t n = s.n_assignments();
        std::vector<std::vector<double>> marg1;  // P(X1)
        std::vector<double> p1(static_cast<size_t>(domains[0]));
        for (double& v : p1) v = u(rng);
        normalize_dist(p1, "refnet p1");
        std::vector<std::vector<std::vector<double>>> trans;  // P(Xf | Xf-1)
        for (size_t f = 1; f < domains.size(); ++f) {
            std::vector<std::vector<double>> t(static_cast<size_t>(domains[f - 1]));
            for (auto& row : t) {
                row.resize(static_cast<size_t>(domains[f]));
                for (double& v : row) v = u(rng);
                normalize_dist(row, "refnet cpt");
            }
            trans.push_back(std::move(t));
        }
        s.joint_x.resize(static_cast<size_t>(n));
        for (std::int64_t idx = 0; idx < n; ++idx) {
            auto x = s.assignment(idx);
            double p = p1[static_cast<size_t>(x[0])];
            for (size_t f = 1; f < x.size(); ++f)
                p *= trans[f - 1][static_cast<size_t>(x[f - 1])][static_cast<size_t>(x[f])];
            s.joint_x[static_cast<size_t>(idx)] = p;
        }
        s.y_given_x.resize(static_cast<size_t>(n));
        for (auto& row : s.y_given_x) {
            row.resize(static_cast<size_t>(classes));
            for (double& v : row) v = u(rng);
            normalize_dist(row, "refnet y cpt");
        }
        return s;
    }
};

class ExactCptConditional final : public ConditionalModel {
public:
    explicit ExactCptConditional(const BayesNetSpec& spec) : spec_(spec) {}

    int n_features() const override { return static_cast<int>(spec_.domain_sizes.size()); }
    int domain_size(int f) const override { return spec_.domain_sizes[static_cast<size_t>(f)]; }
    int n_classes() const override { return spec_.classes; }

    std::vector<double> feature_conditional(int i, const std::vector<int>& x,
                                            std::optional<int> y) const override {
        std::vector<int> probe = x;
        std::vector<double> p(static_cast<size_t>(domain_size(i)));
        for (int v = 0; v < domain_size(i); ++v) {
            probe[static_cast<size_t>(i)] = v;
            const auto idx = static_cast<size_t>(spec_.index_of(probe));
            p[static_cast<size_t>(v)] =
                spec_.joint_x[idx] * (y ? spec_.y_given_x[idx][static_cast<size_t>(*y)] : 1.0);
        }
        normalize_dist(p, "exact cpt feature conditional " + std::to_string(i));
        return p;
    }

    std::vector<double> target_conditional(const std::vector<int>& x) const override {
        return spec_.y_given_x[static_cast<size_t>(spec_.index_of(x))];
    }

private:
    const BayesNetSpec& spec_;
};

// ---- Gibbs solver --------------------------------------------------------

struct ChainConfig {
    int n_burn = 5;   // paper protocol default
    int n_keep = 10;  // paper protocol default
    bool joint_y = true;

    void validate() const {
        check(n_burn >= 0 && n_keep >= 1, "chain config: n_burn >= 0 and n_keep >= 1 required");
    }
};

struct GibbsChain {
    std::vector<std::vector<int>> samples;  // all sweeps, in order
    int burn_in = 0;
    std::vector<std::vector<int>> retained;        // H
    std::vector<double> weights;                   // w(x_hat, e)
    std::vector<std::vector<double>> predictions;  // P(Y | x_hat)
};

// One systematic-scan sweep: features resampled in order from their full
// conditionals given all other current values (and y when provided).
inline std::vector<int> gibbs_sweep(std::vector<int> x, std::optional<int> y,
                                    const ConditionalModel& conditional, std::mt19937_64& rng) {
    for (int i = 0; i < conditional.n_features(); ++i) {
        std::vector<double> p = conditional.feature_conditional(i, x, y);
        double z = std::accumulate(p.begin(), p.end(), 0.0);
        check(z > 0, "gibbs_sweep: all-zero conditional at feature " + std::to_string(i));
        for (double& v : p) v /= z;
        x[static_cast<size_t>(i)] = sample_categorical(p, rng);
    }
    return x;
}

// Chain warm-started at the observed noisy row.
inline GibbsChain run_chain(const std::vector<int>& e, const ChainConfig& cfg,
                            const ConditionalModel& conditional, const EmissionModel& emission,
                            std::mt19937_64& rng) {
    cfg.validate();
    GibbsChain chain;
    chain.burn_in = cfg.n_burn;
    std::vector<int> x = e;
    for (int sweep = 0; sweep < cfg.n_burn + cfg.n_keep; ++sweep) {
        std::optional<int> y;
        if (cfg.joint_y) y = sample_categorical(conditional.target_conditional(x), rng);
        x = gibbs_sweep(std::move(x), y, conditional, rng);
        chain.samples.push_back(x);
        if (sweep >= cfg.n_burn) {
            chain.retained.push_back(x);
            chain.weights.push_back(emission_weight(x, e, emission));
            chain.predictions.push_back(conditional.target_conditional(x));
        }
    }
    return chain;
}

// Generator: sum_H w(x,e) P(Y|x) / sum_H w(x,e). With weighted=false this is
// the plain sample mean.
inline std::vector<double> predictive_marginalize(const GibbsChain& chain, bool weighted = true) {
    check(!chain.retained.empty(), "predictive_marginalize: empty retained set");
    const size_t classes = chain.predictions.front().size();
    std::vector<double> out(classes, 0.0);
    double z = weighted ? std::accumulate(chain.weights.begin(), chain.weights.end(), 0.0)
                        : static_cast<double>(chain.retained.size());
    if (weighted && z <= 0) {
        std::cerr << "warning: all emission weights zero; falling back to unweighted mean\n";
        return predictive_marginalize(chain, false);
    }
    for (size_t s = 0; s < chain.retained.size(); ++s) {
        const double w = weighted ? chain.weights[s] : 1.0;
        for (size_t c = 0; c < classes; ++c) out[c] += w * chain.predictions[s][c];
    }
    for (double& v : out) v /= z;
    return out;
}

// Pools the retained sets of several independent chains before marginalizing.
inline std::vector<double> tabrim_predict(const std::vector<int>& e, const ChainConfig& cfg,
                                          const ConditionalModel& conditional,
                                          const EmissionModel& emission, int n_chains,
                                          std::uint64_t seed, bool weighted = true,
                                          std::vector<GibbsChain>* chains_out = nullptr) {
    check(n_chains >= 1, "tabrim_predict: n_chains must be >= 1");
    GibbsChain pooled;
    for (int c = 0; c < n_chains; ++c) {
        auto rng = stream(seed, "tabrim-chain", static_cast<std::uint64_t>(c));
        GibbsChain chain = run_chain(e, cfg, conditional, emission, rng);
        if (chains_out) chains_out->push_back(chain);
        pooled.retained.insert(pooled.retained.end(), chain.retained.begin(), chain.retained.end());
        pooled.weights.insert(pooled.weights.end(), chain.weights.begin(), chain.weights.end());
        pooled.predictions.insert(pooled.predictions.end(), chain.predictions.begin(),
                                  chain.predictions.end());
    }
    pooled.burn_in = cfg.n_burn * n_chains;
    return predictive_marginalize(pooled, weighted);
}

// ---- exact oracle --------------------------------------------------------

// Exact P(Y | E=e) by enumeration: sum_x P(x) P(e|x) P(Y|x), normalized.
inline std::vector<double> brute_force_posterior(const std::vector<int>& e,
                                                 const BayesNetSpec& spec,
                                                 const EmissionModel& emission) {
    check(spec.n_assignments() <= 1000000,
          "brute_force_posterior: joint domain too large (" +
              std::to_string(spec.n_assignments()) + " assignments)");
    std::vector<double> out(static_cast<size_t>(spec.classes), 0.0);
    for (std::int64_t idx = 0; idx < spec.n_assignments(); ++idx) {
        const auto x = spec.assignment(idx);
        const double w = spec.joint_x[static_cast<size_t>(idx)] * emission_weight(x, e, emission);
        for (int c = 0; c < spec.classes; ++c)
            out[static_cast<size_t>(c)] += w * spec.y_given_x[static_cast<size_t>(idx)][static_cast<size_t>(c)];
    }
    normalize_dist(out, "brute_force_posterior");
    return out;
}

}  // namespace rim
