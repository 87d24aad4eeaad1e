// Acceptance suite: one pass/fail line per criterion. A subset can be chosen
// by listing criterion numbers as arguments; default runs all ten.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rim/finite_diff.hpp"
#include "rim/metrics.hpp"
#include "rim/rim_loop.hpp"
#include "rim/rng.hpp"
#include "rim/tabrim.hpp"
#include "rim/tasks.hpp"
#include "rim/training.hpp"

using namespace rim;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

double now_seconds() {
    static const auto t0 = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string refnet_path() {
    for (const char* p : {"refnet.json", "tests/refnet.json", "../tests/refnet.json",
                          "../../tests/refnet.json"}) {
        if (std::filesystem::exists(p)) return p;
    }
    throw std::runtime_error("refnet.json fixture not found");
}

std::vector<int> random_tokens(int batch, int seq, int vocab, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dist(0, vocab - 1);
    std::vector<int> t(static_cast<size_t>(batch * seq));
    for (int& v : t) v = dist(rng);
    return t;
}

// ---- criterion 1: identity reduction --------------------------------------

Outcome criterion1() {
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto rng = stream(seed, "c1");
        RimConfig cfg;
        cfg.T = 1 + static_cast<int>(rng() % 4);   // <= 4
        cfg.N = 1 + static_cast<int>(rng() % 3);   // <= 3
        const int widths[4] = {8, 16, 32, 64};
        cfg.d = widths[rng() % 4];
        cfg.seq_len = 4 + static_cast<int>(rng() % 6);
        BackboneConfig bcfg;
        bcfg.kind = (rng() % 2) ? BackboneKind::mlp_mixer : BackboneKind::attention;
        bcfg.depth = 1 + static_cast<int>(rng() % 2);
        bcfg.d = cfg.d;
        bcfg.vocab = 5;
        bcfg.seq_len = cfg.seq_len;
        RimModel<double> model(cfg, bcfg, seed);
        auto toks = random_tokens(2, cfg.seq_len, 5, rng);
        auto out = model.run(toks, 2);

        // flat TRM-style recursion written directly against the backbones
        Tensor<double> x = model.io().embed(toks, 2);
        Tensor<double> y = model.io().initial_solution(2);
        Tensor<double> z = model.io().initial_state(2);
        for (int i = 0; i < cfg.N; ++i) {
            for (int j = 0; j < cfg.T; ++j)
                z = model.solver_backbone().forward(z, y, &x);
            y = model.generator_backbone().forward(y, z);
        }
        for (size_t k = 0; k < y.values().size(); ++k)
            worst = std::max(worst, std::abs(y.values()[k] - out.y_final.values()[k]));
    }
    std::ostringstream os;
    os << "max elementwise deviation " << worst << " (tolerance 1e-6, 20 seeds)";
    return {worst < 1e-6, os.str()};
}

// ---- criterion 2: ema boundaries ------------------------------------------

Outcome criterion2() {
    double worst_one = 0;
    bool zero_ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RimConfig cfg;
        cfg.T = 2;
        cfg.N = 2;
        cfg.d = 32;
        cfg.seq_len = 8;
        BackboneConfig bcfg;
        bcfg.depth = 2;
        bcfg.d = 32;
        bcfg.vocab = 5;
        bcfg.seq_len = 8;
        auto rng = stream(seed, "c2");
        auto toks = random_tokens(2, 8, 5, rng);

        RimModel<double> ident(cfg, bcfg, seed);
        auto cfg1 = cfg;
        cfg1.reweighter_kind = ReweighterKind::ema_fixed;
        cfg1.alpha_L = 1.0;
        cfg1.alpha_H = 1.0;
        RimModel<double> ema1(cfg1, bcfg, seed);
        auto ri = ident.run(toks, 2);
        auto r1 = ema1.run(toks, 2);
        for (size_t k = 0; k < ri.y_final.values().size(); ++k)
            worst_one =
                std::max(worst_one, std::abs(ri.y_final.values()[k] - r1.y_final.values()[k]));

        auto cfg0 = cfg1;
        cfg0.alpha_L = 0.0;
        cfg0.alpha_H = 0.0;
        RimModel<double> ema0(cfg0, bcfg, seed);
        auto r0 = ema0.run(toks, 2);
        zero_ok = zero_ok && r0.decoded == ema0.io().decode(ema0.io().initial_solution(2));
        for (size_t k = 0; k < r0.y_final.values().size(); ++k)
            zero_ok = zero_ok && std::abs(r0.y_final.values()[k] -
                                          ema0.io().initial_solution(2).values()[k]) < 1e-12;
    }
    std::ostringstream os;
    os << "alpha=1 deviation " << worst_one << " (tolerance 1e-6); alpha=0 decodes initial: "
       << (zero_ok ? "yes" : "no");
    return {worst_one < 1e-6 && zero_ok, os.str()};
}

// ---- criterion 3: gradient suite ------------------------------------------

Outcome criterion3() {
    const std::vector<ReweighterKind> kinds{
        ReweighterKind::identity, ReweighterKind::ema_fixed, ReweighterKind::ema_learnable_scalar,
        ReweighterKind::ema_gated_vector, ReweighterKind::transformer_lookback};
    double worst = 0;
    std::string worst_kind;
    for (auto kind : kinds) {
        RimConfig cfg;
        cfg.T = 2;
        cfg.N = 2;
        cfg.d = 8;
        cfg.seq_len = 4;
        cfg.reweighter_kind = kind;
        cfg.alpha_L = 0.3;
        cfg.alpha_H = 0.7;
        cfg.lookback = 2;
        BackboneConfig bcfg;
        bcfg.depth = 1;
        bcfg.d = 8;
        bcfg.vocab = 4;
        bcfg.seq_len = 4;
        RimModel<double> model(cfg, bcfg, 7);
        if (kind == ReweighterKind::transformer_lookback) {
            // perturb the zero-initialized projections so their gradients are
            // exercised away from the identity point
            auto rng = stream(8, "c3-perturb");
            std::normal_distribution<double> dist(0.0, 0.2);
            for (const char* name : {"rw.L.attn.o.w", "rw.L.mlp.down.w", "rw.H.attn.o.w",
                                     "rw.H.mlp.down.w"})
                for (auto& v : model.params().at(name).values()) v = dist(rng);
        }
        auto rng = stream(9, "c3");
        auto toks = random_tokens(2, 4, 4, rng);
        std::vector<int> targets = random_tokens(2, 4, 4, rng);
        std::function<Tensor<double>()> loss = [&]() {
            auto run = model.run(toks, 2);
            return cross_entropy(model.io().logits(run.y_final), targets);
        };
        const double err = finite_diff_check(model.params(), loss, 1e-5, 64, rng);
        if (err > worst) {
            worst = err;
            worst_kind = to_string(kind);
        }
    }
    std::ostringstream os;
    os << "max relative error " << worst << " (worst kind " << worst_kind
       << ", tolerance 1e-4, 64 coordinates each)";
    return {worst < 1e-4, os.str()};
}

// ---- criteria 4 and 5: desk sudoku ----------------------------------------

struct SudokuRun {
    double exact_match;
    double seconds;
};

SudokuRun train_sudoku(const std::string& reweighter, const std::string& scope, double alpha,
                       std::uint64_t seed, int epoch_budget, const PuzzleDataset& data,
                       int d, int depth, int segments = 4) {
    RimConfig cfg;
    cfg.T = 3;
    cfg.N = 2;
    cfg.d = d;
    cfg.seq_len = 16;
    cfg.reweighter_kind = reweighter_kind_from(reweighter);
    cfg.reweighter_scope = scope_from(scope);
    cfg.alpha_L = alpha;
    cfg.alpha_H = alpha;
    cfg.supervision_segments = segments;
    BackboneConfig bcfg;
    bcfg.kind = BackboneKind::mlp_mixer;
    bcfg.depth = depth;
    bcfg.d = d;
    bcfg.vocab = 5;
    bcfg.seq_len = 16;
    RimModel<float> model(cfg, bcfg, seed);

    TrainConfig tc;
    tc.epochs = epoch_budget;  // identical optimization budget across variants
    tc.batch_size = 64;
    tc.learning_rate = 5e-3;
    tc.weight_decay = 0.01;
    tc.seed = seed;
    tc.eval_cadence = 10000;  // final eval only
    tc.lr_final_frac = 0.1;
    const double t0 = now_seconds();
    auto outcome = train(model, data, tc);
    return {outcome.final_eval.exact_match, now_seconds() - t0};
}

PuzzleDataset sudoku_data(int n_train, int n_test, std::uint64_t seed, int givens) {
    return gen_split(n_train, n_test, seed,
                     [givens](std::uint64_t s) { return gen_sudoku(4, givens, s); });
}

Outcome criterion4() {
    const int epochs = 8;  // identical optimization budget for both variants
    const auto data = sudoku_data(2000, 500, 100, 7);
    std::vector<double> sim, gated;
    double sim_worst_seconds = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto s = train_sudoku("identity", "both", 0.5, seed, epochs, data, 128, 2);
        sim.push_back(s.exact_match);
        sim_worst_seconds = std::max(sim_worst_seconds, s.seconds);
        gated.push_back(
            train_sudoku("ema_gated", "both", 0.5, seed, epochs, data, 128, 2).exact_match);
    }
    auto mean = [](const std::vector<double>& v) {
        double m = 0;
        for (double x : v) m += x;
        return m / static_cast<double>(v.size());
    };
    const double sim_mean = mean(sim), gated_mean = mean(gated);
    const bool sim_hits = *std::max_element(sim.begin(), sim.end()) >= 0.90;
    const bool in_time = sim_worst_seconds < 900.0;
    std::ostringstream os;
    os << "SimRIM exact-match per seed [" << sim[0] << ", " << sim[1] << ", " << sim[2]
       << "] (threshold 0.90, slowest run " << sim_worst_seconds << "s, limit 900s); "
       << "gated RIMA mean " << gated_mean << " vs SimRIM mean " << sim_mean << " at " << epochs
       << " epochs";
    return {sim_hits && in_time && gated_mean >= sim_mean, os.str()};
}

Outcome criterion5() {
    // one supervision segment: a damped recursion cannot lean on carried
    // states, so the fixed-alpha ordering is visible; 15 runs total
    const int epochs = 16;
    const auto data = sudoku_data(2000, 500, 100, 7);
    auto mean_over_seeds = [&](const std::string& rw, const std::string& scope, double alpha) {
        double m = 0;
        for (std::uint64_t seed = 1; seed <= 3; ++seed)
            m += train_sudoku(rw, scope, alpha, seed, epochs, data, 128, 2, 1).exact_match;
        return m / 3.0;
    };
    const double full = mean_over_seeds("ema_gated", "both", 0.5);
    const double zl = mean_over_seeds("ema_gated", "solver_only", 0.5);
    const double zh = mean_over_seeds("ema_gated", "generator_only", 0.5);
    const double a02 = mean_over_seeds("ema_fixed", "both", 0.2);
    const double a06 = mean_over_seeds("ema_fixed", "both", 0.6);
    std::ostringstream os;
    os << "gated full " << full << " vs solver-only " << zl << " / generator-only " << zh
       << " (slack 0.02); fixed alpha 0.2 " << a02 << " < alpha 0.6 " << a06;
    const bool pass = full >= zl - 0.02 && full >= zh - 0.02 && a02 < a06;
    return {pass, os.str()};
}

// ---- criterion 6: desk maze ------------------------------------------------

Outcome criterion6() {
    const int epochs = 24;  // sized so all 6 runs finish inside one hour
    const auto data = gen_split(800, 200, 300, [](std::uint64_t s) { return gen_maze(9, s); });
    auto train_maze = [&](ReweighterKind kind, std::uint64_t seed) {
        RimConfig cfg;
        cfg.T = 2;
        cfg.N = 2;
        cfg.d = 64;
        cfg.seq_len = 81;
        cfg.reweighter_kind = kind;
        cfg.lookback = 2;  // max(N, T)
        cfg.supervision_segments = 2;
        BackboneConfig bcfg;
        bcfg.kind = BackboneKind::mlp_mixer;
        bcfg.depth = 2;
        bcfg.d = 64;
        bcfg.vocab = 5;
        bcfg.seq_len = 81;
        RimModel<float> model(cfg, bcfg, seed);
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = 32;
        tc.learning_rate = 4e-3;
        tc.seed = seed;
        tc.eval_cadence = 10000;
        tc.lr_final_frac = 0.1;
        return train(model, data, tc).final_eval.exact_match;
    };
    double sim = 0, former = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        sim += train_maze(ReweighterKind::identity, seed);
        former += train_maze(ReweighterKind::transformer_lookback, seed);
    }
    sim /= 3.0;
    former /= 3.0;
    std::ostringstream os;
    os << "RIMformer mean " << former << " vs SimRIM mean " << sim << " (slack 0.02, 3 seeds)";
    return {former >= sim - 0.02, os.str()};
}

// ---- criterion 7: oracle equivalence ---------------------------------------

double refnet_worst_tv(int burn, int keep_per_chain, int chains, std::uint64_t seed) {
    auto spec = BayesNetSpec::load(refnet_path());
    ExactCptConditional cond(spec);
    EmissionModel emission(0.2);
    ChainConfig cc;
    cc.n_burn = burn;
    cc.n_keep = keep_per_chain;
    auto rng = stream(seed, "c7-evidence");
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        std::vector<int> e(3);
        for (int& v : e) v = static_cast<int>(rng() % 2);
        auto approx = tabrim_predict(e, cc, cond, emission, chains,
                                     seed + 101 * static_cast<std::uint64_t>(i));
        auto exact = brute_force_posterior(e, spec, emission);
        worst = std::max(worst, total_variation(approx, exact));
    }
    return worst;
}

Outcome criterion7() {
    // 500 burn-in, 2000 retained pooled across 4 chains
    const double worst = refnet_worst_tv(500, 500, 4, 11);
    std::ostringstream os;
    os << "max total variation " << worst << " over 20 evidence vectors (tolerance 0.05)";
    return {worst < 0.05, os.str()};
}

// ---- criterion 8: noise robustness -----------------------------------------

Outcome criterion8() {
    double tab_mean = 0, direct_mean = 0;
    std::vector<double> tab_scores, direct_scores;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto task = gen_tabular(8, 400, 150, 0.2, seed);
        task = corrupt_features(task, 0.25, seed);
        KnnConditional cond(task, 16, 1.0);
        EmissionModel emission = EmissionModel::from_corruption_rate(0.25, 2);
        ChainConfig cc;  // longer chains than the protocol defaults to tame MC noise
        cc.n_burn = 10;
        cc.n_keep = 50;
        std::vector<double> tab, direct;
        for (size_t r = 0; r < task.test_x.size(); ++r) {
            auto p = tabrim_predict(task.test_x[r], cc, cond, emission, 8, seed + 7919 * r);
            tab.push_back(p[1]);
            direct.push_back(cond.target_conditional(task.test_x[r])[1]);
        }
        tab_scores.push_back(auc_roc(tab, task.test_y));
        direct_scores.push_back(auc_roc(direct, task.test_y));
        tab_mean += tab_scores.back();
        direct_mean += direct_scores.back();
    }
    tab_mean /= 5.0;
    direct_mean /= 5.0;
    std::ostringstream os;
    os << "TabRIM mean AUC-ROC " << tab_mean << " vs direct kNN " << direct_mean
       << " (5 seeds, p=0.25)";
    return {tab_mean >= direct_mean, os.str()};
}

// ---- criterion 9: emission algebra -----------------------------------------

Outcome criterion9() {
    auto rng = stream(13, "c9");
    std::uniform_real_distribution<double> ueps(0.001, 0.999);
    std::uniform_int_distribution<int> uval(0, 4);
    std::uniform_int_distribution<int> ulen(1, 12);
    double worst = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int n = ulen(rng);
        EmissionModel m(ueps(rng));
        std::vector<int> x(static_cast<size_t>(n)), e(static_cast<size_t>(n));
        for (int& v : x) v = uval(rng);
        for (int& v : e) v = uval(rng);
        int mm = 0;
        for (int i = 0; i < n; ++i) mm += (x[static_cast<size_t>(i)] == e[static_cast<size_t>(i)]);
        const double closed = std::pow(1.0 - m.eps, mm) * std::pow(m.eps, n - mm);
        const double log_form = std::exp(mm * std::log(1.0 - m.eps) + (n - mm) * std::log(m.eps));
        const double w = emission_weight(x, e, m);
        const double scale = std::max({1.0, std::abs(closed), std::abs(w)});
        worst = std::max(worst, std::abs(w - closed) / scale);
        worst = std::max(worst, std::abs(w - log_form) / scale);
    }
    std::ostringstream os;
    os << "max deviation " << worst << " over 10000 triples (tolerance 1e-12)";
    return {worst < 1e-12, os.str()};
}

// ---- criterion 10: protocol fidelity ---------------------------------------

Outcome criterion10() {
    ChainConfig defaults;
    const bool default_ok = defaults.n_burn == 5 && defaults.n_keep == 10;
    const double worst = refnet_worst_tv(5, 10, 4, 17);
    std::ostringstream os;
    os << "defaults burn=" << defaults.n_burn << " keep=" << defaults.n_keep
       << "; oracle tv at paper defaults " << worst << " (relaxed tolerance 0.25)";
    return {default_ok && worst < 0.25, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};

    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        if (!wanted.empty() && !wanted.count(id)) continue;
        const double t0 = now_seconds();
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& err) {
            out = {false, std::string("exception: ") + err.what()};
        }
        const double secs = now_seconds() - t0;
        std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << " — "
                  << out.detail << " [" << secs << "s]" << std::endl;
        failures += out.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
