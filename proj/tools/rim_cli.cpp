// Experiment entry point: task generation, training, evaluation, the ablation
// grid, the tabular Gibbs pipeline, oracle checks, and report emission.
// Exit codes: 0 success, 1 runtime failure, 2 invalid input.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rim/metrics.hpp"
#include "rim/rim_loop.hpp"
#include "rim/rng.hpp"
#include "rim/tabrim.hpp"
#include "rim/tasks.hpp"
#include "rim/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitInvalid = 2;

std::string artifact_root() {
    const char* env = std::getenv("RIM_ARTIFACT_DIR");
    return env && *env ? std::string(env) : std::string(".");
}

std::string iso_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

// Written on scope exit so a manifest exists even when the command fails.
class RunManifest {
public:
    RunManifest(std::string command, std::string name)
        : path_(fs::path(artifact_root()) / (name + ".manifest.json")) {
        fs::create_directories(path_.parent_path());
        doc_["command"] = std::move(command);
        doc_["start"] = iso_now();
        doc_["artifacts"] = json::array();
        doc_["inputs"] = json::object();
        doc_["exit_code"] = kExitRuntime;  // overwritten on success
    }

    ~RunManifest() { write(); }

    json& config() { return doc_["config"]; }
    void artifact(const std::string& p) { doc_["artifacts"].push_back(p); }
    void input(const std::string& p) {
        doc_["inputs"][p] = std::to_string(hash_file(p));
    }
    void seed(std::uint64_t s) { doc_["seed"] = s; }
    void result(const json& r) { doc_["result"] = r; }

    void finish(int code) {
        doc_["exit_code"] = code;
        write();
    }

    std::string path() const { return path_.string(); }

private:
    void write() {
        doc_["end"] = iso_now();
        std::ofstream out(path_);
        out << doc_.dump(2) << '\n';
    }

    fs::path path_;
    json doc_;
};

// ---- shared experiment configuration -------------------------------------

struct ExperimentConfig {
    std::string task = "sudoku4";
    std::string train_file, test_file;
    int train_count = 800, test_count = 500;
    int givens = 8;  // sudoku only
    int T = 3, N = 2, d = 128, depth = 2, heads = 4, mlp_expand = 2;
    std::string backbone = "mixer";
    std::string mode = "shared";
    std::string reweighter = "identity";
    std::string scope = "both";
    double alpha_l = 0.5, alpha_h = 0.5;
    int lookback = -1;  // -1: max(T, N)
    int segments = 4;
    bool supervise_all_outer = false;
    int epochs = 20, batch = 32;
    double lr = 1e-3, wd = 0.01, clip = 1.0, max_seconds = 0.0, lr_final_frac = 1.0;
    int eval_cadence = 1;
    std::uint64_t seed = 0;

    json to_json() const {
        return {{"task", task},        {"train_file", train_file},
                {"test_file", test_file}, {"train_count", train_count},
                {"test_count", test_count}, {"givens", givens},
                {"T", T},             {"N", N},
                {"d", d},             {"depth", depth},
                {"heads", heads},     {"mlp_expand", mlp_expand},
                {"backbone", backbone}, {"mode", mode},
                {"reweighter", reweighter}, {"scope", scope},
                {"alpha_l", alpha_l}, {"alpha_h", alpha_h},
                {"lookback", lookback}, {"segments", segments},
                {"supervise_all_outer", supervise_all_outer},
                {"epochs", epochs},   {"batch", batch},
                {"lr", lr},           {"wd", wd},
                {"clip", clip},       {"max_seconds", max_seconds},
                {"lr_final_frac", lr_final_frac},
                {"eval_cadence", eval_cadence}, {"seed", seed}};
    }
};

// Registers every experiment flag on a subcommand and remembers the mapping so
// config-file values can fill in whatever the command line left untouched.
struct ConfigBinding {
    std::vector<std::pair<std::string, std::function<void(const json&)>>> appliers;

    void bind(CLI::App* sub, ExperimentConfig& c) {
        auto opt = [&](const std::string& flag, auto& field, const std::string& help,
                       const std::string& key) {
            sub->add_option(flag, field, help);
            appliers.emplace_back(flag, [&field, key](const json& j) {
                if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
            });
        };
        opt("--task", c.task, "task name: sudoku4|sudoku6|sudoku9|maze9|maze11", "task");
        opt("--train-file", c.train_file, "pre-generated training dataset", "train_file");
        opt("--test-file", c.test_file, "pre-generated test dataset", "test_file");
        opt("--train-count", c.train_count, "instances to generate for training", "train_count");
        opt("--test-count", c.test_count, "instances to generate for testing", "test_count");
        opt("--givens", c.givens, "sudoku givens per puzzle", "givens");
        opt("--T", c.T, "inner solver steps", "T");
        opt("--N", c.N, "outer generator steps", "N");
        opt("--d", c.d, "hidden width", "d");
        opt("--depth", c.depth, "backbone blocks", "depth");
        opt("--heads", c.heads, "attention heads", "heads");
        opt("--mlp-expand", c.mlp_expand, "channel MLP expansion", "mlp_expand");
        opt("--backbone", c.backbone, "mixer|attention", "backbone");
        opt("--mode", c.mode, "shared|decoupled backbones", "mode");
        opt("--reweighter", c.reweighter,
            "identity|ema_fixed|ema_learnable_scalar|ema_gated|transformer", "reweighter");
        opt("--scope", c.scope, "both|solver_only|generator_only", "scope");
        opt("--alpha-l", c.alpha_l, "fixed alpha, solver stream", "alpha_l");
        opt("--alpha-h", c.alpha_h, "fixed alpha, generator stream", "alpha_h");
        opt("--lookback", c.lookback, "transformer lookback k, -1 for max(T,N)", "lookback");
        opt("--segments", c.segments, "deep supervision segments", "segments");
        opt("--epochs", c.epochs, "training epochs", "epochs");
        opt("--batch", c.batch, "batch size", "batch");
        opt("--lr", c.lr, "learning rate", "lr");
        opt("--wd", c.wd, "weight decay", "wd");
        opt("--clip", c.clip, "gradient clip norm", "clip");
        opt("--max-seconds", c.max_seconds, "wall clock budget, 0 = none", "max_seconds");
        opt("--lr-final-frac", c.lr_final_frac,
            "lr anneals linearly to lr * frac over the budget", "lr_final_frac");
        opt("--eval-cadence", c.eval_cadence, "epochs between evals", "eval_cadence");
        opt("--seed", c.seed, "master seed", "seed");
        sub->add_flag("--supervise-all-outer", c.supervise_all_outer,
                      "apply the loss to every outer solution");
        appliers.emplace_back("--supervise-all-outer", [&c](const json& j) {
            if (j.contains("supervise_all_outer"))
                c.supervise_all_outer = j.at("supervise_all_outer").get<bool>();
        });
    }

    // file values fill only fields the command line did not set
    void apply_file(CLI::App* sub, const std::string& path) {
        std::ifstream in(path);
        rim::check(in.good(), "cannot open config file: " + path);
        json j = json::parse(in, nullptr, /*allow_exceptions=*/true);
        if (j.contains("config")) j = j.at("config");  // accept a manifest directly
        for (auto& [flag, apply] : appliers)
            if (sub->count(flag) == 0) apply(j);
    }
};

struct TaskShape {
    int seq_len, vocab;
};

TaskShape task_shape(const std::string& task) {
    if (task.rfind("sudoku", 0) == 0) {
        const int size = std::stoi(task.substr(6));
        (void)rim::sudoku::geometry(size);
        return {size * size, size + 1};
    }
    if (task.rfind("maze", 0) == 0) {
        const int size = std::stoi(task.substr(4));
        rim::check(size >= 9 && size % 2 == 1, "maze size must be odd and >= 9");
        return {size * size, 5};
    }
    throw std::invalid_argument("unknown task: " + task);
}

rim::PuzzleDataset load_or_generate(const ExperimentConfig& c, RunManifest& manifest) {
    rim::PuzzleDataset ds;
    if (!c.train_file.empty() || !c.test_file.empty()) {
        rim::check(!c.train_file.empty() && !c.test_file.empty(),
                   "provide both --train-file and --test-file or neither");
        rim::check(fs::exists(c.train_file), "missing dataset path: " + c.train_file);
        rim::check(fs::exists(c.test_file), "missing dataset path: " + c.test_file);
        manifest.input(c.train_file);
        manifest.input(c.test_file);
        ds.train = rim::load_puzzles(c.train_file);
        ds.test = rim::load_puzzles(c.test_file);
        return ds;
    }
    if (c.task.rfind("sudoku", 0) == 0) {
        const int size = std::stoi(c.task.substr(6));
        const int givens = c.givens;
        return rim::gen_split(c.train_count, c.test_count, c.seed,
                              [size, givens](std::uint64_t s) {
                                  return rim::gen_sudoku(size, givens, s);
                              });
    }
    const int size = std::stoi(c.task.substr(4));
    return rim::gen_split(c.train_count, c.test_count, c.seed,
                          [size](std::uint64_t s) { return rim::gen_maze(size, s); });
}

template <typename S>
std::unique_ptr<rim::RimModel<S>> build_model(const ExperimentConfig& c, const TaskShape& shape) {
    rim::RimConfig rc;
    rc.T = c.T;
    rc.N = c.N;
    rc.d = c.d;
    rc.seq_len = shape.seq_len;
    rc.reweighter_kind = rim::reweighter_kind_from(c.reweighter);
    rc.reweighter_scope = rim::scope_from(c.scope);
    rc.alpha_L = c.alpha_l;
    rc.alpha_H = c.alpha_h;
    rc.lookback = c.lookback < 0 ? std::max(c.T, c.N) : c.lookback;
    rc.backbone_mode = [&] {
        if (c.mode == "shared") return rim::BackboneMode::shared;
        if (c.mode == "decoupled") return rim::BackboneMode::decoupled;
        throw std::invalid_argument("--mode must be shared or decoupled, got " + c.mode);
    }();
    rc.supervision_segments = c.segments;
    rc.validate();

    rim::BackboneConfig bc;
    bc.kind = [&] {
        if (c.backbone == "mixer") return rim::BackboneKind::mlp_mixer;
        if (c.backbone == "attention") return rim::BackboneKind::attention;
        throw std::invalid_argument("--backbone must be mixer or attention, got " + c.backbone);
    }();
    bc.depth = c.depth;
    bc.d = c.d;
    bc.vocab = shape.vocab;
    bc.seq_len = shape.seq_len;
    bc.heads = c.heads;
    bc.mlp_expand = c.mlp_expand;
    return std::make_unique<rim::RimModel<S>>(rc, bc, c.seed);
}

rim::TrainConfig train_config(const ExperimentConfig& c) {
    rim::TrainConfig tc;
    tc.epochs = c.epochs;
    tc.batch_size = c.batch;
    tc.learning_rate = c.lr;
    tc.weight_decay = c.wd;
    tc.clip_norm = c.clip;
    tc.seed = c.seed;
    tc.eval_cadence = c.eval_cadence;
    tc.max_seconds = c.max_seconds;
    tc.lr_final_frac = c.lr_final_frac;
    tc.supervise_all_outer = c.supervise_all_outer;
    tc.validate();
    return tc;
}

// ---- gen-task -------------------------------------------------------------

int cmd_gen_task(const std::string& task, int count, int test_count, std::uint64_t seed,
                 int givens, int features, double flip_q, double corrupt_p,
                 const std::string& out_prefix) {
    RunManifest manifest("gen-task", out_prefix + ".gen-task");
    manifest.seed(seed);
    manifest.config() = {{"task", task},       {"count", count},   {"test_count", test_count},
                         {"givens", givens},   {"features", features},
                         {"flip_q", flip_q},   {"corrupt_p", corrupt_p},
                         {"out", out_prefix}};
    if (task == "tabular") {
        auto t = rim::gen_tabular(features, count, test_count, flip_q, seed);
        t = rim::corrupt_features(t, corrupt_p, seed);
        auto write_csv = [&](const std::string& path, const std::vector<std::vector<int>>& X,
                             const std::vector<int>& y) {
            std::ofstream out(path);
            rim::check(out.good(), "cannot write " + path);
            out << "#";
            for (int f = 0; f < t.n_features(); ++f) out << " f" << f << ":cat";
            out << " y:cat\n";
            for (size_t r = 0; r < X.size(); ++r) {
                for (int v : X[r]) out << v << ',';
                out << y[r] << '\n';
            }
            manifest.artifact(path);
        };
        write_csv(out_prefix + ".train.csv", t.train_x, t.train_y);
        write_csv(out_prefix + ".test.csv", t.test_x, t.test_y);
    } else {
        ExperimentConfig c;
        c.task = task;
        c.train_count = count;
        c.test_count = test_count;
        c.seed = seed;
        c.givens = givens;
        (void)task_shape(task);
        auto ds = load_or_generate(c, manifest);
        rim::save_puzzles(ds.train, out_prefix + ".train.txt");
        rim::save_puzzles(ds.test, out_prefix + ".test.txt");
        manifest.artifact(out_prefix + ".train.txt");
        manifest.artifact(out_prefix + ".test.txt");
    }
    manifest.finish(0);
    return 0;
}

// ---- train / eval ---------------------------------------------------------

int cmd_train(const ExperimentConfig& c, const std::string& name) {
    RunManifest manifest("train", name);
    manifest.seed(c.seed);
    manifest.config() = c.to_json();
    const auto shape = task_shape(c.task);
    auto ds = load_or_generate(c, manifest);
    auto model = build_model<float>(c, shape);
    std::cout << "model parameters: " << model->params().total_elements() << "\n";
    const std::string ckpt = (fs::path(artifact_root()) / (name + ".ckpt.bin")).string();
    const std::string csv = (fs::path(artifact_root()) / (name + ".metrics.csv")).string();
    auto outcome = rim::train(*model, ds, train_config(c), csv, ckpt);
    manifest.artifact(ckpt);
    manifest.artifact(csv);
    manifest.result({{"exact_match", outcome.final_eval.exact_match},
                     {"per_token_accuracy", outcome.final_eval.per_token_accuracy},
                     {"skipped_batches", outcome.skipped_batches},
                     {"checksum", std::to_string(model->params().checksum())}});
    std::cout << "final exact_match " << outcome.final_eval.exact_match << " per_token "
              << outcome.final_eval.per_token_accuracy << "\n";
    manifest.finish(0);
    return 0;
}

int cmd_eval(const ExperimentConfig& c, const std::string& checkpoint, const std::string& name) {
    RunManifest manifest("eval", name);
    manifest.seed(c.seed);
    manifest.config() = c.to_json();
    rim::check(fs::exists(checkpoint), "missing checkpoint: " + checkpoint);
    manifest.input(checkpoint);
    const auto shape = task_shape(c.task);
    auto ds = load_or_generate(c, manifest);
    auto model = build_model<float>(c, shape);
    model->params().load(checkpoint);
    auto r = rim::evaluate(*model, ds.test);
    manifest.result({{"exact_match", r.exact_match},
                     {"per_token_accuracy", r.per_token_accuracy}});
    std::cout << "exact_match " << r.exact_match << " per_token " << r.per_token_accuracy << "\n";
    manifest.finish(0);
    return 0;
}

// ---- ablate ---------------------------------------------------------------

struct AblationCell {
    std::string name;
    std::function<void(ExperimentConfig&)> apply;
};

// Row order mirrors the reweighting ablation table: identity, the fixed alpha
// grid, learnable scalars, solver-only, generator-only, full gated.
std::vector<AblationCell> default_grid() {
    std::vector<AblationCell> cells;
    cells.push_back({"identity", [](ExperimentConfig& c) { c.reweighter = "identity"; }});
    for (double a : {0.2, 0.4, 0.6, 0.8}) {
        std::ostringstream name;
        name << "fixed_a" << a;
        cells.push_back({name.str(), [a](ExperimentConfig& c) {
                             c.reweighter = "ema_fixed";
                             c.alpha_l = a;
                             c.alpha_h = a;
                         }});
    }
    cells.push_back({"learnable_scalar",
                     [](ExperimentConfig& c) { c.reweighter = "ema_learnable_scalar"; }});
    cells.push_back({"gated_solver_only", [](ExperimentConfig& c) {
                         c.reweighter = "ema_gated";
                         c.scope = "solver_only";
                     }});
    cells.push_back({"gated_generator_only", [](ExperimentConfig& c) {
                         c.reweighter = "ema_gated";
                         c.scope = "generator_only";
                     }});
    cells.push_back({"gated_full", [](ExperimentConfig& c) { c.reweighter = "ema_gated"; }});
    return cells;
}

int cmd_ablate(const ExperimentConfig& base, int n_seeds, const std::vector<std::string>& only,
               const std::string& name) {
    RunManifest manifest("ablate", name);
    manifest.seed(base.seed);
    manifest.config() = base.to_json();
    manifest.config()["n_seeds"] = n_seeds;
    auto grid = default_grid();
    if (!only.empty()) {
        std::vector<AblationCell> chosen;
        for (const auto& want : only) {
            bool found = false;
            for (auto& cell : grid)
                if (cell.name == want) {
                    chosen.push_back(cell);
                    found = true;
                }
            rim::check(found, "unknown ablation cell: " + want);
        }
        grid = std::move(chosen);
    }

    const std::string runs_path = (fs::path(artifact_root()) / (name + ".runs.csv")).string();
    const std::string summary_path =
        (fs::path(artifact_root()) / (name + ".summary.csv")).string();
    std::ofstream runs(runs_path);
    runs << "cell,seed,exact_match,per_token,wall_seconds,status\n";
    std::ofstream summary(summary_path);
    summary << "cell,mean_exact_match,stddev,n,status\n";

    for (const auto& cell : grid) {
        std::vector<double> scores;
        bool failed = false;
        for (int s = 0; s < n_seeds; ++s) {
            ExperimentConfig c = base;
            cell.apply(c);
            c.seed = base.seed + static_cast<std::uint64_t>(s);
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto shape = task_shape(c.task);
                auto ds = load_or_generate(c, manifest);
                auto model = build_model<float>(c, shape);
                auto outcome = rim::train(*model, ds, train_config(c));
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                runs << cell.name << ',' << c.seed << ',' << outcome.final_eval.exact_match << ','
                     << outcome.final_eval.per_token_accuracy << ',' << secs << ",ok\n"
                     << std::flush;
                scores.push_back(outcome.final_eval.exact_match);
            } catch (const std::exception& err) {
                failed = true;
                runs << cell.name << ',' << c.seed << ",nan,nan,nan,failed\n" << std::flush;
                std::cerr << "cell " << cell.name << " seed " << c.seed << " failed: "
                          << err.what() << "\n";
            }
        }
        double mean = std::nan(""), sd = std::nan("");
        if (!scores.empty()) {
            mean = 0;
            for (double v : scores) mean += v;
            mean /= static_cast<double>(scores.size());
            sd = 0;
            for (double v : scores) sd += (v - mean) * (v - mean);
            sd = scores.size() > 1 ? std::sqrt(sd / static_cast<double>(scores.size() - 1)) : 0.0;
        }
        summary << cell.name << ',' << mean << ',' << sd << ',' << scores.size() << ','
                << (failed ? "failed" : "ok") << '\n'
                << std::flush;
        std::cout << cell.name << " mean " << mean << " stddev " << sd << "\n";
    }
    manifest.artifact(runs_path);
    manifest.artifact(summary_path);
    manifest.finish(0);
    return 0;
}

// ---- tabrim ---------------------------------------------------------------

int cmd_tabrim(const std::string& train_csv, const std::string& test_csv, double eps,
               double corruption_rate, int burn, int keep, int chains, const std::string& mode,
               int k, double lambda, bool unweighted, const std::string& out,
               std::uint64_t seed, const std::string& name) {
    RunManifest manifest("tabrim", name);
    manifest.seed(seed);
    manifest.config() = {{"train", train_csv}, {"test", test_csv},     {"eps", eps},
                         {"corruption_rate", corruption_rate},         {"burn", burn},
                         {"keep", keep},       {"chains", chains},     {"mode", mode},
                         {"k", k},             {"lambda", lambda},
                         {"weighted", !unweighted},                    {"out", out}};
    rim::check(fs::exists(train_csv), "missing dataset path: " + train_csv);
    rim::check(fs::exists(test_csv), "missing dataset path: " + test_csv);
    manifest.input(train_csv);
    manifest.input(test_csv);
    auto task = rim::load_tabular_csv(train_csv, test_csv);

    double e = eps;
    if (e <= 0) {
        // derive the effective mismatch rate from the corruption rate and the
        // mean feature domain size
        rim::check(corruption_rate > 0, "provide --eps or --corruption-rate");
        double dom = 0;
        for (int dsz : task.domain_sizes) dom += dsz;
        dom /= static_cast<double>(task.domain_sizes.size());
        e = rim::EmissionModel::from_corruption_rate(corruption_rate, static_cast<int>(dom + 0.5)).eps;
    }
    rim::EmissionModel emission(e);
    rim::KnnConditional cond(task, k, lambda);
    rim::ChainConfig cc;
    cc.n_burn = burn;
    cc.n_keep = keep;
    cc.joint_y = (mode == "joint");
    rim::check(mode == "joint" || mode == "marginal", "--mode must be joint or marginal");
    cc.validate();

    std::ofstream preds(out);
    rim::check(preds.good(), "cannot write " + out);
    preds << "row,p1,label\n";
    std::vector<double> scores;
    std::vector<int> labels;
    double agreement_tv = 0;
    for (size_t r = 0; r < task.test_x.size(); ++r) {
        std::vector<rim::GibbsChain> per_chain;
        auto p = rim::tabrim_predict(task.test_x[r], cc, cond, emission, chains,
                                     seed + 7919 * r, !unweighted, &per_chain);
        // chain-agreement statistic: max pairwise TV of per-chain estimates
        for (size_t a = 0; a < per_chain.size(); ++a)
            for (size_t b = a + 1; b < per_chain.size(); ++b)
                agreement_tv = std::max(
                    agreement_tv,
                    rim::total_variation(rim::predictive_marginalize(per_chain[a], !unweighted),
                                         rim::predictive_marginalize(per_chain[b], !unweighted)));
        preds << r << ',' << p[1] << ',' << (p[1] >= p[0] ? 1 : 0) << '\n';
        scores.push_back(p[1]);
        labels.push_back(task.test_y[r]);
    }
    manifest.artifact(out);
    json result = {{"eps", e}, {"chain_agreement_tv_max", agreement_tv}};
    bool both_classes = false;
    for (int l : labels) both_classes = both_classes || l != labels.front();
    if (both_classes) {
        result["auc_roc"] = rim::auc_roc(scores, labels);
        result["auc_pr"] = rim::auc_pr(scores, labels);
        std::cout << "auc_roc " << result["auc_roc"] << " auc_pr " << result["auc_pr"] << "\n";
    }
    std::cout << "chain agreement tv (max pairwise) " << agreement_tv << "\n";
    manifest.result(result);
    manifest.finish(0);
    return 0;
}

int cmd_oracle_check(const std::string& fixture, double eps, int burn, int keep, int chains,
                     int n_evidence, double tv_limit, std::uint64_t seed,
                     const std::string& name) {
    RunManifest manifest("oracle-check", name);
    manifest.seed(seed);
    manifest.config() = {{"fixture", fixture}, {"eps", eps},     {"burn", burn},
                         {"keep", keep},       {"chains", chains}, {"n_evidence", n_evidence},
                         {"tv_limit", tv_limit}};
    rim::check(fs::exists(fixture), "missing fixture: " + fixture);
    manifest.input(fixture);
    auto spec = rim::BayesNetSpec::load(fixture);
    rim::ExactCptConditional cond(spec);
    rim::EmissionModel emission(eps);
    rim::ChainConfig cc;
    cc.n_burn = burn;
    cc.n_keep = keep;
    auto rng = rim::stream(seed, "oracle-evidence");
    double worst = 0;
    for (int i = 0; i < n_evidence; ++i) {
        std::vector<int> e(spec.domain_sizes.size());
        for (size_t f = 0; f < e.size(); ++f)
            e[f] = std::uniform_int_distribution<int>(0, spec.domain_sizes[f] - 1)(rng);
        auto approx = rim::tabrim_predict(e, cc, cond, emission, chains,
                                          seed + 31 * static_cast<std::uint64_t>(i) + 1);
        auto exact = rim::brute_force_posterior(e, spec, emission);
        worst = std::max(worst, rim::total_variation(approx, exact));
    }
    std::cout << "max tv over " << n_evidence << " evidence vectors: " << worst
              << " (limit " << tv_limit << ")\n";
    manifest.result({{"max_tv", worst}, {"pass", worst < tv_limit}});
    const int code = worst < tv_limit ? 0 : kExitRuntime;
    manifest.finish(code);
    return code;
}

// ---- report ---------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream in(path);
    rim::check(in.good(), "cannot open csv: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(cell);
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::invalid_argument(path + ": malformed csv at line " +
                                        std::to_string(lineno));
        rows.push_back(std::move(row));
    }
    rim::check(rows.size() >= 2, path + ": csv has no data rows");
    return rows;
}

double parse_cell(const std::string& s, const std::string& path, size_t lineno) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw std::invalid_argument(path + ": malformed csv at line " + std::to_string(lineno));
    }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& name) {
    RunManifest manifest("report", name);
    manifest.config() = {{"inputs", inputs}};
    const std::string summary_path =
        (fs::path(artifact_root()) / (name + ".report.csv")).string();
    const std::string curves_path =
        (fs::path(artifact_root()) / (name + ".curves.csv")).string();
    std::ofstream curves(curves_path);
    curves << "run,epoch,loss,exact_match\n";

    struct Row {
        std::string run;
        double final_exact, final_loss, seconds;
    };
    std::vector<Row> summary_rows;
    std::vector<std::string> ablation_lines;

    for (const auto& path : inputs) {
        rim::check(fs::exists(path), "missing input: " + path);
        manifest.input(path);
        auto rows = read_csv(path);
        const auto& header = rows.front();
        if (header.size() >= 2 && header[0] == "cell" && header[1] == "seed") {
            // ablation runs table: regroup per cell
            std::map<std::string, std::vector<double>> cells;
            std::vector<std::string> order;
            for (size_t i = 1; i < rows.size(); ++i) {
                if (!cells.count(rows[i][0])) order.push_back(rows[i][0]);
                if (rows[i].back() == "ok")
                    cells[rows[i][0]].push_back(parse_cell(rows[i][2], path, i + 1));
                else
                    cells[rows[i][0]];
            }
            for (const auto& cell : order) {
                const auto& v = cells[cell];
                double mean = std::nan(""), sd = std::nan("");
                if (!v.empty()) {
                    mean = 0;
                    for (double x : v) mean += x;
                    mean /= static_cast<double>(v.size());
                    sd = 0;
                    for (double x : v) sd += (x - mean) * (x - mean);
                    sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
                }
                std::ostringstream os;
                os << cell << ',' << mean << ',' << sd << ',' << v.size();
                ablation_lines.push_back(os.str());
            }
        } else if (header.size() == 5 && header[0] == "epoch") {
            for (size_t i = 1; i < rows.size(); ++i) {
                curves << path << ',' << rows[i][0] << ',' << rows[i][2] << ',' << rows[i][3]
                       << '\n';
            }
            const auto& last = rows.back();
            summary_rows.push_back({path, parse_cell(last[3], path, rows.size()),
                                    parse_cell(last[2], path, rows.size()),
                                    parse_cell(last[4], path, rows.size())});
        } else {
            throw std::invalid_argument(path + ": malformed csv at line 1");
        }
    }

    std::sort(summary_rows.begin(), summary_rows.end(),
              [](const Row& a, const Row& b) { return a.final_exact > b.final_exact; });
    std::ofstream summary(summary_path);
    summary << "run,final_exact_match,final_loss,wall_seconds\n";
    std::cout << "run,final_exact_match,final_loss,wall_seconds\n";
    for (const auto& r : summary_rows) {
        summary << r.run << ',' << r.final_exact << ',' << r.final_loss << ',' << r.seconds
                << '\n';
        std::cout << r.run << ',' << r.final_exact << ',' << r.final_loss << ',' << r.seconds
                  << "\n";
    }
    if (!ablation_lines.empty()) {
        summary << "cell,mean_exact_match,stddev,n\n";
        std::cout << "cell,mean_exact_match,stddev,n\n";
        for (const auto& l : ablation_lines) {
            summary << l << '\n';
            std::cout << l << "\n";
        }
    }
    manifest.artifact(summary_path);
    manifest.artifact(curves_path);
    manifest.finish(0);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"recursive inference machine experiment runner"};
    app.require_subcommand(1);

    // gen-task
    auto* gen = app.add_subcommand("gen-task", "generate a task dataset");
    std::string gen_task_name = "sudoku4", gen_out = "task";
    int gen_count = 800, gen_test = 500, gen_givens = 8, gen_features = 8;
    double gen_flip = 0.2, gen_corrupt = 0.25;
    std::uint64_t gen_seed = 0;
    gen->add_option("--task", gen_task_name, "sudoku4|sudoku6|sudoku9|maze9|...|tabular");
    gen->add_option("--count", gen_count, "training instances");
    gen->add_option("--test-count", gen_test, "test instances");
    gen->add_option("--seed", gen_seed, "master seed");
    gen->add_option("--givens", gen_givens, "sudoku givens");
    gen->add_option("--features", gen_features, "tabular feature count");
    gen->add_option("--flip-q", gen_flip, "tabular label-flip probability");
    gen->add_option("--corrupt-p", gen_corrupt, "tabular corruption rate");
    gen->add_option("--out", gen_out, "output path prefix");

    // train
    auto* tr = app.add_subcommand("train", "train one model");
    ExperimentConfig tr_cfg;
    ConfigBinding tr_bind;
    tr_bind.bind(tr, tr_cfg);
    std::string tr_config_file, tr_name = "run";
    tr->add_option("--config", tr_config_file, "json config file; flags take precedence");
    tr->add_option("--name", tr_name, "artifact base name");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ExperimentConfig ev_cfg;
    ConfigBinding ev_bind;
    ev_bind.bind(ev, ev_cfg);
    std::string ev_config_file, ev_name = "eval", ev_ckpt;
    ev->add_option("--config", ev_config_file, "json config file; flags take precedence");
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--name", ev_name, "artifact base name");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run the reweighter ablation grid");
    ExperimentConfig ab_cfg;
    ConfigBinding ab_bind;
    ab_bind.bind(ab, ab_cfg);
    std::string ab_config_file, ab_name = "ablation";
    int ab_seeds = 3;
    std::vector<std::string> ab_cells;
    ab->add_option("--config", ab_config_file, "json config file; flags take precedence");
    ab->add_option("--seeds", ab_seeds, "seeds per cell");
    ab->add_option("--cells", ab_cells, "subset of grid cells to run");
    ab->add_option("--name", ab_name, "artifact base name");

    // tabrim
    auto* tb = app.add_subcommand("tabrim", "gibbs pipeline over a tabular task");
    std::string tb_train, tb_test, tb_mode = "joint", tb_out = "preds.csv", tb_name = "tabrim";
    double tb_eps = 0, tb_rate = 0, tb_lambda = 1.0;
    int tb_burn = 5, tb_keep = 10, tb_chains = 4, tb_k = 16;
    bool tb_unweighted = false;
    std::uint64_t tb_seed = 0;
    tb->add_option("--train", tb_train, "training csv")->required();
    tb->add_option("--test", tb_test, "noisy test csv")->required();
    tb->add_option("--eps", tb_eps, "emission mismatch rate");
    tb->add_option("--corruption-rate", tb_rate, "derive eps from this corruption rate");
    tb->add_option("--burn", tb_burn, "burn-in sweeps");
    tb->add_option("--keep", tb_keep, "retained sweeps");
    tb->add_option("--chains", tb_chains, "independent chains");
    tb->add_option("--mode", tb_mode, "joint|marginal");
    tb->add_option("--k", tb_k, "knn neighborhood size");
    tb->add_option("--lambda", tb_lambda, "laplace smoothing");
    tb->add_flag("--unweighted", tb_unweighted, "plain sample mean instead of emission weights");
    tb->add_option("--out", tb_out, "predictions csv");
    tb->add_option("--seed", tb_seed, "master seed");
    tb->add_option("--name", tb_name, "artifact base name");

    // oracle-check
    auto* oc = app.add_subcommand("oracle-check", "compare tabrim against exact enumeration");
    std::string oc_fixture, oc_name = "oracle-check";
    double oc_eps = 0.2, oc_tv = 0.05;
    int oc_burn = 500, oc_keep = 2000, oc_chains = 4, oc_evidence = 20;
    std::uint64_t oc_seed = 0;
    oc->add_option("--fixture", oc_fixture, "frozen reference net json")->required();
    oc->add_option("--eps", oc_eps, "emission mismatch rate");
    oc->add_option("--burn", oc_burn, "burn-in sweeps");
    oc->add_option("--keep", oc_keep, "retained sweeps per chain");
    oc->add_option("--chains", oc_chains, "independent chains");
    oc->add_option("--evidence", oc_evidence, "random evidence vectors");
    oc->add_option("--tv", oc_tv, "total variation limit");
    oc->add_option("--seed", oc_seed, "master seed");
    oc->add_option("--name", oc_name, "artifact base name");

    // report
    auto* rp = app.add_subcommand("report", "summarize metrics csvs");
    std::vector<std::string> rp_inputs;
    std::string rp_name = "report";
    rp->add_option("--inputs", rp_inputs, "metrics or ablation run csvs")->required();
    rp->add_option("--name", rp_name, "artifact base name");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitInvalid;
    }

    try {
        if (*gen)
            return cmd_gen_task(gen_task_name, gen_count, gen_test, gen_seed, gen_givens,
                                gen_features, gen_flip, gen_corrupt, gen_out);
        if (*tr) {
            if (!tr_config_file.empty()) tr_bind.apply_file(tr, tr_config_file);
            return cmd_train(tr_cfg, tr_name);
        }
        if (*ev) {
            if (!ev_config_file.empty()) ev_bind.apply_file(ev, ev_config_file);
            return cmd_eval(ev_cfg, ev_ckpt, ev_name);
        }
        if (*ab) {
            if (!ab_config_file.empty()) ab_bind.apply_file(ab, ab_config_file);
            return cmd_ablate(ab_cfg, ab_seeds, ab_cells, ab_name);
        }
        if (*tb)
            return cmd_tabrim(tb_train, tb_test, tb_eps, tb_rate, tb_burn, tb_keep, tb_chains,
                              tb_mode, tb_k, tb_lambda, tb_unweighted, tb_out, tb_seed, tb_name);
        if (*oc)
            return cmd_oracle_check(oc_fixture, oc_eps, oc_burn, oc_keep, oc_chains, oc_evidence,
                                    oc_tv, oc_seed, oc_name);
        if (*rp) return cmd_report(rp_inputs, rp_name);
    } catch (const std::invalid_argument& err) {
        std::cerr << "invalid input: " << err.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitInvalid;
}
