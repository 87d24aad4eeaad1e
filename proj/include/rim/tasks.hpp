#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rim/rng.hpp"
#include "rim/tensor.hpp"

namespace rim {

// Discrete task instance: input tokens and target tokens over a fixed grid.
struct PuzzleInstance {
    std::string task;
    int rows = 0, cols = 0;
    int vocab = 0;
    std::vector<int> input;
    std::vector<int> target;
};

// ---- Sudoku --------------------------------------------------------------

namespace sudoku {

struct Geometry {
    int size, box_h, box_w;
};

inline Geometry geometry(int size) {
    switch (size) {
        case 4: return {4, 2, 2};
        case 6: return {6, 2, 3};
        case 9: return {9, 3, 3};
        default: throw std::invalid_argument("sudoku size must be 4, 6, or 9");
    }
}

inline bool placement_ok(const std::vector<int>& g, const Geometry& geo, int r, int c, int v) {
    const int n = geo.size;
    for (int i = 0; i < n; ++i)
        if (g[r * n + i] == v || g[i * n + c] == v) return false;
    const int br = (r / geo.box_h) * geo.box_h, bc = (c / geo.box_w) * geo.box_w;
    for (int i = 0; i < geo.box_h; ++i)
        for (int j = 0; j < geo.box_w; ++j)
            if (g[(br + i) * n + bc + j] == v) return false;
    return true;
}

// Exhaustive backtracking; stops once `limit` solutions are found.
inline int count_solutions(std::vector<int>& g, const Geometry& geo, int limit, int cell = 0) {
    const int n = geo.size;
    while (cell < n * n && g[cell] != 0) ++cell;
    if (cell == n * n) return 1;
    int found = 0;
    const int r = cell / n, c = cell % n;
    for (int v = 1; v <= n; ++v) {
        if (placement_ok(g, geo, r, c, v)) {
            g[cell] = v;
            found += count_solutions(g, geo, limit - found, cell + 1);
            g[cell] = 0;
            if (found >= limit) break;
        }
    }
    return found;
}

inline bool fill_grid(std::vector<int>& g, const Geometry& geo, std::mt19937_64& rng, int cell = 0) {
    const int n = geo.size;
    while (cell < n * n && g[cell] != 0) ++cell;
    if (cell == n * n) return true;
    std::vector<int> vals(static_cast<size_t>(n));
    std::iota(vals.begin(), vals.end(), 1);
    std::shuffle(vals.begin(), vals.end(), rng);
    const int r = cell / n, c = cell % n;
    for (int v : vals) {
        if (placement_ok(g, geo, r, c, v)) {
            g[cell] = v;
            if (fill_grid(g, geo, rng, cell + 1)) return true;
            g[cell] = 0;
        }
    }
    return false;
}

}  // namespace sudoku

// Generates a puzzle whose input admits exactly one solution, verified by the
// exhaustive solution counter. Cells are blanked in random order, skipping
// removals that break uniqueness, until n_givens remain (or no removal is
// possible).
inline PuzzleInstance gen_sudoku(int size, int n_givens, std::uint64_t seed) {
    const auto geo = sudoku::geometry(size);
    const int cells = size * size;
    check(n_givens >= 0 && n_givens <= cells, "gen_sudoku: n_givens out of range");
    auto rng = stream(seed, "sudoku");
    for (int attempt = 0; attempt < 50; ++attempt) {
        std::vector<int> full(static_cast<size_t>(cells), 0);
        if (!sudoku::fill_grid(full, geo, rng)) continue;
        std::vector<int> puzzle = full;
        std::vector<int> order(static_cast<size_t>(cells));
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        int givens = cells;
        for (int cell : order) {
            if (givens <= n_givens) break;
            const int saved = puzzle[cell];
            puzzle[cell] = 0;
            std::vector<int> probe = puzzle;
            if (sudoku::count_solutions(probe, geo, 2) == 1) {
                --givens;
            } else {
                puzzle[cell] = saved;
            }
        }
        if (givens == n_givens) {
            PuzzleInstance inst;
            inst.task = "sudoku" + std::to_string(size);
            inst.rows = inst.cols = size;
            inst.vocab = size + 1;
            inst.input = std::move(puzzle);
            inst.target = std::move(full);
            return inst;
        }
    }
    throw std::runtime_error("gen_sudoku: uniqueness unreachable with " + std::to_string(n_givens) +
                             " givens after bounded retries");
}

// ---- Maze ----------------------------------------------------------------

enum MazeToken { MAZE_WALL = 0, MAZE_FREE = 1, MAZE_START = 2, MAZE_GOAL = 3, MAZE_PATH = 4 };

// Fixed neighbor order N, E, S, W: both the BFS tie-break and carve order base.
inline constexpr std::array<std::pair<int, int>, 4> kMazeDirs{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

// Shortest start->goal distance and the BFS-canonical path (parent pointers
// assigned in N,E,S,W expansion order).
inline std::vector<int> bfs_shortest_path(const std::vector<int>& grid, int n, int start, int goal) {
    std::vector<int> parent(grid.size(), -2);
    std::deque<int> q;
    q.push_back(start);
    parent[static_cast<size_t>(start)] = -1;
    while (!q.empty()) {
        int cur = q.front();
        q.pop_front();
        if (cur == goal) break;
        const int r = cur / n, c = cur % n;
        for (const auto& [dr, dc] : kMazeDirs) {
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= n || nc < 0 || nc >= n) continue;
            const int nxt = nr * n + nc;
            if (grid[static_cast<size_t>(nxt)] == MAZE_WALL) continue;
            if (parent[static_cast<size_t>(nxt)] != -2) continue;
            parent[static_cast<size_t>(nxt)] = cur;
            q.push_back(nxt);
        }
    }
    check(parent[static_cast<size_t>(goal)] != -2, "maze: goal unreachable");
    std::vector<int> path;
    for (int cur = goal; cur != -1; cur = parent[static_cast<size_t>(cur)]) path.push_back(cur);
    std::reverse(path.begin(), path.end());
    return path;
}

// Recursive-backtracker carve over the odd lattice; connected by construction.
inline PuzzleInstance gen_maze(int size, std::uint64_t seed) {
    check(size >= 9 && size % 2 == 1, "gen_maze: size must be odd and >= 9");
    auto rng = stream(seed, "maze");
    std::vector<int> grid(static_cast<size_t>(size) * size, MAZE_WALL);
    std::vector<int> stack;
    auto cell = [size](int r, int c) { return r * size + c; };
    grid[static_cast<size_t>(cell(1, 1))] = MAZE_FREE;
    stack.push_back(cell(1, 1));
    while (!stack.empty()) {
        const int cur = stack.back();
        const int r = cur / size, c = cur % size;
        std::vector<int> options;
        for (int k = 0; k < 4; ++k) {
            const int nr = r + 2 * kMazeDirs[static_cast<size_t>(k)].first;
            const int nc = c + 2 * kMazeDirs[static_cast<size_t>(k)].second;
            if (nr >= 1 && nr < size - 1 && nc >= 1 && nc < size - 1 &&
                grid[static_cast<size_t>(cell(nr, nc))] == MAZE_WALL)
                options.push_back(k);
        }
        if (options.empty()) {
            stack.pop_back();
            continue;
        }
        const int k = options[std::uniform_int_distribution<size_t>(0, options.size() - 1)(rng)];
        const int mr = r + kMazeDirs[static_cast<size_t>(k)].first;
        const int mc = c + kMazeDirs[static_cast<size_t>(k)].second;
        const int nr = r + 2 * kMazeDirs[static_cast<size_t>(k)].first;
        const int nc = c + 2 * kMazeDirs[static_cast<size_t>(k)].second;
        grid[static_cast<size_t>(cell(mr, mc))] = MAZE_FREE;
        grid[static_cast<size_t>(cell(nr, nc))] = MAZE_FREE;
        stack.push_back(cell(nr, nc));
    }
    std::vector<int> free_cells;
    for (size_t i = 0; i < grid.size(); ++i)
        if (grid[i] == MAZE_FREE) free_cells.push_back(static_cast<int>(i));
    std::uniform_int_distribution<size_t> pick(0, free_cells.size() - 1);
    const int start = free_cells[pick(rng)];
    const int goal = free_cells[pick(rng)];

    PuzzleInstance inst;
    inst.task = "maze" + std::to_string(size);
    inst.rows = inst.cols = size;
    inst.vocab = 5;
    inst.input = grid;
    inst.input[static_cast<size_t>(start)] = MAZE_START;
    inst.input[static_cast<size_t>(goal)] = MAZE_GOAL;
    inst.target = inst.input;
    for (int p : bfs_shortest_path(inst.input, size, start, goal))
        inst.target[static_cast<size_t>(p)] = MAZE_PATH;
    return inst;
}

// ---- dataset files -------------------------------------------------------

// Header line with task/shape/vocab, then one instance per line:
// input tokens, '|', target tokens, space-separated.
inline void save_puzzles(const std::vector<PuzzleInstance>& data, const std::string& path) {
    check(!data.empty(), "save_puzzles: empty dataset");
    std::ofstream out(path);
    check(out.good(), "cannot open dataset for writing: " + path);
    const auto& h = data.front();
    out << h.task << ' ' << h.rows << ' ' << h.cols << ' ' << h.vocab << ' ' << data.size() << '\n';
    for (const auto& inst : data) {
        for (size_t i = 0; i < inst.input.size(); ++i) out << inst.input[i] << ' ';
        out << '|';
        for (size_t i = 0; i < inst.target.size(); ++i) out << ' ' << inst.target[i];
        out << '\n';
    }
    check(out.good(), "dataset write failed: " + path);
}

inline std::vector<PuzzleInstance> load_puzzles(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "cannot open dataset: " + path);
    std::string task;
    int rows, cols, vocab;
    size_t count;
    in >> task >> rows >> cols >> vocab >> count;
    check(in.good(), "malformed dataset header: " + path);
    std::vector<PuzzleInstance> data;
    data.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        PuzzleInstance inst;
        inst.task = task;
        inst.rows = rows;
        inst.cols = cols;
        inst.vocab = vocab;
        const int cells = rows * cols;
        inst.input.resize(static_cast<size_t>(cells));
        inst.target.resize(static_cast<size_t>(cells));
        for (int& t : inst.input) in >> t;
        std::string sep;
        in >> sep;
        check(sep == "|", "malformed dataset line " + std::to_string(i + 2));
        for (int& t : inst.target) in >> t;
        check(!in.fail(), "truncated dataset at instance " + std::to_string(i));
        data.push_back(std::move(inst));
    }
    return data;
}

inline std::uint64_t instance_hash(const PuzzleInstance& inst) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](int v) {
        h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull;
        h *= 1099511628211ull;
    };
    for (int v : inst.input) mix(v);
    for (int v : inst.target) mix(v);
    return h;
}

// Deterministic disjoint train/test generation: instances are deduplicated by
// hash across both splits.
struct PuzzleDataset {
    std::vector<PuzzleInstance> train, test;
};

template <typename Gen>
PuzzleDataset gen_split(int n_train, int n_test, std::uint64_t seed, Gen gen_one) {
    PuzzleDataset ds;
    std::set<std::uint64_t> seen;
    std::uint64_t sub = 0;
    auto take = [&](std::vector<PuzzleInstance>& out, int n) {
        while (static_cast<int>(out.size()) < n) {
            PuzzleInstance inst = gen_one(splitmix64(seed + 0x517cc1b727220a95ull * ++sub));
            if (seen.insert(instance_hash(inst)).second) out.push_back(std::move(inst));
        }
    };
    take(ds.train, n_train);
    take(ds.test, n_test);
    return ds;
}

// ---- tabular -------------------------------------------------------------

// Discrete feature matrix with binary labels. Continuous sources are
// quantile-binned before they reach this form.
struct TabularTask {
    std::vector<std::vector<int>> train_x, test_x;
    std::vector<int> train_y, test_y;
    std::vector<int> domain_sizes;  // per feature
    double corruption_rate = 0.0;
    std::vector<std::vector<bool>> corruption_mask;  // test split only
    std::vector<std::vector<int>> clean_test_x;      // oracle evaluation only

    int n_features() const { return static_cast<int>(domain_sizes.size()); }
};

// Synthetic binary task: label ~ Bernoulli(1/2), each feature is a noisy copy
// of the label (flip probability flip_q), so features are redundant votes.
inline TabularTask gen_tabular(int n_features, int n_train, int n_test, double flip_q,
                               std::uint64_t seed) {
    auto rng = stream(seed, "tabular");
    std::bernoulli_distribution label(0.5);
    std::bernoulli_distribution flip(flip_q);
    TabularTask task;
    task.domain_sizes.assign(static_cast<size_t>(n_features), 2);
    auto draw = [&](std::vector<std::vector<int>>& X, std::vector<int>& y, int n) {
        for (int i = 0; i < n; ++i) {
            const int lab = label(rng) ? 1 : 0;
            std::vector<int> row(static_cast<size_t>(n_features));
            for (int& v : row) v = flip(rng) ? 1 - lab : lab;
            X.push_back(std::move(row));
            y.push_back(lab);
        }
    };
    draw(task.train_x, task.train_y, n_train);
    draw(task.test_x, task.test_y, n_test);
    return task;
}

// Replaces exactly round(p * #cells) test-split cells with values drawn
// uniformly from the feature's observed training domain. The clean values are
// retained for oracle evaluation only.
inline TabularTask corrupt_features(const TabularTask& task, double p, std::uint64_t seed) {
    check(p >= 0.0 && p <= 1.0, "corrupt_features: rate outside [0,1]");
    TabularTask out = task;
    out.clean_test_x = task.test_x;
    out.corruption_rate = p;
    const int n_rows = static_cast<int>(task.test_x.size());
    const int n_feat = task.n_features();
    out.corruption_mask.assign(static_cast<size_t>(n_rows),
                               std::vector<bool>(static_cast<size_t>(n_feat), false));
    const std::int64_t cells = std::int64_t(n_rows) * n_feat;
    const std::int64_t n_corrupt = std::llround(p * static_cast<double>(cells));

    // observed per-feature domains, from the training split
    std::vector<std::vector<int>> observed(static_cast<size_t>(n_feat));
    for (int f = 0; f < n_feat; ++f) {
        std::set<int> vals;
        for (const auto& row : task.train_x) vals.insert(row[static_cast<size_t>(f)]);
        observed[static_cast<size_t>(f)].assign(vals.begin(), vals.end());
    }

    auto rng = stream(seed, "corrupt");
    std::vector<std::int64_t> order(static_cast<size_t>(cells));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t i = 0; i < n_corrupt; ++i) {
        const std::int64_t cell = order[static_cast<size_t>(i)];
        const int r = static_cast<int>(cell / n_feat), f = static_cast<int>(cell % n_feat);
        const auto& dom = observed[static_cast<size_t>(f)];
        std::uniform_int_distribution<size_t> pick(0, dom.size() - 1);
        out.test_x[static_cast<size_t>(r)][static_cast<size_t>(f)] = dom[pick(rng)];
        out.corruption_mask[static_cast<size_t>(r)][static_cast<size_t>(f)] = true;
    }
    return out;
}

// Quantile-bins a numeric column into at most n_bins discrete values.
inline std::vector<int> quantile_bin(const std::vector<double>& column, int n_bins) {
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int b = 1; b < n_bins; ++b) {
        size_t idx = std::min(sorted.size() - 1, sorted.size() * static_cast<size_t>(b) /
                                                     static_cast<size_t>(n_bins));
        edges.push_back(sorted[idx]);
    }
    std::vector<int> out(column.size());
    for (size_t i = 0; i < column.size(); ++i) {
        int b = 0;
        while (b < static_cast<int>(edges.size()) && column[i] >= edges[static_cast<size_t>(b)]) ++b;
        out[i] = b;
    }
    return out;
}

// CSV with a one-line schema preamble: "# name:type name:type ...", types
// "cat" (integer codes) or "num" (quantile-binned to 8 bins). Last column is
// the binary label.
inline TabularTask load_tabular_csv(const std::string& train_path, const std::string& test_path) {
    auto read_rows = [](const std::string& path, std::vector<std::string>& types) {
        std::ifstream in(path);
        check(in.good(), "cannot open csv: " + path);
        std::string line;
        std::getline(in, line);
        check(!line.empty() && line[0] == '#', "csv missing schema preamble: " + path);
        {
            std::istringstream hs(line.substr(1));
            std::string tok;
            types.clear();
            while (hs >> tok) {
                auto colon = tok.find(':');
                check(colon != std::string::npos, "bad schema entry: " + tok);
                types.push_back(tok.substr(colon + 1));
            }
        }
        std::vector<std::vector<double>> rows;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
            check(row.size() == types.size(), "csv row width mismatch in " + path);
            rows.push_back(std::move(row));
        }
        return rows;
    };
    std::vector<std::string> types, test_types;
    auto train_rows = read_rows(train_path, types);
    auto test_rows = read_rows(test_path, test_types);
    check(types == test_types, "train/test csv schemas differ");
    const int n_cols = static_cast<int>(types.size());
    const int n_feat = n_cols - 1;

    TabularTask task;
    task.domain_sizes.resize(static_cast<size_t>(n_feat));
    const size_t n_train = train_rows.size();
    std::vector<std::vector<int>> all(static_cast<size_t>(train_rows.size() + test_rows.size()),
                                      std::vector<int>(static_cast<size_t>(n_feat)));
    for (int f = 0; f < n_feat; ++f) {
        std::vector<double> col;
        for (const auto& r : train_rows) col.push_back(r[static_cast<size_t>(f)]);
        for (const auto& r : test_rows) col.push_back(r[static_cast<size_t>(f)]);
        std::vector<int> coded;
        if (types[static_cast<size_t>(f)] == "num") {
            coded = quantile_bin(col, 8);
        } else {
            coded.resize(col.size());
            for (size_t i = 0; i < col.size(); ++i) coded[i] = static_cast<int>(col[i]);
        }
        int mx = 0;
        for (int v : coded) {
            check(v >= 0, "categorical codes must be non-negative");
            mx = std::max(mx, v);
        }
        task.domain_sizes[static_cast<size_t>(f)] = mx + 1;
        for (size_t i = 0; i < coded.size(); ++i) all[i][static_cast<size_t>(f)] = coded[i];
    }
    for (size_t i = 0; i < train_rows.size(); ++i) {
        task.train_x.push_back(all[i]);
        task.train_y.push_back(static_cast<int>(train_rows[i].back()));
    }
    for (size_t i = 0; i < test_rows.size(); ++i) {
        task.test_x.push_back(all[n_train + i]);
        task.test_y.push_back(static_cast<int>(test_rows[i].back()));
    }
    return task;
}

}  // namespace rim
