#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <set>

#include "rim/tasks.hpp"

using namespace rim;

namespace {

bool valid_sudoku_solution(const std::vector<int>& g, int size) {
    const auto geo = sudoku::geometry(size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const int v = g[static_cast<size_t>(r * size + c)];
            if (v < 1 || v > size) return false;
            auto probe = g;
            probe[static_cast<size_t>(r * size + c)] = 0;
            if (!sudoku::placement_ok(probe, geo, r, c, v)) return false;
        }
    return true;
}

// independent breadth-first distance, no shared code with the generator
int bfs_distance(const std::vector<int>& grid, int n, int start, int goal) {
    std::vector<int> dist(grid.size(), -1);
    std::vector<int> q{start};
    dist[static_cast<size_t>(start)] = 0;
    for (size_t head = 0; head < q.size(); ++head) {
        const int cur = q[head];
        const int r = cur / n, c = cur % n;
        const int steps[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& s : steps) {
            const int nr = r + s[0], nc = c + s[1];
            if (nr < 0 || nr >= n || nc < 0 || nc >= n) continue;
            const int nxt = nr * n + nc;
            if (grid[static_cast<size_t>(nxt)] == MAZE_WALL) continue;
            if (dist[static_cast<size_t>(nxt)] != -1) continue;
            dist[static_cast<size_t>(nxt)] = dist[static_cast<size_t>(cur)] + 1;
            q.push_back(nxt);
        }
    }
    return dist[static_cast<size_t>(goal)];
}

}  // namespace

TEST_CASE("sudoku geometry covers 4, 6, 9 only") {
    REQUIRE(sudoku::geometry(4).box_h == 2);
    REQUIRE(sudoku::geometry(6).box_w == 3);
    REQUIRE(sudoku::geometry(9).box_h == 3);
    REQUIRE_THROWS_AS(sudoku::geometry(5), std::invalid_argument);
}

TEST_CASE("empty 4x4 grid admits exactly 288 completions") {
    std::vector<int> g(16, 0);
    REQUIRE(sudoku::count_solutions(g, sudoku::geometry(4), 1000) == 288);
}

TEST_CASE("generated sudoku has a unique solution consistent with its givens") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto inst = gen_sudoku(4, 8, seed);
        REQUIRE(inst.vocab == 5);
        REQUIRE(valid_sudoku_solution(inst.target, 4));
        int givens = 0;
        for (size_t i = 0; i < inst.input.size(); ++i) {
            if (inst.input[i] != 0) {
                ++givens;
                REQUIRE(inst.input[i] == inst.target[i]);
            }
        }
        REQUIRE(givens == 8);
        auto probe = inst.input;
        REQUIRE(sudoku::count_solutions(probe, sudoku::geometry(4), 2) == 1);
    }
}

TEST_CASE("sudoku generation is deterministic per seed") {
    auto a = gen_sudoku(4, 7, 42);
    auto b = gen_sudoku(4, 7, 42);
    REQUIRE(a.input == b.input);
    REQUIRE(a.target == b.target);
    auto c = gen_sudoku(4, 7, 43);
    REQUIRE(a.input != c.input);
}

TEST_CASE("6x6 sudoku respects the 2x3 box constraint") {
    auto inst = gen_sudoku(6, 18, 5);
    REQUIRE(valid_sudoku_solution(inst.target, 6));
}

TEST_CASE("maze target marks a shortest path") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        auto inst = gen_maze(9, seed);
        int start = -1, goal = -1, starts = 0, goals = 0;
        for (size_t i = 0; i < inst.input.size(); ++i) {
            if (inst.input[i] == MAZE_START) { start = static_cast<int>(i); ++starts; }
            if (inst.input[i] == MAZE_GOAL) { goal = static_cast<int>(i); ++goals; }
            REQUIRE(inst.input[i] >= 0);
            REQUIRE(inst.input[i] <= 3);
        }
        if (starts == 0) {
            // start and goal collide: the overwrite leaves only the goal marker
            REQUIRE(goals == 1);
            continue;
        }
        REQUIRE(starts == 1);
        REQUIRE(goals == 1);
        // input and target agree off the path
        int path_cells = 0;
        for (size_t i = 0; i < inst.target.size(); ++i) {
            if (inst.target[i] == MAZE_PATH)
                ++path_cells;
            else
                REQUIRE(inst.target[i] == inst.input[i]);
        }
        const int d = bfs_distance(inst.input, 9, start, goal);
        REQUIRE(d >= 0);
        REQUIRE(path_cells == d + 1);  // inclusive of both endpoints
    }
}

TEST_CASE("maze rejects even and undersized grids") {
    REQUIRE_THROWS_AS(gen_maze(8, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(gen_maze(7, 1), std::invalid_argument);
}

TEST_CASE("puzzle files round-trip") {
    std::vector<PuzzleInstance> data;
    for (std::uint64_t s = 0; s < 3; ++s) data.push_back(gen_sudoku(4, 9, s));
    save_puzzles(data, "tasks_roundtrip.txt");
    auto loaded = load_puzzles("tasks_roundtrip.txt");
    REQUIRE(loaded.size() == data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        REQUIRE(loaded[i].input == data[i].input);
        REQUIRE(loaded[i].target == data[i].target);
        REQUIRE(loaded[i].task == data[i].task);
        REQUIRE(loaded[i].vocab == data[i].vocab);
    }
    std::remove("tasks_roundtrip.txt");
}

TEST_CASE("malformed dataset separator is rejected") {
    {
        std::ofstream out("tasks_bad.txt");
        out << "sudoku4 2 2 5 1\n1 2 3 4 / 1 2 3 4\n";
    }
    REQUIRE_THROWS_AS(load_puzzles("tasks_bad.txt"), std::invalid_argument);
    std::remove("tasks_bad.txt");
}

TEST_CASE("train/test splits are hash-disjoint and deterministic") {
    auto gen_one = [](std::uint64_t s) { return gen_sudoku(4, 9, s); };
    auto ds = gen_split(20, 10, 77, gen_one);
    REQUIRE(ds.train.size() == 20);
    REQUIRE(ds.test.size() == 10);
    std::set<std::uint64_t> train_hashes;
    for (const auto& inst : ds.train) train_hashes.insert(instance_hash(inst));
    REQUIRE(train_hashes.size() == 20);
    for (const auto& inst : ds.test) REQUIRE(train_hashes.count(instance_hash(inst)) == 0);

    auto again = gen_split(20, 10, 77, gen_one);
    REQUIRE(again.train.front().input == ds.train.front().input);
    REQUIRE(again.test.back().input == ds.test.back().input);
}

TEST_CASE("synthetic tabular features vote for the label") {
    auto task = gen_tabular(6, 4000, 100, 0.2, 11);
    REQUIRE(task.n_features() == 6);
    REQUIRE(task.domain_sizes == std::vector<int>(6, 2));
    std::int64_t agree = 0, total = 0;
    for (size_t r = 0; r < task.train_x.size(); ++r)
        for (int v : task.train_x[r]) {
            agree += (v == task.train_y[r]);
            ++total;
        }
    const double rate = static_cast<double>(agree) / static_cast<double>(total);
    REQUIRE(rate == Catch::Approx(0.8).margin(0.02));
}

TEST_CASE("corruption touches exactly the rounded cell count") {
    auto task = gen_tabular(5, 50, 40, 0.1, 13);
    const double p = 0.25;
    auto corrupted = corrupt_features(task, p, 13);
    int masked = 0;
    for (const auto& row : corrupted.corruption_mask)
        for (bool b : row) masked += b;
    REQUIRE(masked == 50);  // round(0.25 * 40 * 5)
    REQUIRE(corrupted.clean_test_x == task.test_x);
    for (size_t r = 0; r < corrupted.test_x.size(); ++r)
        for (size_t f = 0; f < corrupted.test_x[r].size(); ++f) {
            if (!corrupted.corruption_mask[r][f])
                REQUIRE(corrupted.test_x[r][f] == task.test_x[r][f]);
            else {
                REQUIRE(corrupted.test_x[r][f] >= 0);
                REQUIRE(corrupted.test_x[r][f] <= 1);
            }
        }
    REQUIRE_THROWS_AS(corrupt_features(task, 1.5, 0), std::invalid_argument);

    auto again = corrupt_features(task, p, 13);
    REQUIRE(again.test_x == corrupted.test_x);
}

TEST_CASE("quantile binning splits a uniform column evenly") {
    std::vector<double> col{1, 2, 3, 4, 5, 6, 7, 8};
    REQUIRE(quantile_bin(col, 4) == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});
}

TEST_CASE("csv loader applies the schema preamble") {
    {
        std::ofstream out("tasks_train.csv");
        out << "# a:cat b:num y:cat\n";
        out << "0,1.5,0\n1,2.5,1\n2,3.5,1\n0,4.5,0\n";
    }
    {
        std::ofstream out("tasks_test.csv");
        out << "# a:cat b:num y:cat\n";
        out << "1,1.0,1\n2,9.0,0\n";
    }
    auto task = load_tabular_csv("tasks_train.csv", "tasks_test.csv");
    REQUIRE(task.n_features() == 2);
    REQUIRE(task.domain_sizes[0] == 3);
    REQUIRE(task.domain_sizes[1] <= 8);
    REQUIRE(task.train_y == std::vector<int>{0, 1, 1, 0});
    REQUIRE(task.test_y == std::vector<int>{1, 0});
    REQUIRE(task.test_x[1][1] > task.test_x[0][1]);  // binning is monotone
    std::remove("tasks_train.csv");
    std::remove("tasks_test.csv");
}
