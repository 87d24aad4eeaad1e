#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rim/finite_diff.hpp"
#include "rim/param_store.hpp"
#include "rim/tensor.hpp"

using namespace rim;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(static_cast<size_t>(numel(shape)));
    for (double& x : v) x = dist(rng);
    return requires_grad ? Tensor<double>::param(shape, v) : Tensor<double>::from(shape, v);
}

}  // namespace

TEST_CASE("sigmoid(0) = 0.5") {
    auto t = Tensor<double>::from({1}, {0.0});
    REQUIRE(sigmoid(t).item() == Catch::Approx(0.5));
}

TEST_CASE("softmax of equal logits is uniform") {
    auto t = Tensor<double>::from({3}, {0.0, 0.0, 0.0});
    auto s = softmax_last(t);
    for (double v : s.values()) REQUIRE(v == Catch::Approx(1.0 / 3));
}

TEST_CASE("matmul by identity returns operand") {
    std::mt19937_64 rng(11);
    auto a = random_tensor({3, 3}, rng, false);
    std::vector<double> eye(9, 0.0);
    eye[0] = eye[4] = eye[8] = 1.0;
    auto i3 = Tensor<double>::from({3, 3}, eye);
    auto out = matmul(i3, a);
    for (size_t k = 0; k < 9; ++k) REQUIRE(out.values()[k] == Catch::Approx(a.values()[k]));
}

TEST_CASE("matmul rejects mismatched inner dims with both shapes named") {
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected shape error");
    } catch (const std::invalid_argument& err) {
        const std::string msg = err.what();
        REQUIRE(msg.find("[2,3]") != std::string::npos);
        REQUIRE(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("d(x*x)/dx at x=3 is 6") {
    auto x = Tensor<double>::param({1}, {3.0});
    auto y = mul(x, x);
    backward(y);
    REQUIRE(x.grad()[0] == Catch::Approx(6.0));
}

TEST_CASE("d(sigmoid)/dx at 0 is 0.25") {
    auto x = Tensor<double>::param({1}, {0.0});
    backward(sigmoid(x));
    REQUIRE(x.grad()[0] == Catch::Approx(0.25));
}

TEST_CASE("backward requires a scalar root") {
    auto x = Tensor<double>::param({2}, {1.0, 2.0});
    REQUIRE_THROWS_AS(backward(add(x, x)), std::invalid_argument);
}

TEST_CASE("backward twice doubles accumulated gradients") {
    auto x = Tensor<double>::param({1}, {3.0});
    auto y = mul(x, x);
    backward(y);
    backward(y);
    REQUIRE(x.grad()[0] == Catch::Approx(12.0));
}

TEST_CASE("gradient of mean of softmax is zero") {
    std::mt19937_64 rng(5);
    auto x = random_tensor({6}, rng);
    backward(mean_all(softmax_last(x)));
    for (double g : x.grad()) REQUIRE(std::abs(g) < 1e-12);
}

TEST_CASE("matmul batched against unbatched rhs") {
    std::mt19937_64 rng(7);
    auto a = random_tensor({2, 3, 4}, rng, false);
    auto b = random_tensor({4, 5}, rng, false);
    auto c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 5});
    // slice check against hand loop
    for (int t = 0; t < 2; ++t)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) {
                double acc = 0;
                for (int k = 0; k < 4; ++k)
                    acc += a.values()[(t * 3 + i) * 4 + k] * b.values()[k * 5 + j];
                REQUIRE(c.values()[(t * 3 + i) * 5 + j] == Catch::Approx(acc));
            }
}

TEST_CASE("every primitive passes central finite differences") {
    std::mt19937_64 rng(99);
    const double tol = 1e-4;
    const double eps = 1e-4;

    auto run_check = [&](auto build) {
        ParamStore<double> store;
        build(store);
        return store;
    };
    (void)run_check;

    for (int trial = 0; trial < 12; ++trial) {
        ParamStore<double> store;
        std::normal_distribution<double> dist(0.0, 0.7);
        auto init = [&](Shape s) {
            std::vector<double> v(static_cast<size_t>(numel(s)));
            for (double& x : v) x = dist(rng);
            return v;
        };
        auto& a = store.create("a", {2, 3, 4}, init({2, 3, 4}));
        auto& b = store.create("b", {4, 4}, init({4, 4}));
        auto& bias = store.create("bias", {4}, init({4}));
        auto& gain = store.create("gain", {4}, init({4}));
        auto& table = store.create("table", {5, 4}, init({5, 4}));

        std::function<Tensor<double>()> loss = [&]() {
            auto h = matmul(a, b);
            h = add(h, bias);
            h = rmsnorm(h, gain);
            h = silu(h);
            h = add(h, embedding(table, {0, 2, 4, 1, 3, 2}, {2, 3}));
            h = mul(h, sigmoid(slice_last(h, 0, 4)));
            auto s = softmax_last(concat_seq(std::vector<Tensor<double>>{h, h}));
            auto t = tanh_act(transpose_last(slice_seq(s, 1, 2)));
            return add(mean_all(t), scale(sum_all(mul(h, h)), 0.01));
        };
        double err = finite_diff_check(store, loss, eps, 40, rng);
        REQUIRE(err < tol);
    }
}

TEST_CASE("cross entropy matches analytic values and gradient") {
    // uniform logits over V -> loss = ln V
    auto logits = Tensor<double>::param({2, 4}, std::vector<double>(8, 0.3));
    auto loss = cross_entropy(logits, {1, 2});
    REQUIRE(loss.item() == Catch::Approx(std::log(4.0)));

    std::mt19937_64 rng(3);
    ParamStore<double> store;
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(12);
    for (double& x : v) x = dist(rng);
    store.create("l", {3, 4}, v);
    std::function<Tensor<double>()> f = [&]() {
        return cross_entropy(store.at("l"), {0, 3, 2});
    };
    REQUIRE(finite_diff_check(store, f, 1e-5, 12, rng) < 1e-6);
}

TEST_CASE("finite_diff_check is exact for linear functions") {
    std::mt19937_64 rng(17);
    ParamStore<double> store;
    store.create("w", {4}, {0.5, -1.0, 2.0, 0.25});
    auto c = Tensor<double>::from({4}, {1.0, 2.0, 3.0, 4.0});
    std::function<Tensor<double>()> f = [&]() { return sum_all(mul(store.at("w"), c)); };
    REQUIRE(finite_diff_check(store, f, 1e-4, 4, rng) < 1e-9);
}

TEST_CASE("finite_diff_check on constant function reports zero error") {
    std::mt19937_64 rng(19);
    ParamStore<double> store;
    store.create("w", {3}, {1.0, 2.0, 3.0});
    std::function<Tensor<double>()> f = [&]() {
        return sum_all(Tensor<double>::filled({1}, 2.5));
    };
    REQUIRE(finite_diff_check(store, f, 1e-4, 3, rng) == 0.0);
}

TEST_CASE("unreachable parameters keep zero grads after zero_grad") {
    ParamStore<double> store;
    store.create("used", {1}, {2.0});
    store.create("unused", {1}, {5.0});
    store.zero_grad();
    auto l = mul(store.at("used"), store.at("used"));
    backward(l);
    REQUIRE(store.at("used").grad()[0] == Catch::Approx(4.0));
    REQUIRE(store.at("unused").grad().empty());  // never touched: treated as zero-filled
}

TEST_CASE("checkpoint round-trips bit-exactly for float stores") {
    std::mt19937_64 rng(23);
    ParamStore<float> store;
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<float> v(20);
    for (float& x : v) x = static_cast<float>(dist(rng));
    store.create("w", {4, 5}, v);
    store.create("b", {5}, std::vector<float>(5, 0.125f));
    const auto sum_before = store.checksum();
    store.save("ckpt_test.bin");

    ParamStore<float> other;
    other.create("w", {4, 5}, std::vector<float>(20, 0.f));
    other.create("b", {5}, std::vector<float>(5, 0.f));
    other.load("ckpt_test.bin");
    REQUIRE(other.checksum() == sum_before);
    for (size_t i = 0; i < 20; ++i) REQUIRE(other.at("w").values()[i] == v[i]);
}

TEST_CASE("no-grad mode produces detached results") {
    auto x = Tensor<double>::param({2}, {1.0, 2.0});
    NoGradGuard ng;
    auto y = mul(x, x);
    REQUIRE_FALSE(y.requires_grad());
    REQUIRE(y.node()->parents.empty());
}

TEST_CASE("forward evaluation is deterministic across repeated runs") {
    auto build = [] {
        std::mt19937_64 rng(123);
        std::normal_distribution<double> dist(0.0, 1.0);
        std::vector<double> v(24);
        for (double& x : v) x = dist(rng);
        auto a = Tensor<double>::from({2, 3, 4}, v);
        return softmax_last(silu(a)).values();
    };
    REQUIRE(build() == build());
}
