#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "advgrid/tensor.hpp"

using namespace advgrid;

namespace {

// Independent oracle: central finite differences on a scalar-valued function
// of a flat parameter vector. h = 1e-4 per the double-precision contract.
std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h = 1e-4) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Relative error with an absolute floor, so near-zero gradients are compared
// absolutely at the same 1e-4 scale.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, rel_err(a[i], b[i]));
    return m;
}

std::vector<double> random_values(std::mt19937_64& rng, int n, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Checks autodiff against the oracle for one differentiable parameter of a
// scalar-valued graph builder.
void check_grad(const std::function<Tensor(const Tensor&)>& make_loss,
                const std::vector<int>& shape, const std::vector<double>& values,
                double tol = 1e-4) {
    Tensor x(shape, values, true);
    Tensor loss = make_loss(x);
    GradTape tape(loss);
    tape.backward();
    Tensor gx = tape.gradient_of(x);

    auto f = [&](const std::vector<double>& v) {
        Tensor xv(shape, v, false);
        return make_loss(xv).value();
    };
    std::vector<double> fd = central_diff(f, values);
    CHECK(max_rel_err(gx.values(), fd) <= tol);
}

}  // namespace

TEST_CASE("tensor construction and invariants") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.shape() == std::vector<int>{2, 3});
    CHECK_FALSE(t.requires_grad());

    CHECK_THROWS(Tensor({2, 3}, {1, 2, 3}));              // length mismatch
    CHECK_THROWS(Tensor({2}, {1.0, std::nan("")}));       // non-finite
    CHECK_THROWS(Tensor({0, 3}, {}));                     // non-positive dim

    CHECK(Tensor::scalar(4.5).value() == 4.5);
    CHECK_THROWS(t.value());  // not a scalar
}

TEST_CASE("relu forward") {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor y = relu(x);
    CHECK(y.values() == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("conv2d of all-ones 3x3 with all-ones 3x3 kernel is 9") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor b = Tensor::zeros({1});
    Tensor y = conv2d(x, k, b, 1, 0);
    CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
    CHECK(y.value() == doctest::Approx(9.0));
}

TEST_CASE("softmax cross entropy of uniform logits is ln 2") {
    Tensor logits({1, 2}, {0.0, 0.0});
    Tensor loss = softmax_cross_entropy(logits, {0});
    CHECK(loss.value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("shape mismatch errors name the operation") {
    Tensor x = Tensor::zeros({1, 3, 4, 4});
    Tensor k = Tensor::zeros({2, 4, 3, 3});
    Tensor b = Tensor::zeros({2});
    CHECK_THROWS_WITH_AS(conv2d(x, k, b), doctest::Contains("conv2d"), std::runtime_error);

    Tensor a2 = Tensor::zeros({2, 3});
    Tensor b2 = Tensor::zeros({3, 2});
    CHECK_THROWS_WITH_AS(add(a2, b2), doctest::Contains("add"), std::runtime_error);

    Tensor w = Tensor::zeros({4, 2});
    CHECK_THROWS_WITH_AS(dense(a2, w, Tensor::zeros({2})), doctest::Contains("dense"),
                         std::runtime_error);
}

TEST_CASE("grad of x^2 at 3 is 6, constants get zero") {
    // x^2 = dense(x_row, x_col, 0) with the same node appearing twice.
    Tensor xr({1, 1}, {3.0}, true);
    Tensor loss = sum(dense(xr, xr, Tensor::zeros({1})));
    GradTape tape(loss);
    tape.backward();
    CHECK(tape.gradient_of(xr).values()[0] == doctest::Approx(6.0).epsilon(1e-12));

    // loss constant w.r.t. an unrelated tensor -> zero gradient
    Tensor unused = Tensor::scalar(1.0, true);
    CHECK(tape.gradient_of(unused).values()[0] == 0.0);

    // detached tensor -> error
    Tensor det = Tensor::scalar(2.0, false);
    CHECK_THROWS(tape.gradient_of(det));
}

TEST_CASE("grad requires scalar loss") {
    Tensor x({2}, {1.0, 2.0}, true);
    CHECK_THROWS(GradTape(relu(x)));
}

TEST_CASE("finite differences: per-primitive gradients") {
    std::mt19937_64 rng(77);

    SUBCASE("dense") {
        auto vals = random_values(rng, 2 * 3);
        check_grad(
            [&](const Tensor& x) {
                Tensor w({3, 2}, {0.3, -0.2, 0.5, 0.7, -0.4, 0.1});
                Tensor b({2}, {0.05, -0.1});
                return softmax_cross_entropy(dense(x, w, b), {0, 1});
            },
            {2, 3}, vals);
    }

    SUBCASE("dense weight and bias") {
        auto wv = random_values(rng, 3 * 2);
        Tensor x({2, 3}, random_values(rng, 6));
        check_grad(
            [&](const Tensor& w) {
                return softmax_cross_entropy(dense(x, w, Tensor({2}, {0.1, -0.2})), {1, 0});
            },
            {3, 2}, wv);
        auto bv = random_values(rng, 2);
        Tensor w2({3, 2}, random_values(rng, 6));
        check_grad(
            [&](const Tensor& b) { return softmax_cross_entropy(dense(x, w2, b), {0, 0}); },
            {2}, bv);
    }

    SUBCASE("conv2d stride 1 with padding") {
        auto vals = random_values(rng, 1 * 2 * 5 * 5);
        Tensor k({3, 2, 3, 3}, random_values(rng, 3 * 2 * 9));
        Tensor b({3}, random_values(rng, 3));
        check_grad(
            [&](const Tensor& x) {
                return sum(relu(conv2d(x, k, b, 1, 1)));
            },
            {1, 2, 5, 5}, vals);
    }

    SUBCASE("conv2d stride 2 kernel gradient") {
        Tensor x({2, 1, 6, 6}, random_values(rng, 2 * 36));
        auto kv = random_values(rng, 2 * 1 * 3 * 3);
        check_grad(
            [&](const Tensor& k) {
                return sum(conv2d(x, k, Tensor::zeros({2}), 2, 1));
            },
            {2, 1, 3, 3}, kv);
    }

    SUBCASE("max pool") {
        auto vals = random_values(rng, 1 * 2 * 4 * 4);
        check_grad([&](const Tensor& x) { return sum(max_pool2x2(x)); }, {1, 2, 4, 4}, vals);
    }

    SUBCASE("global average pool") {
        auto vals = random_values(rng, 2 * 3 * 4 * 4);
        check_grad([&](const Tensor& x) { return sum(global_avg_pool(x)); }, {2, 3, 4, 4}, vals);
    }

    SUBCASE("residual add and flatten") {
        auto vals = random_values(rng, 2 * 2 * 2 * 2);
        Tensor other({2, 2, 2, 2}, random_values(rng, 16));
        Tensor w({8, 2}, random_values(rng, 16));
        check_grad(
            [&](const Tensor& x) {
                return softmax_cross_entropy(dense(flatten(add(x, other)), w, Tensor::zeros({2})),
                                             {0, 1});
            },
            {2, 2, 2, 2}, vals);
    }

    SUBCASE("clamp away from the kinks") {
        auto vals = random_values(rng, 6, -2.0, 2.0);
        for (auto& v : vals) {
            if (std::abs(std::abs(v) - 1.0) < 0.05) v = 0.5;  // keep clear of +/-1 boundaries
        }
        check_grad([&](const Tensor& x) { return sum(clamp(x, -1.0, 1.0)); }, {6}, vals);
    }

    SUBCASE("scale") {
        auto vals = random_values(rng, 5);
        check_grad([&](const Tensor& x) { return scale(sum(x), -2.5); }, {5}, vals);
    }
}

TEST_CASE("finite differences: random two-layer net within 1e-4") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 2, c = 1, hw = 6;
        Tensor k({2, c, 3, 3}, random_values(rng, 2 * c * 9));
        Tensor kb({2}, random_values(rng, 2));
        Tensor w({2 * 3 * 3, 2}, random_values(rng, 2 * 3 * 3 * 2, -0.5, 0.5));
        Tensor wb({2}, random_values(rng, 2));
        std::vector<int> labels = {0, 1};

        auto net = [&](const Tensor& x) {
            Tensor h = max_pool2x2(relu(conv2d(x, k, kb, 1, 1)));
            return softmax_cross_entropy(dense(flatten(h), w, wb), labels);
        };

        auto vals = random_values(rng, n * c * hw * hw);
        check_grad(net, {n, c, hw, hw}, vals);
    }
}

TEST_CASE("grad is linear in the loss") {
    std::mt19937_64 rng(5);
    Tensor w1({3, 1}, random_values(rng, 3));
    Tensor w2({3, 1}, random_values(rng, 3));
    Tensor xr({1, 3}, random_values(rng, 3), true);
    Tensor l1 = sum(dense(xr, w1, Tensor::zeros({1})));
    Tensor l2 = sum(dense(xr, w2, Tensor::zeros({1})));
    const double a = 1.7, b = -0.4;
    Tensor combo = add(scale(l1, a), scale(l2, b));

    auto gc = [&](const Tensor& loss) {
        GradTape t(loss);
        t.backward();
        return t.gradient_of(xr).values();
    };

    auto g1 = gc(l1), g2 = gc(l2), gcombo = gc(combo);
    for (int i = 0; i < 3; ++i) {
        CHECK(gcombo[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-10));
    }
}

TEST_CASE("forward pass is deterministic") {
    std::mt19937_64 rng(9);
    auto vals = random_values(rng, 1 * 1 * 8 * 8);
    Tensor x({1, 1, 8, 8}, vals);
    Tensor k({2, 1, 3, 3}, random_values(rng, 18));
    Tensor b({2}, random_values(rng, 2));
    Tensor y1 = global_avg_pool(relu(conv2d(x, k, b, 1, 1)));
    Tensor y2 = global_avg_pool(relu(conv2d(x, k, b, 1, 1)));
    CHECK(y1.values() == y2.values());
}

TEST_CASE("softmax rows sum to one") {
    Tensor logits({2, 2}, {3.0, -1.0, 0.0, 0.0});
    auto p = softmax_rows(logits);
    CHECK(p[0][0] + p[0][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p[1][0] == doctest::Approx(0.5));
}
