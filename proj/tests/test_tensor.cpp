#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fd_check.hpp"
#include "lstmcaps/tensor.hpp"

using namespace lstmcaps;

TEST_CASE("elementwise examples") {
    CHECK(sigmoid(nullptr, Tensor::row({0.0})).value()[0] == doctest::Approx(0.5));
    CHECK(lstmcaps::tanh(nullptr, Tensor::row({0.0})).value()[0] == doctest::Approx(0.0));
    Tensor s = add(nullptr, Tensor::row({1, 2}), Tensor::row({3, 4}));
    CHECK(s.value() == std::vector<double>{4, 6});
    Tensor d = sub(nullptr, Tensor::row({1, 2}), Tensor::row({3, 1}));
    CHECK(d.value() == std::vector<double>{-2, 1});
    Tensor m = mul(nullptr, Tensor::row({2, 3}), Tensor::row({4, 5}));
    CHECK(m.value() == std::vector<double>{8, 15});
}

TEST_CASE("broadcasting by trailing dimensions") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::row({10, 20, 30});
    Tensor out = add(nullptr, a, b);
    CHECK(out.shape() == Shape{2, 3});
    CHECK(out.value() == std::vector<double>{11, 22, 33, 14, 25, 36});

    // gradients sum-reduce over the broadcast axis
    Tensor a2({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor b2 = Tensor::row({10, 20, 30});
    b2.set_requires_grad(true);
    Graph g;
    Tensor loss = reduce(&g, Reduce::sum, mul(&g, a2, b2));
    g.backward(loss);
    CHECK(b2.grad() == std::vector<double>{1 + 4, 2 + 5, 3 + 6});
    CHECK(a2.grad() == std::vector<double>{10, 20, 30, 10, 20, 30});

    CHECK_THROWS_AS(add(nullptr, Tensor::row({1, 2}), Tensor::row({1, 2, 3})), shape_error);
}

TEST_CASE("matmul examples") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor col({2, 1}, {1, 2});
    CHECK(matmul(nullptr, eye, col).value() == std::vector<double>{1, 2});

    Tensor a({1, 2}, {1, 2});
    Tensor b({2, 1}, {3, 4});
    CHECK(matmul(nullptr, a, b).value() == std::vector<double>{11});

    CHECK_THROWS_AS(matmul(nullptr, Tensor({1, 2}, {1, 2}), Tensor({3, 1}, {1, 2, 3})),
                    shape_error);
}

TEST_CASE("matmul gradient matches finite differences") {
    std::mt19937_64 rng(7);
    Tensor a = fd::random_tensor({3, 4}, rng);
    Tensor b = fd::random_tensor({4, 2}, rng);
    auto build = [&](Graph* g) { return reduce(g, Reduce::sum, matmul(g, a, b)); };
    auto stats = fd::check_gradients(build, {a, b}, rng, 20);
    CHECK(stats.failed == 0);
    CHECK(stats.max_rel_err < fd::kRelTol);
}

TEST_CASE("reduce examples") {
    CHECK(reduce(nullptr, Reduce::sum, Tensor::row({1, 2, 3})).value()[0] == 6);
    CHECK(reduce(nullptr, Reduce::mean, Tensor::row({2, 4})).value()[0] == 3);
    CHECK(reduce(nullptr, Reduce::max, Tensor::row({1, 5, 3})).value()[0] == 5);
    CHECK_THROWS_AS(reduce(nullptr, Reduce::sum, Tensor::row({1, 2}), 1), shape_error);

    Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor rows = reduce(nullptr, Reduce::sum, m, 1);
    CHECK(rows.shape() == Shape{2});
    CHECK(rows.value() == std::vector<double>{6, 15});
    Tensor cols = reduce(nullptr, Reduce::mean, m, 0, true);
    CHECK(cols.shape() == Shape{1, 3});
    CHECK(cols.value() == std::vector<double>{2.5, 3.5, 4.5});
}

TEST_CASE("max reduction routes gradient to first occurrence on ties") {
    Tensor a = Tensor::row({1, 3, 3});
    a.set_requires_grad(true);
    Graph g;
    Tensor out = reduce(&g, Reduce::max, a);
    g.backward(out);
    CHECK(a.grad() == std::vector<double>{0, 1, 0});

    // away from ties the finite-difference oracle agrees
    std::mt19937_64 rng(11);
    Tensor b = fd::random_tensor({5}, rng);
    b.value()[2] += 5.0;  // unique max
    auto build = [&](Graph* g2) { return reduce(g2, Reduce::max, b); };
    auto stats = fd::check_gradients(build, {b}, rng, 5);
    CHECK(stats.failed == 0);
}

TEST_CASE("backward examples") {
    SUBCASE("loss = sum(w) gives all-ones gradient") {
        Tensor w = Tensor::row({1, 2, 3});
        w.set_requires_grad(true);
        Graph g;
        g.backward(reduce(&g, Reduce::sum, w));
        CHECK(w.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("loss = sum(w*w) gives 2w") {
        Tensor w = Tensor::row({1.0, -2.0, 0.5});
        w.set_requires_grad(true);
        Graph g;
        g.backward(reduce(&g, Reduce::sum, mul(&g, w, w)));
        CHECK(w.grad() == std::vector<double>{2.0, -4.0, 1.0});
    }
    SUBCASE("non-scalar loss is rejected") {
        Tensor w = Tensor::row({1, 2});
        w.set_requires_grad(true);
        Graph g;
        Tensor y = mul(&g, w, w);
        CHECK_THROWS_AS(g.backward(y), contract_error);
    }
}

TEST_CASE("random three-layer composition passes the finite-difference oracle") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x = fd::random_tensor({2, 4}, rng);
        Tensor w1 = fd::random_tensor({4, 5}, rng);
        Tensor b1 = fd::random_tensor({5}, rng);
        Tensor w2 = fd::random_tensor({5, 3}, rng);
        auto build = [&](Graph* g) {
            Tensor h = lstmcaps::tanh(g, add(g, matmul(g, x, w1), b1));
            Tensor y = sigmoid(g, matmul(g, h, w2));
            return reduce(g, Reduce::mean, mul(g, y, y));
        };
        auto stats = fd::check_gradients(build, {x, w1, b1, w2}, rng, 6);
        CHECK(stats.failed == 0);
        CHECK(stats.max_rel_err < fd::kRelTol);
    }
}

TEST_CASE("gradient accumulation across multiple uses") {
    // y = sum(w*w) + sum(w) uses w on two paths; grads must add.
    Tensor w = Tensor::row({1.5, -0.5});
    w.set_requires_grad(true);
    Graph g;
    Tensor loss = add(&g, reduce(&g, Reduce::sum, mul(&g, w, w)), reduce(&g, Reduce::sum, w));
    g.backward(loss);
    CHECK(w.grad()[0] == doctest::Approx(2 * 1.5 + 1));
    CHECK(w.grad()[1] == doctest::Approx(2 * -0.5 + 1));
}

TEST_CASE("structural ops") {
    Tensor x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    SUBCASE("slice and scatter gradient") {
        Tensor x2 = x.clone();
        x2.set_requires_grad(true);
        Graph g;
        Tensor s = slice(&g, x2, 1, 1, 1);  // [2,1,2]
        CHECK(s.value() == std::vector<double>{3, 4, 7, 8});
        g.backward(reduce(&g, Reduce::sum, s));
        CHECK(x2.grad() == std::vector<double>{0, 0, 1, 1, 0, 0, 1, 1});
    }
    SUBCASE("concat is the inverse of slicing") {
        Tensor a({2, 1}, {1, 2});
        Tensor b({2, 2}, {3, 4, 5, 6});
        Tensor c = concat(nullptr, {a, b}, 1);
        CHECK(c.shape() == Shape{2, 3});
        CHECK(c.value() == std::vector<double>{1, 3, 4, 2, 5, 6});
        CHECK_THROWS_AS(concat(nullptr, {a, Tensor({3, 1}, {1, 2, 3})}, 1), shape_error);
    }
    SUBCASE("reshape keeps values and routes gradients") {
        Tensor x2 = x.clone();
        x2.set_requires_grad(true);
        Graph g;
        Tensor r = reshape(&g, x2, {4, 2});
        g.backward(reduce(&g, Reduce::sum, mul(&g, r, r)));
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(x2.grad()[i] == doctest::Approx(2 * x2.value()[i]));
        CHECK_THROWS_AS(reshape(nullptr, x, {3, 3}), shape_error);
    }
}

TEST_CASE("repeat_rows") {
    Tensor v({1, 2}, {1, 2});
    Tensor r1 = repeat_rows(nullptr, v, 1);
    CHECK(r1.shape() == Shape{1, 1, 2});
    Tensor r3 = repeat_rows(nullptr, v, 3);
    CHECK(r3.value() == std::vector<double>{1, 2, 1, 2, 1, 2});
    CHECK_THROWS_AS(repeat_rows(nullptr, v, 0), contract_error);

    Tensor v2({1, 2}, {1.0, -1.0});
    v2.set_requires_grad(true);
    Graph g;
    g.backward(reduce(&g, Reduce::sum, repeat_rows(&g, v2, 3)));
    CHECK(v2.grad() == std::vector<double>{3, 3});
}

TEST_CASE("softmax rows sum to one and gradient checks") {
    std::mt19937_64 rng(5);
    Tensor x = fd::random_tensor({3, 4}, rng);
    Tensor y = softmax_last(nullptr, x);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += y.value()[r * 4 + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor w = fd::random_tensor({3, 4}, rng);
    auto build = [&](Graph* g) {
        return reduce(g, Reduce::sum, mul(g, softmax_last(g, x), w));
    };
    auto stats = fd::check_gradients(build, {x}, rng, 12);
    CHECK(stats.failed == 0);
}

TEST_CASE("dropout op") {
    std::mt19937_64 rng(99);
    Tensor x = fd::random_tensor({4, 8}, rng, -1, 1, false);
    SUBCASE("rate 0 and inference are identity") {
        Tensor a = dropout(nullptr, x, 0.0, true, rng);
        CHECK(a.value() == x.value());
        Tensor b = dropout(nullptr, x, 0.9, false, rng);
        CHECK(b.value() == x.value());
        CHECK_THROWS_AS(dropout(nullptr, x, 1.0, true, rng), contract_error);
    }
    SUBCASE("inverted scaling keeps the expectation") {
        // E[out] = in: average many trials of a single element
        Tensor one({1}, {1.0});
        const int trials = 10000;
        double sum = 0.0;
        for (int i = 0; i < trials; ++i) sum += dropout(nullptr, one, 0.5, true, rng).value()[0];
        double mean = sum / trials;
        // variance of one Bernoulli(0.5)*2 trial is 1 -> 3 sigma over 1e4 trials
        CHECK(std::abs(mean - 1.0) < 3.0 / std::sqrt(static_cast<double>(trials)));
    }
}

TEST_CASE("determinism: identical graph and inputs give bitwise-identical results") {
    auto run = [](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        Tensor x = fd::random_tensor({3, 3}, rng);
        Tensor w = fd::random_tensor({3, 3}, rng);
        Graph g;
        Tensor loss = reduce(&g, Reduce::mean, sigmoid(&g, matmul(&g, x, w)));
        g.backward(loss);
        auto out = loss.value();
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        return out;
    };
    CHECK(run(17) == run(17));
}
