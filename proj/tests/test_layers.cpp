#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fd_check.hpp"
#include "lstmcaps/layers.hpp"

using namespace lstmcaps;

namespace {

LstmParams zero_lstm(std::size_t input, std::size_t hidden) {
    LstmParams p;
    std::size_t cat = hidden + input;
    p.w_f = Tensor::zeros({hidden, cat}, true);
    p.w_i = Tensor::zeros({hidden, cat}, true);
    p.w_c = Tensor::zeros({hidden, cat}, true);
    p.w_o = Tensor::zeros({hidden, cat}, true);
    p.b_f = Tensor::zeros({hidden}, true);
    p.b_i = Tensor::zeros({hidden}, true);
    p.b_c = Tensor::zeros({hidden}, true);
    p.b_o = Tensor::zeros({hidden}, true);
    return p;
}

double vec_norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("lstm_step with zero parameters maps any input to the zero state") {
    LstmParams p = zero_lstm(3, 2);
    LstmState s0 = lstm_zero_state(1, 2);
    Tensor x({1, 3}, {0.7, -1.2, 4.0});
    LstmState s1 = lstm_step(nullptr, p, s0, x);
    for (double v : s1.h.value()) CHECK(v == 0.0);
    for (double v : s1.c.value()) CHECK(v == 0.0);
}

TEST_CASE("lstm_step saturated forget gate carries the cell state through") {
    LstmParams p = zero_lstm(2, 2);
    p.b_f.value() = {30.0, 30.0};
    LstmState s0 = lstm_zero_state(1, 2);
    s0.c.value() = {0.8, -1.5};
    Tensor x({1, 2}, {0.3, 0.4});
    LstmState s1 = lstm_step(nullptr, p, s0, x);
    CHECK(s1.c.value()[0] == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(s1.c.value()[1] == doctest::Approx(-1.5).epsilon(1e-9));
}

TEST_CASE("lstm_step rejects mismatched dimensions") {
    LstmParams p = zero_lstm(3, 2);
    LstmState s0 = lstm_zero_state(1, 2);
    CHECK_THROWS_AS(lstm_step(nullptr, p, s0, Tensor({1, 2}, {1, 2})), shape_error);
}

TEST_CASE("lstm gradients match finite differences") {
    std::mt19937_64 rng(41);
    LstmParams p = LstmParams::init(2, 3, rng);
    Tensor xs = fd::random_tensor({1, 4, 2}, rng, -1, 1, false);
    auto build = [&](Graph* g) {
        return reduce(g, Reduce::sum, lstm_sequence(g, p, xs, false));
    };
    std::vector<Tensor> params = {p.w_f, p.w_i, p.w_c, p.w_o, p.b_f, p.b_i, p.b_c, p.b_o};
    auto stats = fd::check_gradients(build, params, rng, 4);
    CHECK(stats.checked >= 24);
    CHECK(stats.failed == 0);
    CHECK(stats.max_rel_err < fd::kRelTol);
}

TEST_CASE("lstm_sequence") {
    std::mt19937_64 rng(42);
    LstmParams p = LstmParams::init(2, 3, rng);

    SUBCASE("T=1 equals a single step from the zero state") {
        Tensor xs = fd::random_tensor({2, 1, 2}, rng, -1, 1, false);
        Tensor seq = lstm_sequence(nullptr, p, xs, false);
        Tensor x0 = reshape(nullptr, slice(nullptr, xs, 1, 0, 1), {2, 2});
        LstmState s = lstm_step(nullptr, p, lstm_zero_state(2, 3), x0);
        CHECK(seq.value() == s.h.value());
    }
    SUBCASE("zero parameters give zero outputs for any sequence") {
        LstmParams z = zero_lstm(2, 3);
        Tensor xs = fd::random_tensor({2, 5, 2}, rng, -2, 2, false);
        Tensor out = lstm_sequence(nullptr, z, xs, true);
        for (double v : out.value()) CHECK(v == 0.0);
    }
    SUBCASE("return_sequences last row equals return-last output") {
        Tensor xs = fd::random_tensor({2, 6, 2}, rng, -1, 1, false);
        Tensor all = lstm_sequence(nullptr, p, xs, true);
        Tensor last = lstm_sequence(nullptr, p, xs, false);
        Tensor tail = reshape(nullptr, slice(nullptr, all, 1, 5, 1), {2, 3});
        CHECK(tail.value() == last.value());
    }
    SUBCASE("sequence is exactly composed steps") {
        Tensor xs = fd::random_tensor({1, 7, 2}, rng, -1, 1, false);
        Tensor seq = lstm_sequence(nullptr, p, xs, true);
        LstmState s = lstm_zero_state(1, 3);
        std::vector<double> manual;
        for (std::size_t t = 0; t < 7; ++t) {
            Tensor xt = reshape(nullptr, slice(nullptr, xs, 1, t, 1), {1, 2});
            s = lstm_step(nullptr, p, s, xt);
            manual.insert(manual.end(), s.h.value().begin(), s.h.value().end());
        }
        CHECK(seq.value() == manual);
    }
    SUBCASE("empty sequence is rejected") {
        CHECK_THROWS_AS(Tensor({1, 0, 2}, {}), shape_error);
    }
}

TEST_CASE("squash examples") {
    Tensor zero({1, 2}, {0.0, 0.0});
    Tensor vz = squash(nullptr, zero);
    CHECK(vz.value() == std::vector<double>{0.0, 0.0});

    Tensor unit({1, 2}, {1.0, 0.0});
    Tensor vu = squash(nullptr, unit);
    CHECK(vu.value()[0] == doctest::Approx(0.5));
    CHECK(vu.value()[1] == doctest::Approx(0.0));

    Tensor three({1, 2}, {3.0, 0.0});
    Tensor vt = squash(nullptr, three);
    CHECK(vt.value()[0] == doctest::Approx(0.9));
}

TEST_CASE("squash properties on 1000 random vectors") {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<std::size_t> dim_dist(1, 16);
    std::uniform_real_distribution<double> norm_dist(0.0, 100.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t d = dim_dist(rng);
        std::vector<double> dir(d);
        double n = 0;
        for (auto& x : dir) {
            x = unit(rng);
            n += x * x;
        }
        n = std::sqrt(n);
        if (n == 0) dir[0] = 1, n = 1;
        double target = norm_dist(rng);
        std::vector<double> v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = dir[i] / n * target;

        Tensor s({1, d}, v);
        Tensor out = squash(nullptr, s);
        double out_norm = vec_norm(out.value());
        CHECK(out_norm < 1.0);

        // monotone: a strictly longer input in the same direction squashes longer
        std::vector<double> v2(d);
        for (std::size_t i = 0; i < d; ++i) v2[i] = dir[i] / n * (target + 0.37);
        double out_norm2 = vec_norm(squash(nullptr, Tensor({1, d}, v2)).value());
        CHECK(out_norm2 > out_norm);

        if (target > 0) {
            double dot = 0;
            for (std::size_t i = 0; i < d; ++i) dot += out.value()[i] * v[i];
            double cosine = dot / (out_norm * target);
            CHECK(cosine >= 1.0 - 1e-12);
        }
    }
}

TEST_CASE("squash gradient matches finite differences") {
    std::mt19937_64 rng(77);
    Tensor s = fd::random_tensor({3, 4}, rng);
    Tensor w = fd::random_tensor({3, 4}, rng, -1, 1, false);
    auto build = [&](Graph* g) { return reduce(g, Reduce::sum, mul(g, squash(g, s), w)); };
    auto stats = fd::check_gradients(build, {s}, rng, 12);
    CHECK(stats.failed == 0);
}

TEST_CASE("capsule_forward") {
    std::mt19937_64 rng(55);

    SUBCASE("all-zero weights give zero output capsules") {
        CapsuleParams p;
        p.w = Tensor::zeros({3, 4, 2, 2}, true);
        Tensor u = fd::random_tensor({2, 3, 2}, rng, -2, 2, false);
        Tensor v = capsule_forward(nullptr, p, u);
        CHECK(v.shape() == Shape{2, 4, 2});
        for (double x : v.value()) CHECK(x == 0.0);
    }

    SUBCASE("single input capsule with identity weights squashes the input into every output") {
        CapsuleParams p;
        p.w = Tensor::zeros({1, 3, 2, 2}, true);
        for (std::size_t j = 0; j < 3; ++j) {
            p.w.value()[(0 * 3 + j) * 4 + 0] = 1.0;  // 2x2 identity for pair (0, j)
            p.w.value()[(0 * 3 + j) * 4 + 3] = 1.0;
        }
        Tensor u({1, 1, 2}, {3.0, 0.0});
        Tensor v = capsule_forward(nullptr, p, u);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(v.value()[j * 2 + 0] == doctest::Approx(0.9));
            CHECK(v.value()[j * 2 + 1] == doctest::Approx(0.0));
        }
    }

    SUBCASE("dynamic routing with zero iterations equals uniform softmax coupling") {
        CapsuleParams p = CapsuleParams::init(3, 4, 2, 2, RoutingMode::dynamic, 0, rng);
        Tensor u = fd::random_tensor({2, 3, 2}, rng, -2, 2, false);
        Tensor v_dyn = capsule_forward(nullptr, p, u);

        // by hand: c_ij = 1/num_out, s_j = sum_i c_ij u_hat
        Tensor u_hat = caps_transform(nullptr, p.w, u);
        Tensor c = Tensor::full({2, 3, 4}, 1.0 / 4.0);
        Tensor v_hand = squash(nullptr, caps_weighted_sum(nullptr, c, u_hat));
        for (std::size_t i = 0; i < v_hand.size(); ++i)
            CHECK(v_dyn.value()[i] == doctest::Approx(v_hand.value()[i]).epsilon(1e-14));
    }

    SUBCASE("coupling coefficients sum to one over outputs at every iteration") {
        CapsuleParams p = CapsuleParams::init(3, 5, 2, 2, RoutingMode::dynamic, 3, rng);
        Tensor u = fd::random_tensor({2, 3, 2}, rng, -2, 2, false);
        Tensor u_hat = caps_transform(nullptr, p.w, u);
        Tensor logits = Tensor::zeros({2, 3, 5});
        for (std::size_t it = 0; it <= 3; ++it) {
            Tensor coupling = softmax_last(nullptr, logits);
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t i = 0; i < 3; ++i) {
                    double s = 0;
                    for (std::size_t j = 0; j < 5; ++j)
                        s += coupling.value()[(b * 3 + i) * 5 + j];
                    CHECK(std::abs(s - 1.0) <= 1e-12);
                }
            Tensor v = squash(nullptr, caps_weighted_sum(nullptr, coupling, u_hat));
            if (it < 3) logits = add(nullptr, logits, caps_agreement(nullptr, u_hat, v));
        }
    }

    SUBCASE("uniform and dynamic capsule gradients pass finite differences") {
        for (RoutingMode mode : {RoutingMode::uniform, RoutingMode::dynamic}) {
            CapsuleParams p = CapsuleParams::init(3, 4, 2, 2, mode, 2, rng);
            Tensor u = fd::random_tensor({2, 3, 2}, rng);
            Tensor w = fd::random_tensor({2, 4, 2}, rng, -1, 1, false);
            auto build = [&](Graph* g) {
                return reduce(g, Reduce::sum, mul(g, capsule_forward(g, p, u), w));
            };
            auto stats = fd::check_gradients(build, {p.w, u}, rng, 10);
            CHECK(stats.failed == 0);
            CHECK(stats.max_rel_err < fd::kRelTol);
        }
    }

    SUBCASE("dimension mismatch is a shape error") {
        CapsuleParams p = CapsuleParams::init(3, 4, 2, 2, RoutingMode::uniform, 0, rng);
        Tensor bad({1, 3, 5}, std::vector<double>(15, 0.0));
        CHECK_THROWS_AS(capsule_forward(nullptr, p, bad), shape_error);
    }
}

TEST_CASE("repeat_vector examples and gradient") {
    Tensor v({1, 2}, {1, 2});
    CHECK(repeat_vector(nullptr, v, 1).value() == std::vector<double>{1, 2});
    CHECK(repeat_vector(nullptr, v, 3).value() == std::vector<double>{1, 2, 1, 2, 1, 2});
    CHECK_THROWS_AS(repeat_vector(nullptr, v, 0), contract_error);

    std::mt19937_64 rng(3);
    Tensor v2 = fd::random_tensor({2, 3}, rng);
    auto build = [&](Graph* g) { return reduce(g, Reduce::sum, repeat_vector(g, v2, 4)); };
    auto stats = fd::check_gradients(build, {v2}, rng, 6);
    CHECK(stats.failed == 0);
    Graph g;
    v2.zero_grad();
    g.backward(reduce(&g, Reduce::sum, repeat_vector(&g, v2, 4)));
    for (double x : v2.grad()) CHECK(x == doctest::Approx(4.0));
}

TEST_CASE("time_distributed_dense") {
    SUBCASE("identity weights reproduce the input") {
        DenseParams p;
        p.w = Tensor({2, 2}, {1, 0, 0, 1}, true);
        p.b = Tensor::zeros({2}, true);
        Tensor xs({1, 3, 2}, {1, 2, 3, 4, 5, 6});
        CHECK(time_distributed_dense(nullptr, p, xs).value() == xs.value());
    }
    SUBCASE("T=1 reduces to a plain dense layer") {
        std::mt19937_64 rng(8);
        DenseParams p = DenseParams::init(3, 2, rng);
        Tensor x = fd::random_tensor({2, 3}, rng, -1, 1, false);
        Tensor xs = reshape(nullptr, x, {2, 1, 3});
        Tensor direct = add(nullptr, matmul(nullptr, x, transpose(nullptr, p.w)), p.b);
        Tensor via = reshape(nullptr, time_distributed_dense(nullptr, p, xs), {2, 2});
        CHECK(via.value() == direct.value());
    }
    SUBCASE("gradient check") {
        std::mt19937_64 rng(9);
        DenseParams p = DenseParams::init(3, 2, rng);
        Tensor xs = fd::random_tensor({2, 4, 3}, rng);
        auto build = [&](Graph* g) {
            Tensor y = time_distributed_dense(g, p, xs);
            return reduce(g, Reduce::mean, mul(g, y, y));
        };
        auto stats = fd::check_gradients(build, {p.w, p.b, xs}, rng, 8);
        CHECK(stats.failed == 0);
        CHECK(stats.max_rel_err < fd::kRelTol);
    }
}

TEST_CASE("concat_features") {
    Tensor a({1, 2, 1}, {1, 2});
    Tensor b({1, 2, 1}, {3, 4});
    SUBCASE("single part is identity") {
        CHECK(concat_features(nullptr, {a}).value() == a.value());
    }
    SUBCASE("per-timestep concatenation in branch order") {
        Tensor c = concat_features(nullptr, {a, b});
        CHECK(c.shape() == Shape{1, 2, 2});
        CHECK(c.value() == std::vector<double>{1, 3, 2, 4});
    }
    SUBCASE("mismatched timestep counts are rejected") {
        Tensor bad({1, 3, 1}, {1, 2, 3});
        CHECK_THROWS_AS(concat_features(nullptr, {a, bad}), shape_error);
    }
    SUBCASE("split-of-concat routes gradients back exactly") {
        std::mt19937_64 rng(10);
        Tensor p1 = fd::random_tensor({2, 3, 2}, rng);
        Tensor p2 = fd::random_tensor({2, 3, 1}, rng);
        Tensor w = fd::random_tensor({2, 3, 3}, rng, -1, 1, false);

        Graph g;
        Tensor joint = concat_features(&g, {p1, p2});
        g.backward(reduce(&g, Reduce::sum, mul(&g, joint, w)));
        auto g1 = p1.grad(), g2 = p2.grad();

        // baseline: score each part against its slice of the weights
        p1.zero_grad();
        p2.zero_grad();
        Graph g2b;
        Tensor w1 = slice(&g2b, w, 2, 0, 2);
        Tensor w2 = slice(&g2b, w, 2, 2, 1);
        Tensor loss = add(&g2b, reduce(&g2b, Reduce::sum, mul(&g2b, p1, w1)),
                          reduce(&g2b, Reduce::sum, mul(&g2b, p2, w2)));
        g2b.backward(loss);
        CHECK(p1.grad() == g1);
        CHECK(p2.grad() == g2);
    }
}

TEST_CASE("dropout in training keeps the expectation (Monte Carlo)") {
    std::mt19937_64 rng(2024);
    Tensor x = Tensor::full({10, 10}, 1.0);
    const int trials = 100;  // 100 x 100 elements = 1e4 draws
    double sum = 0.0;
    for (int i = 0; i < trials; ++i) {
        Tensor y = dropout(nullptr, x, 0.5, true, rng);
        for (double v : y.value()) sum += v;
    }
    double mean = sum / (trials * 100.0);
    CHECK(std::abs(mean - 1.0) < 3.0 / std::sqrt(1e4));
}
