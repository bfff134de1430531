#include <doctest.h>

#include <cmath>
#include <random>

#include "ids/tape.hpp"

using namespace ids;

namespace {

// Reduce a [n] vector to its mean as a size-1 tensor so backward() accepts it.
Tape::Id mean_of(Tape& tape, Tape::Id v) {
    const std::size_t n = tape.value(v).size();
    return tape.global_average_pool(tape.reshape(v, {n, 1}));
}

}  // namespace

TEST_CASE("elementwise ops: forward values and gradients") {
    Tape tape;
    Tape::Id a = tape.leaf(Tensor::vec({1.0, -2.0, 3.0}), true);
    Tape::Id b = tape.leaf(Tensor::vec({4.0, 5.0, -6.0}), true);

    SUBCASE("add") {
        Tape::Id s = tape.add(a, b);
        CHECK(tape.value(s).data == std::vector<double>{5.0, 3.0, -3.0});
        tape.backward(mean_of(tape, s));
        for (double g : tape.grad(a).data) CHECK(g == doctest::Approx(1.0 / 3.0));
        for (double g : tape.grad(b).data) CHECK(g == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("mul") {
        Tape::Id p = tape.mul(a, b);
        CHECK(tape.value(p).data == std::vector<double>{4.0, -10.0, -18.0});
        tape.backward(mean_of(tape, p));
        CHECK(tape.grad(a).data[0] == doctest::Approx(4.0 / 3.0));
        CHECK(tape.grad(b).data[2] == doctest::Approx(3.0 / 3.0));
    }
    SUBCASE("affine") {
        Tape::Id y = tape.affine(a, 2.0, 1.0);
        CHECK(tape.value(y).data == std::vector<double>{3.0, -3.0, 7.0});
        tape.backward(mean_of(tape, y));
        for (double g : tape.grad(a).data) CHECK(g == doctest::Approx(2.0 / 3.0));
    }
}

TEST_CASE("sigmoid and tanh match closed forms") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor::vec({0.0, 1.0, -2.0}), true);
    Tape::Id s = tape.sigmoid(x);
    CHECK(tape.value(s).data[0] == doctest::Approx(0.5));
    CHECK(tape.value(s).data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    Tape::Id t = tape.tanh_(x);
    CHECK(tape.value(t).data[0] == doctest::Approx(0.0));
    CHECK(tape.value(t).data[2] == doctest::Approx(std::tanh(-2.0)));

    tape.backward(mean_of(tape, s));
    // d sigmoid = s(1-s)
    for (std::size_t i = 0; i < 3; ++i) {
        double sv = tape.value(s).data[i];
        CHECK(tape.grad(x).data[i] == doctest::Approx(sv * (1.0 - sv) / 3.0));
    }
}

TEST_CASE("matmul oracle with gradients") {
    Tape tape;
    Tape::Id a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}), true);
    Tape::Id b = tape.leaf(Tensor({2, 2}, {5, 6, 7, 8}), true);
    Tape::Id y = tape.matmul(a, b);
    CHECK(tape.value(y).data == std::vector<double>{19, 22, 43, 50});

    tape.backward(mean_of(tape, y));
    // upstream grad is 1/4 everywhere; dA = g Y B^T, dB = A^T g Y
    CHECK(tape.grad(a).data == std::vector<double>{11.0 / 4, 15.0 / 4, 11.0 / 4, 15.0 / 4});
    CHECK(tape.grad(b).data == std::vector<double>{4.0 / 4, 4.0 / 4, 6.0 / 4, 6.0 / 4});
}

TEST_CASE("reshape preserves data and routes gradients through") {
    Tape tape;
    Tape::Id a = tape.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    Tape::Id r = tape.reshape(a, {3, 2});
    CHECK(tape.value(r).shape == Shape{3, 2});
    CHECK(tape.value(r).data == tape.value(a).data);
    CHECK_THROWS_AS((void)tape.reshape(a, {4, 2}), std::invalid_argument);

    tape.backward(mean_of(tape, tape.mul(r, r)));
    // d mean(x^2) = 2x/6
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(tape.grad(a).data[i] == doctest::Approx(2.0 * (i + 1) / 6.0));
}

TEST_CASE("concat_cols / row / stack_rows round trips") {
    Tape tape;
    Tape::Id a = tape.leaf(Tensor({2, 1}, {1, 2}), true);
    Tape::Id b = tape.leaf(Tensor({2, 2}, {3, 4, 5, 6}), true);
    std::vector<Tape::Id> parts{a, b};
    Tape::Id c = tape.concat_cols(parts);
    CHECK(tape.value(c).shape == Shape{2, 3});
    CHECK(tape.value(c).data == std::vector<double>{1, 3, 4, 2, 5, 6});

    Tape::Id r0 = tape.row(c, 0);
    Tape::Id r1 = tape.row(c, 1);
    CHECK(tape.value(r0).data == std::vector<double>{1, 3, 4});
    std::vector<Tape::Id> rows{r0, r1};
    Tape::Id back = tape.stack_rows(rows);
    CHECK(tape.value(back).data == tape.value(c).data);

    tape.backward(mean_of(tape, back));
    for (double g : tape.grad(a).data) CHECK(g == doctest::Approx(1.0 / 6.0));
    for (double g : tape.grad(b).data) CHECK(g == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("conv1d same-padding oracle [1,2,3] * [1,1,1] -> [3,6,5]") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({3, 1}, {1, 2, 3}), false);
    Tape::Id k = tape.leaf(Tensor({1, 3, 1}, {1, 1, 1}), false);
    Tape::Id b = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id y = tape.conv1d(x, k, b, Padding::Same);
    CHECK(tape.value(y).shape == Shape{3, 1});
    CHECK(tape.value(y).data == std::vector<double>{3, 6, 5});
}

TEST_CASE("conv1d identity kernel and bias broadcast") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}), false);
    // two output channels, K=1: out0 copies ch0, out1 copies ch1
    Tape::Id k = tape.leaf(Tensor({2, 1, 2}, {1, 0, 0, 1}), false);
    Tape::Id b = tape.leaf(Tensor::vec({10.0, 20.0}), false);
    Tape::Id y = tape.conv1d(x, k, b, Padding::Same);
    CHECK(tape.value(y).data == std::vector<double>{11, 22, 13, 24, 15, 26, 17, 28});
}

TEST_CASE("conv1d valid padding shrinks the sequence") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({5, 1}, {1, 1, 1, 1, 1}), false);
    Tape::Id k = tape.leaf(Tensor({1, 3, 1}, {1, 1, 1}), false);
    Tape::Id b = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id y = tape.conv1d(x, k, b, Padding::Valid);
    CHECK(tape.value(y).shape == Shape{3, 1});
    CHECK(tape.value(y).data == std::vector<double>{3, 3, 3});
}

TEST_CASE("batchnorm: constant column maps to zero") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({3, 1}, {7, 7, 7}), false);
    Tape::Id gamma = tape.leaf(Tensor::vec({1.0}), false);
    Tape::Id beta = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id y = tape.batchnorm(x, gamma, beta, nullptr, BnMode::Frozen);
    for (double v : tape.value(y).data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("batchnorm: column [1,2,3] standardizes to +-1.2247") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({3, 1}, {1, 2, 3}), false);
    Tape::Id gamma = tape.leaf(Tensor::vec({1.0}), false);
    Tape::Id beta = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id y = tape.batchnorm(x, gamma, beta, nullptr, BnMode::Frozen, 1e-12);
    CHECK(tape.value(y).data[0] == doctest::Approx(-1.224744871).epsilon(1e-6));
    CHECK(tape.value(y).data[1] == doctest::Approx(0.0));
    CHECK(tape.value(y).data[2] == doctest::Approx(1.224744871).epsilon(1e-6));
}

TEST_CASE("batchnorm: batch-stat output has zero mean and unit variance per feature") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-3.0, 5.0);
    Tensor in = Tensor::zeros({16, 4});
    for (auto& v : in.data) v = dist(rng);

    Tape tape;
    Tape::Id x = tape.leaf(in, false);
    Tape::Id gamma = tape.leaf(Tensor::full({4}, 1.0), false);
    Tape::Id beta = tape.leaf(Tensor::zeros({4}), false);
    BnStats stats = BnStats::fresh(4);
    Tape::Id y = tape.batchnorm(x, gamma, beta, &stats, BnMode::Train, 1e-5);

    const Tensor& out = tape.value(y);
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < 16; ++r) mean += out.at(r, c);
        mean /= 16;
        for (std::size_t r = 0; r < 16; ++r) var += (out.at(r, c) - mean) * (out.at(r, c) - mean);
        var /= 16;
        CHECK(std::abs(mean) < 1e-9);
        // variance of x_hat is var/(var+eps), i.e. 1 up to the eps correction
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
    // Train mode updated the running stats away from their fresh values.
    CHECK(stats.mean.data != Tensor::zeros({4}).data);
}

TEST_CASE("batchnorm: frozen mode leaves running stats untouched") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({2, 1}, {1, 5}), false);
    Tape::Id gamma = tape.leaf(Tensor::vec({1.0}), false);
    Tape::Id beta = tape.leaf(Tensor::vec({0.0}), false);
    BnStats stats = BnStats::fresh(1);
    (void)tape.batchnorm(x, gamma, beta, &stats, BnMode::Frozen);
    CHECK(stats.mean.data[0] == 0.0);
    CHECK(stats.var.data[0] == 1.0);
}

TEST_CASE("batchnorm rejects eps <= 0") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor({2, 1}, {1, 2}), false);
    Tape::Id gamma = tape.leaf(Tensor::vec({1.0}), false);
    Tape::Id beta = tape.leaf(Tensor::vec({0.0}), false);
    CHECK_THROWS_AS((void)tape.batchnorm(x, gamma, beta, nullptr, BnMode::Frozen, 0.0),
                    std::invalid_argument);
}

TEST_CASE("global_average_pool matches a plain loop") {
    Tape tape;
    Tensor in({3, 2}, {1, 10, 2, 20, 6, 30});
    Tape::Id x = tape.leaf(in, true);
    Tape::Id y = tape.global_average_pool(x);
    CHECK(tape.value(y).shape == Shape{2});
    CHECK(tape.value(y).data[0] == doctest::Approx(3.0));
    CHECK(tape.value(y).data[1] == doctest::Approx(20.0));

    tape.backward(mean_of(tape, y));
    // each input element receives 1/(L*C_out_mean) = (1/3)*(1/2)
    for (double g : tape.grad(x).data) CHECK(g == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("dropout: infer mode and rate 0 are identity; train mode scales survivors") {
    Tape tape;
    std::mt19937_64 rng(42);
    Tensor in = Tensor::full({50, 20}, 1.0);
    Tape::Id x = tape.leaf(in, false);

    Tape::Id inf = tape.dropout(x, 0.5, RunMode::Infer, rng);
    CHECK(tape.value(inf).data == in.data);
    Tape::Id zero = tape.dropout(x, 0.0, RunMode::Train, rng);
    CHECK(tape.value(zero).data == in.data);

    const double rate = 0.2;
    Tape::Id y = tape.dropout(x, rate, RunMode::Train, rng);
    std::size_t kept = 0;
    for (double v : tape.value(y).data) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / (1.0 - rate))));
        if (v != 0.0) ++kept;
    }
    double frac = static_cast<double>(kept) / in.size();
    CHECK(frac == doctest::Approx(1.0 - rate).epsilon(0.05));
    CHECK_THROWS_AS((void)tape.dropout(x, 1.0, RunMode::Train, rng), std::invalid_argument);
}

TEST_CASE("softmax cross-entropy: uniform logits give ln K") {
    Tape tape;
    Tape::Id logits = tape.leaf(Tensor({1, 4}, {0.3, 0.3, 0.3, 0.3}), false);
    Tensor onehot = Tensor::zeros({1, 4});
    onehot.at(0, 2) = 1.0;
    Tape::Id loss = tape.softmax_cross_entropy(logits, onehot);
    CHECK(tape.value(loss).data[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("softmax cross-entropy gradient equals (softmax - onehot)/N") {
    Tape tape;
    Tensor lv({2, 3}, {1.0, -0.5, 0.25, 2.0, 2.0, -1.0});
    Tape::Id logits = tape.leaf(lv, true);
    Tensor onehot = Tensor::zeros({2, 3});
    onehot.at(0, 1) = 1.0;
    onehot.at(1, 0) = 1.0;
    Tape::Id loss = tape.softmax_cross_entropy(logits, onehot);
    tape.backward(loss);

    for (std::size_t r = 0; r < 2; ++r) {
        double mx = std::max({lv.at(r, 0), lv.at(r, 1), lv.at(r, 2)});
        double z = 0.0;
        for (std::size_t c = 0; c < 3; ++c) z += std::exp(lv.at(r, c) - mx);
        for (std::size_t c = 0; c < 3; ++c) {
            double p = std::exp(lv.at(r, c) - mx) / z;
            double expect = (p - onehot.at(r, c)) / 2.0;
            CHECK(tape.grad(logits).at(r, c) == doctest::Approx(expect).epsilon(1e-10));
        }
    }
}

TEST_CASE("backward twice doubles accumulated gradients") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor::vec({2.0, -1.0}), true);
    Tape::Id loss = mean_of(tape, tape.mul(x, x));
    tape.backward(loss);
    Tensor once = tape.grad(x);
    tape.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(tape.grad(x).data[i] == doctest::Approx(2.0 * once.data[i]));
}

TEST_CASE("constant function yields zero gradients") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor::vec({3.0, 4.0}), true);
    Tape::Id c = tape.leaf(Tensor::scalar(5.0), false);
    Tape::Id loss = tape.affine(c, 1.0, 0.0);  // does not depend on x
    tape.backward(loss);
    for (double g : tape.grad(x).data) CHECK(g == 0.0);
}

TEST_CASE("gradients accumulate additively at fan-out") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor::vec({3.0}), true);
    Tape::Id y = tape.add(x, x);  // y = 2x
    tape.backward(mean_of(tape, y));
    CHECK(tape.grad(x).data[0] == doctest::Approx(2.0));
}

TEST_CASE("gru single step matches the closed-form scalar recurrence") {
    Tape tape;
    Tape::Id seq = tape.leaf(Tensor({1, 1}, {1.0}), false);
    GruParamIds p;
    p.Wz = tape.leaf(Tensor({1, 1}, {1.0}), false);
    p.Wr = tape.leaf(Tensor({1, 1}, {0.0}), false);
    p.Wh = tape.leaf(Tensor({1, 1}, {1.0}), false);
    p.Uz = tape.leaf(Tensor({1, 1}, {0.0}), false);
    p.Ur = tape.leaf(Tensor({1, 1}, {0.0}), false);
    p.Uh = tape.leaf(Tensor({1, 1}, {0.0}), false);
    p.bz = tape.leaf(Tensor::vec({0.0}), false);
    p.br = tape.leaf(Tensor::vec({0.0}), false);
    p.bh = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id h0 = tape.leaf(Tensor::vec({0.0}), false);

    Tape::Id out = gru_forward(tape, seq, p, h0);
    // h0 = 0 so h' = z * tanh(Wh x) with z = sigmoid(Wz x)
    double expect = (1.0 / (1.0 + std::exp(-1.0))) * std::tanh(1.0);
    CHECK(tape.value(out).shape == Shape{1, 1});
    CHECK(tape.value(out).data[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("gru returns the full hidden sequence and carries state forward") {
    Tape tape;
    Tape::Id seq = tape.leaf(Tensor({3, 1}, {1.0, 1.0, 1.0}), false);
    GruParamIds p;
    auto one = [&] { return tape.leaf(Tensor({1, 1}, {1.0}), false); };
    auto zero = [&] { return tape.leaf(Tensor({1, 1}, {0.0}), false); };
    p.Wz = one();
    p.Wr = zero();
    p.Wh = one();
    p.Uz = zero();
    p.Ur = zero();
    p.Uh = zero();
    p.bz = tape.leaf(Tensor::vec({0.0}), false);
    p.br = tape.leaf(Tensor::vec({0.0}), false);
    p.bh = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id h0 = tape.leaf(Tensor::vec({0.0}), false);
    Tape::Id out = gru_forward(tape, seq, p, h0);
    CHECK(tape.value(out).shape == Shape{3, 1});

    // manual recurrence
    double h = 0.0;
    double z = 1.0 / (1.0 + std::exp(-1.0));
    double hc = std::tanh(1.0);
    for (std::size_t t = 0; t < 3; ++t) {
        h = (1.0 - z) * h + z * hc;
        CHECK(tape.value(out).at(t, 0) == doctest::Approx(h).epsilon(1e-12));
    }
}

TEST_CASE("tensor ids from another tape are rejected") {
    Tape tape;
    Tape::Id x = tape.leaf(Tensor::vec({1.0}), true);
    (void)x;
    CHECK_THROWS_AS((void)tape.value(99), std::invalid_argument);
}
