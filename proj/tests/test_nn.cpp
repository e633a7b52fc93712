#include <doctest.h>

#include <cmath>
#include <random>

#include "vida/errors.hpp"
#include "vida/nn.hpp"

using namespace vida;

namespace {

Tensor2D random_tensor(std::size_t r, std::size_t c, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor2D t(r, c);
    for (double& v : t.values()) v = n(rng);
    return t;
}

}  // namespace

TEST_CASE("linear_forward worked examples") {
    LinearLayer scalar(Tensor2D(1, 1, std::vector<double>{2.0}), {1.0});
    CHECK(linear_forward(scalar, Tensor2D(1, 1, std::vector<double>{3.0}))(0, 0) == 7.0);

    LinearLayer ident(Tensor2D::identity(2), {0.0, 0.0});
    const Tensor2D x = Tensor2D::from_rows({{-1.5, 4.25}});
    CHECK(linear_forward(ident, x) == x);

    LinearLayer mixed(Tensor2D::from_rows({{1, 1}, {1, -1}}), {0.0, 0.0});
    const Tensor2D y = linear_forward(mixed, Tensor2D::from_rows({{2, 3}}));
    CHECK(y(0, 0) == 5.0);
    CHECK(y(0, 1) == -1.0);

    CHECK_THROWS_AS(linear_forward(mixed, Tensor2D(1, 3)), ShapeError);
}

TEST_CASE("linear_backward by hand") {
    LinearLayer layer(Tensor2D(1, 1, std::vector<double>{2.0}), {0.0});
    const Tensor2D grad_in =
        linear_backward(layer, Tensor2D(1, 1, std::vector<double>{3.0}), Tensor2D(1, 1, std::vector<double>{1.0}));
    CHECK(layer.weight_grad(0, 0) == 3.0);
    CHECK(layer.bias_grad[0] == 1.0);
    CHECK(grad_in(0, 0) == 2.0);

    LinearLayer other(Tensor2D::from_rows({{1, 2}, {3, 4}}), {0.5, 0.5});
    const Tensor2D zero_in = linear_backward(other, Tensor2D::from_rows({{1, 1}}), Tensor2D(1, 2));
    CHECK(max_abs_diff(other.weight_grad, Tensor2D(2, 2)) == 0.0);
    CHECK(max_abs_diff(zero_in, Tensor2D(1, 2)) == 0.0);
}

TEST_CASE("linear gradients match central differences") {
    Rng rng(7);
    LinearLayer layer(random_tensor(3, 4, rng), {0.1, -0.2, 0.3});
    const Tensor2D x = random_tensor(5, 4, rng);
    const Tensor2D w = random_tensor(5, 3, rng);
    auto loss = [&](const LinearLayer& l) {
        const Tensor2D y = linear_forward(l, x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * w.values()[i];
        return s;
    };
    layer.zero_grad();
    linear_backward(layer, x, w);
    const double h = 1e-5;
    for (std::size_t i = 0; i < layer.weight.size(); ++i) {
        LinearLayer up = layer, down = layer;
        up.weight.values()[i] += h;
        down.weight.values()[i] -= h;
        CHECK(layer.weight_grad.values()[i] == doctest::Approx((loss(up) - loss(down)) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("softmax worked examples") {
    const Tensor2D a = softmax(Tensor2D::from_rows({{0, 0}}));
    CHECK(a(0, 0) == doctest::Approx(0.5));
    const Tensor2D b = softmax(Tensor2D::from_rows({{4.2, 4.2, 4.2}}));
    for (double v : b.values()) CHECK(v == doctest::Approx(1.0 / 3.0));
    const Tensor2D c = softmax(Tensor2D::from_rows({{std::log(2.0), 0.0}}));
    CHECK(std::abs(c(0, 0) - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(c(0, 1) - 1.0 / 3.0) <= 1e-12);
}

TEST_CASE("softmax rows are stochastic and positive for large logits") {
    Rng rng(3);
    Tensor2D logits = random_tensor(50, 6, rng);
    logits(0, 0) = 300.0;
    logits(1, 2) = -300.0;
    const Tensor2D p = softmax(logits);
    for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0.0;
        for (double v : p.row(r)) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("soft cross-entropy worked examples") {
    CHECK(soft_cross_entropy(Tensor2D::from_rows({{1, 0}}), Tensor2D::from_rows({{1, 0}})) == doctest::Approx(0.0));
    CHECK(soft_cross_entropy(Tensor2D::from_rows({{1, 0}}), Tensor2D::from_rows({{0.5, 0.5}})) ==
          doctest::Approx(0.3465736).epsilon(1e-7));
    CHECK(soft_cross_entropy(Tensor2D::from_rows({{0.5, 0.5}}), Tensor2D::from_rows({{0.5, 0.5}})) ==
          doctest::Approx(0.3465736).epsilon(1e-7));
    CHECK_THROWS_AS(soft_cross_entropy(Tensor2D(1, 2), Tensor2D(1, 3)), ShapeError);
}

TEST_CASE("soft cross-entropy is non-negative for random stochastic rows") {
    Rng rng(12);
    for (int i = 0; i < 200; ++i) {
        const Tensor2D t = softmax(random_tensor(3, 5, rng));
        const Tensor2D p = softmax(random_tensor(3, 5, rng));
        CHECK(soft_cross_entropy(t, p) >= 0.0);
    }
}

TEST_CASE("soft cross-entropy logit gradient matches central differences") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor2D target = softmax(random_tensor(4, 3, rng));
        Tensor2D logits = random_tensor(4, 3, rng);
        const Tensor2D g = soft_cross_entropy_logit_grad(target, softmax(logits));
        const double h = 1e-5;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            Tensor2D up = logits, down = logits;
            up.values()[i] += h;
            down.values()[i] -= h;
            const double fd =
                (soft_cross_entropy(target, softmax(up)) - soft_cross_entropy(target, softmax(down))) / (2 * h);
            CHECK(std::abs(fd - g.values()[i]) <= 1e-4 * std::max(std::abs(fd), 1e-6));
        }
    }
}

TEST_CASE("dropout") {
    Rng rng(1);
    const Tensor2D x = random_tensor(4, 4, rng);
    CHECK(dropout_forward(x, 0.0, rng, true) == x);
    CHECK(dropout_forward(x, 0.5, rng, false) == x);
    CHECK_THROWS_AS(dropout_forward(x, 1.0, rng, true), ParameterError);
    CHECK_THROWS_AS(dropout_forward(x, -0.1, rng, true), ParameterError);

    const Tensor2D ones(1000, 100, 1.0);
    Rng seeded(42);
    const Tensor2D d = dropout_forward(ones, 0.5, seeded, true);
    std::size_t zeros = 0;
    for (double v : d.values()) {
        if (v == 0.0) ++zeros;
        else CHECK(v == 2.0);
    }
    CHECK(std::abs(static_cast<double>(zeros) / 1e5 - 0.5) <= 0.01);
}

TEST_CASE("adam worked examples") {
    std::vector<double> value{0.25, -1.0};
    std::vector<double> grad{0.0, 0.0};
    AdamState state;
    std::vector<ParamRef> params{{"p", value, grad}};
    adam_step(state, params);
    CHECK(value[0] == 0.25);
    CHECK(value[1] == -1.0);

    std::vector<double> w{0.0};
    std::vector<double> g{1.0};
    AdamState s1;
    s1.lr = 1e-3;
    std::vector<ParamRef> p1{{"w", w, g}};
    adam_step(s1, p1);
    CHECK(std::abs(w[0] + 1e-3) <= 1e-6);

    g[0] = -1.0;
    adam_step(s1, p1);
    CHECK(std::abs(w[0]) < 1e-3);
}

TEST_CASE("adam rejects moment buffers that no longer match") {
    std::vector<double> a{1.0, 2.0};
    std::vector<double> ga{0.1, 0.1};
    AdamState s;
    std::vector<ParamRef> p{{"a", a, ga}};
    adam_step(s, p);
    std::vector<double> b{1.0};
    std::vector<double> gb{0.1};
    std::vector<ParamRef> q{{"b", b, gb}};
    CHECK_THROWS(adam_step(s, q));
}

TEST_CASE("mlp backward matches central differences") {
    Rng rng(5);
    const std::vector<std::size_t> widths{4, 6, 5, 3};
    MlpModel m = make_mlp(widths, rng);
    const Tensor2D x = random_tensor(3, 4, rng);
    const std::vector<std::size_t> labels{0, 2, 1};
    MlpTrace trace;
    const Tensor2D logits = mlp_logits(m, x, &trace);
    mlp_zero_grad(m);
    mlp_backward(m, trace, hard_cross_entropy_logit_grad(softmax(logits), labels));
    auto loss = [&] { return hard_cross_entropy(softmax(mlp_logits(m, x)), labels); };
    const double h = 1e-5;
    for (ParamRef& p : mlp_parameters(m)) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = loss();
            p.value[i] = keep - h;
            const double down = loss();
            p.value[i] = keep;
            const double fd = (up - down) / (2 * h);
            INFO(p.name << "[" << i << "]");
            CHECK(std::abs(fd - p.grad[i]) <= 1e-4 * std::max({std::abs(fd), std::abs(p.grad[i]), 1e-6}));
        }
    }
}

TEST_CASE("make_mlp is deterministic under a seed") {
    const std::vector<std::size_t> widths{16, 64, 64, 4};
    Rng a(99), b(99);
    const MlpModel ma = make_mlp(widths, a);
    const MlpModel mb = make_mlp(widths, b);
    for (std::size_t i = 0; i < ma.layers.size(); ++i) CHECK(ma.layers[i].weight == mb.layers[i].weight);
    CHECK(ma.widths() == widths);
}
