#include <doctest.h>

#include <cmath>
#include <random>

#include "vida/errors.hpp"
#include "vida/vida_adapter.hpp"

using namespace vida;

namespace {

Tensor2D random_tensor(std::size_t r, std::size_t c, Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Tensor2D t(r, c);
    for (double& v : t.values()) v = n(rng);
    return t;
}

LinearLayer random_linear(std::size_t d_in, std::size_t d_out, Rng& rng) {
    Tensor2D w = random_tensor(d_out, d_in, rng);
    std::vector<double> b(d_out);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& v : b) v = n(rng);
    return LinearLayer(std::move(w), std::move(b));
}

ViDAPair random_pair(std::size_t d_in, std::size_t d_out, std::size_t dl, std::size_t dh, Rng& rng) {
    ViDAPair p(d_in, d_out, dl, dh);
    p.low_down = random_tensor(dl, d_in, rng, 0.5);
    p.low_up = random_tensor(d_out, dl, rng, 0.5);
    p.high_up = random_tensor(dh, d_in, rng, 0.5);
    p.high_down = random_tensor(d_out, dh, rng, 0.5);
    return p;
}

}  // namespace

TEST_CASE("zero adapter leaves the base layer output unchanged") {
    Rng rng(3);
    AdaptedLayer layer(random_linear(4, 4, rng), ViDAPair(4, 4, 1, 8));
    const Tensor2D x = random_tensor(5, 4, rng);
    const ScalePair s{1.7, 0.3};
    const Tensor2D y = adapted_forward(layer, s, x);
    const Tensor2D ref = linear_forward(layer.base(), x);
    CHECK(max_abs_diff(y, ref) == 0.0);
}

TEST_CASE("hand-computed fused output") {
    // d = 2, W = I, b = 0, low branch [1,0] -> [1;1], high branch identity-like
    LinearLayer base(Tensor2D::identity(2), {0.0, 0.0});
    ViDAPair p(2, 2, 1, 2);
    p.low_down = Tensor2D(1, 2, std::vector<double>{1.0, 0.0});
    p.low_up = Tensor2D(2, 1, std::vector<double>{1.0, 1.0});
    p.high_up = Tensor2D::identity(2);
    p.high_down = Tensor2D(2, 2, std::vector<double>{2.0, 0.0, 0.0, 2.0});
    AdaptedLayer layer(base, p);
    const Tensor2D x(1, 2, std::vector<double>{1.0, 2.0});
    // f_o = (1,2), f_h = (2,4), f_l = (1,1); out = f_o + 0.5 f_h + 1.5 f_l
    const Tensor2D y = adapted_forward(layer, {0.5, 1.5}, x);
    CHECK(y(0, 0) == doctest::Approx(1.0 + 1.0 + 1.5));
    CHECK(y(0, 1) == doctest::Approx(2.0 + 2.0 + 1.5));
}

TEST_CASE("fold matches the fused layer") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 8;
        AdaptedLayer layer(random_linear(d, d, rng), random_pair(d, d, 2, 16, rng));
        const Tensor2D x = random_tensor(6, d, rng);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        const double h = u(rng);
        const ScalePair s{h, 2.0 - h};
        const Tensor2D fused = adapted_forward(layer, s, x);
        const Tensor2D folded = linear_forward(reparameterize_fold(layer, s), x);
        CHECK(max_abs_diff(fused, folded) <= 1e-9);
    }
}

TEST_CASE("adapter output is linear in the input") {
    Rng rng(5);
    AdaptedLayer layer(LinearLayer(Tensor2D(6, 6), std::vector<double>(6, 0.0)), random_pair(6, 6, 2, 12, rng));
    const Tensor2D a = random_tensor(3, 6, rng);
    const Tensor2D b = random_tensor(3, 6, rng);
    Tensor2D sum = a;
    add_scaled(sum, 2.5, b);
    const ScalePair s{1.2, 0.8};
    Tensor2D expected = adapted_forward(layer, s, a);
    add_scaled(expected, 2.5, adapted_forward(layer, s, b));
    CHECK(max_abs_diff(adapted_forward(layer, s, sum), expected) <= 1e-10);
}

TEST_CASE("backward never touches the base layer") {
    Rng rng(8);
    AdaptedLayer layer(random_linear(5, 5, rng), random_pair(5, 5, 1, 10, rng));
    const LinearLayer before = layer.base();
    layer.forward(random_tensor(4, 5, rng), std::vector<ScalePair>{{1.0, 1.0}});
    layer.backward(random_tensor(4, 5, rng));
    CHECK(layer.base().weight == before.weight);
    CHECK(layer.base().bias == before.bias);
    CHECK(layer.base().weight_grad.empty() == before.weight_grad.empty());
    CHECK(max_abs_diff(layer.base().weight_grad, before.weight_grad) == 0.0);
}

TEST_CASE("backward without a cached forward is a state error") {
    Rng rng(1);
    AdaptedLayer layer(random_linear(3, 3, rng), ViDAPair(3, 3, 1, 3));
    CHECK_THROWS_AS(layer.backward(Tensor2D(1, 3)), StateError);
}

TEST_CASE("shape errors on mismatched input") {
    Rng rng(1);
    AdaptedLayer layer(random_linear(3, 3, rng), ViDAPair(3, 3, 1, 3));
    CHECK_THROWS_AS(adapted_forward(layer, {1.0, 1.0}, Tensor2D(2, 4)), ShapeError);
    CHECK_THROWS_AS(layer.forward(Tensor2D(2, 3), std::vector<ScalePair>(3)), ShapeError);
}

TEST_CASE("adapter parameter count for d=64, d_l=1, d_h=128") {
    ViDAPair p(64, 64, 1, 128);
    CHECK(p.parameter_count() == 64 + 64 + 64 * 128 + 128 * 64);
}

TEST_CASE("rank rules are enforced when attaching") {
    Rng rng(2);
    const std::vector<std::size_t> widths{8, 16, 4};
    const MlpModel m = make_mlp(widths, rng);
    AdapterOptions bad_low;
    bad_low.low_rank = 4;  // must be < min(d_in, d_out) = 4 on the classifier layer
    bad_low.high_rank = 16;
    CHECK_THROWS_AS(attach_adapters(m, bad_low, rng), ParameterError);
    AdapterOptions bad_high;
    bad_high.low_rank = 1;
    bad_high.high_rank = 8;  // must be >= 16
    CHECK_THROWS_AS(attach_adapters(m, bad_high, rng), ParameterError);
    AdapterOptions ok;
    ok.low_rank = 1;
    ok.high_rank = 16;
    CHECK_NOTHROW(attach_adapters(m, ok, rng));
}

TEST_CASE("zero_out_proj init starts from the source function") {
    Rng rng(4);
    const std::vector<std::size_t> widths{6, 12, 3};
    const MlpModel m = make_mlp(widths, rng);
    AdapterOptions o;
    o.high_rank = 12;
    const AdaptedModel a = attach_adapters(m, o, rng);
    const Tensor2D x = random_tensor(7, 6, rng);
    CHECK(max_abs_diff(a.evaluate(x, std::vector<ScalePair>{{1.4, 0.6}}), mlp_logits(m, x)) == 0.0);
}

TEST_CASE("analytic adapter gradients match central differences through softmax and the consistency loss") {
    Rng rng(21);
    const std::vector<std::size_t> widths{5, 7, 3};
    const MlpModel m = make_mlp(widths, rng);
    AdapterOptions o;
    o.low_rank = 2;
    o.high_rank = 7;
    o.init = AdapterInit::gaussian;
    o.sigma = 0.3;
    AdaptedModel model = attach_adapters(m, o, rng);
    const Tensor2D x = random_tensor(4, 5, rng);
    const Tensor2D target = softmax(random_tensor(4, 3, rng));
    std::vector<ScalePair> scales{{1.3, 0.7}, {0.8, 1.2}, {1.0, 1.0}, {1.9, 0.1}};

    auto loss = [&](AdaptedModel& mm) { return soft_cross_entropy(target, softmax(mm.evaluate(x, scales))); };
    model.zero_grad();
    const Tensor2D logits = model.forward(x, scales);
    model.backward(soft_cross_entropy_logit_grad(target, softmax(logits)));
    std::vector<ParamRef> params = model.adapter_parameters();
    const double h = 1e-5;
    for (ParamRef& p : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + h;
            const double up = loss(model);
            p.value[i] = keep - h;
            const double down = loss(model);
            p.value[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double scale = std::max({std::abs(fd), std::abs(p.grad[i]), 1e-6});
            INFO(p.name << "[" << i << "] analytic " << p.grad[i] << " fd " << fd);
            CHECK(std::abs(fd - p.grad[i]) / scale <= 1e-4);
        }
    }
}

TEST_CASE("branch forward worked examples") {
    ViDAPair high(1, 1, 0, 2);
    high.high_up = Tensor2D(2, 1, std::vector<double>{1.0, 2.0});
    high.high_down = Tensor2D(1, 2, std::vector<double>{3.0, 4.0});
    const BranchFeatures h = vida_branch_forward(high, Tensor2D(1, 1, std::vector<double>{1.0}));
    CHECK(h.high(0, 0) == 11.0);
    CHECK(h.low(0, 0) == 0.0);

    ViDAPair low(2, 2, 1, 2);
    low.low_down = Tensor2D(1, 2, std::vector<double>{1.0, 1.0});
    low.low_up = Tensor2D(2, 1, std::vector<double>{1.0, 0.0});
    const BranchFeatures l = vida_branch_forward(low, Tensor2D::from_rows({{2, 3}}));
    CHECK(l.low(0, 0) == 5.0);
    CHECK(l.low(0, 1) == 0.0);
    CHECK(max_abs_diff(l.high, Tensor2D(1, 2)) == 0.0);
}

TEST_CASE("fusion by direct substitution") {
    // f_o = [1,2] from an identity base, f_h = [0.5,0.5], f_l = [-1,0]
    LinearLayer base(Tensor2D::identity(2), {0.0, 0.0});
    ViDAPair p(2, 2, 1, 2);
    p.high_up = Tensor2D::identity(2);
    p.high_down = Tensor2D::from_rows({{0.5, 0.0}, {0.0, 0.25}});
    p.low_down = Tensor2D(1, 2, std::vector<double>{1.0, 0.0});
    p.low_up = Tensor2D(2, 1, std::vector<double>{-1.0, 0.0});
    AdaptedLayer layer(base, p);
    const Tensor2D x = Tensor2D::from_rows({{1, 2}});
    const Tensor2D y = adapted_forward(layer, {1.5, 0.5}, x);
    CHECK(y(0, 0) == doctest::Approx(1.25));
    CHECK(y(0, 1) == doctest::Approx(2.75));
    CHECK(adapted_forward(layer, {0.0, 0.0}, x) == x);
}

TEST_CASE("fold worked example and zero-adapter fold") {
    ViDAPair p(1, 1, 0, 2);
    p.high_up = Tensor2D(2, 1, std::vector<double>{1.0, 2.0});
    p.high_down = Tensor2D(1, 2, std::vector<double>{3.0, 4.0});
    AdaptedLayer layer(LinearLayer(Tensor2D(1, 1, std::vector<double>{2.0}), {0.0}), p);
    const LinearLayer folded = reparameterize_fold(layer, {1.0, 1.0});
    CHECK(folded.weight(0, 0) == 13.0);
    const Tensor2D one(1, 1, std::vector<double>{1.0});
    CHECK(linear_forward(folded, one)(0, 0) == 13.0);
    CHECK(adapted_forward(layer, {1.0, 1.0}, one)(0, 0) == 13.0);

    Rng rng(8);
    AdaptedLayer zero(random_linear(4, 3, rng), ViDAPair(4, 3, 1, 4));
    const LinearLayer same = reparameterize_fold(zero, {1.7, 0.3});
    CHECK(same.weight == zero.base().weight);
    CHECK(same.bias == zero.base().bias);
}

TEST_CASE("zero upstream gradient accumulates nothing") {
    Rng rng(4);
    AdaptedLayer layer(random_linear(3, 3, rng), random_pair(3, 3, 1, 4, rng));
    adapted_forward(layer, {1.2, 0.8}, random_tensor(5, 3, rng));
    layer.vida().zero_grad();
    adapted_backward(layer, Tensor2D(5, 3));
    const ViDAPair& v = layer.vida();
    for (const Tensor2D* g : {&v.low_down_grad, &v.low_up_grad, &v.high_up_grad, &v.high_down_grad}) {
        CHECK(max_abs_diff(*g, Tensor2D(g->rows(), g->cols())) == 0.0);
    }
}

TEST_CASE("doubling lambda_h doubles the high-branch gradients") {
    Rng rng(6);
    const LinearLayer base = random_linear(4, 4, rng);
    const ViDAPair p = random_pair(4, 4, 1, 6, rng);
    const Tensor2D x = random_tensor(3, 4, rng);
    const Tensor2D g = random_tensor(3, 4, rng);
    AdaptedLayer a(base, p), b(base, p);
    adapted_forward(a, {0.75, 1.0}, x);
    adapted_backward(a, g);
    adapted_forward(b, {1.5, 1.0}, x);
    adapted_backward(b, g);
    for (std::size_t i = 0; i < a.vida().high_up_grad.size(); ++i) {
        CHECK(b.vida().high_up_grad.values()[i] == doctest::Approx(2.0 * a.vida().high_up_grad.values()[i]).epsilon(1e-12));
    }
    for (std::size_t i = 0; i < a.vida().high_down_grad.size(); ++i) {
        CHECK(b.vida().high_down_grad.values()[i] ==
              doctest::Approx(2.0 * a.vida().high_down_grad.values()[i]).epsilon(1e-12));
    }
    CHECK(a.vida().low_up_grad == b.vida().low_up_grad);
}

TEST_CASE("gaussian init is deterministic under a seed") {
    Rng init(2);
    const MlpModel m = make_mlp(std::vector<std::size_t>{8, 16, 4}, init);
    Rng a(55), b(55);
    const AdaptedModel ma = attach_adapters(m, 1, 16, AdapterInit::gaussian, 0.01, a);
    const AdaptedModel mb = attach_adapters(m, 1, 16, AdapterInit::gaussian, 0.01, b);
    for (std::size_t i = 0; i < ma.layer_count(); ++i) {
        CHECK(ma.layer(i).vida().high_down == mb.layer(i).vida().high_down);
        CHECK(ma.layer(i).vida().low_down == mb.layer(i).vida().low_down);
    }
}
