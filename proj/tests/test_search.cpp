#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "revdarts/search.hpp"
#include "test_helpers.hpp"

using namespace revdarts;
using namespace revdarts::testing;

namespace {

SearchNode two_op_node(double a0, double a1, int width = 16) {
    RngStream rng(5);
    SearchNode node;
    node.ops = {make_op(OperationKind::Identity, width, rng, Dtype::f64),
                make_op(OperationKind::Zero, width, rng, Dtype::f64)};
    node.alpha = Tensor::leaf({1, 2}, Dtype::f64, {a0, a1}, true);
    return node;
}

// schoolbook decimal-string arithmetic, independent of the library path
std::string dec_mul_small(const std::string& a, int b) {
    std::string out;
    int carry = 0;
    for (auto it = a.rbegin(); it != a.rend(); ++it) {
        int v = (*it - '0') * b + carry;
        out.push_back(static_cast<char>('0' + v % 10));
        carry = v / 10;
    }
    while (carry) {
        out.push_back(static_cast<char>('0' + carry % 10));
        carry /= 10;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::string dec_power_product(int base1, int exp1, int base2, int exp2) {
    std::string r = "1";
    for (int i = 0; i < exp1; ++i) r = dec_mul_small(r, base1);
    for (int i = 0; i < exp2; ++i) r = dec_mul_small(r, base2);
    return r;
}

} // namespace

TEST_CASE("mixed_forward blends candidates by softmax(alpha)") {
    RngStream data(2);
    Tensor h = random_tensor({4, 16}, data);
    AttentionContext ctx;
    RngStream oprng(1);

    Tensor half = mixed_forward(two_op_node(0.0, 0.0), h, ctx, oprng);
    CHECK(max_abs_diff(half.values(), scale(h, 0.5).values()) < 1e-12);

    Tensor threeq =
        mixed_forward(two_op_node(std::log(3.0), 0.0), h, ctx, oprng);
    CHECK(max_abs_diff(threeq.values(), scale(h, 0.75).values()) < 1e-12);

    Tensor saturated = mixed_forward(two_op_node(50.0, 0.0), h, ctx, oprng);
    CHECK(max_rel_err(saturated.values(), h.values()) <= 1e-8);
}

TEST_CASE("pool_inputs reductions") {
    Tensor a = Tensor::leaf({1, 2}, Dtype::f64, {0, 2});
    Tensor b = Tensor::leaf({1, 2}, Dtype::f64, {4, 2});
    Tensor c = Tensor::leaf({1, 2}, Dtype::f64, {4, 1});

    CHECK(pool_inputs(Pooling::avg, {a}).values() == a.values());
    CHECK(pool_inputs(Pooling::max, {a}).values() == a.values());

    Tensor avg = pool_inputs(Pooling::avg, {a, b});
    CHECK(avg.at(0) == 2.0);
    CHECK(avg.at(1) == 2.0);

    Tensor mx = pool_inputs(Pooling::max, {a, c});
    CHECK(mx.at(0) == 4.0);
    CHECK(mx.at(1) == 2.0);

    Tensor bad = Tensor::leaf({1, 3}, Dtype::f64, {1, 2, 3});
    CHECK_THROWS_AS(pool_inputs(Pooling::avg, {a, bad}), std::runtime_error);
    CHECK_THROWS_AS(pool_inputs(Pooling::avg, {}), std::runtime_error);
}

TEST_CASE("g_k_forward pools then mixes") {
    RngStream data(9);
    Tensor x2 = random_tensor({3, 16}, data);
    Tensor x3 = random_tensor({3, 16}, data);
    Tensor y1 = random_tensor({3, 16}, data);
    AttentionContext ctx;
    RngStream r1(4), r2(4);

    // n=2, k=1: the pool of one part is that part
    SearchNode node = two_op_node(0.3, -0.2);
    node.pooling = Pooling::avg;
    Tensor via_g = g_k_forward(node, {x2}, {}, ctx, r1);
    Tensor direct = mixed_forward(node, x2, ctx, r2);
    CHECK(via_g.values() == direct.values());

    // n=3, k=2 with avg pooling sees (X_3 + Y_1)/2; an identity-saturated
    // node passes the pooled tensor through
    SearchNode ident = two_op_node(1000.0, 0.0);
    RngStream r3(4);
    Tensor pooled = g_k_forward(ident, {x3}, {y1}, ctx, r3);
    for (std::size_t i = 0; i < pooled.size(); ++i)
        CHECK(pooled.at(i) ==
              doctest::Approx((x3.at(i) + y1.at(i)) / 2).epsilon(1e-12));

    // one-hot on Zero kills the output regardless of inputs
    SearchNode zero = two_op_node(0.0, 1000.0);
    RngStream r4(4);
    Tensor z = g_k_forward(zero, {x3}, {y1}, ctx, r4);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z.at(i) == 0.0);
}

TEST_CASE("one-hot alpha equals the single op for every candidate") {
    RngStream rng(11);
    SearchNode node = make_search_node(Side::encoder, 16, Pooling::avg, rng,
                                       Dtype::f64);
    RngStream data(3);
    Tensor h = random_tensor({4, 16}, data);
    AttentionContext ctx;
    for (std::size_t i = 0; i < node.ops.size(); ++i) {
        CAPTURE(op_tag(node.ops[i].kind));
        int k = static_cast<int>(node.ops.size());
        std::vector<double> a(node.ops.size(), 0.0);
        a[i] = 1000.0;
        node.alpha = Tensor::leaf({1, k}, Dtype::f64, std::move(a), true);
        RngStream r1(6), r2(6);
        Tensor mixed = mixed_forward(node, h, ctx, r1);
        Tensor single = apply_op(node.ops[i], h, ctx, r2);
        CHECK(max_rel_err(mixed.values(), single.values()) <= 1e-12);
    }
}

TEST_CASE("alpha gradient matches finite differences") {
    RngStream rng(13);
    SearchNode node = make_search_node(Side::encoder, 8, Pooling::avg, rng,
                                       Dtype::f64);
    RngStream data(1);
    Tensor h = random_tensor({3, 8}, data);
    AttentionContext ctx;
    CHECK(gradcheck_vs_fd(
              [&](const Tensor& a) {
                  SearchNode alt = node;
                  alt.alpha = a;
                  RngStream r(2);
                  return mixed_forward(alt, h, ctx, r);
              },
              node.alpha) < 1e-5);
}

TEST_CASE("discretize_node: argmax, ties and invariances") {
    RngStream rng(17);
    SearchNode node = make_search_node(Side::encoder, 16, Pooling::avg, rng,
                                       Dtype::f64);
    int k = static_cast<int>(node.ops.size());

    // one-hot at ffn
    std::vector<double> a(static_cast<std::size_t>(k), 0.0);
    for (int i = 0; i < k; ++i)
        if (node.ops[static_cast<std::size_t>(i)].kind == OperationKind::FFN)
            a[static_cast<std::size_t>(i)] = 5.0;
    node.alpha = Tensor::leaf({1, k}, Dtype::f64, a, true);
    CHECK(discretize_node(node) == OperationKind::FFN);

    // all-zero alpha falls back to the first candidate in canonical order
    node.alpha = Tensor::leaf({1, k}, Dtype::f64,
                              std::vector<double>(static_cast<std::size_t>(k)),
                              true);
    CHECK(discretize_node(node) == node.ops[0].kind);

    // positive scaling and shared shifts never change the argmax; neither
    // do perturbations smaller than half the minimal pairwise gap
    RngStream prng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(static_cast<std::size_t>(k));
        for (double& x : v) x = prng.next_normal();
        node.alpha = Tensor::leaf({1, k}, Dtype::f64, v, true);
        OperationKind base = discretize_node(node);

        double c = 0.5 + prng.next_uniform() * 3.0;
        double shift = prng.next_normal();
        std::vector<double> scaled(v);
        for (double& x : scaled) x = c * x + shift;
        node.alpha = Tensor::leaf({1, k}, Dtype::f64, scaled, true);
        CHECK(discretize_node(node) == base);

        double gap = 1e300;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                gap = std::min(gap, std::fabs(v[static_cast<std::size_t>(i)] -
                                              v[static_cast<std::size_t>(j)]));
        std::vector<double> nudged(v);
        for (double& x : nudged)
            x += (prng.next_uniform() - 0.5) * 0.9 * gap;
        node.alpha = Tensor::leaf({1, k}, Dtype::f64, nudged, true);
        CHECK(discretize_node(node) == base);
    }
}

TEST_CASE("search_space_size exact arithmetic") {
    CHECK(search_space_size(2, 2, 1, 1, 1) == "4");
    CHECK(search_space_size(13, 13, 2, 3, 1) == "371293");
    CHECK(search_space_size(13, 13, 2, 3, 1) ==
          dec_power_product(13, 5, 1, 0));
    CHECK(search_space_size(13, 14, 2, 3, 2) == "215051077696");
    CHECK(search_space_size(13, 14, 2, 3, 2) ==
          dec_power_product(13, 4, 14, 6));
    // a larger cross-check against the independent decimal oracle
    CHECK(search_space_size(13, 14, 2, 3, 4) ==
          dec_power_product(13, 8, 14, 12));
    CHECK_THROWS_AS(search_space_size(0, 13, 2, 3, 1), std::runtime_error);
}

TEST_CASE("uniform sampling is reproducible and roughly uniform") {
    RngStream rng(19);
    SearchNode node = make_search_node(Side::encoder, 16, Pooling::avg, rng,
                                       Dtype::f64);
    int k = static_cast<int>(node.ops.size());

    RngStream s1(42), s2(42);
    for (int i = 0; i < 100; ++i)
        CHECK(sample_node_index(node, s1) == sample_node_index(node, s2));

    const int draws = 10000;
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    RngStream s3(7);
    for (int i = 0; i < draws; ++i)
        ++counts[static_cast<std::size_t>(sample_node_index(node, s3))];
    double expected = static_cast<double>(draws) / k;
    double chi2 = 0.0;
    for (int c : counts) {
        double dlt = c - expected;
        chi2 += dlt * dlt / expected;
    }
    // 99th percentile of chi-square with 12 degrees of freedom
    CHECK(chi2 < 26.217);
}

TEST_CASE("learning-rate schedules") {
    LrSchedule fixed;
    fixed.kind = LrSchedule::Kind::fixed;
    fixed.peak = 3e-4;
    CHECK(fixed.at(1) == 3e-4);
    CHECK(fixed.at(100000) == 3e-4);

    LrSchedule wu;
    wu.kind = LrSchedule::Kind::warmup_inv_sqrt;
    wu.peak = 5e-4;
    wu.warmup_steps = 100;
    CHECK(wu.at(1) == doctest::Approx(5e-6));
    CHECK(wu.at(100) == doctest::Approx(5e-4));
    CHECK(wu.at(400) == doctest::Approx(2.5e-4));
    CHECK(wu.at(50) < wu.at(100));
    CHECK_THROWS_AS(wu.at(0), std::runtime_error);
}

TEST_CASE("Adam: registry rules and a convergence smoke test") {
    Tensor p = Tensor::leaf({2}, Dtype::f64, {5.0, -3.0}, true);
    AdamConfig cfg;
    cfg.schedule.peak = 0.1;
    Adam adam(cfg);
    adam.add_param(p);
    CHECK_THROWS_AS(adam.add_param(p), std::runtime_error);
    Tensor ng = Tensor::leaf({1}, Dtype::f64, {1.0}, false);
    CHECK_THROWS_AS(adam.add_param(ng), std::runtime_error);

    // minimize |p|^2 / 2; gradient is p itself
    for (int i = 0; i < 400; ++i) {
        auto& g = p.grad();
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += p.at(j);
        adam.step();
    }
    CHECK(std::fabs(p.at(0)) < 1e-2);
    CHECK(std::fabs(p.at(1)) < 1e-2);
}

TEST_CASE("two optimizers over disjoint sets do not interact") {
    Tensor a = Tensor::leaf({2}, Dtype::f64, {1.0, 2.0}, true);
    Tensor b = Tensor::leaf({2}, Dtype::f64, {3.0, 4.0}, true);
    AdamConfig cfg;
    cfg.schedule.peak = 0.05;
    Adam oa(cfg), ob(cfg);
    oa.add_param(a);
    ob.add_param(b);

    auto b_before = b.values();
    a.grad()[0] += 1.0;
    a.grad()[1] += 1.0;
    b.grad()[0] += 1.0; // stray gradient must not move b via oa
    oa.step();
    CHECK(b.values() == b_before);
    CHECK(a.at(0) != 1.0);

    auto a_after = a.values();
    ob.step();
    CHECK(a.values() == a_after);
}
