#include <doctest.h>

#include <random>

#include "ddunet/loss.hpp"
#include "ddunet/network.hpp"

using namespace ddunet;

namespace {

// Closed-form parameter count built straight from the wiring rules, kept
// independent of plan_wiring/build_network.
std::int64_t oracle_count(Pattern p, int stages, int base, int in_ch = 4,
                          int out_ch = 3) {
    auto C = [&](int s) { return static_cast<std::int64_t>(base) << (s - 1); };
    auto block = [](std::int64_t cout, std::int64_t cin) {
        return cout * cin * 27 + cout + 2 * cout;  // conv w+b, gamma, beta
    };
    std::int64_t n = 0;
    for (int s = 1; s <= stages; ++s) {
        std::int64_t a_in = s == 1 ? in_ch : C(s - 1);
        if (s >= 2) {
            if (p == Pattern::cross_skip)
                for (int t = 1; t < s; ++t) a_in += C(t);
            else if (p == Pattern::skip_1)
                a_in += C(s - 1);
        }
        n += block(C(s), a_in);
        std::int64_t b_in = C(s);
        if (p == Pattern::skip_2 && s >= 2) b_in += C(s - 1);
        n += block(C(s), b_in);
    }
    for (int s = 1; s < stages; ++s) {
        n += block(C(s), C(s + 1) + C(s));  // decoder a, post-concat
        n += block(C(s), C(s));             // decoder b
    }
    n += static_cast<std::int64_t>(out_ch) * base + out_ch;  // 1x1x1 head
    return n;
}

Tensor<float> rand_input(std::vector<std::int64_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = u(rng);
    return t;
}

Tensor<float> rand_binary(std::vector<std::int64_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution bit(0.4);
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = bit(rng) ? 1.0f : 0.0f;
    return t;
}

}  // namespace

TEST_CASE("wiring plan per pattern") {
    TopologySpec spec;
    spec.stages = 4;

    spec.pattern = Pattern::cross_skip;
    auto plan = plan_wiring(spec);
    // stage 4 input: maxpool(b_3) implicit, plus bridged a_3, a_2, a_1
    const auto& s4 = plan.stage_extra[3];
    REQUIRE(s4.size() == 3);
    CHECK(s4[0].stage == 3);
    CHECK(s4[0].slot == 'a');
    CHECK(s4[0].down == 1);
    CHECK(s4[1].stage == 2);
    CHECK(s4[1].down == 2);
    CHECK(s4[2].stage == 1);
    CHECK(s4[2].down == 3);
    for (const auto& extras : plan.conv_b_extra) CHECK(extras.empty());

    spec.pattern = Pattern::none;
    plan = plan_wiring(spec);
    for (const auto& extras : plan.stage_extra) CHECK(extras.empty());

    spec.pattern = Pattern::skip_1;
    plan = plan_wiring(spec);
    for (int s = 2; s <= 4; ++s) {
        REQUIRE(plan.stage_extra[s - 1].size() == 1);
        CHECK(plan.stage_extra[s - 1][0].stage == s - 1);
        CHECK(plan.stage_extra[s - 1][0].slot == 'a');
        CHECK(plan.stage_extra[s - 1][0].down == 1);
    }

    spec.pattern = Pattern::skip_2;
    plan = plan_wiring(spec);
    for (const auto& extras : plan.stage_extra) CHECK(extras.empty());
    // conv-b junction of stage 3: a_3 implicit plus bridged b_2
    REQUIRE(plan.conv_b_extra[2].size() == 1);
    CHECK(plan.conv_b_extra[2][0].stage == 2);
    CHECK(plan.conv_b_extra[2][0].slot == 'b');
    CHECK(plan.conv_b_extra[2][0].down == 1);
}

TEST_CASE("spec validation and channel ladder") {
    TopologySpec spec;
    spec.pattern = Pattern::none;
    spec.base_channels = 64;
    CHECK(spec.channels_at(1) == 64);
    CHECK(spec.channels_at(2) == 128);
    CHECK(spec.channels_at(3) == 256);
    CHECK(spec.channels_at(4) == 512);

    TopologySpec bad = spec;
    bad.stages = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("build determinism and seed-invariant counts") {
    TopologySpec spec;
    spec.pattern = Pattern::cross_skip;
    spec.stages = 3;
    spec.base_channels = 4;
    auto n1 = build_network<float>(spec, 42);
    auto n2 = build_network<float>(spec, 42);
    auto p1 = n1.parameters(), p2 = n2.parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i)
        CHECK(p1[i]->value.data == p2[i]->value.data);
    auto n3 = build_network<float>(spec, 43);
    CHECK(n3.count_parameters() == n1.count_parameters());
}

TEST_CASE("parameter counts match the closed-form oracle") {
    for (auto p : {Pattern::none, Pattern::cross_skip, Pattern::skip_1,
                   Pattern::skip_2}) {
        for (int base : {32, 64}) {
            TopologySpec spec;
            spec.pattern = p;
            spec.stages = 4;
            spec.base_channels = base;
            const auto net = build_network<float>(spec, 1);
            CHECK(net.count_parameters() == oracle_count(p, 4, base));
        }
    }
    // a lone 3x3x3 conv with one in/out channel carries 27 weights + 1 bias
    std::mt19937_64 rng(1);
    auto conv = detail::make_conv<float>(1, 1, 3, 1, 1, 1, rng);
    CHECK(conv.weight->value.numel() + conv.bias->value.numel() == 28);
}

TEST_CASE("plain pattern at base 64 outweighs every DDC pattern at base 32") {
    const auto plain = oracle_count(Pattern::none, 4, 64);
    for (auto p : {Pattern::cross_skip, Pattern::skip_1, Pattern::skip_2})
        CHECK(plain > oracle_count(p, 4, 32));
}

TEST_CASE("strided bridge parameter count") {
    TopologySpec spec;
    spec.pattern = Pattern::skip_1;
    spec.stages = 2;
    spec.base_channels = 8;
    spec.bridge = BridgeMethod::strided_conv;
    auto net = build_network<float>(spec, 7);
    REQUIRE(net.stage_bridges[1].size() == 1);
    REQUIRE(net.stage_bridges[1][0].size() == 1);
    const auto& br = net.stage_bridges[1][0][0];
    CHECK(br.weight->value.numel() + br.bias->value.numel() == 8 * 8 * 8 + 8);
}

TEST_CASE("forward shape contract and gradient coverage") {
    for (auto p : {Pattern::none, Pattern::cross_skip, Pattern::skip_1,
                   Pattern::skip_2}) {
        for (int stages : {3, 4, 5}) {
            TopologySpec spec;
            spec.pattern = p;
            spec.stages = stages;
            spec.base_channels = 4;
            auto net = build_network<float>(spec, 5);
            const std::int64_t e = spec.divisibility();
            const std::int64_t ext = std::max<std::int64_t>(e, 16);
            auto x = make_leaf(rand_input({2, 4, ext, ext, ext}, 77), false);
            auto out = net.forward(x, true);
            CHECK(out->value.shape ==
                  std::vector<std::int64_t>{2, 3, ext, ext, ext});
            for (auto v : out->value.data) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
            auto target = rand_binary(out->value.shape, 78);
            auto [loss, bd] = total_loss(out, target);
            backward(loss);
            for (const auto& prm : net.parameters()) {
                REQUIRE(!prm->grad.empty());
                bool any = false;
                for (auto g : prm->grad.data)
                    if (g != 0.0f) any = true;
                CHECK(any);
            }
        }
    }
}

TEST_CASE("indivisible input is rejected with the divisibility message") {
    TopologySpec spec;
    spec.stages = 4;
    spec.base_channels = 4;
    auto net = build_network<float>(spec, 2);
    auto x = make_leaf(rand_input({1, 4, 12, 16, 16}, 3), false);
    CHECK_THROWS_WITH_AS(net.forward(x, false),
                         doctest::Contains("divisible by 8"),
                         std::invalid_argument);
}

TEST_CASE("eval forward is state-free and deterministic") {
    TopologySpec spec;
    spec.pattern = Pattern::cross_skip;
    spec.stages = 3;
    spec.base_channels = 4;
    auto net = build_network<float>(spec, 11);
    auto x = make_leaf(rand_input({1, 4, 8, 8, 8}, 12), false);
    std::vector<Tensor<float>> means, vars;
    for (auto& b : net.enc_a) {
        means.push_back(b.bn.running_mean);
        vars.push_back(b.bn.running_var);
    }
    auto y1 = net.forward(x, false);
    auto y2 = net.forward(x, false);
    CHECK(y1->value.data == y2->value.data);
    for (std::size_t i = 0; i < means.size(); ++i) {
        CHECK(net.enc_a[i].bn.running_mean.data == means[i].data);
        CHECK(net.enc_a[i].bn.running_var.data == vars[i].data);
    }
    // train mode does move the running stats
    net.forward(x, true);
    bool moved = false;
    for (std::size_t i = 0; i < means.size(); ++i)
        if (net.enc_a[i].bn.running_mean.data != means[i].data) moved = true;
    CHECK(moved);
}

TEST_CASE("gradient flows through every bridged edge") {
    TopologySpec spec;
    spec.pattern = Pattern::cross_skip;
    spec.stages = 3;
    spec.base_channels = 4;
    spec.bridge = BridgeMethod::strided_conv;
    auto net = build_network<float>(spec, 21);
    auto x = make_leaf(rand_input({1, 4, 8, 8, 8}, 22), false);
    auto out = net.forward(x, true);
    auto target = rand_binary(out->value.shape, 23);
    auto [loss, bd] = total_loss(out, target);
    const double base_loss = bd.total;
    backward(loss);
    for (int s = 0; s < spec.stages; ++s)
        for (const auto& chain : net.stage_bridges[s])
            for (const auto& c : chain) {
                bool any = false;
                for (auto g : c.weight->grad.data)
                    if (g != 0.0f) any = true;
                CHECK(any);
            }
    // zeroing one bridge's parameters changes the loss (edge is live)
    auto fresh = build_network<float>(spec, 21);
    for (auto& v : fresh.stage_bridges[1][0][0].weight->value.data) v = 0.0f;
    auto out2 = fresh.forward(x, true);
    auto [loss2, bd2] = total_loss(out2, target);
    CHECK(bd2.total != doctest::Approx(base_loss).epsilon(1e-9));
}
