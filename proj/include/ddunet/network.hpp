#ifndef DDUNET_NETWORK_HPP
#define DDUNET_NETWORK_HPP

#include <random>

#include "ddunet/ops.hpp"
#include "ddunet/topology.hpp"

namespace ddunet {

template <typename T>
struct ConvParams {
    VarPtr<T> weight;  // [Cout,Cin,k,k,k]
    VarPtr<T> bias;    // [Cout]
    int stride = 1, padding = 0, dilation = 1;
};

/// conv -> LeakyReLU -> BN unit (order switchable via TopologySpec).
template <typename T>
struct ConvBlock {
    ConvParams<T> conv;
    VarPtr<T> gamma, beta;
    BatchNormState<T> bn;
};

/// Instantiated parameterized network: encoder/decoder conv blocks, bridge
/// convolutions where the bridge method has parameters, and the 1x1x1 head.
template <typename T>
class Network {
public:
    TopologySpec spec;
    WiringPlan plan;
    std::vector<ConvBlock<T>> enc_a, enc_b;  // [stages]
    // bridge chains aligned with plan.stage_extra / plan.conv_b_extra;
    // empty chains for the parameter-free avg_pool method
    std::vector<std::vector<std::vector<ConvParams<T>>>> stage_bridges;
    std::vector<std::vector<std::vector<ConvParams<T>>>> convb_bridges;
    std::vector<ConvBlock<T>> dec_a, dec_b;  // [stages-1], index s-1
    ConvParams<T> head;

    std::vector<VarPtr<T>> parameters() const {
        std::vector<VarPtr<T>> out;
        auto add_conv = [&](const ConvParams<T>& c) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        };
        auto add_block = [&](const ConvBlock<T>& b) {
            add_conv(b.conv);
            out.push_back(b.gamma);
            out.push_back(b.beta);
        };
        for (int s = 0; s < spec.stages; ++s) {
            for (const auto& chain : stage_bridges[s])
                for (const auto& c : chain) add_conv(c);
            add_block(enc_a[s]);
            for (const auto& chain : convb_bridges[s])
                for (const auto& c : chain) add_conv(c);
            add_block(enc_b[s]);
        }
        for (int s = 0; s < spec.stages - 1; ++s) {
            add_block(dec_a[s]);
            add_block(dec_b[s]);
        }
        add_conv(head);
        return out;
    }

    std::int64_t count_parameters() const {
        std::int64_t n = 0;
        for (const auto& p : parameters()) n += p->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : parameters()) p->zero_grad();
    }

    VarPtr<T> forward(const VarPtr<T>& input, bool training) {
        const auto& s = input->value.shape;
        if (s.size() != 5 || s[1] != spec.in_channels)
            throw std::invalid_argument(
                "forward: input must be [N," + std::to_string(spec.in_channels) +
                ",D,H,W], got " + input->value.shape_str());
        const std::int64_t div = spec.divisibility();
        for (int a = 2; a < 5; ++a)
            if (s[a] % div != 0)
                throw std::invalid_argument(
                    "forward: spatial extents must be divisible by " +
                    std::to_string(div) + " for " + std::to_string(spec.stages) +
                    " stages, got " + input->value.shape_str());

        std::vector<VarPtr<T>> a_out(spec.stages), b_out(spec.stages);
        VarPtr<T> cur = input;
        auto pick = [&](const SourceRef& r) {
            return r.slot == 'a' ? a_out[r.stage - 1] : b_out[r.stage - 1];
        };
        for (int st = 1; st <= spec.stages; ++st) {
            if (st > 1) {
                std::vector<VarPtr<T>> sources{max_pool3d(b_out[st - 2])};
                const auto& extra = plan.stage_extra[st - 1];
                for (std::size_t i = 0; i < extra.size(); ++i)
                    sources.push_back(apply_bridge(
                        pick(extra[i]), stage_bridges[st - 1][i], extra[i].down));
                cur = sources.size() == 1 ? sources[0] : concat_channels(sources);
            }
            a_out[st - 1] = block(enc_a[st - 1], cur, training);
            VarPtr<T> b_in = a_out[st - 1];
            const auto& bextra = plan.conv_b_extra[st - 1];
            if (!bextra.empty()) {
                std::vector<VarPtr<T>> sources{b_in};
                for (std::size_t i = 0; i < bextra.size(); ++i)
                    sources.push_back(apply_bridge(
                        pick(bextra[i]), convb_bridges[st - 1][i], bextra[i].down));
                b_in = concat_channels(sources);
            }
            b_out[st - 1] = block(enc_b[st - 1], b_in, training);
            cur = b_out[st - 1];
        }
        for (int st = spec.stages - 1; st >= 1; --st) {
            cur = upsample_nearest3d(cur);
            cur = concat_channels<T>({cur, b_out[st - 1]});
            cur = block(dec_a[st - 1], cur, training);
            cur = block(dec_b[st - 1], cur, training);
        }
        return sigmoid(conv3d(cur, head.weight, head.bias));
    }

private:
    VarPtr<T> block(ConvBlock<T>& b, const VarPtr<T>& x, bool training) {
        auto y = conv3d(x, b.conv.weight, b.conv.bias, b.conv.stride,
                        b.conv.padding, b.conv.dilation);
        const T alpha = static_cast<T>(spec.leaky_alpha);
        const T mom = static_cast<T>(spec.bn_momentum);
        const T eps = static_cast<T>(spec.bn_eps);
        if (spec.act_before_norm) {
            y = leaky_relu(y, alpha);
            return batch_norm3d(y, b.gamma, b.beta, b.bn, training, mom, eps);
        }
        y = batch_norm3d(y, b.gamma, b.beta, b.bn, training, mom, eps);
        return leaky_relu(y, alpha);
    }

    VarPtr<T> apply_bridge(VarPtr<T> x, const std::vector<ConvParams<T>>& chain,
                           int down) {
        if (spec.bridge == BridgeMethod::avg_pool) {
            for (int i = 0; i < down; ++i) x = avg_pool3d(x);
            return x;
        }
        for (const auto& c : chain)
            x = conv3d(x, c.weight, c.bias, c.stride, c.padding, c.dilation);
        return x;
    }
};

namespace detail {
template <typename T>
VarPtr<T> he_uniform_conv(std::int64_t cout, std::int64_t cin, std::int64_t k,
                          std::mt19937_64& rng, double gain = 1.0) {
    Tensor<T> w({cout, cin, k, k, k});
    const double limit =
        gain * std::sqrt(6.0 / static_cast<double>(cin * k * k * k));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w.data) v = static_cast<T>(dist(rng));
    return make_leaf(std::move(w), true);
}

template <typename T>
ConvParams<T> make_conv(std::int64_t cout, std::int64_t cin, std::int64_t k,
                        int stride, int padding, int dilation,
                        std::mt19937_64& rng, double gain = 1.0) {
    ConvParams<T> c;
    c.weight = he_uniform_conv<T>(cout, cin, k, rng, gain);
    c.bias = make_leaf(Tensor<T>({cout}, T(0)), true);
    c.stride = stride;
    c.padding = padding;
    c.dilation = dilation;
    return c;
}

template <typename T>
ConvParams<T> make_bridge_conv(std::int64_t channels, BridgeMethod m,
                               std::mt19937_64& rng, double gain = 1.0) {
    switch (m) {
        case BridgeMethod::strided_conv:
            return make_conv<T>(channels, channels, 2, 2, 0, 1, rng, gain);
        case BridgeMethod::dilated_conv:
            return make_conv<T>(channels, channels, 3, 2, 2, 2, rng, gain);
        case BridgeMethod::avg_pool:
            break;
    }
    throw std::logic_error("avg_pool bridge has no parameters");
}

template <typename T>
ConvBlock<T> make_block(std::int64_t cout, std::int64_t cin,
                        std::mt19937_64& rng, double gain = 1.0) {
    ConvBlock<T> b;
    b.conv = make_conv<T>(cout, cin, 3, 1, 1, 1, rng, gain);
    b.gamma = make_leaf(Tensor<T>({cout}, T(1)), true);
    b.beta = make_leaf(Tensor<T>({cout}, T(0)), true);
    b.bn = BatchNormState<T>(cout);
    return b;
}
}  // namespace detail

/// Deterministic for a fixed seed: He-uniform conv weights, zero biases,
/// gamma 1 / beta 0.
template <typename T>
Network<T> build_network(const TopologySpec& spec, std::uint64_t seed) {
    spec.validate();
    Network<T> net;
    net.spec = spec;
    net.plan = plan_wiring(spec);
    std::mt19937_64 rng(seed);

    const bool param_bridge = spec.bridge != BridgeMethod::avg_pool;
    net.stage_bridges.resize(spec.stages);
    net.convb_bridges.resize(spec.stages);
    net.enc_a.resize(spec.stages);
    net.enc_b.resize(spec.stages);

    for (int s = 1; s <= spec.stages; ++s) {
        const std::int64_t cs = spec.channels_at(s);
        std::int64_t a_in = (s == 1) ? spec.in_channels : spec.channels_at(s - 1);
        auto& sb = net.stage_bridges[s - 1];
        for (const auto& ref : net.plan.stage_extra[s - 1]) {
            const std::int64_t ch = spec.channels_at(ref.stage);
            std::vector<ConvParams<T>> chain;
            if (param_bridge)
                for (int d = 0; d < ref.down; ++d)
                    chain.push_back(detail::make_bridge_conv<T>(ch, spec.bridge, rng, spec.init_gain));
            sb.push_back(std::move(chain));
            a_in += ch;
        }
        net.enc_a[s - 1] = detail::make_block<T>(cs, a_in, rng, spec.init_gain);

        std::int64_t b_in = cs;
        auto& cb = net.convb_bridges[s - 1];
        for (const auto& ref : net.plan.conv_b_extra[s - 1]) {
            const std::int64_t ch = spec.channels_at(ref.stage);
            std::vector<ConvParams<T>> chain;
            if (param_bridge)
                for (int d = 0; d < ref.down; ++d)
                    chain.push_back(detail::make_bridge_conv<T>(ch, spec.bridge, rng, spec.init_gain));
            cb.push_back(std::move(chain));
            b_in += ch;
        }
        net.enc_b[s - 1] = detail::make_block<T>(cs, b_in, rng, spec.init_gain);
    }

    net.dec_a.resize(spec.stages - 1);
    net.dec_b.resize(spec.stages - 1);
    for (int s = spec.stages - 1; s >= 1; --s) {
        const std::int64_t cs = spec.channels_at(s);
        const std::int64_t up_c = spec.channels_at(s + 1);
        net.dec_a[s - 1] = detail::make_block<T>(cs, up_c + cs, rng, spec.init_gain);
        net.dec_b[s - 1] = detail::make_block<T>(cs, cs, rng, spec.init_gain);
    }
    net.head = detail::make_conv<T>(spec.out_channels, spec.base_channels, 1, 1, 0, 1,
                                    rng, spec.head_init_gain);
    return net;
}

}  // namespace ddunet

#endif  // DDUNET_NETWORK_HPP
