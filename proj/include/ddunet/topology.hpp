#ifndef DDUNET_TOPOLOGY_HPP
#define DDUNET_TOPOLOGY_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddunet {

enum class Pattern { none, cross_skip, skip_1, skip_2 };
enum class BridgeMethod { avg_pool, strided_conv, dilated_conv };

inline std::string to_string(Pattern p) {
    switch (p) {
        case Pattern::none: return "none";
        case Pattern::cross_skip: return "cross_skip";
        case Pattern::skip_1: return "skip_1";
        case Pattern::skip_2: return "skip_2";
    }
    return "?";
}
inline std::string to_string(BridgeMethod m) {
    switch (m) {
        case BridgeMethod::avg_pool: return "avg_pool";
        case BridgeMethod::strided_conv: return "strided_conv";
        case BridgeMethod::dilated_conv: return "dilated_conv";
    }
    return "?";
}
inline Pattern pattern_from_string(const std::string& s) {
    if (s == "none") return Pattern::none;
    if (s == "cross_skip") return Pattern::cross_skip;
    if (s == "skip_1") return Pattern::skip_1;
    if (s == "skip_2") return Pattern::skip_2;
    throw std::invalid_argument("unknown pattern: " + s);
}
inline BridgeMethod bridge_from_string(const std::string& s) {
    if (s == "avg_pool") return BridgeMethod::avg_pool;
    if (s == "strided_conv") return BridgeMethod::strided_conv;
    if (s == "dilated_conv") return BridgeMethod::dilated_conv;
    throw std::invalid_argument("unknown bridge method: " + s);
}

/// Declarative description of an encoder-decoder segmentation network with
/// distributed dense connections on the encoder side.
struct TopologySpec {
    Pattern pattern = Pattern::cross_skip;
    int stages = 4;
    int base_channels = 32;
    int in_channels = 4;
    int out_channels = 3;
    BridgeMethod bridge = BridgeMethod::avg_pool;
    // conv -> LeakyReLU -> BN by default; false swaps to conv -> BN -> LeakyReLU.
    bool act_before_norm = true;
    double leaky_alpha = 0.2;
    // Multipliers on the He-uniform init limit. Batch norm makes the forward
    // pass scale-free in the hidden conv weights, but Adam's fixed step size
    // rotates small weights faster, so a sub-1 gain there speeds up short
    // training budgets. The head has no norm after it, so its init scale sets
    // the reachable logit range and benefits from a gain above 1.
    double init_gain = 0.3;
    double head_init_gain = 24.0;
    // Running-stat update weight. Small batches make per-batch statistics
    // noisy but also make stale averages costly at eval time; 0.3 tracks the
    // recent batches closely enough for short training runs.
    double bn_momentum = 0.3;
    double bn_eps = 1e-5;

    int channels_at(int stage) const {  // stage is 1-indexed
        return base_channels << (stage - 1);
    }
    std::int64_t divisibility() const { return std::int64_t{1} << (stages - 1); }
    void validate() const {
        if (stages < 2) throw std::invalid_argument("topology: stages must be >= 2");
        if (base_channels < 1)
            throw std::invalid_argument("topology: base_channels must be >= 1");
        if (in_channels < 1 || out_channels < 1)
            throw std::invalid_argument("topology: channel counts must be >= 1");
    }
};

/// One concatenation source: the output of conv slot 'a' or 'b' of an
/// earlier encoder stage, downsampled `down` times by the bridge transform
/// to match the junction's resolution.
struct SourceRef {
    int stage;   // 1-indexed source stage
    char slot;   // 'a' or 'b'
    int down;    // number of halvings applied
};

/// Concatenation sources per encoder junction. Every stage s >= 2 implicitly
/// receives maxpool(b_{s-1}); `stage_extra[s-1]` lists the bridged sources
/// appended after it. For the skip_2 pattern `conv_b_extra[s-1]` lists the
/// bridged sources appended after a_s at the second-conv junction.
struct WiringPlan {
    std::vector<std::vector<SourceRef>> stage_extra;
    std::vector<std::vector<SourceRef>> conv_b_extra;
};

inline WiringPlan plan_wiring(const TopologySpec& spec) {
    spec.validate();
    WiringPlan plan;
    plan.stage_extra.resize(static_cast<std::size_t>(spec.stages));
    plan.conv_b_extra.resize(static_cast<std::size_t>(spec.stages));
    for (int s = 2; s <= spec.stages; ++s) {
        auto& extra = plan.stage_extra[static_cast<std::size_t>(s - 1)];
        switch (spec.pattern) {
            case Pattern::none:
                break;
            case Pattern::cross_skip:
                // every earlier stage contributes its first conv output
                for (int t = s - 1; t >= 1; --t)
                    extra.push_back({t, 'a', s - t});
                break;
            case Pattern::skip_1:
                // b_{s-1} already arrives via max pool; a_{s-1} is bridged
                extra.push_back({s - 1, 'a', 1});
                break;
            case Pattern::skip_2:
                plan.conv_b_extra[static_cast<std::size_t>(s - 1)].push_back(
                    {s - 1, 'b', 1});
                break;
        }
    }
    // structural resolution-match invariant: a source from stage t sits at
    // extent E/2^(t-1); `down` halvings must land it at the junction extent
    for (int s = 1; s <= spec.stages; ++s) {
        for (const auto& refs : {plan.stage_extra[static_cast<std::size_t>(s - 1)],
                                 plan.conv_b_extra[static_cast<std::size_t>(s - 1)]}) {
            for (const auto& r : refs) {
                if (r.stage >= s)
                    throw std::logic_error("wiring: source must precede its junction");
                if (r.stage - 1 + r.down != s - 1)
                    throw std::logic_error("wiring: bridged source resolution mismatch");
            }
        }
    }
    return plan;
}

}  // namespace ddunet

#endif  // DDUNET_TOPOLOGY_HPP
