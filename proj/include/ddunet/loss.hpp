#ifndef DDUNET_LOSS_HPP
#define DDUNET_LOSS_HPP

#include "ddunet/tensor.hpp"

namespace ddunet {

struct LossBreakdown {
    std::vector<double> dice_per_class;  // (1 - DICE_c) per class
    double dice_mean = 0.0;
    double l2_term = 0.0;
    double total = 0.0;
};

namespace detail {
template <typename T>
void check_loss_shapes(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape != target.shape)
        throw std::invalid_argument("loss: prediction shape " + pred.shape_str() +
                                    " does not match target " + target.shape_str());
    if (pred.shape.size() != 5)
        throw std::invalid_argument("loss: expected [N,C,D,H,W] tensors");
    for (auto v : target.data)
        if (v != T(0) && v != T(1))
            throw std::invalid_argument("loss: target must be binary");
}
}  // namespace detail

/// Mean-over-classes soft Dice loss plus an L2 term over the prediction
/// probabilities: total = mean_c(1 - DICE_c) + l2_weight * mean(pred^2),
/// DICE_c = (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth) with sums over
/// all voxels of the batch. Internal accumulation in double; the returned
/// node is differentiable w.r.t. pred.
template <typename T>
std::pair<VarPtr<T>, LossBreakdown> total_loss(const VarPtr<T>& pred,
                                               const Tensor<T>& target,
                                               double l2_weight = 0.01,
                                               double smooth = 1.0) {
    detail::check_loss_shapes(pred->value, target);
    const auto& s = pred->value.shape;
    const std::int64_t n = s[0], c = s[1];
    const std::int64_t vox = s[2] * s[3] * s[4];
    const std::int64_t numel = pred->value.numel();

    std::vector<double> inter(c, 0.0), psum(c, 0.0), gsum(c, 0.0);
    double sq = 0.0;
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * vox;
            double i_(0), p_(0), g_(0);
            for (std::int64_t i = 0; i < vox; ++i) {
                const double p = pred->value.data[base + i];
                const double g = target.data[base + i];
                i_ += p * g;
                p_ += p;
                g_ += g;
                sq += p * p;
            }
            inter[ch] += i_;
            psum[ch] += p_;
            gsum[ch] += g_;
        }

    LossBreakdown bd;
    bd.dice_per_class.resize(c);
    for (std::int64_t ch = 0; ch < c; ++ch) {
        const double dice =
            (2.0 * inter[ch] + smooth) / (psum[ch] + gsum[ch] + smooth);
        bd.dice_per_class[ch] = 1.0 - dice;
        bd.dice_mean += bd.dice_per_class[ch];
    }
    bd.dice_mean /= static_cast<double>(c);
    bd.l2_term = sq / static_cast<double>(numel);
    bd.total = bd.dice_mean + l2_weight * bd.l2_term;

    Tensor<T> out({1});
    out.data[0] = static_cast<T>(bd.total);
    auto tgt = std::make_shared<Tensor<T>>(target);
    auto node = make_node<T>(
        std::move(out), {pred},
        [tgt, inter, psum, gsum, smooth, l2_weight, c, vox, n, numel](Var<T>& nd) {
            auto& p = *nd.parents[0];
            p.ensure_grad();
            const double up = nd.grad.data[0];
            // d(1-DICE_c)/dp = (2*DICE_c_num_factor...) expanded below
            std::vector<double> denom(c), num(c);
            for (std::int64_t ch = 0; ch < c; ++ch) {
                denom[ch] = psum[ch] + gsum[ch] + smooth;
                num[ch] = 2.0 * inter[ch] + smooth;
            }
            const double l2_coef = up * l2_weight * 2.0 / static_cast<double>(numel);
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::int64_t base = (b * c + ch) * vox;
                    const double d2 = denom[ch] * denom[ch];
                    for (std::int64_t i = 0; i < vox; ++i) {
                        const double pv = p.value.data[base + i];
                        const double gv = tgt->data[base + i];
                        const double ddice =
                            (2.0 * gv * denom[ch] - num[ch]) / d2;  // dDICE/dp
                        p.grad.data[base + i] += static_cast<T>(
                            up * (-ddice) / static_cast<double>(c) + l2_coef * pv);
                    }
                }
        });
    return {node, bd};
}

/// Dice part alone (no L2 term).
template <typename T>
std::pair<VarPtr<T>, LossBreakdown> soft_dice_loss(const VarPtr<T>& pred,
                                                   const Tensor<T>& target,
                                                   double smooth = 1.0) {
    auto [node, bd] = total_loss(pred, target, 0.0, smooth);
    bd.total = bd.dice_mean;
    bd.l2_term = 0.0;
    return {node, bd};
}

/// Non-differentiable scorer for evaluation on plain tensors.
template <typename T>
LossBreakdown score_soft_dice(const Tensor<T>& pred, const Tensor<T>& target,
                              double smooth = 1.0) {
    auto leaf = make_leaf(pred, false);
    auto [node, bd] = total_loss(leaf, target, 0.0, smooth);
    bd.total = bd.dice_mean;
    return bd;
}

}  // namespace ddunet

#endif  // DDUNET_LOSS_HPP
