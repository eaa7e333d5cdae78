#ifndef DDUNET_GRAD_CHECK_HPP
#define DDUNET_GRAD_CHECK_HPP

#include <cstddef>
#include <optional>

#include "ddunet/tensor.hpp"

namespace ddunet {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates where FD itself is invalid (kinks, pool ties)
};

/// Central-difference check of reverse-mode gradients.
///
/// `f` maps a vector of freshly built double-precision leaves to a scalar
/// Var and must be pure in those leaves (copy any mutable state inside).
/// Relative error per coordinate is |a - n| / max(1, |a|, |n|).
///
/// FD validity is probed by re-estimating at h/2: if the two estimates
/// disagree the function is not smooth within h at that coordinate (pool
/// tie, activation kink) and the coordinate is counted as skipped instead
/// of failed.
///
/// `coords`, when given, restricts the checked coordinates per input
/// (parallel to `points`; an empty inner vector means "all").
template <typename F>
GradCheckResult grad_check(
    F&& f, const std::vector<Tensor<double>>& points, double h = 1e-3,
    const std::vector<std::vector<std::size_t>>* coords = nullptr) {
    auto run = [&](const std::vector<Tensor<double>>& pts,
                   std::vector<VarPtr<double>>* leaves_out) -> double {
        std::vector<VarPtr<double>> leaves;
        leaves.reserve(pts.size());
        for (const auto& p : pts) leaves.push_back(make_leaf(p, true));
        auto loss = f(leaves);
        if (loss->value.numel() != 1)
            throw std::invalid_argument("grad_check: f must return a scalar");
        if (leaves_out) {
            backward(loss);
            *leaves_out = std::move(leaves);
        }
        return static_cast<double>(loss->value.data[0]);
    };

    std::vector<VarPtr<double>> leaves;
    run(points, &leaves);

    GradCheckResult res;
    std::vector<Tensor<double>> work = points;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<std::size_t> idx;
        if (coords && i < coords->size() && !(*coords)[i].empty()) {
            idx = (*coords)[i];
        } else {
            idx.resize(static_cast<std::size_t>(points[i].numel()));
            for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
        }
        for (std::size_t j : idx) {
            const double x0 = points[i].data[j];
            auto fd_at = [&](double step) {
                work[i].data[j] = x0 + step;
                const double fp = run(work, nullptr);
                work[i].data[j] = x0 - step;
                const double fm = run(work, nullptr);
                work[i].data[j] = x0;
                return (fp - fm) / (2.0 * step);
            };
            const double fd = fd_at(h);
            const double fd_half = fd_at(h / 2.0);
            const double fd_gap =
                std::abs(fd - fd_half) /
                std::max({1.0, std::abs(fd), std::abs(fd_half)});
            if (fd_gap > 1e-4) {
                ++res.skipped;
                continue;
            }
            const double a = leaves[i]->grad.empty() ? 0.0 : leaves[i]->grad.data[j];
            const double rel =
                std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace ddunet

#endif  // DDUNET_GRAD_CHECK_HPP
