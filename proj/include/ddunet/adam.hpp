#ifndef DDUNET_ADAM_HPP
#define DDUNET_ADAM_HPP

#include "ddunet/tensor.hpp"

namespace ddunet {

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;  // first/second moment per parameter
    std::int64_t t = 0;

    void init_like(const std::vector<VarPtr<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p->value.shape);
            v.emplace_back(p->value.shape);
        }
        t = 0;
    }
};

/// One Adam update from the parameters' grad buffers. The step counter is
/// incremented before bias correction. A NaN anywhere in the gradients
/// aborts the step with no parameter modified.
template <typename T>
void adam_step(std::vector<VarPtr<T>>& params, AdamState<T>& state,
               T lr = T(3e-4), T beta1 = T(0.9), T beta2 = T(0.999),
               T eps = T(1e-8)) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->grad.empty())
            throw std::invalid_argument("adam_step: parameter " + std::to_string(i) +
                                        " has no gradient");
        if (!params[i]->grad.same_shape(state.m[i]))
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (auto g : params[i]->grad.data)
            if (std::isnan(g))
                throw std::runtime_error("adam_step: NaN gradient in parameter " +
                                         std::to_string(i) + "; step aborted");
    }
    ++state.t;
    const T bc1 = T(1) - std::pow(beta1, static_cast<T>(state.t));
    const T bc2 = T(1) - std::pow(beta2, static_cast<T>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->value;
        const auto& g = params[i]->grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            m.data[j] = beta1 * m.data[j] + (T(1) - beta1) * g.data[j];
            v.data[j] = beta2 * v.data[j] + (T(1) - beta2) * g.data[j] * g.data[j];
            const T mhat = m.data[j] / bc1;
            const T vhat = v.data[j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace ddunet

#endif  // DDUNET_ADAM_HPP
