#pragma once

#include <cmath>
#include <vector>

#include "dwidn/nn/network.hpp"

namespace dwidn::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4; // coupled: added to the gradient as wd * p
};

/// One bias-corrected ADAM update over all trainable parameters.
template <class T>
void adam_step(ModelState<T>& model, const std::vector<Tensor<T>>& grads, const AdamConfig& cfg)
{
    if (!(cfg.learning_rate > 0))
        throw Error("adam_step: learning rate must be > 0");
    const std::size_t count = trainable_count(model);
    if (grads.size() != count)
        throw ShapeError("adam_step: expected " + std::to_string(count) + " gradients, got " +
                         std::to_string(grads.size()));
    if (model.adam_m.size() != count || model.adam_v.size() != count)
        throw ShapeError("adam_step: optimizer moments do not match the model");

    for_each_trainable(model, [&](std::size_t i, std::size_t layer, ParamKind kind, const Tensor<T>& param) {
        require_same_shape(param, grads[i], "adam_step gradient");
        if (!grads[i].all_finite())
            throw NumericError("adam_step: non-finite gradient in " + param_name(layer, kind));
    });

    const double t = static_cast<double>(model.step_count + 1);
    const double correction1 = 1.0 - std::pow(cfg.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg.beta2, t);
    for_each_trainable(model, [&](std::size_t i, std::size_t, ParamKind, Tensor<T>& param) {
        Tensor<T>& m = model.adam_m[i];
        Tensor<T>& v = model.adam_v[i];
        const Tensor<T>& g = grads[i];
        for (std::size_t k = 0; k < param.size(); ++k) {
            const double grad = static_cast<double>(g[k]) + cfg.weight_decay * static_cast<double>(param[k]);
            const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad;
            const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad * grad;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double m_hat = mk / correction1;
            const double v_hat = vk / correction2;
            param[k] = static_cast<T>(param[k] - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
        }
    });
    ++model.step_count;
}

} // namespace dwidn::nn
