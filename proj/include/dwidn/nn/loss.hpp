#pragma once

#include "dwidn/core/tensor.hpp"

namespace dwidn::nn {

template <class T>
struct LossResult {
    double loss = 0;
    Tensor<T> grad; // d loss / d prediction
};

/// Mean squared error; grad = 2 (prediction - target) / count.
template <class T>
LossResult<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target)
{
    require_same_shape(prediction, target, "mse_loss");
    if (prediction.empty())
        throw ShapeError("mse_loss: empty input");
    LossResult<T> result{0.0, Tensor<T>(prediction.shape())};
    const double count = static_cast<double>(prediction.size());
    double sum = 0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        const double d = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
        sum += d * d;
        result.grad[i] = static_cast<T>(2.0 * d / count);
    }
    result.loss = sum / count;
    return result;
}

} // namespace dwidn::nn
