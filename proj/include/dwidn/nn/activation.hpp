#pragma once

#include "dwidn/core/tensor.hpp"

namespace dwidn::nn {

template <class T>
Tensor<T> relu(const Tensor<T>& input)
{
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i)
        out[i] = input[i] > T{0} ? input[i] : T{0};
    return out;
}

/// `activated` is the forward output. The subgradient at exactly 0 is 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& activated)
{
    require_same_shape(grad_out, activated, "relu_backward");
    Tensor<T> grad(grad_out.shape());
    for (std::size_t i = 0; i < grad_out.size(); ++i)
        grad[i] = activated[i] > T{0} ? grad_out[i] : T{0};
    return grad;
}

} // namespace dwidn::nn
