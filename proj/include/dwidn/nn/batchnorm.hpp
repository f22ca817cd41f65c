#pragma once

#include <cmath>
#include <optional>

#include "dwidn/core/tensor.hpp"

namespace dwidn::nn {

enum class Mode { train, eval };

template <class T>
struct BatchNormParams {
    Tensor<T> gamma, beta;
    Tensor<T> running_mean, running_var;
    T epsilon = T(1e-5);
    T momentum = T(0.1);

    static BatchNormParams identity(std::size_t channels)
    {
        return {Tensor<T>({channels}, T{1}), Tensor<T>({channels}, T{0}), Tensor<T>({channels}, T{0}),
                Tensor<T>({channels}, T{1})};
    }
    std::size_t channels() const { return gamma.size(); }
};

template <class T>
struct BatchNormCache {
    std::optional<Tensor<T>> normalized; // x_hat
    std::vector<T> inv_std;              // 1/sqrt(var + eps) per channel
    Mode mode = Mode::train;
};

template <class T>
struct BatchNormGrads {
    Tensor<T> input, gamma, beta;
};

namespace detail {

template <class T>
void check_bn(const Tensor<T>& input, const BatchNormParams<T>& params)
{
    if (input.rank() != 4)
        throw ShapeError("batchnorm: input must be NCHW, got " + shape_string(input.shape()));
    if (params.gamma.size() != input.dim(1) || params.beta.size() != input.dim(1) ||
        params.running_mean.size() != input.dim(1) || params.running_var.size() != input.dim(1))
        throw ShapeError("batchnorm: parameter size does not match " + std::to_string(input.dim(1)) + " channels");
    if (!(params.epsilon > T{0}))
        throw NumericError("batchnorm: epsilon must be > 0");
}

} // namespace detail

/// Per-channel normalization over (N, H, W). Train mode uses batch
/// statistics and updates the running estimates with
/// r <- (1 - momentum) r + momentum * batch_stat (unbiased variance);
/// eval mode uses the running estimates and leaves them unchanged.
template <class T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, BatchNormParams<T>& params, Mode mode, BatchNormCache<T>& cache)
{
    detail::check_bn(input, params);
    const std::size_t batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
    const std::size_t count = batch * plane;
    if (mode == Mode::train && count < 2)
        throw ShapeError("batchnorm: train mode needs at least 2 values per channel");

    Tensor<T> output(input.shape());
    Tensor<T> normalized(input.shape());
    cache.inv_std.assign(channels, T{0});
    cache.mode = mode;

    for (std::size_t c = 0; c < channels; ++c) {
        T mean, var;
        if (mode == Mode::train) {
            double sum = 0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = input.data() + (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i)
                    sum += p[i];
            }
            const double m = sum / static_cast<double>(count);
            double sq = 0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* p = input.data() + (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - m;
                    sq += d * d;
                }
            }
            mean = static_cast<T>(m);
            var = static_cast<T>(sq / static_cast<double>(count));
            const T unbiased = static_cast<T>(sq / static_cast<double>(count - 1));
            params.running_mean[c] = (T{1} - params.momentum) * params.running_mean[c] + params.momentum * mean;
            params.running_var[c] = (T{1} - params.momentum) * params.running_var[c] + params.momentum * unbiased;
        } else {
            mean = params.running_mean[c];
            var = params.running_var[c];
        }
        const T inv_std = T{1} / std::sqrt(var + params.epsilon);
        cache.inv_std[c] = inv_std;
        const T g = params.gamma[c], b = params.beta[c];
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            const T* p = input.data() + off;
            T* xh = normalized.data() + off;
            T* out = output.data() + off;
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean) * inv_std;
                out[i] = g * xh[i] + b;
            }
        }
    }
    cache.normalized = std::move(normalized);
    return output;
}

/// Eval-mode normalization with the running statistics, for const models.
template <class T>
Tensor<T> batchnorm_infer(const Tensor<T>& input, const BatchNormParams<T>& params)
{
    detail::check_bn(input, params);
    const std::size_t batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
    Tensor<T> output(input.shape());
    for (std::size_t c = 0; c < channels; ++c) {
        const T inv_std = T{1} / std::sqrt(params.running_var[c] + params.epsilon);
        const T mean = params.running_mean[c], g = params.gamma[c], b = params.beta[c];
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                output[off + i] = g * ((input[off + i] - mean) * inv_std) + b;
        }
    }
    return output;
}

template <class T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_out, const BatchNormCache<T>& cache,
                                     const BatchNormParams<T>& params)
{
    if (!cache.normalized)
        throw Error("batchnorm_backward: no cached forward pass");
    const Tensor<T>& xhat = *cache.normalized;
    require_same_shape(grad_out, xhat, "batchnorm_backward");
    const std::size_t batch = xhat.dim(0), channels = xhat.dim(1), plane = xhat.dim(2) * xhat.dim(3);
    const double count = static_cast<double>(batch * plane);

    BatchNormGrads<T> grads{Tensor<T>(xhat.shape()), Tensor<T>({channels}), Tensor<T>({channels})};
    for (std::size_t c = 0; c < channels; ++c) {
        double sum_g = 0, sum_gx = 0;
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += grad_out[off + i];
                sum_gx += static_cast<double>(grad_out[off + i]) * xhat[off + i];
            }
        }
        grads.beta[c] = static_cast<T>(sum_g);
        grads.gamma[c] = static_cast<T>(sum_gx);
        const T scale = params.gamma[c] * cache.inv_std[c];
        for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t off = (n * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                if (cache.mode == Mode::eval) {
                    grads.input[off + i] = scale * grad_out[off + i];
                } else {
                    const double g = grad_out[off + i];
                    grads.input[off + i] = static_cast<T>(
                        scale * (g - sum_g / count - xhat[off + i] * sum_gx / count));
                }
            }
        }
    }
    return grads;
}

} // namespace dwidn::nn
