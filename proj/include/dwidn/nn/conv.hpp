#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dwidn/core/parallel.hpp"
#include "dwidn/core/tensor.hpp"

namespace dwidn::nn {

inline constexpr std::size_t kKernel = 3;
inline constexpr std::size_t kTaps = kKernel * kKernel;

/// 3x3 convolution, stride 1, zero padding 1.
template <class T>
struct ConvLayerParams {
    Tensor<T> weights;            // [out_ch, in_ch, 3, 3]
    std::optional<Tensor<T>> bias; // [out_ch]

    std::size_t out_channels() const { return weights.dim(0); }
    std::size_t in_channels() const { return weights.dim(1); }
};

template <class T>
struct ConvCache {
    std::optional<Tensor<T>> input;
};

template <class T>
struct ConvGrads {
    Tensor<T> input;
    Tensor<T> weights;
    std::optional<Tensor<T>> bias;
};

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstRowMap = Eigen::Map<const RowMatrix<T>>;

/// Unfolds one [C, H, W] image into a [C*9, H*W] patch matrix. Row index is
/// c*9 + ky*3 + kx, column index y*W + x, out-of-image taps are zero.
template <class T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width, T* col)
{
    const std::size_t plane = height * width;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* src = image + c * plane;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
            for (std::size_t kx = 0; kx < kKernel; ++kx) {
                T* dst = col + (c * kTaps + ky * kKernel + kx) * plane;
                const long dy = static_cast<long>(ky) - 1, dx = static_cast<long>(kx) - 1;
                for (std::size_t y = 0; y < height; ++y) {
                    const long sy = static_cast<long>(y) + dy;
                    T* row = dst + y * width;
                    if (sy < 0 || sy >= static_cast<long>(height)) {
                        std::fill(row, row + width, T{0});
                        continue;
                    }
                    const T* srow = src + sy * width;
                    const std::size_t x0 = dx < 0 ? 1 : 0;
                    const std::size_t x1 = dx > 0 ? width - 1 : width;
                    if (dx < 0)
                        row[0] = T{0};
                    if (dx > 0)
                        row[width - 1] = T{0};
                    for (std::size_t x = x0; x < x1; ++x)
                        row[x] = srow[static_cast<long>(x) + dx];
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters a [C*9, H*W] matrix back into [C, H, W].
template <class T>
void col2im(const T* col, std::size_t channels, std::size_t height, std::size_t width, T* image)
{
    const std::size_t plane = height * width;
    std::fill(image, image + channels * plane, T{0});
    for (std::size_t c = 0; c < channels; ++c) {
        T* dst = image + c * plane;
        for (std::size_t ky = 0; ky < kKernel; ++ky) {
            for (std::size_t kx = 0; kx < kKernel; ++kx) {
                const T* src = col + (c * kTaps + ky * kKernel + kx) * plane;
                const long dy = static_cast<long>(ky) - 1, dx = static_cast<long>(kx) - 1;
                for (std::size_t y = 0; y < height; ++y) {
                    const long sy = static_cast<long>(y) + dy;
                    if (sy < 0 || sy >= static_cast<long>(height))
                        continue;
                    const T* row = src + y * width;
                    T* drow = dst + sy * width;
                    const std::size_t x0 = dx < 0 ? 1 : 0;
                    const std::size_t x1 = dx > 0 ? width - 1 : width;
                    for (std::size_t x = x0; x < x1; ++x)
                        drow[static_cast<long>(x) + dx] += row[x];
                }
            }
        }
    }
}

template <class T>
void check_conv_shapes(const Tensor<T>& input, const ConvLayerParams<T>& params)
{
    if (input.rank() != 4)
        throw ShapeError("conv2d: input must be NCHW, got " + shape_string(input.shape()));
    const auto& w = params.weights.shape();
    if (w.size() != 4 || w[2] != kKernel || w[3] != kKernel)
        throw ShapeError("conv2d: weights must be [out, in, 3, 3], got " + shape_string(w));
    if (input.dim(1) != w[1])
        throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, weights expect " +
                         std::to_string(w[1]));
    if (params.bias && params.bias->shape() != Shape{w[0]})
        throw ShapeError("conv2d: bias shape " + shape_string(params.bias->shape()) + " does not match " +
                         std::to_string(w[0]) + " output channels");
}

} // namespace detail

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayerParams<T>& params, std::size_t threads = 1)
{
    detail::check_conv_shapes(input, params);
    const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = params.out_channels(), plane = h * w;
    Tensor<T> output({batch, cout, h, w});
    const detail::ConstRowMap<T> weights(params.weights.data(), cout, cin * kTaps);

    parallel_chunks(batch, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        detail::RowMatrix<T> col(cin * kTaps, plane);
        for (std::size_t n = begin; n < end; ++n) {
            detail::im2col(input.data() + n * cin * plane, cin, h, w, col.data());
            detail::RowMap<T> out(output.data() + n * cout * plane, cout, plane);
            out.noalias() = weights * col;
            if (params.bias)
                for (std::size_t o = 0; o < cout; ++o)
                    out.row(o).array() += (*params.bias)[o];
        }
    });
    return output;
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayerParams<T>& params, ConvCache<T>& cache,
                         std::size_t threads = 1)
{
    auto output = conv2d_forward(input, params, threads);
    cache.input = input;
    return output;
}

/// Weight and bias gradients are summed per worker and the worker partials
/// reduced in worker order, so the result depends only on the thread count.
template <class T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const ConvCache<T>& cache, const ConvLayerParams<T>& params,
                             std::size_t threads = 1)
{
    if (!cache.input)
        throw Error("conv2d_backward: no cached input (forward was not run with a cache)");
    const Tensor<T>& input = *cache.input;
    detail::check_conv_shapes(input, params);
    const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = params.out_channels(), plane = h * w;
    if (grad_out.shape() != Shape{batch, cout, h, w})
        throw ShapeError("conv2d_backward: grad_out shape " + shape_string(grad_out.shape()) +
                         " does not match forward output");

    ConvGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(params.weights.shape()), std::nullopt};
    const detail::ConstRowMap<T> weights(params.weights.data(), cout, cin * kTaps);
    const std::size_t workers = chunk_count(batch, threads);
    std::vector<detail::RowMatrix<T>> dw(workers, detail::RowMatrix<T>::Zero(cout, cin * kTaps));
    std::vector<std::vector<T>> db(workers, std::vector<T>(cout, T{0}));

    parallel_chunks(batch, threads, [&](std::size_t begin, std::size_t end, std::size_t worker) {
        detail::RowMatrix<T> col(cin * kTaps, plane), dcol(cin * kTaps, plane);
        for (std::size_t n = begin; n < end; ++n) {
            const detail::ConstRowMap<T> g(grad_out.data() + n * cout * plane, cout, plane);
            detail::im2col(input.data() + n * cin * plane, cin, h, w, col.data());
            dw[worker].noalias() += g * col.transpose();
            dcol.noalias() = weights.transpose() * g;
            detail::col2im(dcol.data(), cin, h, w, grads.input.data() + n * cin * plane);
            if (params.bias)
                for (std::size_t o = 0; o < cout; ++o)
                    db[worker][o] += g.row(o).sum();
        }
    });

    detail::RowMap<T> gw(grads.weights.data(), cout, cin * kTaps);
    for (const auto& part : dw)
        gw += part;
    if (params.bias) {
        grads.bias = Tensor<T>({cout});
        for (const auto& part : db)
            for (std::size_t o = 0; o < cout; ++o)
                (*grads.bias)[o] += part[o];
    }
    return grads;
}

} // namespace dwidn::nn
