#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "dwidn/core/random.hpp"
#include "dwidn/core/tensor.hpp"
#include "dwidn/nn/activation.hpp"
#include "dwidn/nn/batchnorm.hpp"
#include "dwidn/nn/conv.hpp"

namespace dwidn::nn {

/// Residual denoiser layout: Conv+ReLU, (Conv+BN+ReLU) x (depth-2), Conv.
/// The guided variant takes the guidance image as a second input channel.
struct NetworkSpec {
    std::size_t depth = 20;
    std::size_t width = 64;
    std::size_t in_channels = 1;

    bool guided() const { return in_channels == 2; }

    void validate() const
    {
        if (depth < 3)
            throw Error("network depth must be >= 3, got " + std::to_string(depth));
        if (in_channels != 1 && in_channels != 2)
            throw Error("network in_channels must be 1 or 2, got " + std::to_string(in_channels));
        if (width == 0)
            throw Error("network width must be positive");
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

template <class T>
struct Layer {
    ConvLayerParams<T> conv;
    std::optional<BatchNormParams<T>> bn;
};

template <class T>
struct ModelState {
    NetworkSpec spec;
    std::vector<Layer<T>> layers;
    std::vector<Tensor<T>> adam_m, adam_v; // one per trainable parameter
    std::uint64_t step_count = 0;
};

enum class ParamKind { weights, bias, gamma, beta, running_mean, running_var };

inline const char* param_kind_name(ParamKind kind)
{
    switch (kind) {
    case ParamKind::weights: return "weights";
    case ParamKind::bias: return "bias";
    case ParamKind::gamma: return "gamma";
    case ParamKind::beta: return "beta";
    case ParamKind::running_mean: return "running_mean";
    case ParamKind::running_var: return "running_var";
    }
    return "?";
}

inline bool is_trainable(ParamKind kind)
{
    return kind != ParamKind::running_mean && kind != ParamKind::running_var;
}

inline std::string param_name(std::size_t layer, ParamKind kind)
{
    return "layer" + std::to_string(layer) + "." + param_kind_name(kind);
}

/// Visits every parameter tensor in the stable serialization order: layer
/// index ascending, then weights, bias, gamma, beta, running_mean,
/// running_var (absent members skipped). Works on const and mutable models.
template <class Model, class Fn>
void for_each_parameter(Model& model, Fn&& fn)
{
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        fn(l, ParamKind::weights, layer.conv.weights);
        if (layer.conv.bias)
            fn(l, ParamKind::bias, *layer.conv.bias);
        if (layer.bn) {
            fn(l, ParamKind::gamma, layer.bn->gamma);
            fn(l, ParamKind::beta, layer.bn->beta);
            fn(l, ParamKind::running_mean, layer.bn->running_mean);
            fn(l, ParamKind::running_var, layer.bn->running_var);
        }
    }
}

/// Same order as for_each_parameter, restricted to trainable tensors. This is
/// the index space of gradient lists and ADAM moments.
template <class Model, class Fn>
void for_each_trainable(Model& model, Fn&& fn)
{
    std::size_t index = 0;
    for_each_parameter(model, [&](std::size_t l, ParamKind kind, auto& tensor) {
        if (is_trainable(kind))
            fn(index++, l, kind, tensor);
    });
}

template <class T>
std::size_t trainable_count(const ModelState<T>& model)
{
    std::size_t n = 0;
    for_each_trainable(model, [&](std::size_t, std::size_t, ParamKind, const Tensor<T>&) { ++n; });
    return n;
}

/// He fan-in Gaussian conv weights (std = sqrt(2 / (9 * in_ch))), zero
/// biases, identity batch norm, zero ADAM moments. Draw order follows the
/// parameter enumeration, so the result is a pure function of (spec, seed).
template <class T>
ModelState<T> init_params(const NetworkSpec& spec, std::uint64_t seed)
{
    spec.validate();
    ModelState<T> model;
    model.spec = spec;
    Rng rng(derive_seed(seed, streams::init));
    for (std::size_t l = 0; l < spec.depth; ++l) {
        const bool first = l == 0, last = l + 1 == spec.depth;
        const std::size_t cin = first ? spec.in_channels : spec.width;
        const std::size_t cout = last ? 1 : spec.width;
        Layer<T> layer;
        layer.conv.weights = Tensor<T>({cout, cin, kKernel, kKernel});
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(kTaps * cin)));
        for (auto& w : layer.conv.weights.values())
            w = static_cast<T>(normal(rng));
        if (first || last)
            layer.conv.bias = Tensor<T>({cout});
        else
            layer.bn = BatchNormParams<T>::identity(cout);
        model.layers.push_back(std::move(layer));
    }
    for_each_trainable(model, [&](std::size_t, std::size_t, ParamKind, const Tensor<T>& p) {
        model.adam_m.emplace_back(p.shape());
        model.adam_v.emplace_back(p.shape());
    });
    return model;
}

template <class T>
struct NetworkCache {
    std::vector<ConvCache<T>> conv;
    std::vector<BatchNormCache<T>> bn;
    std::vector<Tensor<T>> activated; // ReLU outputs, one per hidden layer
};

namespace detail {

template <class T>
Tensor<T> assemble_input(const Tensor<T>& noisy, const std::type_identity_t<Tensor<T>>* guidance, const NetworkSpec& spec)
{
    if (noisy.rank() != 4 || noisy.dim(1) != 1)
        throw ShapeError("network input must be [N,1,H,W], got " + shape_string(noisy.shape()));
    if (noisy.dim(2) < 3 || noisy.dim(3) < 3)
        throw ShapeError("network input must be at least 3x3");
    if (spec.guided() && !guidance)
        throw Error("guided model requires a guidance image");
    if (!spec.guided() && guidance)
        throw Error("guidance image supplied to a plain (single-channel) model");
    if (!guidance)
        return noisy;
    require_same_shape(noisy, *guidance, "guidance");
    const std::size_t batch = noisy.dim(0), plane = noisy.dim(2) * noisy.dim(3);
    Tensor<T> input({batch, 2, noisy.dim(2), noisy.dim(3)});
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(noisy.data() + n * plane, plane, input.data() + (2 * n) * plane);
        std::copy_n(guidance->data() + n * plane, plane, input.data() + (2 * n + 1) * plane);
    }
    return input;
}

} // namespace detail

/// Predicts the residual (noise) image. In train mode batch-norm running
/// statistics are updated and, if `cache` is given, everything needed by
/// network_backward is retained.
template <class T>
Tensor<T> network_forward(const Tensor<T>& noisy, const std::type_identity_t<Tensor<T>>* guidance, ModelState<T>& model, Mode mode,
                          NetworkCache<T>* cache = nullptr, std::size_t threads = 1)
{
    const std::size_t depth = model.layers.size();
    Tensor<T> x = detail::assemble_input(noisy, guidance, model.spec);
    if (cache) {
        cache->conv.assign(depth, {});
        cache->bn.assign(depth, {});
        cache->activated.assign(depth, {});
    }
    for (std::size_t l = 0; l < depth; ++l) {
        auto& layer = model.layers[l];
        Tensor<T> z = cache ? conv2d_forward(x, layer.conv, cache->conv[l], threads)
                            : conv2d_forward(x, layer.conv, threads);
        if (l + 1 == depth)
            return z;
        if (layer.bn) {
            BatchNormCache<T> scratch;
            z = batchnorm_forward(z, *layer.bn, mode, cache ? cache->bn[l] : scratch);
        }
        x = relu(z);
        if (cache)
            cache->activated[l] = x;
    }
    return x;
}

/// Eval-mode forward on a const model.
template <class T>
Tensor<T> network_infer(const Tensor<T>& noisy, const std::type_identity_t<Tensor<T>>* guidance, const ModelState<T>& model,
                        std::size_t threads = 1)
{
    const std::size_t depth = model.layers.size();
    Tensor<T> x = detail::assemble_input(noisy, guidance, model.spec);
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = model.layers[l];
        Tensor<T> z = conv2d_forward(x, layer.conv, threads);
        if (l + 1 == depth)
            return z;
        if (layer.bn)
            z = batchnorm_infer(z, *layer.bn);
        x = relu(z);
    }
    return x;
}

/// Gradients of all trainable parameters, in for_each_trainable order.
template <class T>
std::vector<Tensor<T>> network_backward(const Tensor<T>& grad_residual, const NetworkCache<T>& cache,
                                        const ModelState<T>& model, std::size_t threads = 1)
{
    const std::size_t depth = model.layers.size();
    if (cache.conv.size() != depth)
        throw Error("network_backward: cache does not belong to this model");
    std::vector<std::vector<Tensor<T>>> per_layer(depth);
    Tensor<T> g = grad_residual;
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = model.layers[l];
        if (l + 1 != depth) {
            g = relu_backward(g, cache.activated[l]);
            if (layer.bn) {
                auto bg = batchnorm_backward(g, cache.bn[l], *layer.bn);
                g = std::move(bg.input);
                per_layer[l].push_back(std::move(bg.gamma));
                per_layer[l].push_back(std::move(bg.beta));
            }
        }
        auto cg = conv2d_backward(g, cache.conv[l], layer.conv, threads);
        auto& slot = per_layer[l];
        if (cg.bias)
            slot.insert(slot.begin(), std::move(*cg.bias));
        slot.insert(slot.begin(), std::move(cg.weights));
        g = std::move(cg.input);
    }
    std::vector<Tensor<T>> grads;
    for (auto& layer_grads : per_layer)
        for (auto& t : layer_grads)
            grads.push_back(std::move(t));
    return grads;
}

/// denoised = noisy - residual, eval mode.
template <class T>
Tensor<T> denoise(const Tensor<T>& noisy, const std::type_identity_t<Tensor<T>>* guidance, const ModelState<T>& model,
                  std::size_t threads = 1)
{
    Tensor<T> out = network_infer(noisy, guidance, model, threads);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = noisy[i] - out[i];
    return out;
}

} // namespace dwidn::nn
