#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dwidn/io/container.hpp"
#include "dwidn/nn/network.hpp"

namespace dwidn::io {

inline constexpr std::string_view kModelRole = "model";

/// Parameters, BN running statistics, ADAM moments and step count.
template <class T>
Container model_container(const nn::ModelState<T>& model, const json& provenance = json::object())
{
    Container c;
    c.role = std::string(kModelRole);
    c.provenance = provenance;
    json bn = json::array();
    nn::for_each_parameter(model, [&](std::size_t l, nn::ParamKind kind, const Tensor<T>& t) {
        c.put(nn::param_name(l, kind), t);
    });
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (model.layers[l].bn)
            bn.push_back({{"layer", l}, {"epsilon", model.layers[l].bn->epsilon},
                          {"momentum", model.layers[l].bn->momentum}});
    for (std::size_t i = 0; i < model.adam_m.size(); ++i) {
        c.put("adam_m." + std::to_string(i), model.adam_m[i]);
        c.put("adam_v." + std::to_string(i), model.adam_v[i]);
    }
    c.attributes = {{"depth", model.spec.depth},
                    {"width", model.spec.width},
                    {"in_channels", model.spec.in_channels},
                    {"step_count", model.step_count},
                    {"batchnorm", bn},
                    {"adam_tensors", model.adam_m.size()}};
    return c;
}

/// Rebuilds a model from a container. When `expected` is given the stored
/// architecture must match it; a guided/plain mix-up is reported as a
/// channel mismatch.
template <class T>
nn::ModelState<T> model_from_container(const Container& c, const std::optional<nn::NetworkSpec>& expected = {},
                                       const std::string& source = "model")
{
    if (c.role != kModelRole)
        throw IoError(source + ": holds a '" + c.role + "', not a model");
    nn::ModelState<T> model;
    try {
        model.spec.depth = c.attributes.at("depth").get<std::size_t>();
        model.spec.width = c.attributes.at("width").get<std::size_t>();
        model.spec.in_channels = c.attributes.at("in_channels").get<std::size_t>();
        model.step_count = c.attributes.at("step_count").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw IoError(source + ": malformed model attributes: " + e.what());
    }
    model.spec.validate();
    if (expected) {
        if (expected->in_channels != model.spec.in_channels) {
            auto kind = [](std::size_t ch) { return ch == 2 ? "guided" : "plain"; };
            throw IoError(source + ": channel mismatch: checkpoint has " + std::to_string(model.spec.in_channels) +
                          " input channel(s) (" + kind(model.spec.in_channels) + "), the run expects " +
                          std::to_string(expected->in_channels) + " (" + kind(expected->in_channels) + ")");
        }
        if (expected->depth != model.spec.depth || expected->width != model.spec.width)
            throw IoError(source + ": architecture mismatch: checkpoint is depth " + std::to_string(model.spec.depth) +
                          " width " + std::to_string(model.spec.width) + ", the run expects depth " +
                          std::to_string(expected->depth) + " width " + std::to_string(expected->width));
    }
    for (std::size_t l = 0; l < model.spec.depth; ++l) {
        nn::Layer<T> layer;
        layer.conv.weights = c.get<T>(nn::param_name(l, nn::ParamKind::weights));
        const std::string bias = nn::param_name(l, nn::ParamKind::bias);
        if (c.contains(bias))
            layer.conv.bias = c.get<T>(bias);
        const std::string gamma = nn::param_name(l, nn::ParamKind::gamma);
        if (c.contains(gamma)) {
            nn::BatchNormParams<T> bn;
            bn.gamma = c.get<T>(gamma);
            bn.beta = c.get<T>(nn::param_name(l, nn::ParamKind::beta));
            bn.running_mean = c.get<T>(nn::param_name(l, nn::ParamKind::running_mean));
            bn.running_var = c.get<T>(nn::param_name(l, nn::ParamKind::running_var));
            layer.bn = std::move(bn);
        }
        const auto& w = layer.conv.weights;
        const std::size_t in = l == 0 ? model.spec.in_channels : model.spec.width;
        const std::size_t out = l + 1 == model.spec.depth ? 1 : model.spec.width;
        if (w.rank() != 4 || w.dim(0) != out || w.dim(1) != in)
            throw IoError(source + ": layer " + std::to_string(l) + " weights have shape " + shape_string(w.shape()) +
                          ", expected [" + std::to_string(out) + "," + std::to_string(in) + ",3,3]");
        model.layers.push_back(std::move(layer));
    }
    try {
        for (const auto& b : c.attributes.at("batchnorm")) {
            const std::size_t l = b.at("layer").get<std::size_t>();
            if (l >= model.layers.size() || !model.layers[l].bn)
                throw IoError(source + ": batchnorm settings for a layer without batchnorm");
            model.layers[l].bn->epsilon = b.at("epsilon").get<T>();
            model.layers[l].bn->momentum = b.at("momentum").get<T>();
        }
        const std::size_t n_adam = c.attributes.at("adam_tensors").get<std::size_t>();
        for (std::size_t i = 0; i < n_adam; ++i) {
            model.adam_m.push_back(c.get<T>("adam_m." + std::to_string(i)));
            model.adam_v.push_back(c.get<T>("adam_v." + std::to_string(i)));
        }
    } catch (const json::exception& e) {
        throw IoError(source + ": malformed model attributes: " + e.what());
    }
    if (!model.adam_m.empty() && model.adam_m.size() != nn::trainable_count(model))
        throw IoError(source + ": optimizer state does not match the parameter list");
    return model;
}

template <class T>
void save_model(const std::filesystem::path& path, const nn::ModelState<T>& model,
                const json& provenance = json::object())
{
    write_container(path, model_container(model, provenance));
}

template <class T>
nn::ModelState<T> load_model(const std::filesystem::path& path, const std::optional<nn::NetworkSpec>& expected = {})
{
    return model_from_container<T>(read_container(path), expected, path.string());
}

} // namespace dwidn::io
