#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dwidn/core/random.hpp"
#include "dwidn/io/csv.hpp"
#include "dwidn/nn/adam.hpp"
#include "dwidn/nn/loss.hpp"
#include "dwidn/nn/network.hpp"
#include "dwidn/recon/recon.hpp"
#include "dwidn/train/patches.hpp"

namespace dwidn::train {

using Model = nn::ModelState<float>;

/// Exponential decay from lr_start at epoch 0 to lr_end at the last epoch.
inline double lr_schedule(std::size_t epoch, std::size_t total_epochs, double lr_start, double lr_end)
{
    if (total_epochs == 0 || epoch >= total_epochs)
        throw Error("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) +
                    ")");
    if (!(lr_end > 0) || lr_start < lr_end)
        throw Error("lr_schedule: need lr_start >= lr_end > 0");
    if (total_epochs == 1)
        return lr_start;
    return lr_start * std::pow(lr_end / lr_start, double(epoch) / double(total_epochs - 1));
}

struct TrainConfig {
    std::size_t patch_size = 40;
    std::size_t stride = 20;
    std::size_t depth = 8;
    std::size_t width = 32;
    bool guided = true;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    double lr_start = 1e-3;
    double lr_end = 1e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t validate_every = 3;
    double background_fraction = 0.02;
    std::uint64_t seed = 0;

    /// Full-size settings: depth 20, width 64, 60x60 patches, batch 128, 25
    /// epochs, learning rate 1e-1 to 1e-4.
    static TrainConfig full_size()
    {
        TrainConfig c;
        c.patch_size = 60;
        c.stride = 30;
        c.depth = 20;
        c.width = 64;
        c.batch_size = 128;
        c.epochs = 25;
        c.lr_start = 1e-1;
        c.lr_end = 1e-4;
        return c;
    }

    nn::NetworkSpec network() const { return {depth, width, std::size_t(guided ? 2 : 1)}; }

    void validate() const
    {
        network().validate();
        if (patch_size < 3 || stride == 0 || batch_size < 2 || epochs == 0 || validate_every == 0)
            throw Error("train config: patch_size >= 3, stride, epochs, validate_every > 0 and batch_size >= 2 required");
        if (!(lr_end > 0) || lr_start < lr_end)
            throw Error("train config: need lr_start >= lr_end > 0");
        if (!(weight_decay >= 0) || !(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
            throw Error("train config: weight_decay >= 0 and betas in [0, 1) required");
        if (!(background_fraction >= 0 && background_fraction < 1))
            throw Error("train config: background_fraction must be in [0, 1)");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ValidationPoint {
    std::size_t epoch = 0;
    double mse = 0;
};

struct TrainLog {
    std::vector<double> train_loss;    // mean mini-batch loss per epoch
    std::vector<double> learning_rate; // per epoch
    std::vector<ValidationPoint> validation;
    std::size_t best_epoch = 0;
    double best_val_mse = 0;
    std::size_t n_patches = 0;
    double wall_time_s = 0;
};

struct TrainResult {
    Model model; // best-validation checkpoint
    TrainLog log;
};

using ProgressFn = std::function<void(const std::string&)>;

namespace detail {

struct Batch {
    Tensor<float> noisy, guidance, reference;
};

inline Batch gather(const std::vector<PatchPair>& pool, std::span<const std::size_t> order,
                    std::span<const int> transforms, std::size_t patch)
{
    const std::size_t n = order.size(), plane = patch * patch;
    Batch b{Tensor<float>({n, 1, patch, patch}), Tensor<float>({n, 1, patch, patch}),
            Tensor<float>({n, 1, patch, patch})};
    for (std::size_t i = 0; i < n; ++i) {
        const PatchPair p = augment(pool[order[i]], transforms[i]);
        for (std::size_t j = 0; j < plane; ++j) {
            b.noisy[i * plane + j] = float(p.noisy[j]);
            b.guidance[i * plane + j] = float(p.guidance[j]);
            b.reference[i * plane + j] = float(p.reference[j]);
        }
    }
    return b;
}

inline Tensor<float> as_batch(const Image& img)
{
    Tensor<float> t({1, 1, img.dim(0), img.dim(1)});
    for (std::size_t i = 0; i < img.size(); ++i)
        t[i] = float(img[i]);
    return t;
}

inline void check_disjoint(const std::vector<recon::DwiCase>& a, const std::vector<recon::DwiCase>& b)
{
    std::set<std::string> ids;
    for (const auto& c : a)
        ids.insert(c.case_id);
    for (const auto& c : b)
        if (ids.count(c.case_id))
            throw Error("training and validation sets share case id '" + c.case_id + "'");
}

} // namespace detail

/// Denoised high-b image for one case.
inline Image denoise_case(const recon::DwiCase& dwi, const Model& model, std::size_t threads = 1)
{
    const Tensor<float> noisy = detail::as_batch(dwi.noisy_hb);
    const Tensor<float> guidance = detail::as_batch(dwi.guidance_lb);
    const Tensor<float> out = nn::denoise(noisy, model.spec.guided() ? &guidance : nullptr, model, threads);
    Image img(dwi.noisy_hb.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = double(out[i]);
    return img;
}

/// Mean over cases of the full-image MSE between denoised and reference.
inline double validation_mse(const std::vector<recon::DwiCase>& cases, const Model& model, std::size_t threads = 1)
{
    double total = 0;
    for (const auto& c : cases) {
        const Image d = denoise_case(c, model, threads);
        double se = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            se += (d[i] - c.reference_hb[i]) * (d[i] - c.reference_hb[i]);
        total += se / double(d.size());
    }
    return total / double(cases.size());
}

/// Patches of every case in input order, dropping windows whose reference
/// is background only.
inline std::vector<PatchPair> build_patch_pool(const std::vector<recon::DwiCase>& cases, const TrainConfig& cfg)
{
    std::vector<PatchPair> pool;
    for (const auto& c : cases) {
        const double case_max = max_value(c.reference_hb);
        for (auto& p : extract_patches(c, cfg.patch_size, cfg.stride))
            if (!is_background_patch(p, case_max, cfg.background_fraction))
                pool.push_back(std::move(p));
    }
    return pool;
}

/// Mini-batch ADAM on the residual MSE. Each epoch reshuffles the patch pool
/// and draws one augmentation index per patch from epoch-specific streams;
/// a trailing batch with fewer than 2 patches is skipped. Validation runs
/// after epochs where epoch % validate_every == 0 and the lowest-MSE model
/// is returned.
inline TrainResult train(const std::vector<recon::DwiCase>& train_cases, const std::vector<recon::DwiCase>& val_cases,
                         const TrainConfig& cfg, std::size_t threads = 1, const ProgressFn& progress = {})
{
    cfg.validate();
    if (train_cases.empty() || val_cases.empty())
        throw Error("train: training and validation sets must be non-empty");
    detail::check_disjoint(train_cases, val_cases);
    const auto start = std::chrono::steady_clock::now();

    const std::vector<PatchPair> pool = build_patch_pool(train_cases, cfg);
    if (pool.size() < 2)
        throw Error("train: fewer than 2 usable patches (check patch size and background threshold)");

    Model model = nn::init_params<float>(cfg.network(), cfg.seed);
    TrainResult result{model, {}};
    result.log.n_patches = pool.size();
    bool have_best = false;

    std::vector<std::size_t> order(pool.size());
    std::vector<int> transforms(pool.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(cfg.seed, streams::shuffle, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Rng augment_rng(derive_seed(cfg.seed, streams::augment, epoch));
        std::uniform_int_distribution<int> pick(0, 7);
        for (auto& k : transforms)
            k = pick(augment_rng);

        const double lr = lr_schedule(epoch, cfg.epochs, cfg.lr_start, cfg.lr_end);
        const nn::AdamConfig adam{lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin + 2 <= pool.size(); begin += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, pool.size() - begin);
            const auto batch = detail::gather(pool, std::span(order).subspan(begin, n),
                                              std::span(transforms).subspan(begin, n), cfg.patch_size);
            nn::NetworkCache<float> cache;
            Tensor<float> denoised = nn::network_forward(batch.noisy, cfg.guided ? &batch.guidance : nullptr, model,
                                                         nn::Mode::train, &cache, threads);
            for (std::size_t i = 0; i < denoised.size(); ++i)
                denoised[i] = batch.noisy[i] - denoised[i];
            auto loss = nn::mse_loss(denoised, batch.reference);
            if (!std::isfinite(loss.loss))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches) + " (lr " + std::to_string(lr) +
                                   "); lower lr_start");
            // d(denoised)/d(residual) = -1
            for (auto& g : loss.grad.values())
                g = -g;
            const auto grads = nn::network_backward(loss.grad, cache, model, threads);
            nn::adam_step(model, grads, adam);
            loss_sum += loss.loss;
            ++batches;
        }
        const double epoch_loss = loss_sum / double(batches);
        result.log.train_loss.push_back(epoch_loss);
        result.log.learning_rate.push_back(lr);

        std::string line = "epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss);
        if (epoch % cfg.validate_every == 0) {
            const double mse = validation_mse(val_cases, model, threads);
            if (!std::isfinite(mse))
                throw NumericError("train: non-finite validation MSE at epoch " + std::to_string(epoch));
            result.log.validation.push_back({epoch, mse});
            if (!have_best || mse < result.log.best_val_mse) {
                have_best = true;
                result.log.best_val_mse = mse;
                result.log.best_epoch = epoch;
                result.model = model;
            }
            line += " val_mse " + std::to_string(mse);
        }
        if (progress)
            progress(line);
    }
    result.log.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

struct Design {
    std::string label;
    TrainConfig config;
};

struct DesignResult {
    std::string label;
    TrainConfig config;
    TrainResult result;
};

/// Trains each design on the same data and seed.
inline std::vector<DesignResult> compare_designs(const std::vector<recon::DwiCase>& train_cases,
                                                 const std::vector<recon::DwiCase>& val_cases,
                                                 const std::vector<Design>& designs, std::size_t threads = 1,
                                                 const ProgressFn& progress = {})
{
    if (designs.empty())
        throw Error("compare_designs: no designs given");
    std::vector<DesignResult> out;
    for (const auto& d : designs) {
        if (progress)
            progress("design " + d.label);
        TrainConfig cfg = d.config;
        cfg.seed = designs.front().config.seed;
        out.push_back({d.label, cfg, train(train_cases, val_cases, cfg, threads, progress)});
    }
    return out;
}

/// Loss-curve data: one row per design and validation epoch.
inline io::CsvTable design_curves_csv(const std::vector<DesignResult>& results)
{
    io::CsvTable table({"design", "epoch", "learning_rate", "train_loss", "val_mse"});
    for (const auto& r : results)
        for (const auto& v : r.result.log.validation)
            table.add_row({r.label, (long long)v.epoch, r.result.log.learning_rate.at(v.epoch),
                           r.result.log.train_loss.at(v.epoch), v.mse});
    return table;
}

/// One row per design with its best validation MSE.
inline io::CsvTable design_summary_csv(const std::vector<DesignResult>& results)
{
    io::CsvTable table({"design", "depth", "width", "patch_size", "guided", "best_epoch", "best_val_mse"});
    for (const auto& r : results)
        table.add_row({r.label, (long long)r.config.depth, (long long)r.config.width, (long long)r.config.patch_size,
                       (long long)r.config.guided, (long long)r.result.log.best_epoch, r.result.log.best_val_mse});
    return table;
}

} // namespace dwidn::train
