#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dwidn/core/tensor.hpp"

namespace dwidn::analysis {

inline double mse(const Image& x, const Image& ref)
{
    require_same_shape(x, ref, "mse");
    if (x.empty())
        throw ShapeError("mse of empty images");
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += (x[i] - ref[i]) * (x[i] - ref[i]);
    return s / double(x.size());
}

/// 10 log10(max(ref)^2 / mse). Identical images give +infinity.
inline double psnr(const Image& x, const Image& ref)
{
    const double peak = max_value(ref);
    if (!(peak > 0))
        throw NumericError("psnr: reference peak must be positive");
    const double e = mse(x, ref);
    if (e == 0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / e);
}

/// Sum of squared errors over the reference energy (a fraction, not percent).
inline double nmse(const Image& x, const Image& ref)
{
    require_same_shape(x, ref, "nmse");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - ref[i]) * (x[i] - ref[i]);
        den += ref[i] * ref[i];
    }
    if (!(den > 0))
        throw NumericError("nmse: reference is all zero");
    return num / den;
}

struct SsimOptions {
    double k1 = 0.01, k2 = 0.03;
    std::size_t window = 11;
    double sigma = 1.5;
    std::optional<double> dynamic_range; // default: joint max - min of both images
};

namespace detail {

inline std::vector<double> gaussian_window(std::size_t size, double sigma)
{
    std::vector<double> w(size);
    const double c = 0.5 * double(size - 1);
    double total = 0;
    for (std::size_t i = 0; i < size; ++i) {
        w[i] = std::exp(-0.5 * (double(i) - c) * (double(i) - c) / (sigma * sigma));
        total += w[i];
    }
    for (auto& v : w)
        v /= total;
    return w;
}

/// Separable weighted sum over every fully contained window.
inline Image filter_valid(const Image& img, const std::vector<double>& w)
{
    const std::size_t rows = img.dim(0), cols = img.dim(1), k = w.size();
    const std::size_t out_r = rows - k + 1, out_c = cols - k + 1;
    Image tmp({rows, out_c});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < out_c; ++c) {
            double s = 0;
            for (std::size_t j = 0; j < k; ++j)
                s += w[j] * img.at(r, c + j);
            tmp.at(r, c) = s;
        }
    Image out({out_r, out_c});
    for (std::size_t r = 0; r < out_r; ++r)
        for (std::size_t c = 0; c < out_c; ++c) {
            double s = 0;
            for (std::size_t j = 0; j < k; ++j)
                s += w[j] * tmp.at(r + j, c);
            out.at(r, c) = s;
        }
    return out;
}

} // namespace detail

inline double ssim_dynamic_range(const Image& x, const Image& ref, const SsimOptions& opt)
{
    if (opt.dynamic_range)
        return *opt.dynamic_range;
    const double range = std::max(max_value(x), max_value(ref)) - std::min(min_value(x), min_value(ref));
    return range > 0 ? range : 1.0;
}

/// Mean of the local SSIM map over all fully contained Gaussian windows.
inline double ssim(const Image& x, const Image& ref, const SsimOptions& opt = {})
{
    require_same_shape(x, ref, "ssim");
    if (x.rank() != 2 || x.dim(0) < opt.window || x.dim(1) < opt.window)
        throw ShapeError("ssim: images must be at least " + std::to_string(opt.window) + "x" +
                         std::to_string(opt.window));
    const double L = ssim_dynamic_range(x, ref, opt);
    const double c1 = (opt.k1 * L) * (opt.k1 * L), c2 = (opt.k2 * L) * (opt.k2 * L);
    const auto w = detail::gaussian_window(opt.window, opt.sigma);
    Image xx(x.shape()), yy(x.shape()), xy(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = ref[i] * ref[i];
        xy[i] = x[i] * ref[i];
    }
    const Image mx = detail::filter_valid(x, w), my = detail::filter_valid(ref, w);
    const Image exx = detail::filter_valid(xx, w), eyy = detail::filter_valid(yy, w),
                exy = detail::filter_valid(xy, w);
    double total = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i], vy = eyy[i] - my[i] * my[i], cxy = exy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return total / double(mx.size());
}

struct MetricReport {
    double psnr_db = 0, ssim = 0, nmse = 0;
};

inline MetricReport evaluate_image(const Image& x, const Image& ref, const SsimOptions& opt = {})
{
    return {psnr(x, ref), ssim(x, ref, opt), nmse(x, ref)};
}

enum class Axis { row, col };

/// Row `index` (Axis::row) or column `index` (Axis::col) of an image.
inline std::vector<double> intensity_profile(const Image& img, Axis axis, std::size_t index)
{
    if (img.rank() != 2)
        throw ShapeError("intensity_profile: expected [H,W]");
    const std::size_t rows = img.dim(0), cols = img.dim(1);
    if (index >= (axis == Axis::row ? rows : cols))
        throw Error("intensity_profile: index " + std::to_string(index) + " out of range");
    std::vector<double> out;
    if (axis == Axis::row)
        for (std::size_t c = 0; c < cols; ++c)
            out.push_back(img.at(index, c));
    else
        for (std::size_t r = 0; r < rows; ++r)
            out.push_back(img.at(r, index));
    return out;
}

} // namespace dwidn::analysis
