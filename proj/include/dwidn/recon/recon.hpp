#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dwidn/core/random.hpp"
#include "dwidn/core/tensor.hpp"
#include "dwidn/sim/acquisition.hpp"
#include "dwidn/sim/fft.hpp"

namespace dwidn::recon {

using sim::BLevel;
using sim::Complex;
using sim::RawAcquisition;

struct NormalizationRecord {
    double lb_scale = 1;
    double hb_scale = 1;
};

/// Guidance (all low-b averages), noisy (selected high-b averages) and
/// reference (all high-b averages) magnitude images of one slice.
struct DwiCase {
    std::string case_id;
    Image guidance_lb, noisy_hb, reference_hb;
    double b_low = 0, b_high = 0;
    NormalizationRecord norm;
    std::vector<std::size_t> selected_averages;
};

inline ComplexImage average_kspace(const RawAcquisition& acq, BLevel b, std::size_t direction, std::size_t coil,
                                   std::span<const std::size_t> averages)
{
    if (averages.empty())
        throw Error("average_kspace: empty average list");
    const std::size_t n_avg = acq.config.averages(b);
    std::set<std::size_t> seen;
    for (auto a : averages) {
        if (a >= n_avg)
            throw Error("average_kspace: average index " + std::to_string(a) + " out of range (" +
                        std::to_string(n_avg) + " acquired)");
        if (!seen.insert(a).second)
            throw Error("average_kspace: duplicate average index " + std::to_string(a));
    }
    ComplexImage out({acq.rows, acq.cols});
    for (auto a : averages) {
        auto k = acq.kspace(b, direction, coil, a);
        for (std::size_t i = 0; i < k.size(); ++i)
            out[i] += k[i];
    }
    const double inv = 1.0 / double(averages.size());
    for (auto& v : out.values())
        v *= inv;
    return out;
}

/// Root of the summed squared coil magnitudes.
inline Image sos_combine(const std::vector<ComplexImage>& coil_images)
{
    if (coil_images.empty())
        throw Error("sos_combine: no coil images");
    Image out(coil_images.front().shape());
    for (const auto& img : coil_images) {
        require_same_shape(img, coil_images.front(), "sos_combine");
        for (std::size_t i = 0; i < img.size(); ++i)
            out[i] += std::norm(img[i]);
    }
    for (auto& v : out.values())
        v = std::sqrt(v);
    return out;
}

/// Pixelwise geometric mean across diffusion directions; a single direction
/// is passed through unchanged.
inline Image geometric_average(const std::vector<Image>& direction_images)
{
    if (direction_images.empty())
        throw Error("geometric_average: no images");
    for (const auto& img : direction_images) {
        require_same_shape(img, direction_images.front(), "geometric_average");
        for (double v : img.values())
            if (v < 0)
                throw Error("geometric_average: negative pixel value");
    }
    if (direction_images.size() == 1)
        return direction_images.front();
    const std::size_t n = direction_images.size();
    Image out(direction_images.front().shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double product = 1;
        for (const auto& img : direction_images)
            product *= img[i];
        out[i] = n == 2 ? std::sqrt(product) : n == 3 ? std::cbrt(product) : std::pow(product, 1.0 / double(n));
    }
    return out;
}

inline std::uint64_t case_key(std::string_view case_id)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : case_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform draw of n_select distinct indices out of n_total (partial
/// Fisher-Yates), returned ascending. Fixed per (case id, seed).
inline std::vector<std::size_t> select_noisy_averages(std::size_t n_total, std::size_t n_select,
                                                      std::string_view case_id, std::uint64_t seed)
{
    if (n_select > n_total)
        throw Error("select_noisy_averages: cannot select " + std::to_string(n_select) + " of " +
                    std::to_string(n_total) + " averages");
    std::vector<std::size_t> pool(n_total);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    Rng rng(derive_seed(seed, streams::selection, case_key(case_id)));
    for (std::size_t i = 0; i < n_select; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_total - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(n_select);
    std::sort(pool.begin(), pool.end());
    return pool;
}

/// k-space average -> inverse FFT per coil -> sum of squares -> geometric
/// mean over directions. Unnormalized.
inline Image magnitude_image(const RawAcquisition& acq, BLevel b, std::span<const std::size_t> averages)
{
    std::vector<Image> per_direction;
    for (std::size_t d = 0; d < acq.config.n_directions; ++d) {
        std::vector<ComplexImage> coils;
        for (std::size_t c = 0; c < acq.config.n_coils; ++c)
            coils.push_back(sim::ifft2(average_kspace(acq, b, d, c, averages)));
        per_direction.push_back(sos_combine(coils));
    }
    return geometric_average(per_direction);
}

inline std::vector<std::size_t> all_averages(std::size_t n)
{
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

inline constexpr std::size_t kNoisyAverages = 2;

/// Unnormalized guidance / noisy / reference images of one slice.
inline DwiCase reconstruct_unnormalized(const RawAcquisition& acq, std::uint64_t seed, std::string case_id)
{
    if (acq.config.n_avg_high < kNoisyAverages)
        throw Error("reconstruct_case: need at least 2 high-b averages");
    DwiCase out;
    out.case_id = std::move(case_id);
    out.b_low = acq.config.b_low;
    out.b_high = acq.config.b_high;
    out.selected_averages = select_noisy_averages(acq.config.n_avg_high, kNoisyAverages, out.case_id, seed);
    out.guidance_lb = magnitude_image(acq, BLevel::low, all_averages(acq.config.n_avg_low));
    out.reference_hb = magnitude_image(acq, BLevel::high, all_averages(acq.config.n_avg_high));
    out.noisy_hb = magnitude_image(acq, BLevel::high, out.selected_averages);
    return out;
}

/// Divides low-b images by the stack's low-b maximum and noisy/reference
/// high-b images by the maximum of the reference images.
inline void normalize_stack(std::vector<DwiCase>& stack)
{
    double lb_max = 0, hb_max = 0;
    for (const auto& c : stack) {
        lb_max = std::max(lb_max, max_value(c.guidance_lb));
        hb_max = std::max(hb_max, max_value(c.reference_hb));
    }
    if (!(lb_max > 0) || !(hb_max > 0))
        throw NumericError("normalization: image stack has no signal");
    for (auto& c : stack) {
        c.norm = {lb_max, hb_max};
        for (auto& v : c.guidance_lb.values())
            v /= lb_max;
        for (auto& v : c.noisy_hb.values())
            v /= hb_max;
        for (auto& v : c.reference_hb.values())
            v /= hb_max;
    }
}

/// Full chain for a single slice.
inline DwiCase reconstruct_case(const RawAcquisition& acq, std::uint64_t seed, std::string case_id)
{
    std::vector<DwiCase> stack{reconstruct_unnormalized(acq, seed, std::move(case_id))};
    normalize_stack(stack);
    return std::move(stack.front());
}

/// Drops the first two and last two slices of a stack.
template <class T>
std::vector<T> discard_edge_slices(std::vector<T> stack)
{
    if (stack.size() <= 4)
        return {};
    stack.erase(stack.end() - 2, stack.end());
    stack.erase(stack.begin(), stack.begin() + 2);
    return stack;
}

/// Multi-slice volume: edge slices are discarded, then all remaining slices
/// share the volume normalization scales.
inline std::vector<DwiCase> reconstruct_stack(const std::vector<RawAcquisition>& slices, std::uint64_t seed,
                                              const std::string& volume_id)
{
    std::vector<DwiCase> stack;
    for (std::size_t s = 0; s < slices.size(); ++s)
        stack.push_back(reconstruct_unnormalized(slices[s], seed, volume_id + "/slice" + std::to_string(s)));
    stack = discard_edge_slices(std::move(stack));
    if (!stack.empty())
        normalize_stack(stack);
    return stack;
}

} // namespace dwidn::recon
