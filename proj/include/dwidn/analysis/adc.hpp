#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dwidn/core/tensor.hpp"
#include "dwidn/recon/recon.hpp"

namespace dwidn::analysis {

/// ADC in 1e-3 mm^2/s. Invalid pixels hold NaN and are 0 in `valid`.
struct AdcMap {
    Image values;
    Mask valid;
};

inline constexpr double kAdcFloorFraction = 1e-6;

/// Two-point log-slope ADC from normalized low-b / high-b images. Both images
/// are first multiplied back by their normalization scales. A pixel is
/// invalid when either signal is <= floor_fraction times the larger of the
/// two image maxima; negative ADC values stay valid.
inline AdcMap adc_map(const Image& lb, const Image& hb, double b_low, double b_high,
                      const recon::NormalizationRecord& norm, double floor_fraction = kAdcFloorFraction)
{
    if (!(b_high - b_low > 0))
        throw Error("adc_map: b_high must exceed b_low");
    if (!(norm.lb_scale > 0) || !(norm.hb_scale > 0))
        throw Error("adc_map: normalization scales must be positive");
    require_same_shape(lb, hb, "adc_map");
    double case_max = 0;
    for (std::size_t i = 0; i < lb.size(); ++i)
        case_max = std::max({case_max, lb[i] * norm.lb_scale, hb[i] * norm.hb_scale});
    const double floor = floor_fraction * case_max;
    AdcMap out{Image(lb.shape(), std::numeric_limits<double>::quiet_NaN()), Mask(lb.shape())};
    for (std::size_t i = 0; i < lb.size(); ++i) {
        const double s_lb = lb[i] * norm.lb_scale, s_hb = hb[i] * norm.hb_scale;
        if (!(s_lb > floor) || !(s_hb > floor))
            continue;
        out.values[i] = std::log(s_lb / s_hb) / (b_high - b_low) * 1000.0;
        out.valid[i] = 1;
    }
    return out;
}

struct RoiStats {
    std::string label;
    std::size_t n_pixels = 0;
    double mean = 0, sd = 0, median = 0, iqr = 0;
};

/// Quantile by linear interpolation between order statistics at
/// position p * (n - 1) (the inclusive rule). `sorted` must be ascending.
inline double quantile_inclusive(const std::vector<double>& sorted, double p)
{
    if (sorted.empty())
        throw Error("quantile of an empty sample");
    const double h = p * double(sorted.size() - 1);
    const std::size_t lo = std::size_t(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

inline RoiStats sample_stats(std::vector<double> v, std::string label = {})
{
    if (v.empty())
        throw Error("roi '" + label + "' has no pixels");
    RoiStats s;
    s.label = std::move(label);
    s.n_pixels = v.size();
    double sum = 0;
    for (double x : v)
        sum += x;
    s.mean = sum / double(v.size());
    double sq = 0;
    for (double x : v)
        sq += (x - s.mean) * (x - s.mean);
    s.sd = v.size() > 1 ? std::sqrt(sq / double(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    s.median = quantile_inclusive(v, 0.5);
    s.iqr = quantile_inclusive(v, 0.75) - quantile_inclusive(v, 0.25);
    return s;
}

/// Statistics over masked pixels, restricted to `valid` when given.
inline RoiStats roi_stats(const Image& values, const Mask& mask, const Mask* valid = nullptr, std::string label = {})
{
    require_same_shape(values, mask, "roi_stats");
    if (valid)
        require_same_shape(values, *valid, "roi_stats validity");
    std::vector<double> v;
    bool any_mask = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!mask[i])
            continue;
        any_mask = true;
        if (!valid || (*valid)[i])
            v.push_back(values[i]);
    }
    if (!any_mask)
        throw Error("roi '" + label + "': mask is empty");
    if (v.empty())
        throw Error("roi '" + label + "': mask does not intersect the valid region");
    return sample_stats(std::move(v), std::move(label));
}

inline RoiStats roi_stats(const AdcMap& map, const Mask& mask, std::string label = {})
{
    return roi_stats(map.values, mask, &map.valid, std::move(label));
}

} // namespace dwidn::analysis
