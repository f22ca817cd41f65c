#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dwidn/core/random.hpp"
#include "dwidn/core/tensor.hpp"

namespace dwidn::sim {

enum class Tissue : std::uint8_t {
    background = 0,
    muscle = 1,
    peripheral_zone = 2,
    transition_zone = 3,
    lesion = 4,
    bladder = 5,
};

inline constexpr std::array<Tissue, 4> kEvaluatedTissues{Tissue::muscle, Tissue::peripheral_zone,
                                                         Tissue::transition_zone, Tissue::lesion};

inline const char* tissue_name(Tissue t)
{
    switch (t) {
    case Tissue::background: return "background";
    case Tissue::muscle: return "muscle";
    case Tissue::peripheral_zone: return "peripheral_zone";
    case Tissue::transition_zone: return "transition_zone";
    case Tissue::lesion: return "lesion";
    case Tissue::bladder: return "bladder";
    }
    return "unknown";
}

inline std::optional<Tissue> tissue_from_name(const std::string& name)
{
    for (auto t : {Tissue::background, Tissue::muscle, Tissue::peripheral_zone, Tissue::transition_zone,
                   Tissue::lesion, Tissue::bladder})
        if (name == tissue_name(t))
            return t;
    return std::nullopt;
}

/// ADC in 1e-3 mm^2/s, S0 in arbitrary units.
struct TissueClass {
    double adc_mean = 0, adc_sd = 0;
    double s0_mean = 0, s0_sd = 0;
};

/// Muscle, PZ, TZ and lesion ADC follow the reference values reported for
/// prostate DWI at b = 1000; bladder (free water) and all S0 levels are
/// illustrative.
inline TissueClass default_tissue(Tissue t)
{
    switch (t) {
    case Tissue::background: return {0, 0, 0, 0};
    case Tissue::muscle: return {0.99, 0.14, 450, 40};
    case Tissue::peripheral_zone: return {1.59, 0.33, 1000, 80};
    case Tissue::transition_zone: return {1.22, 0.20, 800, 60};
    case Tissue::lesion: return {0.76, 0.19, 750, 60};
    case Tissue::bladder: return {3.00, 0.10, 1400, 60};
    }
    return {};
}

struct EllipseRegion {
    double center_row = 0, center_col = 0;
    double semi_rows = 1, semi_cols = 1; // semi-axes before rotation
    double angle = 0;                    // radians
    Tissue tissue = Tissue::muscle;

    bool contains(double r, double c) const
    {
        const double dy = r - center_row, dx = c - center_col;
        const double u = dy * std::cos(angle) + dx * std::sin(angle);
        const double v = -dy * std::sin(angle) + dx * std::cos(angle);
        return (u / semi_rows) * (u / semi_rows) + (v / semi_cols) * (v / semi_cols) <= 1.0;
    }
};

/// Regions are painted in order; later regions overwrite earlier ones.
struct PhantomSpec {
    std::size_t rows = 128, cols = 128;
    std::vector<EllipseRegion> regions;
    std::uint64_t seed = 0;
    std::map<Tissue, TissueClass> tissue_overrides;

    TissueClass tissue(Tissue t) const
    {
        auto it = tissue_overrides.find(t);
        return it != tissue_overrides.end() ? it->second : default_tissue(t);
    }
};

struct PhantomCase {
    Image s0_map;    // [H, W]
    Image adc_truth; // [H, W], 1e-3 mm^2/s
    Mask label_map;  // [H, W], Tissue values
    std::vector<std::string> warnings;
};

namespace detail {

/// Band-limited field with values in [-1, 1]: a normalized sum of three
/// plane waves of at most two cycles across the matrix.
class SmoothField {
public:
    SmoothField(Rng& rng, std::size_t rows, std::size_t cols) : rows_(double(rows)), cols_(double(cols))
    {
        std::uniform_real_distribution<double> freq(0.0, 2.0), phase(0.0, 2 * std::numbers::pi), amp(0.5, 1.0);
        double total = 0;
        for (auto& w : waves_) {
            w = {amp(rng), freq(rng), freq(rng), phase(rng)};
            total += w[0];
        }
        for (auto& w : waves_)
            w[0] /= total;
    }

    double operator()(double r, double c) const
    {
        double v = 0;
        for (const auto& w : waves_)
            v += w[0] * std::sin(2 * std::numbers::pi * (w[1] * r / rows_ + w[2] * c / cols_) + w[3]);
        return v;
    }

private:
    double rows_, cols_;
    std::array<std::array<double, 4>, 3> waves_{};
};

inline void check_region_bounds(const EllipseRegion& e, std::size_t rows, std::size_t cols, std::size_t index)
{
    const double c = std::cos(e.angle), s = std::sin(e.angle);
    const double half_r = std::sqrt(e.semi_rows * e.semi_rows * c * c + e.semi_cols * e.semi_cols * s * s);
    const double half_c = std::sqrt(e.semi_rows * e.semi_rows * s * s + e.semi_cols * e.semi_cols * c * c);
    if (!(e.semi_rows > 0 && e.semi_cols > 0))
        throw Error("phantom region " + std::to_string(index) + " has non-positive semi-axes");
    if (e.center_row - half_r < 0 || e.center_row + half_r > double(rows - 1) || e.center_col - half_c < 0 ||
        e.center_col + half_c > double(cols - 1))
        throw Error("phantom region " + std::to_string(index) + " (" + tissue_name(e.tissue) +
                    ") extends outside the " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
}

} // namespace detail

/// Paints the regions. Within a region, S0 and ADC are the class mean plus
/// sd * (0.5 * offset + 0.5 * field), where offset is a per-region uniform
/// draw in [-1, 1] and field a smooth map in [-1, 1]; values therefore stay
/// within one class sd of the mean. Deterministic in spec.seed.
inline PhantomCase generate_phantom(const PhantomSpec& spec)
{
    if (spec.rows == 0 || spec.cols == 0)
        throw Error("phantom matrix must be non-empty");
    PhantomCase out{Image({spec.rows, spec.cols}), Image({spec.rows, spec.cols}), Mask({spec.rows, spec.cols}), {}};
    Rng rng(derive_seed(spec.seed, streams::phantom, 1));
    std::uniform_real_distribution<double> offset(-1.0, 1.0);

    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        const auto& region = spec.regions[i];
        detail::check_region_bounds(region, spec.rows, spec.cols, i);
        const TissueClass cls = spec.tissue(region.tissue);
        if (region.tissue != Tissue::background && !(cls.adc_mean > 0))
            throw Error(std::string("tissue ") + tissue_name(region.tissue) + " must have a positive mean ADC");
        const double adc_offset = offset(rng), s0_offset = offset(rng);
        const detail::SmoothField adc_field(rng, spec.rows, spec.cols), s0_field(rng, spec.rows, spec.cols);
        for (std::size_t r = 0; r < spec.rows; ++r)
            for (std::size_t c = 0; c < spec.cols; ++c) {
                if (!region.contains(double(r), double(c)))
                    continue;
                out.label_map.at(r, c) = static_cast<std::uint8_t>(region.tissue);
                if (region.tissue == Tissue::background) {
                    out.s0_map.at(r, c) = 0;
                    out.adc_truth.at(r, c) = 0;
                    continue;
                }
                out.adc_truth.at(r, c) =
                    cls.adc_mean + cls.adc_sd * (0.5 * adc_offset + 0.5 * adc_field(double(r), double(c)));
                out.s0_map.at(r, c) = cls.s0_mean + cls.s0_sd * (0.5 * s0_offset + 0.5 * s0_field(double(r), double(c)));
            }
    }

    for (std::size_t i = 0; i < spec.regions.size(); ++i) {
        if (spec.regions[i].tissue != Tissue::lesion)
            continue;
        bool visible = false;
        for (std::size_t r = 0; r < spec.rows && !visible; ++r)
            for (std::size_t c = 0; c < spec.cols && !visible; ++c)
                visible = spec.regions[i].contains(double(r), double(c)) &&
                          out.label_map.at(r, c) == static_cast<std::uint8_t>(Tissue::lesion);
        if (!visible)
            out.warnings.push_back("lesion region " + std::to_string(i) + " is fully occluded by later regions");
    }
    return out;
}

/// Random pelvis-like layout scaled to the matrix: a muscle body ellipse,
/// bladder, peripheral zone, transition zone and one lesion in the
/// posterior peripheral zone.
inline PhantomSpec random_prostate_layout(std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, streams::phantom, 0));
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    const double h = double(rows), w = double(cols);
    PhantomSpec spec;
    spec.rows = rows;
    spec.cols = cols;
    spec.seed = seed;

    const double body_r = uniform(0.36, 0.42) * h, body_c = uniform(0.38, 0.44) * w;
    spec.regions.push_back({0.5 * (h - 1), 0.5 * (w - 1), body_r, body_c, uniform(-0.05, 0.05), Tissue::muscle});

    const double prostate_row = uniform(0.56, 0.62) * h, prostate_col = uniform(0.46, 0.54) * w;
    spec.regions.push_back({prostate_row - uniform(0.25, 0.29) * h, prostate_col + uniform(-0.03, 0.03) * w,
                            uniform(0.09, 0.12) * h, uniform(0.13, 0.17) * w, uniform(-0.15, 0.15),
                            Tissue::bladder});

    const double pz_r = uniform(0.13, 0.16) * h, pz_c = uniform(0.17, 0.21) * w, pz_angle = uniform(-0.2, 0.2);
    spec.regions.push_back({prostate_row, prostate_col, pz_r, pz_c, pz_angle, Tissue::peripheral_zone});
    spec.regions.push_back({prostate_row - 0.3 * pz_r, prostate_col, 0.55 * pz_r, 0.6 * pz_c, pz_angle,
                            Tissue::transition_zone});

    // Lesion in the posterior half of the PZ, left or right of midline.
    const double side = uniform(0, 1) < 0.5 ? -1.0 : 1.0;
    const double lesion_radius = uniform(0.045, 0.06) * std::min(h, w);
    spec.regions.push_back({prostate_row + 0.55 * pz_r, prostate_col + side * uniform(0.25, 0.45) * pz_c,
                            lesion_radius, lesion_radius * uniform(1.0, 1.3), uniform(-0.5, 0.5), Tissue::lesion});
    return spec;
}

inline Mask tissue_mask(const PhantomCase& phantom, Tissue t)
{
    Mask m(phantom.label_map.shape());
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = phantom.label_map[i] == static_cast<std::uint8_t>(t);
    return m;
}

/// Binary erosion with a (2 radius + 1)^2 square; pixels near the matrix
/// border are removed.
inline Mask erode(const Mask& mask, std::size_t radius)
{
    const std::size_t rows = mask.dim(0), cols = mask.dim(1);
    Mask out(mask.shape());
    for (std::size_t r = radius; r + radius < rows; ++r)
        for (std::size_t c = radius; c + radius < cols; ++c) {
            bool keep = true;
            for (std::size_t dr = r - radius; dr <= r + radius && keep; ++dr)
                for (std::size_t dc = c - radius; dc <= c + radius && keep; ++dc)
                    keep = mask.at(dr, dc) != 0;
            out.at(r, c) = keep;
        }
    return out;
}

inline std::size_t mask_count(const Mask& m)
{
    std::size_t n = 0;
    for (auto v : m.values())
        n += v != 0;
    return n;
}

} // namespace dwidn::sim
