#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>

#include "dwidn/core/random.hpp"
#include "dwidn/core/tensor.hpp"
#include "dwidn/sim/fft.hpp"
#include "dwidn/sim/phantom.hpp"

namespace dwidn::sim {

enum class BLevel { low = 0, high = 1 };

struct AcquisitionConfig {
    double b_low = 50;      // s/mm^2
    double b_high = 1000;   // s/mm^2
    double tr_ms = 8000;
    std::size_t n_directions = 3;
    std::size_t n_avg_low = 4;
    std::size_t n_avg_high = 16;
    std::size_t n_coils = 4;
    double noise_sigma = 0; // per real/imag component, per coil and average
    std::uint64_t seed = 0;

    double b_value(BLevel b) const { return b == BLevel::low ? b_low : b_high; }
    std::size_t averages(BLevel b) const { return b == BLevel::low ? n_avg_low : n_avg_high; }

    void validate() const
    {
        if (!(b_low >= 0 && b_low < b_high))
            throw Error("acquisition: need 0 <= b_low < b_high");
        if (n_avg_high < 2)
            throw Error("acquisition: need at least 2 high-b averages");
        if (n_avg_low < 1 || n_coils < 1)
            throw Error("acquisition: need at least one low-b average and one coil");
        if (n_directions != 1 && n_directions != 3)
            throw Error("acquisition: n_directions must be 1 or 3");
        if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma))
            throw Error("acquisition: noise_sigma must be finite and >= 0");
        if (!(tr_ms > 0))
            throw Error("acquisition: tr_ms must be positive");
    }
};

/// k-space samples, one tensor per b level, indexed [direction][coil][average][H][W].
struct RawAcquisition {
    AcquisitionConfig config;
    std::size_t rows = 0, cols = 0;
    ComplexImage low, high;

    const ComplexImage& samples(BLevel b) const { return b == BLevel::low ? low : high; }
    ComplexImage& samples(BLevel b) { return b == BLevel::low ? low : high; }

    std::span<const Complex> kspace(BLevel b, std::size_t direction, std::size_t coil, std::size_t average) const
    {
        const auto& s = samples(b);
        if (direction >= s.dim(0) || coil >= s.dim(1) || average >= s.dim(2))
            throw Error("kspace index out of range");
        const std::size_t plane = rows * cols;
        const std::size_t offset = ((direction * s.dim(1) + coil) * s.dim(2) + average) * plane;
        return {s.data() + offset, plane};
    }
};

/// Mono-exponential decay; adc in 1e-3 mm^2/s, b in s/mm^2.
inline double signal_model(double s0, double adc, double b)
{
    return s0 * std::exp(-b * adc / 1000.0);
}

inline Image noiseless_image(const PhantomCase& phantom, double b)
{
    Image img(phantom.s0_map.shape());
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = signal_model(phantom.s0_map[i], phantom.adc_truth[i], b);
    return img;
}

/// Every (b, direction, coil, average) sample is the unitary FFT of the
/// noiseless image (uniform coil sensitivity, isotropic diffusion) plus
/// i.i.d. complex Gaussian noise with std noise_sigma per component. Noise is
/// drawn in (b, direction, coil, average, pixel, re/im) order from the
/// config-seeded noise stream.
inline RawAcquisition simulate_acquisition(const PhantomCase& phantom, const AcquisitionConfig& config)
{
    config.validate();
    RawAcquisition acq;
    acq.config = config;
    acq.rows = phantom.s0_map.dim(0);
    acq.cols = phantom.s0_map.dim(1);
    const std::size_t plane = acq.rows * acq.cols;

    Rng rng(derive_seed(config.seed, streams::noise));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (BLevel b : {BLevel::low, BLevel::high}) {
        const Image clean = noiseless_image(phantom, config.b_value(b));
        ComplexImage image(clean.shape());
        for (std::size_t i = 0; i < plane; ++i)
            image[i] = clean[i];
        const ComplexImage kspace = fft2(image);

        const std::size_t n_avg = config.averages(b);
        ComplexImage& out = acq.samples(b);
        out = ComplexImage({config.n_directions, config.n_coils, n_avg, acq.rows, acq.cols});
        Complex* dst = out.data();
        for (std::size_t d = 0; d < config.n_directions; ++d)
            for (std::size_t c = 0; c < config.n_coils; ++c)
                for (std::size_t a = 0; a < n_avg; ++a)
                    for (std::size_t i = 0; i < plane; ++i, ++dst) {
                        if (config.noise_sigma == 0) {
                            *dst = kspace[i];
                            continue;
                        }
                        const double re = normal(rng), im = normal(rng);
                        *dst = kspace[i] + config.noise_sigma * Complex(re, im);
                    }
    }
    return acq;
}

/// Acquisition time = TR x directions x averages, rounded to whole seconds.
inline long scan_time_s(double tr_ms, std::size_t n_directions, std::size_t n_averages)
{
    if (!(tr_ms > 0) || n_directions == 0 || n_averages == 0)
        throw Error("scan_time_s: all arguments must be positive");
    return std::lround(tr_ms * double(n_directions) * double(n_averages) / 1000.0);
}

/// mean(image[signal]) / std(image[noise]) with the n-1 standard deviation.
inline double apparent_snr(const Image& image, const Mask& signal_mask, const Mask& noise_mask)
{
    require_same_shape(image, signal_mask, "apparent_snr signal mask");
    require_same_shape(image, noise_mask, "apparent_snr noise mask");
    double sum = 0;
    std::size_t n_signal = 0, n_noise = 0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        if (signal_mask[i] && noise_mask[i])
            throw Error("apparent_snr: signal and noise masks overlap");
        if (signal_mask[i]) {
            sum += image[i];
            ++n_signal;
        }
        n_noise += noise_mask[i] != 0;
    }
    if (n_signal == 0 || n_noise < 2)
        throw Error("apparent_snr: signal mask must be non-empty and noise mask needs >= 2 pixels");
    double noise_mean = 0;
    for (std::size_t i = 0; i < image.size(); ++i)
        if (noise_mask[i])
            noise_mean += image[i];
    noise_mean /= double(n_noise);
    double sq = 0;
    for (std::size_t i = 0; i < image.size(); ++i)
        if (noise_mask[i])
            sq += (image[i] - noise_mean) * (image[i] - noise_mean);
    const double sd = std::sqrt(sq / double(n_noise - 1));
    if (!(sd > 0))
        throw NumericError("apparent_snr: zero noise standard deviation (degenerate noise mask)");
    return (sum / double(n_signal)) / sd;
}

} // namespace dwidn::sim
