#pragma once

#include <cmath>

#include "dwidn/recon/recon.hpp"
#include "dwidn/sim/acquisition.hpp"
#include "dwidn/sim/phantom.hpp"

namespace dwidn::sim {

/// Prostate contour (PZ, TZ, lesion).
inline Mask prostate_mask(const PhantomCase& phantom)
{
    Mask m(phantom.label_map.shape());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto t = static_cast<Tissue>(phantom.label_map[i]);
        m[i] = t == Tissue::peripheral_zone || t == Tissue::transition_zone || t == Tissue::lesion;
    }
    return m;
}

/// Signal-free area, kept two pixels away from any tissue.
inline Mask background_mask(const PhantomCase& phantom)
{
    return erode(tissue_mask(phantom, Tissue::background), 2);
}

/// Apparent SNR of the all-average high-b image of `config`.
inline double reference_snr(const PhantomCase& phantom, const AcquisitionConfig& config)
{
    const RawAcquisition acq = simulate_acquisition(phantom, config);
    const Image ref = recon::magnitude_image(acq, BLevel::high, recon::all_averages(config.n_avg_high));
    return apparent_snr(ref, prostate_mask(phantom), background_mask(phantom));
}

/// Finds the k-space noise sigma that gives the all-average high-b image the
/// requested apparent SNR. The ratio scales close to 1/sigma, so a few
/// multiplicative fixed-point steps converge.
inline double calibrate_noise_sigma(const PhantomCase& phantom, AcquisitionConfig config, double target_snr = 25.0,
                                    int iterations = 4)
{
    if (!(target_snr > 0))
        throw Error("calibrate_noise_sigma: target SNR must be positive");
    if (config.noise_sigma <= 0) {
        // First guess from the prostate mean signal and the sqrt(N) law.
        const Image clean = noiseless_image(phantom, config.b_high);
        const Mask prostate = prostate_mask(phantom);
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < clean.size(); ++i)
            if (prostate[i]) {
                sum += clean[i];
                ++n;
            }
        if (n == 0)
            throw Error("calibrate_noise_sigma: phantom has no prostate tissue");
        config.noise_sigma = sum / double(n) / target_snr * std::sqrt(double(config.n_avg_high));
    }
    for (int it = 0; it < iterations; ++it)
        config.noise_sigma *= reference_snr(phantom, config) / target_snr;
    return config.noise_sigma;
}

} // namespace dwidn::sim
