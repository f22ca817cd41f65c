#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "dwidn/core/tensor.hpp"

namespace dwidn::sim {

using Complex = std::complex<double>;

enum class FftDirection { forward, inverse };

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

inline Complex twiddle(std::size_t k, std::size_t n, FftDirection dir)
{
    const double sign = dir == FftDirection::forward ? -1.0 : 1.0;
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    return {std::cos(angle), std::sin(angle)};
}

/// Iterative in-place radix-2 Cooley-Tukey, unnormalized.
inline void fft_radix2(std::span<Complex> a, FftDirection dir)
{
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    std::vector<Complex> table(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
        table[k] = twiddle(k, n, dir);
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len, half = len / 2;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = a[start + k];
                const Complex v = a[start + k + half] * table[k * stride];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
}

/// O(n^2) DFT for lengths that are not powers of two, unnormalized.
inline void dft_direct(std::span<Complex> a, FftDirection dir)
{
    const std::size_t n = a.size();
    std::vector<Complex> table(n), out(n);
    for (std::size_t k = 0; k < n; ++k)
        table[k] = twiddle(k, n, dir);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc{0, 0};
        for (std::size_t j = 0; j < n; ++j)
            acc += a[j] * table[(j * k) % n];
        out[k] = acc;
    }
    std::copy(out.begin(), out.end(), a.begin());
}

} // namespace detail

/// Unitary 1-D transform (scaled by 1/sqrt(n)); forward uses exp(-2 pi i jk/n).
inline void fft1d(std::span<Complex> a, FftDirection dir)
{
    if (a.size() <= 1)
        return;
    if (detail::is_power_of_two(a.size()))
        detail::fft_radix2(a, dir);
    else
        detail::dft_direct(a, dir);
    const double scale = 1.0 / std::sqrt(static_cast<double>(a.size()));
    for (auto& v : a)
        v *= scale;
}

/// Unitary 2-D transform of an [H, W] array: rows, then columns.
inline ComplexImage fft2(const ComplexImage& image, FftDirection dir = FftDirection::forward)
{
    if (image.rank() != 2)
        throw ShapeError("fft2: expected [H,W], got " + shape_string(image.shape()));
    const std::size_t rows = image.dim(0), cols = image.dim(1);
    ComplexImage out = image;
    for (std::size_t r = 0; r < rows; ++r)
        fft1d(std::span<Complex>(out.data() + r * cols, cols), dir);
    std::vector<Complex> column(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r)
            column[r] = out.at(r, c);
        fft1d(column, dir);
        for (std::size_t r = 0; r < rows; ++r)
            out.at(r, c) = column[r];
    }
    return out;
}

inline ComplexImage ifft2(const ComplexImage& kspace) { return fft2(kspace, FftDirection::inverse); }

} // namespace dwidn::sim
