#pragma once

#include <string>
#include <vector>

#include "dwidn/core/tensor.hpp"
#include "dwidn/recon/recon.hpp"

namespace dwidn::train {

/// Co-registered noisy / guidance / reference windows cut from one case.
struct PatchPair {
    Image noisy, guidance, reference; // [p, p]
    std::string case_id;
    std::size_t row = 0, col = 0; // top-left offset in the source images
};

/// Window starts 0, stride, 2*stride, ... plus a final window flush with the
/// far edge when the grid does not reach it.
inline std::vector<std::size_t> patch_offsets(std::size_t extent, std::size_t patch, std::size_t stride)
{
    if (patch == 0 || stride == 0)
        throw Error("patch size and stride must be positive");
    if (patch > extent)
        throw Error("patch size " + std::to_string(patch) + " exceeds image extent " + std::to_string(extent));
    std::vector<std::size_t> out;
    for (std::size_t o = 0; o + patch <= extent; o += stride)
        out.push_back(o);
    if (out.back() + patch < extent)
        out.push_back(extent - patch);
    return out;
}

inline Image crop(const Image& img, std::size_t row, std::size_t col, std::size_t patch)
{
    Image out({patch, patch});
    for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
            out.at(r, c) = img.at(row + r, col + c);
    return out;
}

inline std::vector<PatchPair> extract_patches(const recon::DwiCase& dwi, std::size_t patch, std::size_t stride)
{
    require_same_shape(dwi.noisy_hb, dwi.reference_hb, "extract_patches");
    require_same_shape(dwi.noisy_hb, dwi.guidance_lb, "extract_patches");
    const std::size_t rows = dwi.noisy_hb.dim(0), cols = dwi.noisy_hb.dim(1);
    std::vector<PatchPair> out;
    for (std::size_t r : patch_offsets(rows, patch, stride))
        for (std::size_t c : patch_offsets(cols, patch, stride))
            out.push_back({crop(dwi.noisy_hb, r, c, patch), crop(dwi.guidance_lb, r, c, patch),
                           crop(dwi.reference_hb, r, c, patch), dwi.case_id, r, c});
    return out;
}

/// True when the reference window never exceeds `fraction` of the case max.
inline bool is_background_patch(const PatchPair& pair, double case_max, double fraction = 0.02)
{
    return max_value(pair.reference) < fraction * case_max;
}

/// Element k of the dihedral group of the square: k % 4 quarter turns
/// counter-clockwise, followed by a left-right mirror when k >= 4.
inline Image transform_d4(const Image& img, int k)
{
    if (k < 0 || k > 7)
        throw Error("augmentation index must be in 0..7, got " + std::to_string(k));
    const std::size_t n = img.dim(0);
    if (img.rank() != 2 || img.dim(1) != n)
        throw ShapeError("augmentation needs a square patch, got " + shape_string(img.shape()));
    Image out({n, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t sr = r, sc = k >= 4 ? n - 1 - c : c;
            for (int q = 0; q < k % 4; ++q) {
                // out(r, c) = in(c, n-1-r) for one counter-clockwise turn.
                const std::size_t tr = sc, tc = n - 1 - sr;
                sr = tr;
                sc = tc;
            }
            out.at(r, c) = img.at(sr, sc);
        }
    return out;
}

inline PatchPair augment(const PatchPair& pair, int k)
{
    return {transform_d4(pair.noisy, k), transform_d4(pair.guidance, k), transform_d4(pair.reference, k),
            pair.case_id, pair.row, pair.col};
}

} // namespace dwidn::train
