#pragma once

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "dwidn/core/parallel.hpp"
#include "dwidn/core/random.hpp"
#include "dwidn/recon/recon.hpp"
#include "dwidn/sim/acquisition.hpp"
#include "dwidn/sim/phantom.hpp"

namespace dwidn::recon {

/// One synthetic subject: ground truth plus its reconstructed images.
struct Subject {
    std::string id;
    sim::PhantomCase phantom;
    DwiCase dwi;
};

inline std::string subject_id(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%05zu", index);
    return buf;
}

/// Seed of subject `index` under the experiment seed; used for both its
/// phantom layout and its acquisition noise.
inline std::uint64_t subject_seed(std::uint64_t seed, std::size_t index)
{
    return derive_seed(seed, streams::case_seed, index);
}

using TissueTable = std::map<sim::Tissue, sim::TissueClass>;

/// `tissues` overrides the default tissue parameters.
inline sim::PhantomCase subject_phantom(std::size_t index, std::size_t rows, std::size_t cols, std::uint64_t seed,
                                        const TissueTable& tissues = {})
{
    auto spec = sim::random_prostate_layout(rows, cols, subject_seed(seed, index));
    spec.tissue_overrides = tissues;
    return sim::generate_phantom(spec);
}

inline sim::RawAcquisition subject_acquisition(const sim::PhantomCase& phantom, sim::AcquisitionConfig config,
                                               std::size_t index, std::uint64_t seed)
{
    config.seed = subject_seed(seed, index);
    return sim::simulate_acquisition(phantom, config);
}

inline Subject make_subject(std::size_t index, std::size_t rows, std::size_t cols, const sim::AcquisitionConfig& config,
                            std::uint64_t seed, const TissueTable& tissues = {})
{
    Subject s{subject_id(index), subject_phantom(index, rows, cols, seed, tissues), {}};
    s.dwi = reconstruct_case(subject_acquisition(s.phantom, config, index, seed), seed, s.id);
    return s;
}

/// Subjects first .. first+count-1. Each subject depends only on its own
/// index, so the result is independent of the thread count.
inline std::vector<Subject> make_subjects(std::size_t first, std::size_t count, std::size_t rows, std::size_t cols,
                                          const sim::AcquisitionConfig& config, std::uint64_t seed,
                                          std::size_t threads = 1, const TissueTable& tissues = {})
{
    std::vector<Subject> out(count);
    parallel_chunks(count, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = make_subject(first + i, rows, cols, config, seed, tissues);
    });
    return out;
}

inline std::vector<DwiCase> cases_of(const std::vector<Subject>& subjects)
{
    std::vector<DwiCase> out;
    for (const auto& s : subjects)
        out.push_back(s.dwi);
    return out;
}

} // namespace dwidn::recon
