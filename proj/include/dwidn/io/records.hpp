#pragma once

#include <filesystem>
#include <string>

#include "dwidn/analysis/adc.hpp"
#include "dwidn/io/container.hpp"
#include "dwidn/recon/recon.hpp"
#include "dwidn/sim/acquisition.hpp"
#include "dwidn/sim/phantom.hpp"

// Container conversions for the pipeline records passed between commands.

namespace dwidn::io {

inline json to_json(const sim::AcquisitionConfig& a)
{
    return {{"b_low", a.b_low},
            {"b_high", a.b_high},
            {"tr_ms", a.tr_ms},
            {"n_directions", a.n_directions},
            {"n_avg_low", a.n_avg_low},
            {"n_avg_high", a.n_avg_high},
            {"n_coils", a.n_coils},
            {"noise_sigma", a.noise_sigma},
            {"seed", a.seed}};
}

inline sim::AcquisitionConfig acquisition_from_json(const json& j)
{
    sim::AcquisitionConfig a;
    a.b_low = j.at("b_low").get<double>();
    a.b_high = j.at("b_high").get<double>();
    a.tr_ms = j.at("tr_ms").get<double>();
    a.n_directions = j.at("n_directions").get<std::size_t>();
    a.n_avg_low = j.at("n_avg_low").get<std::size_t>();
    a.n_avg_high = j.at("n_avg_high").get<std::size_t>();
    a.n_coils = j.at("n_coils").get<std::size_t>();
    a.noise_sigma = j.at("noise_sigma").get<double>();
    a.seed = j.at("seed").get<std::uint64_t>();
    return a;
}

template <class Fn>
auto guarded(const std::string& source, Fn&& fn)
{
    try {
        return fn();
    } catch (const json::exception& e) {
        throw IoError(source + ": malformed attributes: " + e.what());
    }
}

inline Container to_container(const sim::RawAcquisition& acq, const json& provenance = json::object())
{
    Container c;
    c.role = "raw_acquisition";
    c.provenance = provenance;
    c.attributes = {{"config", to_json(acq.config)}, {"rows", acq.rows}, {"cols", acq.cols}};
    c.put("kspace_low", acq.low);
    c.put("kspace_high", acq.high);
    return c;
}

inline sim::RawAcquisition raw_from_container(const Container& c, const std::string& source = "raw")
{
    if (c.role != "raw_acquisition")
        throw IoError(source + ": holds a '" + c.role + "', not a raw acquisition");
    sim::RawAcquisition acq;
    guarded(source, [&] {
        acq.config = acquisition_from_json(c.attributes.at("config"));
        acq.rows = c.attributes.at("rows").get<std::size_t>();
        acq.cols = c.attributes.at("cols").get<std::size_t>();
        return 0;
    });
    acq.low = c.get<sim::Complex>("kspace_low");
    acq.high = c.get<sim::Complex>("kspace_high");
    return acq;
}

inline Container to_container(const sim::PhantomCase& p, const json& provenance = json::object())
{
    Container c;
    c.role = "phantom";
    c.provenance = provenance;
    c.attributes = {{"warnings", p.warnings}};
    c.put("s0_map", p.s0_map);
    c.put("adc_truth", p.adc_truth);
    c.put("label_map", p.label_map);
    return c;
}

inline sim::PhantomCase phantom_from_container(const Container& c, const std::string& source = "phantom")
{
    if (c.role != "phantom")
        throw IoError(source + ": holds a '" + c.role + "', not a phantom");
    sim::PhantomCase p;
    p.s0_map = c.get<double>("s0_map");
    p.adc_truth = c.get<double>("adc_truth");
    p.label_map = c.get<std::uint8_t>("label_map");
    p.warnings = guarded(source, [&] { return c.attributes.at("warnings").get<std::vector<std::string>>(); });
    return p;
}

/// Selected-average provenance and normalization travel in the manifest.
inline Container to_container(const recon::DwiCase& d, const json& provenance = json::object())
{
    Container c;
    c.role = "dwi_case";
    c.provenance = provenance;
    c.attributes = {{"case_id", d.case_id},
                    {"b_low", d.b_low},
                    {"b_high", d.b_high},
                    {"lb_scale", d.norm.lb_scale},
                    {"hb_scale", d.norm.hb_scale},
                    {"selected_averages", d.selected_averages}};
    c.put("guidance_lb", d.guidance_lb);
    c.put("noisy_hb", d.noisy_hb);
    c.put("reference_hb", d.reference_hb);
    return c;
}

inline recon::DwiCase case_from_container(const Container& c, const std::string& source = "case")
{
    if (c.role != "dwi_case")
        throw IoError(source + ": holds a '" + c.role + "', not a DWI case");
    recon::DwiCase d;
    guarded(source, [&] {
        d.case_id = c.attributes.at("case_id").get<std::string>();
        d.b_low = c.attributes.at("b_low").get<double>();
        d.b_high = c.attributes.at("b_high").get<double>();
        d.norm.lb_scale = c.attributes.at("lb_scale").get<double>();
        d.norm.hb_scale = c.attributes.at("hb_scale").get<double>();
        d.selected_averages = c.attributes.at("selected_averages").get<std::vector<std::size_t>>();
        return 0;
    });
    d.guidance_lb = c.get<double>("guidance_lb");
    d.noisy_hb = c.get<double>("noisy_hb");
    d.reference_hb = c.get<double>("reference_hb");
    return d;
}

inline Container to_container(const analysis::AdcMap& m, const json& provenance = json::object())
{
    Container c;
    c.role = "adc_map";
    c.provenance = provenance;
    c.put("adc", m.values);
    c.put("valid", m.valid);
    return c;
}

inline analysis::AdcMap adc_from_container(const Container& c, const std::string& source = "adc")
{
    if (c.role != "adc_map")
        throw IoError(source + ": holds a '" + c.role + "', not an ADC map");
    return {c.get<double>("adc"), c.get<std::uint8_t>("valid")};
}

/// A single denoised high-b image with its case id.
inline Container image_container(const std::string& role, const std::string& case_id, const Image& img,
                                 const json& provenance = json::object())
{
    Container c;
    c.role = role;
    c.provenance = provenance;
    c.attributes = {{"case_id", case_id}};
    c.put("image", img);
    return c;
}

} // namespace dwidn::io
