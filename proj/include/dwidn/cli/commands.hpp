#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dwidn/analysis/adc.hpp"
#include "dwidn/analysis/metrics.hpp"
#include "dwidn/analysis/stats.hpp"
#include "dwidn/cli/experiment.hpp"
#include "dwidn/io/model.hpp"
#include "dwidn/io/records.hpp"
#include "dwidn/recon/dataset.hpp"
#include "dwidn/sim/calibration.hpp"
#include "dwidn/train/trainer.hpp"

namespace dwidn::cli {

inline constexpr const char* kPipelines[] = {"truth", "noisy", "denoised", "reference"};

namespace detail {

inline std::vector<recon::DwiCase> load_cases(const Experiment& e, const std::vector<std::string>& ids)
{
    std::vector<recon::DwiCase> out;
    for (const auto& id : ids)
        out.push_back(io::case_from_container(io::read_container(e.case_path(id)), e.case_path(id).string()));
    return out;
}

inline sim::PhantomCase load_phantom(const Experiment& e, const std::string& id)
{
    return io::phantom_from_container(io::read_container(e.phantom_path(id)), e.phantom_path(id).string());
}

inline std::optional<Image> load_denoised(const Experiment& e, const std::string& id)
{
    if (!fs::exists(e.denoised_path(id)))
        return std::nullopt;
    return io::read_container(e.denoised_path(id), "denoised_hb").get<double>("image");
}

inline train::Model load_trained_model(const Experiment& e)
{
    if (!fs::exists(e.model_path()))
        throw Error("no trained model at " + e.model_path().string() + "; run `dwidn train --out " +
                    e.root.string() + "` first");
    return io::load_model<float>(e.model_path(), e.config.train_config().network());
}

inline analysis::SsimOptions ssim_options(const io::ExperimentConfig& c)
{
    analysis::SsimOptions o;
    o.window = c.analysis.ssim_window;
    o.sigma = c.analysis.ssim_sigma;
    return o;
}

inline io::CsvTable train_log_csv(const train::TrainLog& log)
{
    io::CsvTable t({"epoch", "learning_rate", "train_loss", "val_mse"});
    for (std::size_t ep = 0; ep < log.train_loss.size(); ++ep) {
        std::string val;
        for (const auto& v : log.validation)
            if (v.epoch == ep)
                val = io::format_number(v.mse);
        t.add_row({static_cast<long long>(ep), log.learning_rate[ep], log.train_loss[ep], val});
    }
    return t;
}

inline void progress_to_stderr(const std::string& line)
{
    std::cerr << line << '\n';
}

inline std::vector<double> column(const std::vector<std::vector<std::string>>& rows, std::size_t col,
                                  const std::function<bool(const std::vector<std::string>&)>& keep)
{
    std::vector<double> out;
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (keep(rows[i]))
            out.push_back(io::parse_number(rows[i].at(col)));
    return out;
}

inline std::size_t column_index(const std::vector<std::vector<std::string>>& rows, const std::string& name,
                                const fs::path& source)
{
    if (rows.empty())
        throw IoError(source.string() + " is empty");
    const auto& h = rows.front();
    const auto it = std::find(h.begin(), h.end(), name);
    if (it == h.end())
        throw IoError(source.string() + " has no column '" + name + "'");
    return std::size_t(it - h.begin());
}

inline std::vector<std::vector<std::string>> read_report(const Experiment& e, const std::string& name,
                                                         const std::string& producer)
{
    const auto path = e.reports_dir() / name;
    if (!fs::exists(path))
        throw Error("missing " + path.string() + "; run `dwidn " + producer + " --out " + e.root.string() +
                    "` first");
    return io::parse_csv(io::read_file(path));
}

} // namespace detail

/// Phantoms and k-space for every subject; the noise level is calibrated on
/// subject 0 unless the config fixes it.
inline void cmd_simulate(const Experiment& e, OutputSet& out, std::size_t threads)
{
    const auto& c = e.config;
    sim::AcquisitionConfig acq = c.acquisition;
    if (c.noise_sigma) {
        acq.noise_sigma = *c.noise_sigma;
    } else {
        const auto p0 = recon::subject_phantom(0, c.dataset.rows, c.dataset.cols, c.seed, c.tissues);
        acq.noise_sigma = sim::calibrate_noise_sigma(p0, acq, c.target_snr);
    }
    io::CsvTable index({"case_id", "split", "subject_seed", "noise_sigma"});
    const std::size_t n = c.dataset.total();
    // Subjects are generated `threads` at a time to bound memory.
    for (std::size_t first = 0; first < n; first += std::max<std::size_t>(threads, 1)) {
        const std::size_t count = std::min(std::max<std::size_t>(threads, 1), n - first);
        std::vector<sim::PhantomCase> phantoms(count);
        std::vector<sim::RawAcquisition> raws(count);
        parallel_chunks(count, threads, [&](std::size_t b, std::size_t end, std::size_t) {
            for (std::size_t k = b; k < end; ++k) {
                phantoms[k] = recon::subject_phantom(first + k, c.dataset.rows, c.dataset.cols, c.seed, c.tissues);
                raws[k] = recon::subject_acquisition(phantoms[k], acq, first + k, c.seed);
            }
        });
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t i = first + k;
            const std::string id = recon::subject_id(i);
            const Split split = i < c.dataset.n_train ? Split::train
                                : i < c.dataset.n_train + c.dataset.n_val ? Split::val
                                                                          : Split::test;
            auto prov = e.provenance();
            prov["case_id"] = id;
            out.write(e.phantom_path(id), io::to_container(phantoms[k], prov));
            out.write(e.raw_path(id), io::to_container(raws[k], prov));
            index.add_row({id, std::string(split_name(split)), std::to_string(raws[k].config.seed), acq.noise_sigma});
        }
    }
    out.write(e.raw_dir() / "index.csv", index);
}

inline void cmd_reconstruct(const Experiment& e, OutputSet& out, std::size_t threads)
{
    const auto index = e.read_index(e.raw_dir(), "simulate");
    std::vector<recon::DwiCase> cases(index.size());
    parallel_chunks(index.size(), threads, [&](std::size_t b, std::size_t end, std::size_t) {
        for (std::size_t i = b; i < end; ++i) {
            const auto path = e.raw_path(index[i].id);
            const auto acq = io::raw_from_container(io::read_container(path), path.string());
            cases[i] = recon::reconstruct_case(acq, e.config.seed, index[i].id);
        }
    });
    io::CsvTable table({"case_id", "split", "lb_scale", "hb_scale", "selected_averages"});
    for (std::size_t i = 0; i < index.size(); ++i) {
        auto prov = e.provenance();
        prov["case_id"] = index[i].id;
        out.write(e.case_path(index[i].id), io::to_container(cases[i], prov));
        std::string sel;
        for (auto a : cases[i].selected_averages)
            sel += (sel.empty() ? "" : " ") + std::to_string(a);
        table.add_row({index[i].id, std::string(split_name(index[i].split)), cases[i].norm.lb_scale,
                       cases[i].norm.hb_scale, sel});
    }
    out.write(e.cases_dir() / "index.csv", table);
}

inline void cmd_train(const Experiment& e, OutputSet& out, std::size_t threads)
{
    const auto index = e.read_index(e.cases_dir(), "reconstruct");
    const auto train_cases = detail::load_cases(e, Experiment::ids_in(index, Split::train));
    const auto val_cases = detail::load_cases(e, Experiment::ids_in(index, Split::val));
    const auto result = train::train(train_cases, val_cases, e.config.train_config(), threads, detail::progress_to_stderr);
    std::cerr << "training took " << result.log.wall_time_s << " s\n";
    out.write(e.model_path(), io::model_container(result.model, e.provenance()));
    out.write(e.model_dir() / "train_log.csv", detail::train_log_csv(result.log));
}

inline void cmd_denoise(const Experiment& e, OutputSet& out, std::size_t threads)
{
    const auto index = e.read_index(e.cases_dir(), "reconstruct");
    const auto model = detail::load_trained_model(e);
    for (const auto& id : Experiment::ids_in(index, Split::test)) {
        const auto dwi = detail::load_cases(e, {id}).front();
        auto prov = e.provenance();
        prov["case_id"] = id;
        out.write(e.denoised_path(id), io::image_container("denoised_hb", id, train::denoise_case(dwi, model, threads), prov));
    }
}

/// ADC maps of every available pipeline for the test cases, ROI statistics
/// per tissue and the worst absolute error against the phantom truth.
inline void cmd_adc(const Experiment& e, OutputSet& out, std::size_t)
{
    const auto index = e.read_index(e.cases_dir(), "reconstruct");
    const double floor = e.config.analysis.adc_floor_fraction;
    io::CsvTable roi({"case_id", "tissue", "pipeline", "n_pixels", "mean", "sd", "median", "iqr"});
    io::CsvTable err({"case_id", "pipeline", "n_tissue_pixels", "n_invalid", "max_abs_error"});
    for (const auto& id : Experiment::ids_in(index, Split::test)) {
        const auto dwi = detail::load_cases(e, {id}).front();
        const auto phantom = detail::load_phantom(e, id);
        std::map<std::string, analysis::AdcMap> maps;
        maps["truth"] = {phantom.adc_truth, Mask(phantom.adc_truth.shape(), 1)};
        maps["noisy"] = analysis::adc_map(dwi.guidance_lb, dwi.noisy_hb, dwi.b_low, dwi.b_high, dwi.norm, floor);
        maps["reference"] =
            analysis::adc_map(dwi.guidance_lb, dwi.reference_hb, dwi.b_low, dwi.b_high, dwi.norm, floor);
        if (auto den = detail::load_denoised(e, id))
            maps["denoised"] = analysis::adc_map(dwi.guidance_lb, *den, dwi.b_low, dwi.b_high, dwi.norm, floor);

        auto prov = e.provenance();
        prov["case_id"] = id;
        for (const char* p : {"noisy", "reference"}) {
            prov["pipeline"] = p;
            out.write(e.cases_dir() / "adc" / (id + "_" + p + ".dwt"), io::to_container(maps[p], prov));
        }
        if (maps.count("denoised")) {
            prov["pipeline"] = "denoised";
            out.write(e.model_dir() / "adc" / (id + ".dwt"), io::to_container(maps["denoised"], prov));
        }

        for (const char* p : kPipelines) {
            if (!maps.count(p))
                continue;
            const auto& m = maps[p];
            std::size_t n = 0, invalid = 0;
            double worst = 0;
            for (std::size_t i = 0; i < m.values.size(); ++i) {
                if (phantom.label_map[i] == std::uint8_t(sim::Tissue::background))
                    continue;
                ++n;
                if (!m.valid[i])
                    ++invalid;
                else
                    worst = std::max(worst, std::abs(m.values[i] - phantom.adc_truth[i]));
            }
            if (std::string(p) != "truth")
                err.add_row({id, std::string(p), static_cast<long long>(n), static_cast<long long>(invalid), worst});
            for (auto t : sim::kEvaluatedTissues) {
                const Mask full = sim::tissue_mask(phantom, t);
                if (sim::mask_count(full) == 0)
                    continue;
                Mask mask = sim::erode(full, e.config.analysis.roi_erosion);
                if (sim::mask_count(mask) == 0)
                    mask = full;
                try {
                    const auto s = analysis::roi_stats(m, mask, sim::tissue_name(t));
                    roi.add_row({id, s.label, std::string(p), static_cast<long long>(s.n_pixels), s.mean, s.sd,
                                 s.median, s.iqr});
                } catch (const Error&) {
                    // No valid ADC pixel inside this ROI; the case is left out for this tissue.
                }
            }
        }
    }
    out.write(e.reports_dir() / "adc_roi.csv", roi);
    out.write(e.reports_dir() / "adc_error.csv", err);
}

/// Image-quality metrics of each test image against its reference.
inline void cmd_evaluate(const Experiment& e, OutputSet& out, std::size_t)
{
    const auto index = e.read_index(e.cases_dir(), "reconstruct");
    const auto opt = detail::ssim_options(e.config);
    io::CsvTable t({"case_id", "image", "psnr_db", "ssim", "nmse", "background_mean"});
    for (const auto& id : Experiment::ids_in(index, Split::test)) {
        const auto dwi = detail::load_cases(e, {id}).front();
        const Mask bg = sim::background_mask(detail::load_phantom(e, id));
        std::vector<std::pair<std::string, Image>> images{{"noisy", dwi.noisy_hb}};
        if (auto den = detail::load_denoised(e, id))
            images.emplace_back("denoised", std::move(*den));
        images.emplace_back("reference", dwi.reference_hb);
        for (const auto& [name, img] : images) {
            const auto m = analysis::evaluate_image(img, dwi.reference_hb, opt);
            t.add_row({id, name, m.psnr_db, m.ssim, m.nmse, analysis::roi_stats(img, bg).mean});
        }
    }
    out.write(e.reports_dir() / "metrics.csv", t);
}

/// Guided and plain networks trained under the same seed and settings, then
/// compared on the test cases with a paired signed-rank test.
inline void cmd_compare(const Experiment& e, OutputSet& out, std::size_t threads)
{
    const auto index = e.read_index(e.cases_dir(), "reconstruct");
    const auto train_cases = detail::load_cases(e, Experiment::ids_in(index, Split::train));
    const auto val_cases = detail::load_cases(e, Experiment::ids_in(index, Split::val));
    const auto test_ids = Experiment::ids_in(index, Split::test);
    const auto test_cases = detail::load_cases(e, test_ids);
    auto guided = e.config.train_config(), plain = guided;
    guided.guided = true;
    plain.guided = false;
    const auto results =
        train::compare_designs(train_cases, val_cases, {{"guided", guided}, {"plain", plain}}, threads,
                               detail::progress_to_stderr);
    const fs::path dir = e.model_dir() / "compare";
    for (const auto& r : results)
        out.write(dir / (r.label + ".dwt"), io::model_container(r.result.model, e.provenance()));
    out.write(dir / "curves.csv", train::design_curves_csv(results));
    out.write(dir / "summary.csv", train::design_summary_csv(results));

    io::CsvTable per_case({"case_id", "psnr_guided", "psnr_plain", "difference"});
    std::vector<double> pg, pp;
    for (std::size_t i = 0; i < test_cases.size(); ++i) {
        const auto& c = test_cases[i];
        pg.push_back(analysis::psnr(train::denoise_case(c, results[0].result.model, threads), c.reference_hb));
        pp.push_back(analysis::psnr(train::denoise_case(c, results[1].result.model, threads), c.reference_hb));
        per_case.add_row({test_ids[i], pg.back(), pp.back(), pg.back() - pp.back()});
    }
    out.write(e.reports_dir() / "compare_psnr.csv", per_case);

    io::CsvTable stats({"design", "best_epoch", "best_val_mse", "median_test_psnr"});
    for (std::size_t k = 0; k < results.size(); ++k) {
        auto v = k == 0 ? pg : pp;
        std::sort(v.begin(), v.end());
        stats.add_row({results[k].label, static_cast<long long>(results[k].result.log.best_epoch),
                       results[k].result.log.best_val_mse, analysis::quantile_inclusive(v, 0.5)});
    }
    out.write(e.reports_dir() / "compare_designs.csv", stats);

    io::CsvTable w({"test", "n", "w_plus", "w_minus", "p_value", "exact"});
    try {
        const auto r = analysis::wilcoxon_signed_rank(pg, pp);
        w.add_row({std::string("wilcoxon_psnr_guided_vs_plain"), static_cast<long long>(r.n), r.w_plus, r.w_minus,
                   r.p_value, static_cast<long long>(r.exact)});
    } catch (const Error&) {
        w.add_row({std::string("wilcoxon_psnr_guided_vs_plain"), 0LL, 0.0, 0.0, 1.0, 1LL});
    }
    out.write(e.reports_dir() / "compare_stats.csv", w);
}

/// Aggregate tables: metric summary, ADC ROI table (tissue rows, pipeline
/// columns), Bland-Altman plot data and loss curves.
inline void cmd_report(const Experiment& e, OutputSet& out, std::size_t)
{
    const bool have_metrics = fs::exists(e.reports_dir() / "metrics.csv");
    const bool have_adc = fs::exists(e.reports_dir() / "adc_roi.csv");
    if (!have_metrics && !have_adc)
        throw Error("nothing to report in " + e.reports_dir().string() + "; run `dwidn evaluate` and/or `dwidn adc` first");

    auto summarize = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return analysis::sample_stats(v);
    };

    if (have_metrics) {
        const auto rows = detail::read_report(e, "metrics.csv", "evaluate");
        const auto src = e.reports_dir() / "metrics.csv";
        const std::size_t img_col = detail::column_index(rows, "image", src);
        io::CsvTable t({"image", "metric", "n", "mean", "sd", "median", "iqr"});
        for (const char* image : {"noisy", "denoised", "reference"})
            for (const char* metric : {"psnr_db", "ssim", "nmse", "background_mean"}) {
                auto v = detail::column(rows, detail::column_index(rows, metric, src),
                                        [&](const auto& r) { return r.at(img_col) == image; });
                if (v.empty())
                    continue;
                const auto s = summarize(v);
                t.add_row({std::string(image), std::string(metric), static_cast<long long>(s.n_pixels), s.mean, s.sd,
                           s.median, s.iqr});
            }
        out.write(e.reports_dir() / "summary_metrics.csv", t);
    }

    if (have_adc) {
        const auto rows = detail::read_report(e, "adc_roi.csv", "adc");
        const auto src = e.reports_dir() / "adc_roi.csv";
        const std::size_t case_col = detail::column_index(rows, "case_id", src),
                          tissue_col = detail::column_index(rows, "tissue", src),
                          pipe_col = detail::column_index(rows, "pipeline", src),
                          mean_col = detail::column_index(rows, "mean", src);
        // ROI mean ADC keyed by (tissue, pipeline, case).
        std::map<std::string, std::map<std::string, std::map<std::string, double>>> roi;
        for (std::size_t i = 1; i < rows.size(); ++i)
            roi[rows[i].at(tissue_col)][rows[i].at(pipe_col)][rows[i].at(case_col)] =
                io::parse_number(rows[i].at(mean_col));

        std::vector<std::string> header{"tissue"};
        for (const char* p : kPipelines) {
            header.push_back(std::string(p) + "_median");
            header.push_back(std::string(p) + "_iqr");
        }
        io::CsvTable table(header);
        io::CsvTable ba({"tissue", "comparison", "case_id", "mean", "difference"});
        io::CsvTable ba_summary({"tissue", "comparison", "n", "bias", "sd", "loa_low", "loa_high"});
        for (auto t : sim::kEvaluatedTissues) {
            const std::string tissue = sim::tissue_name(t);
            if (!roi.count(tissue))
                continue;
            const auto& by_pipe = roi.at(tissue);
            std::vector<io::CsvCell> row{tissue};
            for (const char* p : kPipelines) {
                if (!by_pipe.count(p)) {
                    row.push_back(std::string());
                    row.push_back(std::string());
                    continue;
                }
                std::vector<double> v;
                for (const auto& [id, val] : by_pipe.at(p))
                    v.push_back(val);
                const auto s = summarize(v);
                row.push_back(s.median);
                row.push_back(s.iqr);
            }
            table.add_row(row);

            if (!by_pipe.count("reference"))
                continue;
            for (const char* p : {"noisy", "denoised"}) {
                if (!by_pipe.count(p))
                    continue;
                std::vector<double> a, b;
                std::vector<std::string> ids;
                for (const auto& [id, val] : by_pipe.at(p))
                    if (by_pipe.at("reference").count(id)) {
                        a.push_back(val);
                        b.push_back(by_pipe.at("reference").at(id));
                        ids.push_back(id);
                    }
                if (a.size() < 2)
                    continue;
                const std::string cmp = std::string(p) + "_vs_reference";
                const auto r = analysis::bland_altman(a, b);
                for (std::size_t i = 0; i < a.size(); ++i)
                    ba.add_row({tissue, cmp, ids[i], r.means[i], r.differences[i]});
                ba_summary.add_row(
                    {tissue, cmp, static_cast<long long>(a.size()), r.bias, r.sd, r.loa_low, r.loa_high});
            }
        }
        out.write(e.reports_dir() / "adc_table.csv", table);
        out.write(e.reports_dir() / "bland_altman.csv", ba);
        out.write(e.reports_dir() / "bland_altman_summary.csv", ba_summary);
    }

    const auto log_path = e.model_dir() / "train_log.csv";
    if (fs::exists(log_path)) {
        const auto rows = io::parse_csv(io::read_file(log_path));
        io::CsvTable loss({"x", "y"}), val({"x", "y"});
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const double epoch = io::parse_number(rows[i].at(0));
            loss.add_row({epoch, io::parse_number(rows[i].at(2))});
            if (!rows[i].at(3).empty())
                val.add_row({epoch, io::parse_number(rows[i].at(3))});
        }
        out.write(e.reports_dir() / "loss_curve.csv", loss);
        out.write(e.reports_dir() / "validation_curve.csv", val);
    }
}

} // namespace dwidn::cli
