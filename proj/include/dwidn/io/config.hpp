#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "dwidn/analysis/adc.hpp"
#include "dwidn/io/container.hpp"
#include "dwidn/recon/dataset.hpp"
#include "dwidn/sim/acquisition.hpp"
#include "dwidn/train/trainer.hpp"

namespace dwidn::io {

class ConfigError : public Error {
public:
    using Error::Error;
};

struct DatasetConfig {
    std::size_t rows = 128, cols = 128;
    std::size_t n_train = 150, n_val = 20, n_test = 20;

    std::size_t total() const { return n_train + n_val + n_test; }
    friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct AnalysisConfig {
    double adc_floor_fraction = analysis::kAdcFloorFraction;
    std::size_t roi_erosion = 1; // pixels removed from each tissue ROI border
    std::size_t ssim_window = 11;
    double ssim_sigma = 1.5;
    friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

/// Everything a run depends on. Absent keys take these defaults.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    recon::TissueTable tissues; // overrides only
    sim::AcquisitionConfig acquisition;
    std::optional<double> noise_sigma; // empty: calibrate to target_snr on subject 0
    double target_snr = 25;
    train::TrainConfig train;
    AnalysisConfig analysis;

    void validate() const
    {
        if (dataset.rows < 16 || dataset.cols < 16)
            throw ConfigError("dataset: rows and cols must be >= 16");
        if (dataset.n_train == 0 || dataset.n_val == 0 || dataset.n_test == 0)
            throw ConfigError("dataset: n_train, n_val and n_test must be positive");
        if (noise_sigma && !(*noise_sigma >= 0))
            throw ConfigError("acquisition.noise_sigma must be >= 0 or null");
        if (!(target_snr > 0))
            throw ConfigError("acquisition.target_snr must be positive");
        if (train.patch_size > std::min(dataset.rows, dataset.cols))
            throw ConfigError("train.patch_size exceeds the image size");
        if (analysis.ssim_window < 3 || analysis.ssim_window % 2 == 0 || !(analysis.ssim_sigma > 0))
            throw ConfigError("analysis: ssim_window must be odd and >= 3, ssim_sigma > 0");
        if (!(analysis.adc_floor_fraction >= 0 && analysis.adc_floor_fraction < 1))
            throw ConfigError("analysis.adc_floor_fraction must be in [0, 1)");
        try {
            auto a = acquisition;
            a.noise_sigma = noise_sigma.value_or(0);
            a.validate();
            train.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }

    /// Training settings with the experiment seed applied.
    train::TrainConfig train_config() const
    {
        auto t = train;
        t.seed = seed;
        return t;
    }

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b)
    {
        auto ja = a.to_json(), jb = b.to_json();
        return ja == jb;
    }

    json to_json() const;
    static ExperimentConfig from_json(const json& j);
};

namespace detail {

/// Reads one JSON object; every key must be consumed or finish() throws.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object())
            throw ConfigError(where() + "expected an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean())
                    throw ConfigError(where(key) + "expected true or false");
            } else if constexpr (std::is_integral_v<T>) {
                if (std::is_unsigned_v<T> ? !it->is_number_unsigned() : !it->is_number_integer())
                    throw ConfigError(where(key) + "expected a non-negative integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number())
                    throw ConfigError(where(key) + "expected a number");
            }
            out = it->template get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where(key) + e.what());
        }
    }

    void get(const char* key, std::optional<double>& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return;
        if (it->is_null())
            out.reset();
        else if (it->is_number())
            out = it->get<double>();
        else
            throw ConfigError(where(key) + "expected a number or null");
    }

    std::optional<StrictObject> child(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end())
            return std::nullopt;
        return StrictObject(*it, path_.empty() ? key : path_ + "." + key);
    }

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }
    void mark_all_seen()
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            seen_.insert(it.key());
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw ConfigError("unknown config key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) +
                                  "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;

    std::string where(const std::string& key = {}) const
    {
        std::string p = path_;
        if (!key.empty())
            p = p.empty() ? key : p + "." + key;
        return "config '" + (p.empty() ? std::string("<root>") : p) + "': ";
    }
};

} // namespace detail

inline json ExperimentConfig::to_json() const
{
    json tissue_json = json::object();
    for (const auto& [t, c] : tissues)
        tissue_json[sim::tissue_name(t)] = {
            {"adc_mean", c.adc_mean}, {"adc_sd", c.adc_sd}, {"s0_mean", c.s0_mean}, {"s0_sd", c.s0_sd}};
    const auto& a = acquisition;
    const auto& t = train;
    return {{"seed", seed},
            {"dataset",
             {{"rows", dataset.rows},
              {"cols", dataset.cols},
              {"n_train", dataset.n_train},
              {"n_val", dataset.n_val},
              {"n_test", dataset.n_test}}},
            {"phantom", {{"tissues", tissue_json}}},
            {"acquisition",
             {{"b_low", a.b_low},
              {"b_high", a.b_high},
              {"tr_ms", a.tr_ms},
              {"n_directions", a.n_directions},
              {"n_avg_low", a.n_avg_low},
              {"n_avg_high", a.n_avg_high},
              {"n_coils", a.n_coils},
              {"noise_sigma", noise_sigma ? json(*noise_sigma) : json(nullptr)},
              {"target_snr", target_snr}}},
            {"train",
             {{"patch_size", t.patch_size},
              {"stride", t.stride},
              {"depth", t.depth},
              {"width", t.width},
              {"guided", t.guided},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"lr_start", t.lr_start},
              {"lr_end", t.lr_end},
              {"weight_decay", t.weight_decay},
              {"beta1", t.beta1},
              {"beta2", t.beta2},
              {"validate_every", t.validate_every},
              {"background_fraction", t.background_fraction}}},
            {"analysis",
             {{"adc_floor_fraction", analysis.adc_floor_fraction},
              {"roi_erosion", analysis.roi_erosion},
              {"ssim_window", analysis.ssim_window},
              {"ssim_sigma", analysis.ssim_sigma}}}};
}

inline ExperimentConfig ExperimentConfig::from_json(const json& j)
{
    ExperimentConfig c;
    detail::StrictObject root(j, "");
    root.get("seed", c.seed);
    if (auto d = root.child("dataset")) {
        d->get("rows", c.dataset.rows);
        d->get("cols", c.dataset.cols);
        d->get("n_train", c.dataset.n_train);
        d->get("n_val", c.dataset.n_val);
        d->get("n_test", c.dataset.n_test);
        d->finish();
    }
    if (auto p = root.child("phantom")) {
        if (auto ts = p->child("tissues")) {
            for (auto it = ts->raw().begin(); it != ts->raw().end(); ++it) {
                const auto tissue = sim::tissue_from_name(it.key());
                if (!tissue || *tissue == sim::Tissue::background)
                    throw ConfigError("unknown config key 'phantom.tissues." + it.key() + "' (not a tissue name)");
                sim::TissueClass cls = sim::default_tissue(*tissue);
                detail::StrictObject o(it.value(), "phantom.tissues." + it.key());
                o.get("adc_mean", cls.adc_mean);
                o.get("adc_sd", cls.adc_sd);
                o.get("s0_mean", cls.s0_mean);
                o.get("s0_sd", cls.s0_sd);
                o.finish();
                c.tissues[*tissue] = cls;
            }
            ts->mark_all_seen();
        }
        p->finish();
    }
    if (auto a = root.child("acquisition")) {
        a->get("b_low", c.acquisition.b_low);
        a->get("b_high", c.acquisition.b_high);
        a->get("tr_ms", c.acquisition.tr_ms);
        a->get("n_directions", c.acquisition.n_directions);
        a->get("n_avg_low", c.acquisition.n_avg_low);
        a->get("n_avg_high", c.acquisition.n_avg_high);
        a->get("n_coils", c.acquisition.n_coils);
        a->get("noise_sigma", c.noise_sigma);
        a->get("target_snr", c.target_snr);
        a->finish();
    }
    if (auto t = root.child("train")) {
        t->get("patch_size", c.train.patch_size);
        t->get("stride", c.train.stride);
        t->get("depth", c.train.depth);
        t->get("width", c.train.width);
        t->get("guided", c.train.guided);
        t->get("batch_size", c.train.batch_size);
        t->get("epochs", c.train.epochs);
        t->get("lr_start", c.train.lr_start);
        t->get("lr_end", c.train.lr_end);
        t->get("weight_decay", c.train.weight_decay);
        t->get("beta1", c.train.beta1);
        t->get("beta2", c.train.beta2);
        t->get("validate_every", c.train.validate_every);
        t->get("background_fraction", c.train.background_fraction);
        t->finish();
    }
    if (auto an = root.child("analysis")) {
        an->get("adc_floor_fraction", c.analysis.adc_floor_fraction);
        an->get("roi_erosion", c.analysis.roi_erosion);
        an->get("ssim_window", c.analysis.ssim_window);
        an->get("ssim_sigma", c.analysis.ssim_sigma);
        an->finish();
    }
    root.finish();
    c.validate();
    return c;
}

inline ExperimentConfig parse_config(std::string_view text, const std::string& source = "config")
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(source + ": not valid JSON: " + e.what());
    }
    try {
        return ExperimentConfig::from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    return parse_config(read_file(path), path.string());
}

/// Canonical text of the resolved config; identical configs give identical bytes.
inline std::string resolved_config_text(const ExperimentConfig& c)
{
    return c.to_json().dump(2) + "\n";
}

inline std::string config_hash(const ExperimentConfig& c)
{
    return hex64(fnv1a64(c.to_json().dump()));
}

} // namespace dwidn::io
