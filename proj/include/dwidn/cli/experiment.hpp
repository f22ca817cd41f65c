#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dwidn/io/config.hpp"
#include "dwidn/io/container.hpp"
#include "dwidn/io/csv.hpp"

// Experiment directory:
//   config.json          resolved config (defaults filled), written once
//   raw/                 k-space acquisitions and phantom truth per subject, index.csv
//   cases/               reconstructed DWI cases, index.csv, adc/ for noisy and reference ADC maps
//   models/<hash>/       checkpoints, training log, denoised/ images and adc/ maps
//   reports/             CSV reports

namespace dwidn::cli {

namespace fs = std::filesystem;

struct Options {
    std::string command;
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    fs::path out;
};

/// Advisory lock: a second command on the same directory fails instead of
/// interleaving writes. Stale locks are removed by hand.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock")
    {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f)
            throw Error("experiment directory " + dir.string() + " is locked by another command (" + path_.string() +
                        "); delete the lock file if no other command is running");
        std::fclose(f);
    }
    ~DirectoryLock()
    {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

/// Records every file a command writes so a failed command can remove them.
class OutputSet {
public:
    void write(const fs::path& path, std::string_view bytes)
    {
        written_.push_back(path);
        io::write_file_atomic(path, bytes);
    }
    void write(const fs::path& path, const io::Container& c) { write(path, c.serialize()); }
    void write(const fs::path& path, const io::CsvTable& t) { write(path, t.str()); }

    void rollback() noexcept
    {
        for (const auto& p : written_) {
            std::error_code ec;
            fs::remove(p, ec);
            auto partial = p;
            partial += ".partial";
            fs::remove(partial, ec);
        }
        written_.clear();
    }
    std::size_t count() const { return written_.size(); }

private:
    std::vector<fs::path> written_;
};

enum class Split { train, val, test };

inline const char* split_name(Split s)
{
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_name(const std::string& s)
{
    if (s == "train")
        return Split::train;
    if (s == "val")
        return Split::val;
    if (s == "test")
        return Split::test;
    throw IoError("unknown split '" + s + "'");
}

struct IndexEntry {
    std::string id;
    Split split;
};

class Experiment {
public:
    fs::path root;
    io::ExperimentConfig config;
    std::string hash;

    fs::path config_path() const { return root / "config.json"; }
    fs::path raw_dir() const { return root / "raw"; }
    fs::path cases_dir() const { return root / "cases"; }
    fs::path reports_dir() const { return root / "reports"; }
    fs::path model_dir() const { return root / "models" / hash; }

    fs::path raw_path(const std::string& id) const { return raw_dir() / (id + ".dwt"); }
    fs::path phantom_path(const std::string& id) const { return raw_dir() / (id + ".phantom.dwt"); }
    fs::path case_path(const std::string& id) const { return cases_dir() / (id + ".dwt"); }
    fs::path model_path() const { return model_dir() / "model.dwt"; }
    fs::path denoised_path(const std::string& id) const { return model_dir() / "denoised" / (id + ".dwt"); }

    io::json provenance() const { return {{"seed", config.seed}, {"config_hash", hash}}; }

    /// Split index written by `simulate` (raw/) or `reconstruct` (cases/).
    std::vector<IndexEntry> read_index(const fs::path& dir, const std::string& producer) const
    {
        const auto path = dir / "index.csv";
        if (!fs::exists(path))
            throw Error("missing " + path.string() + "; run `dwidn " + producer + " --out " + root.string() +
                        "` first");
        const auto rows = io::parse_csv(io::read_file(path));
        std::vector<IndexEntry> out;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() < 2)
                throw IoError(path.string() + ": malformed row " + std::to_string(i));
            out.push_back({rows[i][0], split_from_name(rows[i][1])});
        }
        return out;
    }

    static std::vector<std::string> ids_in(const std::vector<IndexEntry>& index, Split s)
    {
        std::vector<std::string> out;
        for (const auto& e : index)
            if (e.split == s)
                out.push_back(e.id);
        return out;
    }
};

/// Resolves the config (file, else the directory's stored config, else
/// defaults), applies --seed, and pins it to the directory. A directory
/// created with one config refuses commands that resolve to another.
inline Experiment open_experiment(const Options& opt, OutputSet& outputs)
{
    if (opt.out.empty())
        throw Error("--out DIR is required");
    Experiment e;
    e.root = opt.out;
    const bool stored = fs::exists(e.config_path());
    if (opt.config)
        e.config = io::load_config(*opt.config);
    else if (stored)
        e.config = io::load_config(e.config_path());
    if (opt.seed)
        e.config.seed = *opt.seed;
    e.config.validate();
    e.hash = io::config_hash(e.config);
    const std::string text = io::resolved_config_text(e.config);
    if (stored) {
        const auto existing = io::load_config(e.config_path());
        if (io::resolved_config_text(existing) != text)
            throw Error(e.root.string() + " was created with a different configuration (stored hash " +
                        io::config_hash(existing) + ", requested " + e.hash + "); use a new --out directory");
    } else {
        fs::create_directories(e.root);
        outputs.write(e.config_path(), text);
    }
    return e;
}

} // namespace dwidn::cli
