#pragma once

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dwidn/cli/commands.hpp"
#include "dwidn/cli/experiment.hpp"

namespace dwidn::cli {

using CommandFn = std::function<void(const Experiment&, OutputSet&, std::size_t)>;

inline const std::vector<std::pair<std::string, std::string>>& command_help()
{
    static const std::vector<std::pair<std::string, std::string>> help{
        {"simulate", "generate phantoms and multi-average k-space under raw/"},
        {"reconstruct", "build guidance, noisy and reference images under cases/"},
        {"train", "train the denoiser on the train/val cases into models/<hash>/"},
        {"denoise", "apply the trained model to the test cases"},
        {"adc", "ADC maps and per-tissue ROI statistics for the test cases"},
        {"evaluate", "PSNR, SSIM and nMSE of the test images against their references"},
        {"compare", "train guided and plain networks and compare them on the test cases"},
        {"report", "aggregate the CSV reports into summary tables and plot data"},
    };
    return help;
}

inline CommandFn command_function(const std::string& name)
{
    static const std::map<std::string, CommandFn> table{
        {"simulate", cmd_simulate}, {"reconstruct", cmd_reconstruct}, {"train", cmd_train},
        {"denoise", cmd_denoise},   {"adc", cmd_adc},                 {"evaluate", cmd_evaluate},
        {"compare", cmd_compare},   {"report", cmd_report},
    };
    const auto it = table.find(name);
    if (it == table.end())
        throw Error("unknown command '" + name + "'");
    return it->second;
}

/// Runs one command. Any failure removes the files it wrote.
inline int execute(const Options& opt, std::ostream& err = std::cerr)
{
    OutputSet outputs;
    try {
        if (opt.out.empty())
            throw Error("--out DIR is required");
        if (opt.threads == 0)
            throw Error("--threads must be at least 1");
        const auto fn = command_function(opt.command);
        fs::create_directories(opt.out);
        DirectoryLock lock(opt.out);
        const Experiment e = open_experiment(opt, outputs);
        fn(e, outputs, opt.threads);
        return 0;
    } catch (const std::exception& ex) {
        outputs.rollback();
        err << "dwidn " << opt.command << ": error: " << ex.what() << '\n';
        return 1;
    }
}

/// Parses argv (program name first) and runs the selected subcommand.
inline int run_command(int argc, const char* const* argv, std::ostream& err = std::cerr)
{
    CLI::App app{"Synthetic diffusion-weighted MRI denoising pipeline"};
    app.require_subcommand(1);
    Options opt;
    std::string config, out;
    std::uint64_t seed = 0;
    for (const auto& [name, help] : command_help()) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "experiment config (JSON); defaults to <out>/config.json")
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "experiment seed, overrides the config");
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "experiment directory")->required();
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream usage, error;
        const int code = app.exit(e, usage, error);
        err << usage.str() << error.str();
        return code == 0 ? 0 : 2;
    }
    const auto* sub = app.get_subcommands().front();
    opt.command = sub->get_name();
    opt.out = out;
    if (!config.empty())
        opt.config = config;
    if (sub->count("--seed"))
        opt.seed = seed;
    return execute(opt, err);
}

inline int run_command(const std::vector<std::string>& args, std::ostream& err = std::cerr)
{
    std::vector<const char*> argv{"dwidn"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run_command(int(argv.size()), argv.data(), err);
}

} // namespace dwidn::cli
