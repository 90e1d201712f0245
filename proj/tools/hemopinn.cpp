#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "hemopinn/pipeline.hpp"

using namespace hemopinn;

int main(int argc, char** argv) {
    CLI::App app{"hemopinn: Windkessel-coupled flow reference, synthetic PC-MRI and PINN inversion"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    long seed_override = -1;
    long realizations_override = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration file")->required();
        cmd->add_option("--out", out_dir, "run directory")->required();
        cmd->add_option("--seed", seed_override, "override [run] seed");
        cmd->add_option("--realizations", realizations_override, "override [training] realizations");
        return cmd;
    };

    auto* c_sim = add_common(app.add_subcommand("simulate", "generate the reference solution"));
    auto* c_meas = add_common(app.add_subcommand("measure", "synthesize PC-MRI measurements"));
    auto* c_train = add_common(app.add_subcommand("train", "run the PINN inverse problem"));
    auto* c_post = add_common(app.add_subcommand("postprocess", "re-simulate with estimated parameters"));
    auto* c_rep = add_common(app.add_subcommand("report", "emit tables, metrics and plots"));

    CLI11_PARSE(app, argc, argv);

    try {
        cli::RunConfig rc = cli::RunConfig::load(config_path);
        if (seed_override >= 0) rc.seed = static_cast<std::uint64_t>(seed_override);
        if (realizations_override > 0) rc.train.realizations = static_cast<int>(realizations_override);

        if (c_sim->parsed()) cli::cmd_simulate(rc, out_dir);
        else if (c_meas->parsed()) cli::cmd_measure(rc, out_dir);
        else if (c_train->parsed()) cli::cmd_train(rc, out_dir);
        else if (c_post->parsed()) cli::cmd_postprocess(rc, out_dir);
        else if (c_rep->parsed()) cli::cmd_report(rc, out_dir);
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
