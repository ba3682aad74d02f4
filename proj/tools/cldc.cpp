#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cldc/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"continual-RL benchmark for changing action sets"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = 0;
    CLI::App* run = app.add_subcommand("run", "train one method over a task sequence");
    run->add_option("--config", config_path, "JSON run config")->required();
    run->add_option("--set", overrides, "dotted-path override, e.g. a2c.lr=0.001");
    run->add_option("--jobs", jobs, "parallel seeds (overrides config)");

    std::string runs_dir;
    CLI::App* report = app.add_subcommand("report", "aggregate finished runs into a table");
    report->add_option("--runs", runs_dir, "directory of run directories")->required();

    std::string run_dir;
    int task_index = 0;
    CLI::App* probe = app.add_subcommand("probe", "decode accuracy of a saved encoder/decoder");
    probe->add_option("--run", run_dir, "finished run directory")->required();
    probe->add_option("--task", task_index, "1-based task index")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cldc::harness::cli_run(config_path, overrides, jobs);
        if (report->parsed()) return cldc::harness::cli_report(runs_dir);
        if (probe->parsed()) return cldc::harness::cli_probe(run_dir, task_index);
    } catch (const cldc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const cldc::NumericFault& e) {
        std::fprintf(stderr, "numeric fault: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
