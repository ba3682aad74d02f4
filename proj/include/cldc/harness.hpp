#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cldc/agent.hpp"
#include "cldc/baselines.hpp"
#include "cldc/envs.hpp"
#include "cldc/metrics.hpp"

namespace cldc::harness {

// Orchestration: configs, sequences x methods x seeds, periodic all-task
// evaluation, artifact files, and the CLI verbs (run / report / probe).

struct EvalSettings {
    long interval = 10000;
    int episodes = 10;
};

struct RunConfig {
    std::string method = "aacl";
    std::string family = "oriented";
    std::string situation = "expansion";
    envs::GridConfig grid;
    std::vector<long> budgets;  // resolved: one entry per task
    EvalSettings eval;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string out_dir = "runs/run";
    int jobs = 1;
    agent::A2CConfig a2c;
    agent::ReprSettings repr;
    baselines::BaselineConfig baseline;  // a2c trunk copied from `a2c` at build time
    std::vector<std::vector<int>> custom_action_sets;
    bool save_state = true;        // encoder/decoder snapshots per task, first seed
    bool dump_embeddings = true;   // final-task embeddings CSV, first seed

    bool is_aacl_family() const;
    repr::RegMode reg_mode() const;  // derived from the method tag
    void validate() const;
};

/// Strict parse: unknown keys anywhere are a config error. Budgets default
/// per family (150k oriented / 300k omni) when absent.
RunConfig parse_config_text(const std::string& json_text);
std::string resolved_config_text(const RunConfig& c);  // every default materialized

/// Load file, apply dotted-key overrides ("a2c.lr=0.001"; values parsed as
/// JSON, falling back to strings), then validate strictly.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

envs::SequenceSpec make_sequence(const RunConfig& c);

/// CLDC_OUT, when set, becomes the root for relative output directories.
std::string resolve_out_dir(const std::string& configured);

/// Run every seed of the config and write all artifacts under the resolved
/// output directory. Returns the process exit code (0 ok, 2 config error,
/// 3 numeric fault with partial artifacts kept).
int cli_run(const std::string& config_path, const std::vector<std::string>& overrides,
            int jobs_override);

int cli_report(const std::string& runs_dir);

int cli_probe(const std::string& run_dir, int task_index);

/// One seed end to end; exposed for tests. Writes train_log.jsonl and
/// perf_matrix.csv into seed_dir, optional state snapshots, and returns the
/// finished matrix (boundary rows).
metrics::PerfMatrix run_one_seed(const RunConfig& cfg, const envs::SequenceSpec& seq,
                                 std::uint64_t seed, const std::string& seed_dir,
                                 bool save_state);

}  // namespace cldc::harness
