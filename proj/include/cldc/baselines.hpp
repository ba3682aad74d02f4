#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "cldc/agent.hpp"
#include "cldc/envs.hpp"
#include "cldc/numerics.hpp"

namespace cldc::baselines {

// Reference methods that keep a conventional softmax policy head over the
// full action catalog; tasks mask the head to their active subset. They
// share the A2C trunk with the learned-representation agent but differ in
// what, if anything, carries over between tasks:
//   ind        fresh networks per task
//   ft         plain sequential fine-tuning
//   ewc        quadratic penalty toward per-task Fisher anchors
//   online_ewc single decayed anchor
//   replay_bc  reservoir replay with a behavioral-cloning term

enum class Kind { Ind, Ft, Ewc, OnlineEwc, ReplayBc };

Kind kind_from_tag(const std::string& tag);
std::string to_tag(Kind k);

struct BaselineConfig {
    agent::A2CConfig a2c;
    double lambda_b = 1e4;          // ewc penalty coefficient
    double online_lambda = 175.0;   // online_ewc penalty coefficient
    double online_decay = 0.95;     // online_ewc Fisher decay
    std::size_t fisher_buffer = 4096;   // recent transitions kept for Fisher estimates
    std::size_t replay_capacity = 10000;
    double bc_weight = 0.5;         // behavioral-cloning mixing weight
    int bc_batch = 20;
};

/// A transition as the policy saw it: full policy input (with conditioning),
/// the taken action, and the action mask in force at the time.
struct SeenStep {
    std::vector<double> input;
    int action = -1;
    double log_prob = 0.0;  // behavior log-probability at collection time
    std::vector<std::uint8_t> mask;
};

struct PolicyAnchor {
    int task_index = 0;
    numerics::ParamBundle params;
    numerics::GradBundle fisher;
};

struct DirectPolicyState {
    numerics::ParamBundle policy;  // input -> hidden -> |catalog| linear logits
    numerics::ParamBundle value;
    numerics::OptState popt, vopt;
    std::size_t obs_len = 0;
    int catalog_size = 0;
    bool conditioned = true;

    std::vector<PolicyAnchor> anchors;  // ewc list / online_ewc single entry
    std::deque<SeenStep> recent;        // Fisher estimation window
    std::vector<SeenStep> reservoir;
    std::size_t reservoir_seen = 0;
    int reinit_count = 0;

    std::size_t input_dim() const {
        return obs_len + (conditioned ? static_cast<std::size_t>(catalog_size) + 1 : 0);
    }
};

DirectPolicyState make_direct_policy(std::size_t obs_len, int catalog_size,
                                     const agent::A2CConfig& cfg, rng::Stream& rng);

std::vector<double> direct_input(const DirectPolicyState& ps, std::span<const double> obs,
                                 int prev_action, double prev_reward);

/// Masked softmax over the catalog head.
agent::ActResult baseline_act(const DirectPolicyState& ps, std::span<const double> input,
                              const std::vector<std::uint8_t>& active, agent::ActMode mode,
                              rng::Stream& rng);

/// Batch gradients for the direct head without applying them; `kind` adds
/// the method-specific terms (EWC penalties, BC-on-replay gradient). The
/// penalty value lands in the returned diagnostics.
agent::UpdateDiag direct_grads(const agent::RolloutBatch& batch, const DirectPolicyState& ps,
                               const BaselineConfig& cfg, Kind kind, rng::Stream& replay_rng,
                               numerics::GradBundle& pol_grads, numerics::GradBundle& val_grads);

/// A2C update on the direct head: direct_grads followed by optimizer steps.
agent::UpdateDiag direct_a2c_update(const agent::RolloutBatch& batch, DirectPolicyState& ps,
                                    const BaselineConfig& cfg, Kind kind, rng::Stream& replay_rng);

double evaluate_direct(const DirectPolicyState& ps, const envs::TaskSpec& task, int episodes,
                       std::uint64_t seed);

/// Diagonal empirical Fisher of log pi(a|input) over the recent window,
/// policy head only.
numerics::GradBundle policy_fisher(const DirectPolicyState& ps,
                                   const std::deque<SeenStep>& window);

/// Reservoir update: after n pushes with capacity C, every pushed item is
/// retained with probability C/n.
void reservoir_push(DirectPolicyState& ps, SeenStep step, std::size_t capacity,
                    rng::Stream& rng);

struct SequenceHooks {
    /// trained_after = 0 before any training, i after task i; boundary rows
    /// supersede the periodic rows written during task i.
    std::function<void(int trained_after, long global_step, bool boundary)> at_eval_point;
    agent::EpisodeSink on_episode;
};

/// Full sequential run of one baseline over a task sequence. Evaluation
/// itself is driven through the hooks so the harness owns rows and files.
void run_sequence_baseline(Kind kind, DirectPolicyState& ps, const envs::SequenceSpec& seq,
                           const BaselineConfig& cfg, std::uint64_t run_seed,
                           long eval_interval, const SequenceHooks& hooks);

}  // namespace cldc::baselines
