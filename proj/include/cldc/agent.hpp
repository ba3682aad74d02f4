#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cldc/envs.hpp"
#include "cldc/numerics.hpp"
#include "cldc/repr.hpp"
#include "cldc/rng.hpp"

namespace cldc::agent {

// Policy learning on top of the representation space. The policy network
// emits a point e; the frozen decoder turns e into an action distribution
// restricted to the task's active set. A2C updates flow through the decoder
// into the policy but never modify encoder or decoder parameters.

struct A2CConfig {
    double gamma = 0.99;
    int rollout = 20;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    numerics::OptConfig opt{4e-4, 0.99, 1e-8, 40.0};
    std::vector<int> hidden = {64, 64};
    bool prev_conditioning = true;  // feed previous step's e (or action) + reward
};

enum class ActMode { Sample, Greedy };

struct PolicyState {
    numerics::ParamBundle policy;  // input -> hidden -> repr_dim, sigmoid head
    numerics::ParamBundle value;   // input -> hidden -> 1, linear head
    numerics::OptState popt, vopt;
    std::size_t obs_len = 0;
    int repr_dim = 0;
    bool conditioned = true;

    std::size_t input_dim() const {
        return obs_len + (conditioned ? static_cast<std::size_t>(repr_dim) + 1 : 0);
    }
};

PolicyState make_policy(std::size_t obs_len, int repr_dim, const A2CConfig& cfg,
                        rng::Stream& rng);

/// Concatenate observation with conditioning inputs (previous e, previous
/// reward); zeros at episode starts.
std::vector<double> policy_input(const PolicyState& ps, std::span<const double> obs,
                                 std::span<const double> prev_e, double prev_reward);

struct ActResult {
    int action = -1;        // catalog index
    double log_prob = 0.0;  // log of the decode probability of `action`
    std::vector<double> e;
    std::vector<double> probs;  // catalog-length, exact zeros off the active set
};

/// One action choice. Greedy breaks ties toward the lowest catalog index.
/// Requires every active action to have a decoder row.
ActResult act(const PolicyState& ps, const repr::EncoderDecoderState& encdec,
              std::span<const double> input, const std::vector<std::uint8_t>& active,
              ActMode mode, rng::Stream& rng);

struct RolloutStep {
    std::vector<double> input;
    int action = -1;
    double reward = 0.0;
    bool done = false;
};

struct Rollout {
    std::vector<RolloutStep> steps;
    double bootstrap = 0.0;  // V(s_n); 0 when the last step terminated
};

struct RolloutBatch {
    std::vector<Rollout> rollouts;
    std::vector<std::uint8_t> active;  // catalog mask shared by the batch
};

/// n-step discounted targets, computed backward from the bootstrap value.
/// Terminal steps inside the rollout cut the recursion.
std::vector<double> compute_returns(const Rollout& rollout, double gamma);

struct UpdateDiag {
    double policy_loss = 0.0;  // mean -A * log pi(a)
    double value_loss = 0.0;   // mean (V - target)^2
    double entropy = 0.0;      // mean policy entropy
    double penalty = 0.0;      // anchor penalty (EWC-style baselines only)
    double grad_norm = 0.0;    // pre-clip policy grad norm
};

/// Batch gradients without applying them; accumulates into pol_grads and
/// val_grads. Advantages come from the current value net and are treated as
/// constants. Exposed so the update direction can be verified against
/// finite differences.
UpdateDiag a2c_grads(const RolloutBatch& batch, const PolicyState& ps,
                     const repr::EncoderDecoderState& encdec, const A2CConfig& cfg,
                     numerics::GradBundle& pol_grads, numerics::GradBundle& val_grads);

/// One synchronous A2C update from a rollout batch. The encoder/decoder pair
/// is read-only here; only policy and value parameters move.
UpdateDiag a2c_update(const RolloutBatch& batch, PolicyState& ps,
                      const repr::EncoderDecoderState& encdec, const A2CConfig& cfg);

struct EpisodeEvent {
    long global_step = 0;
    int task_index = 0;
    double episode_return = 0.0;  // raw, unnormalized
    UpdateDiag diag;              // most recent update diagnostics
};

using EpisodeSink = std::function<void(const EpisodeEvent&)>;

/// Evaluation episodes with Sample-mode acting. Actions are drawn from
/// active-and-seen rows; if nothing is seen yet (before any training) the
/// agent falls back to uniform random over the active set. Returns the mean
/// normalized return.
double evaluate(const PolicyState& ps, const repr::EncoderDecoderState& encdec,
                const envs::TaskSpec& task, int episodes, std::uint64_t seed,
                const A2CConfig& cfg);

/// Generic scripted-policy episode runner; shares the return bookkeeping
/// with evaluate. Used by tests and the probe tool.
double rollout_return(const envs::TaskSpec& task,
                      const std::function<int(const std::vector<double>&, rng::Stream&)>& act_fn,
                      int episodes, std::uint64_t seed);

struct ReprSettings {
    int repr_dim = 256;
    std::vector<int> encoder_hidden = {128};
    bool head_sigmoid = true;
    long explore_steps = 10000;
    repr::SslConfig ssl;
    double lambda = 2e4;
    repr::RegMode mode = repr::RegMode::DecoderOnly;
    bool explore_with_previous_policy = false;
};

struct AgentBundle {
    PolicyState policy;
    repr::EncoderDecoderState encdec;
    A2CConfig a2c;
    ReprSettings repr_cfg;
};

AgentBundle make_agent(const envs::TaskSpec& first_task, const A2CConfig& a2c,
                       const ReprSettings& repr_cfg, rng::Stream& rng);

struct TaskHooks {
    /// Called every eval_interval steps within the task (not at the final
    /// step; the boundary evaluation covers that point).
    std::function<void(long step_in_task, long global_step)> at_eval_point;
    EpisodeSink on_episode;
    std::function<void(const std::vector<double>&)> on_ssl_trace;
};

/// One task of the per-task loop: collect exploration transitions, adapt the
/// decoder structure, train (or EWC-fine-tune) the representation, snapshot
/// the Fisher anchor, then train the policy by A2C against the frozen
/// decoder. Returns the number of training steps consumed.
long run_task(AgentBundle& bundle, const envs::TaskSpec& task, std::uint64_t run_seed,
              long global_step_start, long eval_interval, const TaskHooks& hooks);

}  // namespace cldc::agent
