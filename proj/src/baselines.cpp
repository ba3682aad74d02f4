#include "cldc/baselines.hpp"

#include <cmath>

namespace cldc::baselines {

Kind kind_from_tag(const std::string& tag) {
    if (tag == "ind") return Kind::Ind;
    if (tag == "ft") return Kind::Ft;
    if (tag == "ewc") return Kind::Ewc;
    if (tag == "online_ewc") return Kind::OnlineEwc;
    if (tag == "replay_bc") return Kind::ReplayBc;
    throw ConfigError("unknown baseline tag: " + tag);
}

std::string to_tag(Kind k) {
    switch (k) {
        case Kind::Ind: return "ind";
        case Kind::Ft: return "ft";
        case Kind::Ewc: return "ewc";
        case Kind::OnlineEwc: return "online_ewc";
        case Kind::ReplayBc: return "replay_bc";
    }
    throw ConfigError("bad baseline enum");
}

DirectPolicyState make_direct_policy(std::size_t obs_len, int catalog_size,
                                     const agent::A2CConfig& cfg, rng::Stream& rng) {
    if (catalog_size < 1) throw ConfigError("catalog_size must be positive");
    DirectPolicyState ps;
    ps.obs_len = obs_len;
    ps.catalog_size = catalog_size;
    ps.conditioned = cfg.prev_conditioning;
    std::vector<std::size_t> dims{ps.input_dim()};
    std::vector<numerics::Activation> acts;
    for (int h : cfg.hidden) {
        dims.push_back(static_cast<std::size_t>(h));
        acts.push_back(numerics::Activation::Relu);
    }
    std::vector<std::size_t> vdims = dims;
    std::vector<numerics::Activation> vacts = acts;
    dims.push_back(static_cast<std::size_t>(catalog_size));
    acts.push_back(numerics::Activation::Linear);
    vdims.push_back(1);
    vacts.push_back(numerics::Activation::Linear);
    ps.policy = numerics::make_mlp(dims, acts);
    ps.value = numerics::make_mlp(vdims, vacts);
    rng::Stream prng = rng.child("policy_init");
    rng::Stream vrng = rng.child("value_init");
    numerics::init_uniform(ps.policy, prng);
    numerics::init_uniform(ps.value, vrng);
    ps.popt = numerics::make_opt_state(ps.policy, cfg.opt);
    ps.vopt = numerics::make_opt_state(ps.value, cfg.opt);
    return ps;
}

std::vector<double> direct_input(const DirectPolicyState& ps, std::span<const double> obs,
                                 int prev_action, double prev_reward) {
    if (obs.size() != ps.obs_len) throw ShapeError("direct_input: observation length");
    std::vector<double> x;
    x.reserve(ps.input_dim());
    x.insert(x.end(), obs.begin(), obs.end());
    if (ps.conditioned) {
        std::vector<double> onehot(static_cast<std::size_t>(ps.catalog_size), 0.0);
        if (prev_action >= 0) onehot[static_cast<std::size_t>(prev_action)] = 1.0;
        x.insert(x.end(), onehot.begin(), onehot.end());
        x.push_back(prev_reward);
    }
    return x;
}

agent::ActResult baseline_act(const DirectPolicyState& ps, std::span<const double> input,
                              const std::vector<std::uint8_t>& active, agent::ActMode mode,
                              rng::Stream& rng) {
    agent::ActResult out;
    auto logits = numerics::net_forward(ps.policy, input).output();
    out.probs = numerics::softmax_masked(logits, active);
    std::size_t a = 0;
    if (mode == agent::ActMode::Greedy) {
        for (std::size_t i = 1; i < out.probs.size(); ++i)
            if (out.probs[i] > out.probs[a]) a = i;
    } else {
        a = rng.categorical(out.probs);
    }
    out.action = static_cast<int>(a);
    out.log_prob = std::log(out.probs[a]);
    return out;
}

numerics::GradBundle policy_fisher(const DirectPolicyState& ps,
                                   const std::deque<SeenStep>& window) {
    if (window.empty()) throw DataError("policy_fisher: empty window");
    auto fisher = numerics::make_grads_like(ps.policy);
    auto sample = numerics::make_grads_like(ps.policy);
    numerics::ForwardCache cache;
    for (const SeenStep& st : window) {
        numerics::net_forward_into(ps.policy, st.input, cache);
        auto probs = numerics::softmax_masked(cache.output(), st.mask);
        std::vector<double> dz(probs.size());
        for (std::size_t k = 0; k < probs.size(); ++k)
            dz[k] = probs[k] - (static_cast<int>(k) == st.action ? 1.0 : 0.0);
        sample.zero();
        numerics::net_backward(ps.policy, cache, dz, sample, nullptr);
        for (std::size_t li = 0; li < sample.layers.size(); ++li) {
            for (std::size_t i = 0; i < sample.layers[li].w.size(); ++i)
                fisher.layers[li].w[i] += sample.layers[li].w[i] * sample.layers[li].w[i];
            for (std::size_t i = 0; i < sample.layers[li].b.size(); ++i)
                fisher.layers[li].b[i] += sample.layers[li].b[i] * sample.layers[li].b[i];
        }
    }
    numerics::grad_scale(fisher, 1.0 / static_cast<double>(window.size()));
    return fisher;
}

namespace {

// Quadratic pull toward every anchor; adds gradients and returns the summed
// penalty value.
double add_anchor_grads(const DirectPolicyState& ps, numerics::GradBundle& grads, double lambda) {
    double penalty = 0.0;
    for (const PolicyAnchor& anc : ps.anchors) {
        for (std::size_t li = 0; li < ps.policy.layers.size(); ++li) {
            const auto& cur = ps.policy.layers[li];
            const auto& old = anc.params.layers[li];
            const auto& f = anc.fisher.layers[li];
            for (std::size_t i = 0; i < cur.w.size(); ++i) {
                double diff = cur.w[i] - old.w[i];
                penalty += 0.5 * lambda * f.w[i] * diff * diff;
                grads.layers[li].w[i] += lambda * f.w[i] * diff;
            }
            for (std::size_t i = 0; i < cur.b.size(); ++i) {
                double diff = cur.b[i] - old.b[i];
                penalty += 0.5 * lambda * f.b[i] * diff * diff;
                grads.layers[li].b[i] += lambda * f.b[i] * diff;
            }
        }
    }
    return penalty;
}

}  // namespace

agent::UpdateDiag direct_grads(const agent::RolloutBatch& batch, const DirectPolicyState& ps,
                               const BaselineConfig& cfg, Kind kind, rng::Stream& replay_rng,
                               numerics::GradBundle& pol_grads, numerics::GradBundle& val_grads) {
    std::size_t n = 0;
    for (const auto& r : batch.rollouts) n += r.steps.size();
    if (n == 0) throw ShapeError("direct_grads: empty batch");
    const double inv = 1.0 / static_cast<double>(n);
    const agent::A2CConfig& a2c = cfg.a2c;

    agent::UpdateDiag diag;
    numerics::ForwardCache pol_cache, val_cache;
    for (const auto& rollout : batch.rollouts) {
        auto targets = agent::compute_returns(rollout, a2c.gamma);
        for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
            const agent::RolloutStep& st = rollout.steps[t];
            numerics::net_forward_into(ps.policy, st.input, pol_cache);
            auto probs = numerics::softmax_masked(pol_cache.output(), batch.active);
            std::size_t target = static_cast<std::size_t>(st.action);

            numerics::net_forward_into(ps.value, st.input, val_cache);
            double v = val_cache.output()[0];
            double adv = targets[t] - v;

            diag.policy_loss -= inv * adv * std::log(probs[target]);
            diag.value_loss += inv * (v - targets[t]) * (v - targets[t]);
            diag.entropy += inv * numerics::entropy(probs);

            auto dz = numerics::policy_loss_upstream(probs, batch.active, target, adv,
                                                     a2c.entropy_coef, inv);
            numerics::net_backward(ps.policy, pol_cache, dz, pol_grads, nullptr);
            double dv = a2c.value_coef * 2.0 * (v - targets[t]) * inv;
            numerics::net_backward(ps.value, val_cache, std::span(&dv, 1), val_grads, nullptr);
        }
    }

    if (kind == Kind::Ewc) diag.penalty = add_anchor_grads(ps, pol_grads, cfg.lambda_b);
    if (kind == Kind::OnlineEwc) diag.penalty = add_anchor_grads(ps, pol_grads, cfg.online_lambda);
    if (kind == Kind::ReplayBc && !ps.reservoir.empty() && cfg.bc_weight > 0.0) {
        int k = std::min<int>(cfg.bc_batch, static_cast<int>(ps.reservoir.size()));
        double bc_inv = cfg.bc_weight / static_cast<double>(k);
        for (int i = 0; i < k; ++i) {
            const SeenStep& st = ps.reservoir[replay_rng.uniform_index(ps.reservoir.size())];
            numerics::net_forward_into(ps.policy, st.input, pol_cache);
            auto probs = numerics::softmax_masked(pol_cache.output(), st.mask);
            std::size_t target = static_cast<std::size_t>(st.action);
            std::vector<double> dz(probs.size());
            for (std::size_t j = 0; j < probs.size(); ++j)
                dz[j] = bc_inv * (probs[j] - (j == target ? 1.0 : 0.0));
            numerics::net_backward(ps.policy, pol_cache, dz, pol_grads, nullptr);
        }
    }
    return diag;
}

agent::UpdateDiag direct_a2c_update(const agent::RolloutBatch& batch, DirectPolicyState& ps,
                                    const BaselineConfig& cfg, Kind kind,
                                    rng::Stream& replay_rng) {
    auto pol_grads = numerics::make_grads_like(ps.policy);
    auto val_grads = numerics::make_grads_like(ps.value);
    agent::UpdateDiag diag = direct_grads(batch, ps, cfg, kind, replay_rng, pol_grads, val_grads);
    diag.grad_norm = numerics::opt_step(ps.policy, pol_grads, ps.popt);
    numerics::opt_step(ps.value, val_grads, ps.vopt);
    return diag;
}

double evaluate_direct(const DirectPolicyState& ps, const envs::TaskSpec& task, int episodes,
                       std::uint64_t seed) {
    if (episodes < 1) throw ConfigError("episodes must be positive");
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        rng::Stream act_rng(rng::derive(seed, "act", static_cast<std::uint64_t>(ep)));
        auto cur = envs::env_reset(task, rng::derive(seed, "episode", ep));
        int prev_a = -1;
        double prev_r = 0.0;
        double ep_return = 0.0;
        while (!cur.state.done) {
            auto input = direct_input(ps, cur.observation, prev_a, prev_r);
            auto chosen = baseline_act(ps, input, task.actions.active, agent::ActMode::Sample,
                                       act_rng);
            auto res = envs::env_step(cur.state, chosen.action, task);
            ep_return += res.reward;
            prev_a = chosen.action;
            prev_r = res.reward;
            cur.state = res.state;
            cur.observation = std::move(res.observation);
        }
        total += envs::normalize_return(ep_return, task);
    }
    return total / episodes;
}

void reservoir_push(DirectPolicyState& ps, SeenStep step, std::size_t capacity,
                    rng::Stream& rng) {
    ps.reservoir_seen += 1;
    if (ps.reservoir.size() < capacity) {
        ps.reservoir.push_back(std::move(step));
        return;
    }
    std::uint64_t j = rng.uniform_index(ps.reservoir_seen);
    if (j < capacity) ps.reservoir[static_cast<std::size_t>(j)] = std::move(step);
}

void run_sequence_baseline(Kind kind, DirectPolicyState& ps, const envs::SequenceSpec& seq,
                           const BaselineConfig& cfg, std::uint64_t run_seed,
                           long eval_interval, const SequenceHooks& hooks) {
    seq.validate();
    const agent::A2CConfig& a2c = cfg.a2c;
    rng::Stream reservoir_rng(rng::derive(run_seed, "reservoir"));

    if (hooks.at_eval_point) hooks.at_eval_point(0, 0, true);

    long global_step = 0;
    for (const envs::TaskSpec& task : seq.tasks) {
        const std::uint64_t ti = static_cast<std::uint64_t>(task.index);
        if (kind == Kind::Ind && task.index > 1) {
            rng::Stream fresh(rng::derive(run_seed, "reinit", ti));
            DirectPolicyState next = make_direct_policy(ps.obs_len, ps.catalog_size, a2c, fresh);
            ps.policy = std::move(next.policy);
            ps.value = std::move(next.value);
            ps.popt = std::move(next.popt);
            ps.vopt = std::move(next.vopt);
            ps.reinit_count += 1;
        }
        if (kind == Kind::Ewc || kind == Kind::OnlineEwc) ps.recent.clear();

        rng::Stream env_rng(rng::derive(run_seed, "env", ti));
        rng::Stream act_rng(rng::derive(run_seed, "act", ti));
        rng::Stream replay_rng(rng::derive(run_seed, "replay", ti));

        agent::RolloutBatch batch;
        batch.active = task.actions.active;
        batch.rollouts.resize(1);
        agent::Rollout& rollout = batch.rollouts[0];

        auto cur = envs::env_reset(task, env_rng.next_u64());
        int prev_a = -1;
        double prev_r = 0.0;
        double ep_return = 0.0;
        agent::UpdateDiag last_diag;

        for (long step = 1; step <= task.train_steps; ++step) {
            auto input = direct_input(ps, cur.observation, prev_a, prev_r);
            auto chosen = baseline_act(ps, input, task.actions.active, agent::ActMode::Sample,
                                       act_rng);
            auto res = envs::env_step(cur.state, chosen.action, task);
            ep_return += res.reward;

            if (kind == Kind::Ewc || kind == Kind::OnlineEwc) {
                ps.recent.push_back({input, chosen.action, chosen.log_prob, batch.active});
                if (ps.recent.size() > cfg.fisher_buffer) ps.recent.pop_front();
            }
            if (kind == Kind::ReplayBc)
                reservoir_push(ps, {input, chosen.action, chosen.log_prob, batch.active},
                               cfg.replay_capacity, reservoir_rng);

            rollout.steps.push_back({std::move(input), chosen.action, res.reward, res.done});
            cur.state = res.state;
            cur.observation = std::move(res.observation);
            prev_a = chosen.action;
            prev_r = res.reward;

            bool full = static_cast<int>(rollout.steps.size()) >= a2c.rollout;
            if (full || step == task.train_steps) {
                if (res.done) {
                    rollout.bootstrap = 0.0;
                } else {
                    auto next_input = direct_input(ps, cur.observation, prev_a, prev_r);
                    rollout.bootstrap = numerics::net_forward(ps.value, next_input).output()[0];
                }
                last_diag = direct_a2c_update(batch, ps, cfg, kind, replay_rng);
                rollout.steps.clear();
            }
            if (res.done) {
                if (hooks.on_episode)
                    hooks.on_episode({global_step + step, task.index, ep_return, last_diag});
                ep_return = 0.0;
                cur = envs::env_reset(task, env_rng.next_u64());
                prev_a = -1;
                prev_r = 0.0;
            }
            if (eval_interval > 0 && step % eval_interval == 0 && step != task.train_steps &&
                hooks.at_eval_point)
                hooks.at_eval_point(task.index, global_step + step, false);
        }
        global_step += task.train_steps;

        if (kind == Kind::Ewc && !ps.recent.empty()) {
            ps.anchors.push_back({task.index, ps.policy, policy_fisher(ps, ps.recent)});
        } else if (kind == Kind::OnlineEwc && !ps.recent.empty()) {
            auto fisher = policy_fisher(ps, ps.recent);
            if (ps.anchors.empty()) {
                ps.anchors.push_back({task.index, ps.policy, std::move(fisher)});
            } else {
                PolicyAnchor& anc = ps.anchors.front();
                anc.task_index = task.index;
                anc.params = ps.policy;
                numerics::grad_scale(anc.fisher, cfg.online_decay);
                numerics::grad_axpy(anc.fisher, fisher, 1.0);
            }
        }

        if (hooks.at_eval_point) hooks.at_eval_point(task.index, global_step, true);
    }
}

}  // namespace cldc::baselines
