#include "cldc/agent.hpp"

#include <bit>
#include <cmath>

namespace cldc::agent {

PolicyState make_policy(std::size_t obs_len, int repr_dim, const A2CConfig& cfg,
                        rng::Stream& rng) {
    if (repr_dim < 1) throw ConfigError("repr_dim must be positive");
    PolicyState ps;
    ps.obs_len = obs_len;
    ps.repr_dim = repr_dim;
    ps.conditioned = cfg.prev_conditioning;
    std::vector<std::size_t> dims{ps.input_dim()};
    std::vector<numerics::Activation> acts;
    for (int h : cfg.hidden) {
        if (h < 1) throw ConfigError("policy hidden width must be positive");
        dims.push_back(static_cast<std::size_t>(h));
        acts.push_back(numerics::Activation::Relu);
    }
    std::vector<std::size_t> vdims = dims;
    std::vector<numerics::Activation> vacts = acts;
    dims.push_back(static_cast<std::size_t>(repr_dim));
    acts.push_back(numerics::Activation::Sigmoid);  // e lives in (0,1)^d like the encoder's
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

std::vector<double> policy_input(const PolicyState& ps, std::span<const double> obs,
                                 std::span<const double> prev_e, double prev_reward) {
    if (obs.size() != ps.obs_len) throw ShapeError("policy_input: observation length");
    std::vector<double> x;
    x.reserve(ps.input_dim());
    x.insert(x.end(), obs.begin(), obs.end());
    if (ps.conditioned) {
        if (prev_e.size() != static_cast<std::size_t>(ps.repr_dim))
            throw ShapeError("policy_input: conditioning vector length");
        x.insert(x.end(), prev_e.begin(), prev_e.end());
        x.push_back(prev_reward);
    }
    return x;
}

namespace {

std::size_t pick_greedy(const std::vector<double>& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;  // ties keep the lowest index
    return best;
}

}  // namespace

ActResult act(const PolicyState& ps, const repr::EncoderDecoderState& encdec,
              std::span<const double> input, const std::vector<std::uint8_t>& active,
              ActMode mode, rng::Stream& rng) {
    ActResult out;
    out.e = numerics::net_forward(ps.policy, input).output();
    out.probs = repr::decode(encdec, out.e, active);
    std::size_t a = mode == ActMode::Greedy ? pick_greedy(out.probs)
                                            : rng.categorical(out.probs);
    out.action = static_cast<int>(a);
    out.log_prob = std::log(out.probs[a]);
    return out;
}

std::vector<double> compute_returns(const Rollout& rollout, double gamma) {
    std::vector<double> ret(rollout.steps.size());
    double acc = rollout.bootstrap;
    for (std::size_t i = rollout.steps.size(); i-- > 0;) {
        const RolloutStep& st = rollout.steps[i];
        if (st.done) acc = 0.0;
        acc = st.reward + gamma * acc;
        ret[i] = acc;
    }
    return ret;
}

namespace {

#ifndef NDEBUG
std::uint64_t bundle_checksum(const numerics::ParamBundle& p) {
    std::uint64_t h = 0;
    for (const auto& l : p.layers) {
        for (double v : l.w) h ^= std::bit_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ULL + (h << 6);
        for (double v : l.b) h ^= std::bit_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ULL + (h << 6);
    }
    return h;
}
#endif

}  // namespace

UpdateDiag a2c_grads(const RolloutBatch& batch, const PolicyState& ps,
                     const repr::EncoderDecoderState& encdec, const A2CConfig& cfg,
                     numerics::GradBundle& pol_grads, numerics::GradBundle& val_grads) {
    std::size_t n = 0;
    for (const Rollout& r : batch.rollouts) n += r.steps.size();
    if (n == 0) throw ShapeError("a2c_grads: empty batch");
    if (!encdec.all_seen(batch.active))
        throw DataError("a2c_grads: active action without decoder row");

    const auto row_mask = encdec.row_mask(batch.active);
    const double inv = 1.0 / static_cast<double>(n);
    auto dec_scratch = numerics::make_grads_like(encdec.decoder);  // frozen: never applied

    UpdateDiag diag;
    numerics::ForwardCache pol_cache, dec_cache, val_cache;
    std::vector<double> e_grad;
    for (const Rollout& rollout : batch.rollouts) {
        auto targets = compute_returns(rollout, cfg.gamma);
        for (std::size_t t = 0; t < rollout.steps.size(); ++t) {
            const RolloutStep& st = rollout.steps[t];
            numerics::net_forward_into(ps.policy, st.input, pol_cache);
            numerics::net_forward_into(encdec.decoder, pol_cache.output(), dec_cache);
            auto probs = numerics::softmax_masked(dec_cache.output(), row_mask);
            int row = encdec.row_of[static_cast<std::size_t>(st.action)];
            if (row < 0) throw DataError("a2c_grads: action without decoder row");
            std::size_t target = static_cast<std::size_t>(row);

            numerics::net_forward_into(ps.value, st.input, val_cache);
            double v = val_cache.output()[0];
            double adv = targets[t] - v;  // advantage treated as a constant below

            diag.policy_loss -= inv * adv * std::log(probs[target]);
            diag.value_loss += inv * (v - targets[t]) * (v - targets[t]);
            diag.entropy += inv * numerics::entropy(probs);

            auto dz = numerics::policy_loss_upstream(probs, row_mask, target, adv,
                                                     cfg.entropy_coef, inv);
            numerics::net_backward(encdec.decoder, dec_cache, dz, dec_scratch, &e_grad);
            numerics::net_backward(ps.policy, pol_cache, e_grad, pol_grads, nullptr);

            double dv = cfg.value_coef * 2.0 * (v - targets[t]) * inv;
            numerics::net_backward(ps.value, val_cache, std::span(&dv, 1), val_grads, nullptr);
        }
    }
    return diag;
}

UpdateDiag a2c_update(const RolloutBatch& batch, PolicyState& ps,
                      const repr::EncoderDecoderState& encdec, const A2CConfig& cfg) {
#ifndef NDEBUG
    const std::uint64_t enc_sum = bundle_checksum(encdec.encoder);
    const std::uint64_t dec_sum = bundle_checksum(encdec.decoder);
#endif

    auto pol_grads = numerics::make_grads_like(ps.policy);
    auto val_grads = numerics::make_grads_like(ps.value);
    UpdateDiag diag = a2c_grads(batch, ps, encdec, cfg, pol_grads, val_grads);
    diag.grad_norm = numerics::opt_step(ps.policy, pol_grads, ps.popt);
    numerics::opt_step(ps.value, val_grads, ps.vopt);

#ifndef NDEBUG
    if (enc_sum != bundle_checksum(encdec.encoder) || dec_sum != bundle_checksum(encdec.decoder))
        throw NumericFault("a2c_update: frozen encoder/decoder changed");
#endif
    return diag;
}

namespace {

// Shared evaluation loop. act_fn sees the policy input and returns the
// chosen action plus the conditioning vector for the next step (the emitted
// e for the learned agent, unused for scripted policies).
struct EvalActFn {
    std::function<int(const std::vector<double>& input, std::vector<double>& next_e,
                      rng::Stream& rng)>
        step;
    std::size_t cond_dim = 0;
    bool conditioned = false;
};

double run_eval_episodes(const envs::TaskSpec& task, const EvalActFn& fn, int episodes,
                         std::uint64_t seed) {
    if (episodes < 1) throw ConfigError("episodes must be positive");
    double total = 0.0;
    for (int ep = 0; ep < episodes; ++ep) {
        rng::Stream act_rng(rng::derive(seed, "act", static_cast<std::uint64_t>(ep)));
        auto cur = envs::env_reset(task, rng::derive(seed, "episode", ep));
        std::vector<double> prev_e(fn.cond_dim, 0.0);
        double prev_r = 0.0;
        double ep_return = 0.0;
        while (!cur.state.done) {
            std::vector<double> input = cur.observation;
            if (fn.conditioned) {
                input.insert(input.end(), prev_e.begin(), prev_e.end());
                input.push_back(prev_r);
            }
            std::vector<double> next_e(fn.cond_dim, 0.0);
            int a = fn.step(input, next_e, act_rng);
            auto res = envs::env_step(cur.state, a, task);
            ep_return += res.reward;
            prev_e = std::move(next_e);
            prev_r = res.reward;
            cur.state = res.state;
            cur.observation = std::move(res.observation);
        }
        total += envs::normalize_return(ep_return, task);
    }
    return total / episodes;
}

}  // namespace

double evaluate(const PolicyState& ps, const repr::EncoderDecoderState& encdec,
                const envs::TaskSpec& task, int episodes, std::uint64_t seed,
                const A2CConfig& cfg) {
    (void)cfg;
    // restrict to actions the decoder knows; before any training nothing is
    // seen and the agent acts uniformly at random over the active set
    std::vector<std::uint8_t> effective = task.actions.active;
    int usable = 0;
    for (std::size_t a = 0; a < effective.size(); ++a) {
        if (effective[a] && !encdec.seen[a]) effective[a] = 0;
        usable += effective[a] ? 1 : 0;
    }
    EvalActFn fn;
    fn.cond_dim = static_cast<std::size_t>(ps.repr_dim);
    fn.conditioned = ps.conditioned;
    if (usable == 0) {
        auto idx = task.actions.active_indices();
        fn.step = [idx](const std::vector<double>&, std::vector<double>&, rng::Stream& rng) {
            return idx[rng.uniform_index(idx.size())];
        };
    } else {
        fn.step = [&ps, &encdec, effective](const std::vector<double>& input,
                                            std::vector<double>& next_e, rng::Stream& rng) {
            ActResult r = act(ps, encdec, input, effective, ActMode::Sample, rng);
            next_e = std::move(r.e);
            return r.action;
        };
    }
    return run_eval_episodes(task, fn, episodes, seed);
}

double rollout_return(const envs::TaskSpec& task,
                      const std::function<int(const std::vector<double>&, rng::Stream&)>& act_fn,
                      int episodes, std::uint64_t seed) {
    EvalActFn fn;
    fn.cond_dim = 0;
    fn.conditioned = false;
    fn.step = [&act_fn](const std::vector<double>& input, std::vector<double>&,
                        rng::Stream& rng) { return act_fn(input, rng); };
    return run_eval_episodes(task, fn, episodes, seed);
}

AgentBundle make_agent(const envs::TaskSpec& first_task, const A2CConfig& a2c,
                       const ReprSettings& repr_cfg, rng::Stream& rng) {
    AgentBundle b;
    b.a2c = a2c;
    b.repr_cfg = repr_cfg;
    std::size_t obs_len = envs::obs_dim(first_task);
    rng::Stream enc_rng = rng.child("encdec_init");
    b.encdec = repr::make_encdec(obs_len, first_task.actions.catalog_size(), repr_cfg.repr_dim,
                                 repr_cfg.encoder_hidden, repr_cfg.head_sigmoid, enc_rng);
    rng::Stream pol_rng = rng.child("agent_init");
    b.policy = make_policy(obs_len, repr_cfg.repr_dim, a2c, pol_rng);
    return b;
}

long run_task(AgentBundle& bundle, const envs::TaskSpec& task, std::uint64_t run_seed,
              long global_step_start, long eval_interval, const TaskHooks& hooks) {
    const std::uint64_t ti = static_cast<std::uint64_t>(task.index);

    // stage 1: reward-free exploration
    repr::ExplorePolicy explore;
    if (bundle.repr_cfg.explore_with_previous_policy && !bundle.encdec.anchors.empty()) {
        std::vector<std::uint8_t> effective = task.actions.active;
        for (std::size_t a = 0; a < effective.size(); ++a)
            if (effective[a] && !bundle.encdec.seen[a]) effective[a] = 0;
        const PolicyState& ps = bundle.policy;
        const repr::EncoderDecoderState& ed = bundle.encdec;
        explore = [&ps, &ed, effective](const std::vector<double>& obs, rng::Stream& rng) {
            // previous policy without conditioning context; exploration only
            std::vector<double> zeros(static_cast<std::size_t>(ps.repr_dim), 0.0);
            auto input = policy_input(ps, obs, zeros, 0.0);
            return act(ps, ed, input, effective, ActMode::Sample, rng).action;
        };
    }
    auto buffer = repr::collect_transitions(task, bundle.repr_cfg.explore_steps,
                                            rng::derive(run_seed, "explore", ti), explore);

    // stage 1: structure adaptation + representation training
    rng::Stream adapt_rng(rng::derive(run_seed, "adapt", ti));
    repr::adapt_structure(bundle.encdec, task.actions, adapt_rng);
    repr::SslConfig ssl = bundle.repr_cfg.ssl;
    ssl.shuffle_seed = rng::derive(run_seed, "ssl", ti);
    std::vector<double> trace;
    if (bundle.encdec.anchors.empty()) {
        trace = repr::ssl_train(buffer, bundle.encdec, task.actions, ssl);
    } else {
        trace = repr::finetune(buffer, bundle.encdec, task.actions, ssl,
                               bundle.repr_cfg.lambda, bundle.repr_cfg.mode);
    }
    if (hooks.on_ssl_trace) hooks.on_ssl_trace(trace);
    bool with_encoder = bundle.repr_cfg.mode == repr::RegMode::Both ||
                        bundle.repr_cfg.mode == repr::RegMode::EncoderOnly;
    repr::append_anchor(bundle.encdec, task.index, buffer, task.actions, with_encoder);

    // stage 2: policy learning against the now-frozen decoder
    rng::Stream env_rng(rng::derive(run_seed, "env", ti));
    rng::Stream act_rng(rng::derive(run_seed, "act", ti));
    const A2CConfig& cfg = bundle.a2c;
    PolicyState& ps = bundle.policy;

    RolloutBatch batch;
    batch.active = task.actions.active;
    batch.rollouts.resize(1);
    Rollout& rollout = batch.rollouts[0];
    rollout.steps.reserve(static_cast<std::size_t>(cfg.rollout));

    auto cur = envs::env_reset(task, env_rng.next_u64());
    std::vector<double> prev_e(static_cast<std::size_t>(ps.repr_dim), 0.0);
    double prev_r = 0.0;
    double ep_return = 0.0;
    UpdateDiag last_diag;

    auto flush = [&](const envs::ResetResult& next_obs_holder, bool last_done,
                     const std::vector<double>& next_e, double next_r) {
        if (rollout.steps.empty()) return;
        if (last_done) {
            rollout.bootstrap = 0.0;
        } else {
            auto next_input =
                policy_input(ps, next_obs_holder.observation, next_e, next_r);
            rollout.bootstrap = numerics::net_forward(ps.value, next_input).output()[0];
        }
        last_diag = a2c_update(batch, ps, bundle.encdec, cfg);
        rollout.steps.clear();
    };

    for (long step = 1; step <= task.train_steps; ++step) {
        auto input = policy_input(ps, cur.observation, prev_e, prev_r);
        ActResult chosen = act(ps, bundle.encdec, input, task.actions.active, ActMode::Sample,
                               act_rng);
        auto res = envs::env_step(cur.state, chosen.action, task);
        rollout.steps.push_back({std::move(input), chosen.action, res.reward, res.done});
        ep_return += res.reward;

        cur.state = res.state;
        cur.observation = std::move(res.observation);
        prev_e = std::move(chosen.e);
        prev_r = res.reward;

        bool rollout_full = static_cast<int>(rollout.steps.size()) >= cfg.rollout;
        if (rollout_full || step == task.train_steps)
            flush(cur, res.done, prev_e, prev_r);

        if (res.done) {
            if (hooks.on_episode)
                hooks.on_episode({global_step_start + step, task.index, ep_return, last_diag});
            ep_return = 0.0;
            cur = envs::env_reset(task, env_rng.next_u64());
            std::fill(prev_e.begin(), prev_e.end(), 0.0);
            prev_r = 0.0;
        }
        if (eval_interval > 0 && step % eval_interval == 0 && step != task.train_steps &&
            hooks.at_eval_point)
            hooks.at_eval_point(step, global_step_start + step);
    }
    return task.train_steps;
}

}  // namespace cldc::agent
