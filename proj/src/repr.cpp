#include "cldc/repr.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace cldc::repr {

RegMode reg_mode_from_tag(const std::string& tag) {
    if (tag == "decoder") return RegMode::DecoderOnly;
    if (tag == "none") return RegMode::None;
    if (tag == "both") return RegMode::Both;
    if (tag == "encoder") return RegMode::EncoderOnly;
    throw ConfigError("unknown regularization mode: " + tag);
}

std::vector<std::uint8_t> EncoderDecoderState::row_mask(
    const std::vector<std::uint8_t>& active) const {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows()), 0);
    for (std::size_t a = 0; a < active.size(); ++a) {
        if (!active[a]) continue;
        if (row_of[a] < 0)
            throw DataError("active action " + std::to_string(a) + " has no decoder row");
        mask[static_cast<std::size_t>(row_of[a])] = 1;
    }
    return mask;
}

bool EncoderDecoderState::all_seen(const std::vector<std::uint8_t>& active) const {
    for (std::size_t a = 0; a < active.size(); ++a)
        if (active[a] && row_of[a] < 0) return false;
    return true;
}

EncoderDecoderState make_encdec(std::size_t obs_len, int catalog_size, int repr_dim,
                                const std::vector<int>& encoder_hidden, bool head_sigmoid,
                                rng::Stream& rng) {
    if (repr_dim < 1) throw ConfigError("repr_dim must be positive");
    EncoderDecoderState st;
    st.repr_dim = repr_dim;
    st.obs_len = obs_len;
    std::vector<std::size_t> dims{2 * obs_len};
    std::vector<numerics::Activation> acts;
    for (int h : encoder_hidden) {
        if (h < 1) throw ConfigError("encoder hidden width must be positive");
        dims.push_back(static_cast<std::size_t>(h));
        acts.push_back(numerics::Activation::Relu);
    }
    dims.push_back(static_cast<std::size_t>(repr_dim));
    acts.push_back(head_sigmoid ? numerics::Activation::Sigmoid : numerics::Activation::Linear);
    st.encoder = numerics::make_mlp(dims, acts);
    numerics::init_uniform(st.encoder, rng);
    st.seen.assign(static_cast<std::size_t>(catalog_size), 0);
    st.row_of.assign(static_cast<std::size_t>(catalog_size), -1);
    return st;
}

std::vector<Transition> collect_transitions(const envs::TaskSpec& task, long count,
                                            std::uint64_t seed, const ExplorePolicy& policy) {
    if (count < 1) throw ConfigError("transition count must be positive");
    std::vector<Transition> buffer;
    buffer.reserve(static_cast<std::size_t>(count));
    rng::Stream episodes(rng::derive(seed, "episodes"));
    rng::Stream actions(rng::derive(seed, "actions"));
    const auto active = task.actions.active_indices();
    envs::ResetResult cur = envs::env_reset(task, episodes.next_u64());
    while (static_cast<long>(buffer.size()) < count) {
        int a = policy ? policy(cur.observation, actions)
                       : active[actions.uniform_index(active.size())];
        if (!task.actions.is_active(a))
            throw IllegalActionError("exploration policy chose an inactive action");
        envs::StepResult nxt = envs::env_step(cur.state, a, task);
        buffer.push_back({cur.observation, nxt.observation, a});
        if (nxt.done) {
            cur = envs::env_reset(task, episodes.next_u64());
        } else {
            cur.state = nxt.state;
            cur.observation = std::move(nxt.observation);
        }
    }
    return buffer;
}

namespace {

std::vector<double> concat_pair(const EncoderDecoderState& state, std::span<const double> s,
                                std::span<const double> s_next) {
    if (s.size() != state.obs_len || s_next.size() != state.obs_len)
        throw ShapeError("encode: observation length mismatch");
    std::vector<double> x;
    x.reserve(2 * state.obs_len);
    x.insert(x.end(), s.begin(), s.end());
    x.insert(x.end(), s_next.begin(), s_next.end());
    return x;
}

}  // namespace

std::vector<double> encode(const EncoderDecoderState& state, std::span<const double> s,
                           std::span<const double> s_next) {
    auto x = concat_pair(state, s, s_next);
    return numerics::net_forward(state.encoder, x).output();
}

std::vector<double> decode(const EncoderDecoderState& state, std::span<const double> e,
                           const std::vector<std::uint8_t>& active) {
    if (state.rows() == 0) throw DataError("decode: decoder has no rows yet");
    auto mask = state.row_mask(active);
    auto logits = numerics::net_forward(state.decoder, e).output();
    auto row_probs = numerics::softmax_masked(logits, mask);
    std::vector<double> probs(active.size(), 0.0);
    for (std::size_t r = 0; r < row_probs.size(); ++r)
        probs[static_cast<std::size_t>(state.catalog_of[r])] = row_probs[r];
    return probs;
}

void adapt_structure(EncoderDecoderState& state, const envs::ActionSpace& space,
                     rng::Stream& rng) {
    if (space.active.size() != state.seen.size())
        throw ShapeError("adapt_structure: catalog size mismatch");
    std::vector<int> fresh;
    for (int a = 0; a < static_cast<int>(space.active.size()); ++a)
        if (space.active[a] && !state.seen[a]) fresh.push_back(a);
    if (fresh.empty()) return;

    const std::size_t d = static_cast<std::size_t>(state.repr_dim);
    const int old_rows = state.rows();
    const int new_rows = old_rows + static_cast<int>(fresh.size());
    if (state.decoder.layers.empty()) {
        numerics::Layer l;
        l.in = d;
        l.out = static_cast<std::size_t>(new_rows);
        l.act = numerics::Activation::Linear;
        l.w.assign(l.in * l.out, 0.0);
        l.b.assign(l.out, 0.0);
        state.decoder.layers.push_back(std::move(l));
    } else {
        numerics::Layer& l = state.decoder.layers.back();
        l.out = static_cast<std::size_t>(new_rows);
        l.w.resize(l.in * l.out, 0.0);  // append-only: old rows stay in place
        l.b.resize(l.out, 0.0);
    }
    numerics::Layer& l = state.decoder.layers.back();
    double bound = std::sqrt(6.0 / static_cast<double>(d + static_cast<std::size_t>(new_rows)));
    for (std::size_t fi = 0; fi < fresh.size(); ++fi) {
        int a = fresh[fi];
        int r = old_rows + static_cast<int>(fi);
        state.seen[a] = 1;
        state.row_of[a] = r;
        state.catalog_of.push_back(a);
        for (std::size_t k = 0; k < d; ++k)
            l.w[static_cast<std::size_t>(r) * d + k] = rng.uniform(-bound, bound);
        l.b[static_cast<std::size_t>(r)] = 0.0;
    }
    state.decoder.validate();
}

namespace {

void validate_buffer(const std::vector<Transition>& buffer, const EncoderDecoderState& state,
                     const envs::ActionSpace& space) {
    if (buffer.empty()) throw DataError("training buffer is empty");
    for (const Transition& t : buffer) {
        if (!space.is_active(t.action))
            throw DataError("buffer contains action " + std::to_string(t.action) +
                            " outside the active set");
        if (state.row_of[static_cast<std::size_t>(t.action)] < 0)
            throw DataError("buffer action has no decoder row; call adapt_structure first");
        if (t.s.size() != state.obs_len || t.s_next.size() != state.obs_len)
            throw ShapeError("buffer observation length mismatch");
    }
}

// EWC-style quadratic pull toward each anchor. Adds gradients into `grads`
// and returns the penalty value. Anchored tensors are compared prefix-wise:
// append-only growth keeps old entries at the same flat offsets.
double anchor_penalty(const numerics::ParamBundle& current, numerics::GradBundle* grads,
                      const numerics::ParamBundle& snap, const numerics::GradBundle& fisher,
                      double lambda) {
    double penalty = 0.0;
    for (std::size_t li = 0; li < snap.layers.size(); ++li) {
        const auto& cur = current.layers[li];
        const auto& old = snap.layers[li];
        const auto& f = fisher.layers[li];
        auto accum = [&](const std::vector<double>& cv, const std::vector<double>& ov,
                         const std::vector<double>& fv, std::vector<double>* gv) {
            for (std::size_t i = 0; i < ov.size(); ++i) {
                double diff = cv[i] - ov[i];
                penalty += 0.5 * lambda * fv[i] * diff * diff;
                if (gv) (*gv)[i] += lambda * fv[i] * diff;
            }
        };
        accum(cur.w, old.w, f.w, grads ? &grads->layers[li].w : nullptr);
        accum(cur.b, old.b, f.b, grads ? &grads->layers[li].b : nullptr);
    }
    return penalty;
}

// Mean cross-entropy plus anchor penalties over buffer[order[start..stop)],
// gradients accumulated. One minibatch of the training loops, also the whole
// buffer when called through loss_grads.
double span_loss_grads(const EncoderDecoderState& state, const std::vector<Transition>& buffer,
                       const std::vector<std::size_t>& order, std::size_t start,
                       std::size_t stop, const std::vector<std::uint8_t>& row_mask,
                       double lambda, bool reg_decoder, bool reg_encoder,
                       numerics::GradBundle& enc_grads, numerics::GradBundle& dec_grads) {
    const double inv = 1.0 / static_cast<double>(stop - start);
    numerics::ForwardCache enc_cache, dec_cache;
    std::vector<double> e_grad;
    double loss = 0.0;
    for (std::size_t k = start; k < stop; ++k) {
        const Transition& t = buffer[order[k]];
        auto x = concat_pair(state, t.s, t.s_next);
        numerics::net_forward_into(state.encoder, x, enc_cache);
        numerics::net_forward_into(state.decoder, enc_cache.output(), dec_cache);
        auto probs = numerics::softmax_masked(dec_cache.output(), row_mask);
        std::size_t target =
            static_cast<std::size_t>(state.row_of[static_cast<std::size_t>(t.action)]);
        loss += inv * numerics::cross_entropy(probs, target);
        std::vector<double> dz(probs.size());
        for (std::size_t r = 0; r < probs.size(); ++r)
            dz[r] = inv * (probs[r] - (r == target ? 1.0 : 0.0));
        numerics::net_backward(state.decoder, dec_cache, dz, dec_grads, &e_grad);
        numerics::net_backward(state.encoder, enc_cache, e_grad, enc_grads, nullptr);
    }
    if (lambda > 0.0) {
        for (const Anchor& anc : state.anchors) {
            if (reg_decoder)
                loss += anchor_penalty(state.decoder, &dec_grads, anc.decoder,
                                       anc.decoder_fisher, lambda);
            if (reg_encoder && anc.has_encoder)
                loss += anchor_penalty(state.encoder, &enc_grads, anc.encoder,
                                       anc.encoder_fisher, lambda);
        }
    }
    return loss;
}

std::vector<double> train_impl(const std::vector<Transition>& buffer, EncoderDecoderState& state,
                               const envs::ActionSpace& space, const SslConfig& cfg,
                               double lambda, RegMode mode) {
    validate_buffer(buffer, state, space);
    if (cfg.epochs < 0 || cfg.batch < 1) throw ConfigError("bad ssl epochs/batch");
    std::vector<double> trace;
    if (cfg.epochs == 0) return trace;

    const auto row_mask = state.row_mask(space.active);
    const bool reg_decoder = mode == RegMode::DecoderOnly || mode == RegMode::Both;
    const bool reg_encoder = mode == RegMode::EncoderOnly || mode == RegMode::Both;

    auto enc_opt = numerics::make_opt_state(state.encoder, cfg.opt);
    auto dec_opt = numerics::make_opt_state(state.decoder, cfg.opt);
    auto enc_grads = numerics::make_grads_like(state.encoder);
    auto dec_grads = numerics::make_grads_like(state.decoder);

    rng::Stream shuffle_rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::shuffle(order, shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            std::size_t stop = std::min(order.size(), start + cfg.batch);
            enc_grads.zero();
            dec_grads.zero();
            double batch_loss =
                span_loss_grads(state, buffer, order, start, stop, row_mask, lambda,
                                reg_decoder, reg_encoder, enc_grads, dec_grads);
            numerics::opt_step(state.encoder, enc_grads, enc_opt);
            numerics::opt_step(state.decoder, dec_grads, dec_opt);
            epoch_loss += batch_loss;
            ++batches;
        }
        trace.push_back(epoch_loss / static_cast<double>(batches));
    }
    return trace;
}

}  // namespace

double loss_grads(const EncoderDecoderState& state, const std::vector<Transition>& buffer,
                  const envs::ActionSpace& space, double lambda, RegMode mode,
                  numerics::GradBundle& enc_grads, numerics::GradBundle& dec_grads) {
    validate_buffer(buffer, state, space);
    const auto row_mask = state.row_mask(space.active);
    std::vector<std::size_t> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);
    const bool reg_decoder = mode == RegMode::DecoderOnly || mode == RegMode::Both;
    const bool reg_encoder = mode == RegMode::EncoderOnly || mode == RegMode::Both;
    return span_loss_grads(state, buffer, order, 0, buffer.size(), row_mask, lambda, reg_decoder,
                           reg_encoder, enc_grads, dec_grads);
}

std::vector<double> ssl_train(const std::vector<Transition>& buffer, EncoderDecoderState& state,
                              const envs::ActionSpace& space, const SslConfig& cfg) {
    return train_impl(buffer, state, space, cfg, 0.0, RegMode::None);
}

std::vector<double> finetune(const std::vector<Transition>& buffer, EncoderDecoderState& state,
                             const envs::ActionSpace& space, const SslConfig& cfg, double lambda,
                             RegMode mode) {
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    return train_impl(buffer, state, space, cfg, lambda, mode);
}

FisherResult compute_fisher(const std::vector<Transition>& buffer,
                            const EncoderDecoderState& state, const envs::ActionSpace& space,
                            bool with_encoder) {
    validate_buffer(buffer, state, space);
    const auto row_mask = state.row_mask(space.active);
    FisherResult out;
    out.decoder = numerics::make_grads_like(state.decoder);
    out.has_encoder = with_encoder;
    if (with_encoder) out.encoder = numerics::make_grads_like(state.encoder);

    auto dec_sample = numerics::make_grads_like(state.decoder);
    auto enc_sample = numerics::make_grads_like(state.encoder);
    numerics::ForwardCache enc_cache, dec_cache;
    std::vector<double> e_grad;
    auto square_into = [](const numerics::GradBundle& src, numerics::GradBundle& dst) {
        for (std::size_t li = 0; li < src.layers.size(); ++li) {
            for (std::size_t i = 0; i < src.layers[li].w.size(); ++i)
                dst.layers[li].w[i] += src.layers[li].w[i] * src.layers[li].w[i];
            for (std::size_t i = 0; i < src.layers[li].b.size(); ++i)
                dst.layers[li].b[i] += src.layers[li].b[i] * src.layers[li].b[i];
        }
    };
    for (const Transition& t : buffer) {
        auto x = concat_pair(state, t.s, t.s_next);
        numerics::net_forward_into(state.encoder, x, enc_cache);
        numerics::net_forward_into(state.decoder, enc_cache.output(), dec_cache);
        auto probs = numerics::softmax_masked(dec_cache.output(), row_mask);
        std::size_t target =
            static_cast<std::size_t>(state.row_of[static_cast<std::size_t>(t.action)]);
        std::vector<double> dz(probs.size());
        for (std::size_t r = 0; r < probs.size(); ++r)
            dz[r] = probs[r] - (r == target ? 1.0 : 0.0);  // -grad of log-lik; squared anyway
        dec_sample.zero();
        numerics::net_backward(state.decoder, dec_cache, dz, dec_sample,
                               with_encoder ? &e_grad : nullptr);
        square_into(dec_sample, out.decoder);
        if (with_encoder) {
            enc_sample.zero();
            numerics::net_backward(state.encoder, enc_cache, e_grad, enc_sample, nullptr);
            square_into(enc_sample, out.encoder);
        }
    }
    double inv = 1.0 / static_cast<double>(buffer.size());
    numerics::grad_scale(out.decoder, inv);
    if (with_encoder) numerics::grad_scale(out.encoder, inv);
    return out;
}

namespace {

// Rescale so the largest entry is 1. A well-converged decoder has vanishing
// raw squared-gradient magnitudes, which would make the penalty inert at any
// practical lambda; only the relative importance pattern matters.
void normalize_fisher(numerics::GradBundle& f) {
    double mx = 0.0;
    for (const auto& l : f.layers) {
        for (double v : l.w) mx = std::max(mx, v);
        for (double v : l.b) mx = std::max(mx, v);
    }
    if (mx <= 0.0) return;
    for (auto& l : f.layers) {
        for (auto& v : l.w) v /= mx;
        for (auto& v : l.b) v /= mx;
    }
}

}  // namespace

void append_anchor(EncoderDecoderState& state, int task_index,
                   const std::vector<Transition>& buffer, const envs::ActionSpace& space,
                   bool with_encoder) {
    FisherResult fisher = compute_fisher(buffer, state, space, with_encoder);
    normalize_fisher(fisher.decoder);
    Anchor anc;
    anc.task_index = task_index;
    anc.rows = state.rows();
    anc.decoder = state.decoder;
    anc.decoder_fisher = std::move(fisher.decoder);
    anc.has_encoder = with_encoder;
    if (with_encoder) {
        normalize_fisher(fisher.encoder);
        anc.encoder = state.encoder;
        anc.encoder_fisher = std::move(fisher.encoder);
    }
    state.anchors.push_back(std::move(anc));
}

void dump_embeddings(const EncoderDecoderState& state, const std::vector<Transition>& buffer,
                     const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open " + path + " for writing");
    std::fprintf(f, "action");
    for (int k = 0; k < state.repr_dim; ++k) std::fprintf(f, ",e_%d", k);
    std::fprintf(f, "\n");
    for (const Transition& t : buffer) {
        auto e = encode(state, t.s, t.s_next);
        std::fprintf(f, "%d", t.action);
        for (double v : e) std::fprintf(f, ",%.17g", v);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

}  // namespace cldc::repr
