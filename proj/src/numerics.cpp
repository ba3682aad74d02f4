#include "cldc/numerics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "cldc/kernels.hpp"

namespace cldc::numerics {

namespace {
constexpr double kProbFloor = 1e-12;
}

std::size_t ParamBundle::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
}

void ParamBundle::validate() const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.w.size() != l.in * l.out || l.b.size() != l.out)
            throw ShapeError("layer " + std::to_string(i) + ": tensor sizes disagree with dims");
        if (i > 0 && layers[i - 1].out != l.in)
            throw ShapeError("layer " + std::to_string(i) + ": input dim != previous output dim");
        if (l.in == 0 || l.out == 0)
            throw ShapeError("layer " + std::to_string(i) + ": zero dimension");
    }
}

ParamBundle make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts) {
    if (dims.size() < 2) throw ShapeError("make_mlp: need at least input and output dims");
    if (acts.size() != dims.size() - 1)
        throw ShapeError("make_mlp: need one activation per layer");
    ParamBundle p;
    p.layers.resize(dims.size() - 1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer& l = p.layers[i];
        l.in = dims[i];
        l.out = dims[i + 1];
        l.act = acts[i];
        l.w.assign(l.in * l.out, 0.0);
        l.b.assign(l.out, 0.0);
    }
    p.validate();
    return p;
}

void init_uniform(ParamBundle& params, rng::Stream& rng) {
    for (Layer& l : params.layers) {
        double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        for (double& w : l.w) w = rng.uniform(-bound, bound);
        for (double& b : l.b) b = 0.0;
    }
}

void GradBundle::zero() {
    for (auto& l : layers) {
        std::fill(l.w.begin(), l.w.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
}

bool GradBundle::finite() const {
    for (const auto& l : layers) {
        for (double v : l.w)
            if (!std::isfinite(v)) return false;
        for (double v : l.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

GradBundle make_grads_like(const ParamBundle& params) {
    GradBundle g;
    g.layers.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        g.layers[i].w.assign(params.layers[i].w.size(), 0.0);
        g.layers[i].b.assign(params.layers[i].b.size(), 0.0);
    }
    return g;
}

double grad_global_norm(const GradBundle& grads) {
    const auto& k = kernels::active();
    double ss = 0.0;
    for (const auto& l : grads.layers) {
        ss += k.sumsq(l.w.data(), l.w.size());
        ss += k.sumsq(l.b.data(), l.b.size());
    }
    return std::sqrt(ss);
}

void grad_scale(GradBundle& grads, double a) {
    const auto& k = kernels::active();
    for (auto& l : grads.layers) {
        k.scale(a, l.w.data(), l.w.size());
        k.scale(a, l.b.data(), l.b.size());
    }
}

void grad_axpy(GradBundle& dst, const GradBundle& src, double a) {
    if (dst.layers.size() != src.layers.size()) throw ShapeError("grad_axpy: layer count");
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < dst.layers.size(); ++i) {
        if (dst.layers[i].w.size() != src.layers[i].w.size() ||
            dst.layers[i].b.size() != src.layers[i].b.size())
            throw ShapeError("grad_axpy: tensor sizes");
        k.axpy(a, src.layers[i].w.data(), dst.layers[i].w.data(), src.layers[i].w.size());
        k.axpy(a, src.layers[i].b.data(), dst.layers[i].b.data(), src.layers[i].b.size());
    }
}

void net_forward_into(const ParamBundle& params, std::span<const double> input,
                      ForwardCache& cache) {
    if (params.layers.empty()) throw ShapeError("net_forward: empty bundle");
    if (input.size() != params.input_dim())
        throw ShapeError("net_forward: input size " + std::to_string(input.size()) +
                         " != expected " + std::to_string(params.input_dim()));
    const auto& k = kernels::active();
    cache.input.assign(input.begin(), input.end());
    cache.pre.resize(params.layers.size());
    cache.post.resize(params.layers.size());
    const double* x = cache.input.data();
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const Layer& l = params.layers[li];
        auto& pre = cache.pre[li];
        auto& post = cache.post[li];
        pre.resize(l.out);
        post.resize(l.out);
        for (std::size_t o = 0; o < l.out; ++o)
            pre[o] = k.dot(l.w.data() + o * l.in, x, l.in) + l.b[o];
        switch (l.act) {
            case Activation::Linear:
                post = pre;
                break;
            case Activation::Relu:
                k.relu(pre.data(), post.data(), l.out);
                break;
            case Activation::Sigmoid:
                for (std::size_t o = 0; o < l.out; ++o)
                    post[o] = 1.0 / (1.0 + std::exp(-pre[o]));
                break;
        }
        x = post.data();
    }
}

ForwardCache net_forward(const ParamBundle& params, std::span<const double> input) {
    ForwardCache cache;
    net_forward_into(params, input, cache);
    return cache;
}

void net_backward(const ParamBundle& params, const ForwardCache& cache,
                  std::span<const double> upstream, GradBundle& grads,
                  std::vector<double>* input_grad) {
    const std::size_t n_layers = params.layers.size();
    if (cache.pre.size() != n_layers || cache.post.size() != n_layers)
        throw ShapeError("net_backward: cache does not match bundle");
    if (upstream.size() != params.output_dim())
        throw ShapeError("net_backward: upstream size != output dim");
    if (grads.layers.size() != n_layers) throw ShapeError("net_backward: grads shape");

    const auto& k = kernels::active();
    std::vector<double> da(upstream.begin(), upstream.end());
    std::vector<double> dz, da_prev;
    for (std::size_t li = n_layers; li-- > 0;) {
        const Layer& l = params.layers[li];
        dz.resize(l.out);
        switch (l.act) {
            case Activation::Linear:
                dz = da;
                break;
            case Activation::Relu:
                k.relu_backward(cache.pre[li].data(), da.data(), dz.data(), l.out);
                break;
            case Activation::Sigmoid:
                for (std::size_t o = 0; o < l.out; ++o) {
                    double s = cache.post[li][o];
                    dz[o] = da[o] * s * (1.0 - s);
                }
                break;
        }
        const double* x = li == 0 ? cache.input.data() : cache.post[li - 1].data();
        auto& lg = grads.layers[li];
        for (std::size_t o = 0; o < l.out; ++o) {
            if (dz[o] != 0.0) k.axpy(dz[o], x, lg.w.data() + o * l.in, l.in);
            lg.b[o] += dz[o];
        }
        if (li > 0 || input_grad != nullptr) {
            da_prev.assign(l.in, 0.0);
            for (std::size_t o = 0; o < l.out; ++o)
                if (dz[o] != 0.0) k.axpy(dz[o], l.w.data() + o * l.in, da_prev.data(), l.in);
            if (li == 0) {
                *input_grad = da_prev;
                return;
            }
            da.swap(da_prev);
        }
    }
}

std::vector<double> softmax_masked(std::span<const double> logits,
                                   std::span<const std::uint8_t> mask) {
    if (logits.size() != mask.size()) throw ShapeError("softmax_masked: logits/mask length");
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i] && logits[i] > m) m = logits[i];
    if (m == -std::numeric_limits<double>::infinity())
        throw ShapeError("softmax_masked: mask has no active entry");
    std::vector<double> p(logits.size(), 0.0);
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!mask[i]) continue;
        p[i] = std::exp(logits[i] - m);
        denom += p[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (mask[i]) p[i] /= denom;
    return p;
}

std::function<void(const std::string&)>& data_warning_hook() {
    static std::function<void(const std::string&)> hook = [](const std::string& msg) {
        std::fprintf(stderr, "[cldc] data warning: %s\n", msg.c_str());
    };
    return hook;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
    if (target >= probs.size()) throw ShapeError("cross_entropy: target out of range");
    double p = probs[target];
    if (p <= 0.0) {
        data_warning_hook()("cross_entropy target has zero probability (masked action in data)");
        p = kProbFloor;
    } else if (p < kProbFloor) {
        p = kProbFloor;
    }
    return -std::log(p);
}

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

std::vector<double> policy_loss_upstream(std::span<const double> probs,
                                         std::span<const std::uint8_t> mask, std::size_t action,
                                         double advantage, double entropy_coef, double scale) {
    if (probs.size() != mask.size()) throw ShapeError("policy_loss_upstream: probs/mask length");
    if (action >= probs.size() || !mask[action])
        throw ShapeError("policy_loss_upstream: action not active");
    double h = entropy(probs);
    std::vector<double> dz(probs.size(), 0.0);
    for (std::size_t k = 0; k < probs.size(); ++k) {
        if (!mask[k]) continue;
        double pk = probs[k];
        double g = advantage * (pk - (k == action ? 1.0 : 0.0));
        if (pk > 0.0) g += entropy_coef * pk * (std::log(pk) + h);
        dz[k] = scale * g;
    }
    return dz;
}

OptState make_opt_state(const ParamBundle& params, const OptConfig& cfg) {
    OptState s;
    s.cfg = cfg;
    s.acc = make_grads_like(params);
    return s;
}

double opt_step(ParamBundle& params, const GradBundle& grads, OptState& state) {
    if (grads.layers.size() != params.layers.size()) throw ShapeError("opt_step: grads shape");
    const auto& k = kernels::active();
    double norm = grad_global_norm(grads);
    if (!std::isfinite(norm)) throw NumericFault("opt_step: non-finite gradient, update rejected");
    double scale = 1.0;
    if (state.cfg.clip > 0.0 && norm > state.cfg.clip) scale = state.cfg.clip / norm;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        Layer& l = params.layers[li];
        const auto& lg = grads.layers[li];
        auto& la = state.acc.layers[li];
        if (lg.w.size() != l.w.size() || lg.b.size() != l.b.size())
            throw ShapeError("opt_step: grads tensor sizes");
        auto update = [&](double* p, const double* g, double* acc, std::size_t n) {
            if (scale != 1.0) {
                state.scratch.assign(g, g + n);
                k.scale(scale, state.scratch.data(), n);
                g = state.scratch.data();
            }
            k.rmsprop(p, g, acc, state.cfg.lr, state.cfg.decay, state.cfg.eps, n);
        };
        update(l.w.data(), lg.w.data(), la.w.data(), l.w.size());
        update(l.b.data(), lg.b.data(), la.b.data(), l.b.size());
    }
    ++state.step;
#ifndef NDEBUG
    for (const auto& l : params.layers) {
        for (double v : l.w)
            if (!std::isfinite(v)) throw NumericFault("opt_step: parameter became non-finite");
        for (double v : l.b)
            if (!std::isfinite(v)) throw NumericFault("opt_step: parameter became non-finite");
    }
#endif
    return norm;
}

double fd_check(const std::function<double(const ParamBundle&)>& loss, ParamBundle& params,
                const GradBundle& analytic, double h) {
    if (analytic.layers.size() != params.layers.size()) throw ShapeError("fd_check: grads shape");
    double worst = 0.0;
    auto probe = [&](double& p, double g) {
        double saved = p;
        p = saved + h;
        double up = loss(params);
        p = saved - h;
        double down = loss(params);
        p = saved;
        double fd = (up - down) / (2.0 * h);
        double err = std::fabs(g - fd) / std::max(1.0, std::fabs(fd));
        if (err > worst) worst = err;
    };
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        Layer& l = params.layers[li];
        const auto& lg = analytic.layers[li];
        for (std::size_t i = 0; i < l.w.size(); ++i) probe(l.w[i], lg.w[i]);
        for (std::size_t i = 0; i < l.b.size(); ++i) probe(l.b[i], lg.b[i]);
    }
    return worst;
}

}  // namespace cldc::numerics
