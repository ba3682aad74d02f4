#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cldc/errors.hpp"
#include "cldc/rng.hpp"

namespace cldc::numerics {

enum class Activation { Linear, Relu, Sigmoid };

/// One dense layer, row-major weights (out x in).
struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation act = Activation::Linear;
    std::vector<double> w;  // out * in
    std::vector<double> b;  // out
};

/// A feed-forward network as a flat list of layers. All math in double.
struct ParamBundle {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t param_count() const;
    void validate() const;  // throws ShapeError on inconsistent dims
};

/// Build an MLP; dims = [input, hidden..., output], acts has one entry per
/// layer (dims.size() - 1). Weights start at zero; call init_uniform.
ParamBundle make_mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& acts);

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
void init_uniform(ParamBundle& params, rng::Stream& rng);

/// Gradients (or any per-parameter tensor: Fisher diagonals, optimizer
/// accumulators) with the same shape as a ParamBundle.
struct GradBundle {
    struct LayerGrad {
        std::vector<double> w, b;
    };
    std::vector<LayerGrad> layers;

    void zero();
    bool finite() const;
};

GradBundle make_grads_like(const ParamBundle& params);

double grad_global_norm(const GradBundle& grads);
void grad_scale(GradBundle& grads, double a);
void grad_axpy(GradBundle& dst, const GradBundle& src, double a);  // dst += a * src

/// Intermediate activations from one forward pass, kept for backprop.
struct ForwardCache {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // preactivations per layer
    std::vector<std::vector<double>> post;  // activations per layer

    const std::vector<double>& output() const { return post.back(); }
};

/// Forward pass. Deterministic: same params and input give bit-identical
/// outputs within one process.
ForwardCache net_forward(const ParamBundle& params, std::span<const double> input);
void net_forward_into(const ParamBundle& params, std::span<const double> input,
                      ForwardCache& cache);

/// Backprop from an upstream gradient (w.r.t. the network output).
/// Accumulates into `grads`; writes d loss / d input into `input_grad` when
/// non-null (overwritten, not accumulated).
void net_backward(const ParamBundle& params, const ForwardCache& cache,
                  std::span<const double> upstream, GradBundle& grads,
                  std::vector<double>* input_grad = nullptr);

/// Numerically stable softmax restricted to mask!=0 entries; masked entries
/// come back exactly 0. Throws ShapeError if the mask is empty.
std::vector<double> softmax_masked(std::span<const double> logits,
                                   std::span<const std::uint8_t> mask);

/// -log p[target], floored at probability 1e-12. A target with exactly zero
/// probability (masked) still returns the floored loss but reports through
/// the data warning hook first.
double cross_entropy(std::span<const double> probs, std::size_t target);

/// Entropy -sum p log p over positive entries.
double entropy(std::span<const double> probs);

/// Hook for data-inconsistency warnings (default: stderr). Tests may install
/// a counter. Never called on the hot path of a healthy run.
std::function<void(const std::string&)>& data_warning_hook();

/// Gradient of  -advantage * log p[action] - entropy_coef * H(p)  with
/// respect to the logits feeding softmax_masked, scaled by `scale`.
std::vector<double> policy_loss_upstream(std::span<const double> probs,
                                         std::span<const std::uint8_t> mask, std::size_t action,
                                         double advantage, double entropy_coef, double scale);

struct OptConfig {
    double lr = 4e-4;
    double decay = 0.99;
    double eps = 1e-8;
    double clip = 40.0;  // global L2 clip; 0 disables
};

/// RMSProp state: squared-gradient accumulators plus the step counter.
struct OptState {
    OptConfig cfg;
    GradBundle acc;
    long step = 0;
    std::vector<double> scratch;  // reused when clipping rescales a tensor
};

OptState make_opt_state(const ParamBundle& params, const OptConfig& cfg);

/// One RMSProp update: clip the global grad norm, then per entry
///   acc = decay*acc + (1-decay)*g^2 ;  p -= lr * g / sqrt(acc + eps).
/// Rejects non-finite gradients with NumericFault (params untouched).
/// Returns the pre-clip gradient norm.
double opt_step(ParamBundle& params, const GradBundle& grads, OptState& state);

/// Central-difference gradient check: perturbs each parameter by +-h,
/// returns max over parameters of |analytic - fd| / max(1, |fd|).
double fd_check(const std::function<double(const ParamBundle&)>& loss, ParamBundle& params,
                const GradBundle& analytic, double h);

}  // namespace cldc::numerics
