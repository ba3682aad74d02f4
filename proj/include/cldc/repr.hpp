#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cldc/envs.hpp"
#include "cldc/numerics.hpp"
#include "cldc/rng.hpp"

namespace cldc::repr {

// Self-supervised action representations. An encoder maps a transition
// (s, s') to a point e in representation space; a decoder maps e to a
// distribution over the actions seen so far. The decoder grows output rows
// as new actions appear and is regularized toward per-task anchors when it
// is fine-tuned, so old rows keep their meaning while new ones are learned.

struct Transition {
    std::vector<double> s;
    std::vector<double> s_next;
    int action = -1;  // catalog index, active when collected
};

/// Which parts of the encoder/decoder pair the fine-tune penalty holds to
/// their anchors. DecoderOnly is the standard setting; the others exist for
/// ablation runs.
enum class RegMode { DecoderOnly, None, Both, EncoderOnly };

RegMode reg_mode_from_tag(const std::string& tag);

struct SslConfig {
    int epochs = 40;
    int batch = 256;
    numerics::OptConfig opt{1e-3, 0.99, 1e-8, 40.0};
    std::uint64_t shuffle_seed = 0;
};

/// Frozen snapshot taken after training on one task: parameters plus the
/// Fisher diagonal estimated on that task's exploration buffer. Encoder
/// parts are only populated for RegModes that constrain the encoder.
struct Anchor {
    int task_index = 0;
    int rows = 0;  // decoder rows that existed at snapshot time
    numerics::ParamBundle decoder;
    numerics::GradBundle decoder_fisher;
    bool has_encoder = false;
    numerics::ParamBundle encoder;
    numerics::GradBundle encoder_fisher;
};

struct EncoderDecoderState {
    numerics::ParamBundle encoder;  // [2*obs ... hidden ... repr_dim]
    numerics::ParamBundle decoder;  // single linear layer [repr_dim -> rows], empty until
                                    // the first adapt_structure call
    int repr_dim = 0;
    std::size_t obs_len = 0;
    std::vector<std::uint8_t> seen;  // per catalog index
    std::vector<int> row_of;         // catalog index -> decoder row, -1 if unseen
    std::vector<int> catalog_of;     // decoder row -> catalog index
    std::vector<Anchor> anchors;

    int rows() const {
        return decoder.layers.empty() ? 0 : static_cast<int>(decoder.layers.back().out);
    }
    /// Row-space mask for a catalog-space active mask; throws DataError if an
    /// active action has no row yet.
    std::vector<std::uint8_t> row_mask(const std::vector<std::uint8_t>& active) const;
    bool all_seen(const std::vector<std::uint8_t>& active) const;
};

EncoderDecoderState make_encdec(std::size_t obs_len, int catalog_size, int repr_dim,
                                const std::vector<int>& encoder_hidden, bool head_sigmoid,
                                rng::Stream& rng);

/// Optional exploration policy; empty means uniform over the active set.
using ExplorePolicy = std::function<int(const std::vector<double>& obs, rng::Stream& rng)>;

/// Reward-free rollouts under the exploration policy; episodes restart on
/// termination until `count` transitions are stored.
std::vector<Transition> collect_transitions(const envs::TaskSpec& task, long count,
                                            std::uint64_t seed,
                                            const ExplorePolicy& policy = {});

std::vector<double> encode(const EncoderDecoderState& state, std::span<const double> s,
                           std::span<const double> s_next);

/// Distribution over catalog indices given a representation point. Inactive
/// actions get probability exactly 0. Every active action must have a row.
std::vector<double> decode(const EncoderDecoderState& state, std::span<const double> e,
                           const std::vector<std::uint8_t>& active);

/// Grow the decoder with fresh rows for newly seen active actions. Existing
/// rows are not touched; contraction changes nothing (masking happens at
/// decode time). No-op when every active action already has a row.
void adapt_structure(EncoderDecoderState& state, const envs::ActionSpace& space,
                     rng::Stream& rng);

/// First-task training: cross-entropy of decode(encode(s,s')) against the
/// taken action, minibatch RMSProp on encoder and decoder. Returns per-epoch
/// mean loss.
std::vector<double> ssl_train(const std::vector<Transition>& buffer, EncoderDecoderState& state,
                              const envs::ActionSpace& space, const SslConfig& cfg);

/// Later-task training: same objective plus, for each stored anchor, the
/// penalty (lambda/2) * sum_k F_k (p_k - p_k^anchor)^2 restricted to the
/// parameters chosen by `mode`. lambda = 0 with RegMode::None reproduces
/// ssl_train exactly on the same seed.
std::vector<double> finetune(const std::vector<Transition>& buffer, EncoderDecoderState& state,
                             const envs::ActionSpace& space, const SslConfig& cfg, double lambda,
                             RegMode mode);

/// Mean prediction cross-entropy over the whole buffer plus, when lambda is
/// positive, the anchor penalties selected by `mode`. Accumulates gradients
/// into enc_grads/dec_grads and returns the loss. The training loops run on
/// the same core; exposed so the gradients stay independently checkable.
double loss_grads(const EncoderDecoderState& state, const std::vector<Transition>& buffer,
                  const envs::ActionSpace& space, double lambda, RegMode mode,
                  numerics::GradBundle& enc_grads, numerics::GradBundle& dec_grads);

struct FisherResult {
    numerics::GradBundle decoder;
    bool has_encoder = false;
    numerics::GradBundle encoder;
};

/// Diagonal empirical Fisher of the decode log-likelihood, averaged over the
/// buffer. Rows of actions absent from the buffer's active set get zeros.
FisherResult compute_fisher(const std::vector<Transition>& buffer,
                            const EncoderDecoderState& state, const envs::ActionSpace& space,
                            bool with_encoder);

/// Snapshot params + Fisher as a new anchor for future fine-tuning.
void append_anchor(EncoderDecoderState& state, int task_index,
                   const std::vector<Transition>& buffer, const envs::ActionSpace& space,
                   bool with_encoder);

/// CSV with header action,e_0,...,e_{d-1}; one row per probe transition,
/// doubles printed round-trip exact.
void dump_embeddings(const EncoderDecoderState& state, const std::vector<Transition>& buffer,
                     const std::string& path);

}  // namespace cldc::repr
