#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "volnp/tensor.hpp"
#include "volnp/types.hpp"

namespace volnp::model {

// Architecture constants. Defaults: hidden dimension 128, three self-attention
// and three cross-attention blocks with four heads each, three-hidden-layer
// encoder/decoder MLPs of width 128 with GELU activations.
struct ModelConfig {
    int d_r = 128;
    int n_sa_blocks = 3;
    int n_ca_blocks = 3;
    int n_heads = 4;
    int mlp_hidden_layers = 3;
    int mlp_width = 128;
    int ffn_mult = 4;  // feed-forward sublayer width, ffn_mult * d_r
    // coordinates are divided by these before entering the network
    double k_scale = 0.5;
    double tau_scale = 2.0;
    // output log-variance clamp
    double log_var_lo = -12.0;
    double log_var_hi = 4.0;

    int d_k() const { return d_r / n_heads; }
    void validate() const;  // throws ConfigError
};

// One named parameter matrix inside the flat store.
struct ParamView {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// All learnable weights in one contiguous array. The view table is a pure
// function of the config, so two param sets with equal configs are aligned
// element-for-element (which is what the optimizer and checkpoints rely on).
struct ModelParams {
    ModelConfig config;
    std::vector<ParamView> views;
    std::vector<double> data;

    const ParamView& find(std::string_view name) const;
};

std::size_t param_count(const ModelConfig& cfg);
ModelParams make_params(const ModelConfig& cfg);  // zero weights, layout only

// Fan-in-scaled uniform init; layer-norm gains 1, biases 0; the output head's
// final layer is near-zero so the initial prediction is a flat mu with
// log-variance about 0. Bitwise deterministic in the seed.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct PredictiveDistribution {
    double mu = 0.0;
    double log_var = 0.0;
};

// Fixed sinusoidal encoding of a coordinate: the first d_r/2 entries encode
// scaled k, the last d_r/2 scaled tau, each half as interleaved sin/cos over
// geometric frequencies 10000^(-2i/(d_r/2)).
std::vector<double> positional_encoding(const Coordinate& coord, const ModelConfig& cfg);

// Parameters materialized as leaves of one tape, in view order.
struct BoundParams {
    const ModelParams* source = nullptr;
    std::vector<ad::Tensor> leaves;

    ad::Tensor at(std::string_view name) const;
};

BoundParams bind_params(ad::Tape& tape, const ModelParams& params);

// Encoder: initial representation phi_e([x; y]) + gamma(x), then the
// self-attention stack. Returns the N x d_r context representation.
ad::Tensor encode(ad::Tape& tape, const BoundParams& bp, const std::vector<Quote>& context);

// Decoder: targets start as gamma(x), refined by cross-attention against the
// encoded context, then projected to (mu, log sigma^2) rows with the
// log-variance clamped. Returns M x 2.
ad::Tensor decode(ad::Tape& tape, const BoundParams& bp, ad::Tensor h_context,
                  const std::vector<Coordinate>& targets);

// L = 1/2 sum_j [exp(-log var_j) (y_j - mu_j)^2 + log var_j]
ad::Tensor nll_loss(ad::Tape& tape, ad::Tensor pred, const std::vector<Quote>& targets);
double nll(const std::vector<PredictiveDistribution>& preds, const std::vector<Quote>& targets);

// convenience forward pass without gradient bookkeeping exposed
std::vector<PredictiveDistribution> predict(const ModelParams& params,
                                            const std::vector<Quote>& context,
                                            const std::vector<Coordinate>& targets);

// Runs forward + backward for one task and accumulates parameter gradients
// into grad_out (size = params.data.size()). Returns the summed task NLL.
double loss_and_grad(const ModelParams& params, const Task& task, std::span<double> grad_out);

// Versioned JSON checkpoint; save -> load is bitwise exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace volnp::model
