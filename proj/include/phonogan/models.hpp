#pragma once

#include "phonogan/ops.hpp"
#include "phonogan/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace phonogan::gan {

using nn::Rng;
using nn::Tensor;

enum class Condition { restricted, unrestricted, unspecified };
std::string condition_name(Condition c);
Condition condition_from(const std::string& s);

/// Architecture hyperparameters. The waveform length is base_frames *
/// stride^n_upsample_layers; the FC bottleneck width is bottleneck_channels.
struct GeneratorSpec {
  int bottleneck_channels = 8;  // C, the manipulated quantity (8 vs 1024)
  int base_frames = 16;         // F
  int n_upsample_layers = 5;    // L
  int stride = 4;
  int kernel_width = 25;
  int categorical_dim = 6;  // one-hot code size k
  int continuous_dim = 94;  // uniform latent size d (k + d = 100)
  int base_width = 512;     // W, channels out of the first upsample layer
  int sample_rate = 16000;

  int output_length() const;
  int latent_dim() const { return categorical_dim + continuous_dim; }

  /// Output channels of each generator upsample layer: [W, W/2, ..., 1].
  std::vector<int> generator_channels() const;
  /// Output channels of each critic conv layer, doubling up to 2W; the
  /// generator plan reversed, extended one layer (1 -> ... -> 2W).
  std::vector<int> critic_channels() const;

  void validate() const;
  bool operator==(const GeneratorSpec&) const = default;
};

/// The ciwGAN latent: one-hot lexical code plus uniform noise in [-1, 1].
struct LatentInput {
  std::vector<double> code;   // length k, exactly one 1 (or empty when k = 0)
  std::vector<double> noise;  // length d, entries in [-1, 1]

  Tensor to_tensor() const;  // concatenated [k + d] leaf
  void validate(const GeneratorSpec& spec) const;
};

LatentInput random_latent(const GeneratorSpec& spec, Rng& rng);
LatentInput latent_for_code(const GeneratorSpec& spec, int code_index, Rng& rng);

struct GeneratorParams {
  Tensor fc_w, fc_b;
  std::vector<Tensor> up_k, up_b;  // per upsample layer

  std::vector<Tensor> all();
  std::vector<std::pair<std::string, Tensor>> named();
};

struct CriticParams {
  std::vector<Tensor> conv_k, conv_b;
  Tensor out_w, out_b;

  std::vector<Tensor> all();
  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix);
};

GeneratorParams init_generator(const GeneratorSpec& spec, Rng& rng);
/// out_dim 1 for the Wasserstein critic, categorical_dim for the Q-network.
CriticParams init_critic(const GeneratorSpec& spec, int out_dim, Rng& rng);

/// FC bottleneck: dense(k+d -> C*F), reshape to C x F, relu.
Tensor generator_fc(const LatentInput& latent, const GeneratorSpec& spec,
                    const GeneratorParams& p);
Tensor generator_fc(const Tensor& latent_vec, const GeneratorSpec& spec,
                    const GeneratorParams& p);

/// L transposed-conv layers, relu between, tanh last; [C x F] -> [output_length].
Tensor generator_conv_stack(const Tensor& fmap, const GeneratorSpec& spec,
                            const GeneratorParams& p);

Tensor generate(const LatentInput& latent, const GeneratorSpec& spec, const GeneratorParams& p);

/// Scalar critic score. shifts holds the per-layer phase-shuffle offsets for
/// the first L-1 layers; empty means no shuffling (deterministic evaluation).
Tensor discriminate(const Tensor& wave, const GeneratorSpec& spec, const CriticParams& p,
                    const std::vector<int>& shifts = {});

/// Phase-shuffle offsets drawn uniformly from {-n..n} for the L-1 shuffled layers.
std::vector<int> draw_phase_shifts(const GeneratorSpec& spec, int n, Rng& rng);

/// Logits over the k lexical codes (no phase shuffle).
Tensor q_classify(const Tensor& wave, const GeneratorSpec& spec, const CriticParams& p);

long parameter_count(std::vector<Tensor> params);
long fc_parameter_count(const GeneratorSpec& spec);

}  // namespace phonogan::gan
