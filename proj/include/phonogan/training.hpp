#pragma once

#include "phonogan/adam.hpp"
#include "phonogan/checkpoint.hpp"
#include "phonogan/models.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phonogan::train {

using gan::GeneratorSpec;
using gan::LatentInput;
using nn::Rng;
using nn::Tensor;

struct TrainConfig {
  int batch_size = 64;
  int n_critic = 5;
  double gp_lambda = 10.0;
  double q_weight = 1.0;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  long total_steps = 1;
  long checkpoint_interval = 0;  // 0 = final only
  int phase_shuffle_n = 2;
  std::uint64_t seed = 1;
  gan::Condition condition = gan::Condition::unspecified;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
  nn::AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
};

struct TrainLogRow {
  long step = 0;
  double d_real = 0, d_fake = 0, wasserstein = 0, gp = 0, q_ce = 0, g_loss = 0;
};

/// One row per step; persisted as a tab-separated table.
struct TrainLog {
  std::vector<TrainLogRow> rows;
  void save(const std::string& path) const;
  static TrainLog load(const std::string& path);
};

/// Thrown when a loss goes non-finite; the step is aborted.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A graph-capable critic closure (waveform -> scalar score).
using Critic = std::function<Tensor(const Tensor&)>;

/// (||grad_x critic(xhat)|| - 1)^2 as a graph over the critic's parameters.
Tensor gradient_penalty(const Critic& critic, const Tensor& xhat);

/// log-sum-exp(logits) - logits[target], numerically stabilized.
Tensor cross_entropy(const Tensor& logits, int target);

struct LossReport {
  double loss = 0;
  double d_real = 0, d_fake = 0, wasserstein = 0, gp = 0, q_ce = 0;
  nn::GradMap grads;  // mean gradient over the batch, keyed by parameter node
};

/// WGAN-GP critic objective over one batch:
///   mean D(fake) - mean D(real) + lambda * mean (||grad D(xhat)|| - 1)^2
/// with xhat a per-pair uniform interpolation. Throws TrainingDiverged on a
/// non-finite loss.
LossReport discriminator_loss(const std::vector<Tensor>& real_batch,
                              const std::vector<Tensor>& fake_batch,
                              const GeneratorSpec& spec, const gan::CriticParams& d,
                              double lambda, int phase_shuffle_n, Rng& rng, int threads = 1);

/// Generator + Q objective over one batch of latents:
///   -mean D(G(z)) + q_weight * mean CE(Q(G(z)), code)
/// Gradients cover every parameter left with requires_grad on (the training
/// loop turns the critic off here).
LossReport generator_q_loss(const std::vector<LatentInput>& latents,
                            const GeneratorSpec& spec, const gan::GeneratorParams& g,
                            const gan::CriticParams& q, const gan::CriticParams& d,
                            double q_weight, int phase_shuffle_n, Rng& rng, int threads = 1);

struct TrainResult {
  gan::ModelCheckpoint checkpoint;
  TrainLog log;
  bool diverged = false;
  long completed_steps = 0;
};

/// The ciwGAN loop: n_critic discriminator updates per generator+Q update.
/// Deterministic for a fixed config (thread count does not change results).
/// on_checkpoint, when set, fires every checkpoint_interval steps and at the
/// end. Divergence halts training and returns the last completed step's
/// parameters.
TrainResult train(const std::vector<Tensor>& corpus_waves, const GeneratorSpec& spec,
                  const TrainConfig& cfg,
                  const std::function<void(gan::ModelCheckpoint&, long)>& on_checkpoint = {});

/// Fraction of fresh generated samples whose Q argmax recovers the code.
double q_accuracy(gan::ModelCheckpoint& ckpt, int n_samples, Rng& rng, int threads = 1);

}  // namespace phonogan::train
