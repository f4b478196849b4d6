#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phonogan/ops.hpp"
#include "phonogan/training.hpp"
#include "test_util.hpp"

#include <cmath>
#include <cstdio>

using namespace phonogan;
using namespace phonogan::train;
using gan::GeneratorSpec;
using nn::Array;
using nn::Tensor;

namespace {

// all dims <= 4 so finite differences stay cheap
GeneratorSpec micro_spec() {
  GeneratorSpec s;
  s.bottleneck_channels = 2;
  s.base_frames = 2;
  s.n_upsample_layers = 2;
  s.stride = 2;
  s.kernel_width = 3;
  s.categorical_dim = 2;
  s.continuous_dim = 2;
  s.base_width = 2;
  s.sample_rate = 800;
  return s;
}

std::vector<Tensor> toy_corpus(const GeneratorSpec& spec, int n, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<Tensor> waves;
  for (int i = 0; i < n; ++i) waves.push_back(nn::uniform(rng, {spec.output_length()}, -0.9, 0.9));
  return waves;
}

// Zero-initialized biases put tconv padding cells exactly on the relu kink,
// where finite differences straddle the subgradient; jitter every parameter
// so the micro model sits at a generic point.
void jitter_params(std::vector<Tensor> params, std::uint64_t seed) {
  nn::Rng rng(seed);
  for (auto& p : params)
    for (long i = 0; i < p.numel(); ++i) p.values()[i] += rng.uniform(0.01, 0.2);
}

}  // namespace

TEST_CASE("cross entropy: uniform logits over k=6 give ln 6") {
  Tensor logits = Tensor::zeros({6});
  CHECK(cross_entropy(logits, 3).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy: confident correct logits approach zero") {
  Tensor logits = Tensor::from({4}, {30.0, 0.0, 0.0, 0.0});
  CHECK(cross_entropy(logits, 0).item() == doctest::Approx(0.0).epsilon(1e-8));
}

TEST_CASE("gradient penalty: linear critic gives lambda-free (||w||-1)^2 for any xhat") {
  // D(x) = w . x  =>  grad_x D = w, so the penalty ignores xhat entirely
  nn::Rng rng(42);
  Tensor w = nn::uniform(rng, {1, 8}, -1, 1, true);
  Tensor b = Tensor::zeros({1}, true);
  Critic critic = [&](const Tensor& x) { return nn::dense(x, w, b); };

  double wn = std::sqrt(w.values().square().sum());
  double expect = (wn - 1.0) * (wn - 1.0);
  for (int i = 0; i < 5; ++i) {
    Tensor xhat = nn::uniform(rng, {8}, -3, 3);
    CHECK(gradient_penalty(critic, xhat).item() == doctest::Approx(expect).epsilon(1e-9));
  }

  // and its gradient w.r.t. w matches the closed form 2(||w||-1) w/||w||
  Tensor pen = gradient_penalty(critic, nn::uniform(rng, {8}, -1, 1));
  w.zero_grad();
  nn::backward(pen);
  for (long i = 0; i < w.numel(); ++i) {
    double analytic = 2.0 * (wn - 1.0) * w.values()[i] / wn;
    CHECK(w.grad()[i] == doctest::Approx(analytic).epsilon(1e-7));
  }
}

TEST_CASE("discriminator loss: identical batches with lambda=0 score zero") {
  GeneratorSpec spec = micro_spec();
  nn::Rng rng(7);
  auto d = gan::init_critic(spec, 1, rng);
  auto batch = toy_corpus(spec, 4, 11);
  nn::Rng lr(3);
  auto rep = discriminator_loss(batch, batch, spec, d, 0.0, 0, lr);
  CHECK(rep.loss == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.wasserstein == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rep.gp == 0.0);
}

TEST_CASE("discriminator loss: lambda=0 reduces to the score difference") {
  GeneratorSpec spec = micro_spec();
  nn::Rng rng(8);
  auto d = gan::init_critic(spec, 1, rng);
  auto real = toy_corpus(spec, 3, 21);
  auto fake = toy_corpus(spec, 3, 22);
  nn::Rng lr(4);
  auto rep = discriminator_loss(real, fake, spec, d, 0.0, 0, lr);
  double expect = 0;
  for (int i = 0; i < 3; ++i)
    expect += (gan::discriminate(fake[i], spec, d).item() -
               gan::discriminate(real[i], spec, d).item()) / 3.0;
  CHECK(rep.loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("discriminator loss gradients match finite differences on the micro model") {
  GeneratorSpec spec = micro_spec();
  nn::Rng rng(9);
  auto d = gan::init_critic(spec, 1, rng);
  jitter_params(d.all(), 901);
  auto real = toy_corpus(spec, 2, 31);
  auto fake = toy_corpus(spec, 2, 32);

  auto loss_at = [&](std::uint64_t seed) {
    nn::Rng lr(seed);
    return discriminator_loss(real, fake, spec, d, 10.0, 1, lr);
  };
  auto rep = loss_at(77);

  double h = 1e-5;
  auto params = d.all();
  double worst = 0;
  for (auto& p : params) {
    REQUIRE(rep.grads.count(p.node()) == 1);
    const Array& g = rep.grads.at(p.node());
    for (long i = 0; i < std::min<long>(p.numel(), 12); ++i) {
      double orig = p.values()[i];
      p.values()[i] = orig + h;
      double fp = loss_at(77).loss;
      p.values()[i] = orig - h;
      double fm = loss_at(77).loss;
      p.values()[i] = orig;
      double numeric = (fp - fm) / (2 * h);
      double denom = std::max({std::fabs(numeric), std::fabs(g[i]), 1e-5});
      worst = std::max(worst, std::fabs(numeric - g[i]) / denom);
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("generator/Q loss: q_weight=0 is the pure WGAN generator loss") {
  GeneratorSpec spec = micro_spec();
  nn::Rng rng(10);
  auto g = gan::init_generator(spec, rng);
  auto d = gan::init_critic(spec, 1, rng);
  auto q = gan::init_critic(spec, spec.categorical_dim, rng);
  std::vector<gan::LatentInput> latents;
  nn::Rng lr(5);
  for (int i = 0; i < 3; ++i) latents.push_back(gan::random_latent(spec, lr));

  nn::Rng r1(6);
  auto rep = generator_q_loss(latents, spec, g, q, d, 0.0, 0, r1);
  double expect = 0;
  for (auto& l : latents)
    expect -= gan::discriminate(gan::generate(l, spec, g), spec, d).item() / 3.0;
  CHECK(rep.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(rep.q_ce == 0.0);
}

TEST_CASE("generator/Q loss gradients match finite differences on the micro model") {
  GeneratorSpec spec = micro_spec();
  nn::Rng rng(12);
  auto g = gan::init_generator(spec, rng);
  auto d = gan::init_critic(spec, 1, rng);
  auto q = gan::init_critic(spec, spec.categorical_dim, rng);
  jitter_params(g.all(), 902);
  jitter_params(d.all(), 903);
  jitter_params(q.all(), 904);
  std::vector<gan::LatentInput> latents;
  nn::Rng lr(15);
  for (int i = 0; i < 2; ++i) latents.push_back(gan::random_latent(spec, lr));

  auto loss_at = [&]() {
    nn::Rng r(88);
    return generator_q_loss(latents, spec, g, q, d, 1.0, 1, r);
  };
  auto rep = loss_at();

  double h = 1e-5, worst = 0;
  auto check_params = [&](std::vector<Tensor> params) {
    for (auto& p : params) {
      REQUIRE(rep.grads.count(p.node()) == 1);
      const Array& gr = rep.grads.at(p.node());
      for (long i = 0; i < std::min<long>(p.numel(), 10); ++i) {
        double orig = p.values()[i];
        p.values()[i] = orig + h;
        double fp = loss_at().loss;
        p.values()[i] = orig - h;
        double fm = loss_at().loss;
        p.values()[i] = orig;
        double numeric = (fp - fm) / (2 * h);
        double denom = std::max({std::fabs(numeric), std::fabs(gr[i]), 1e-5});
        worst = std::max(worst, std::fabs(numeric - gr[i]) / denom);
      }
    }
  };
  check_params(g.all());
  check_params(q.all());
  CHECK(worst < 1e-3);
}

TEST_CASE("train: zero steps returns the initialization") {
  GeneratorSpec spec = micro_spec();
  TrainConfig cfg;
  cfg.total_steps = 0;
  cfg.batch_size = 2;
  cfg.seed = 314;
  cfg.threads = 1;
  auto corpus = toy_corpus(spec, 6, 99);
  auto res = train::train(corpus, spec, cfg);
  CHECK(res.completed_steps == 0);
  CHECK(res.log.rows.empty());

  auto fresh = gan::init_checkpoint(spec, cfg.seed, cfg.condition);
  auto a = res.checkpoint.named_params();
  auto b = fresh.named_params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (long j = 0; j < a[i].second.numel(); ++j)
      CHECK(a[i].second.values()[j] == b[i].second.values()[j]);
}

TEST_CASE("train: zero learning rate leaves parameters unchanged") {
  GeneratorSpec spec = micro_spec();
  TrainConfig cfg;
  cfg.total_steps = 2;
  cfg.batch_size = 2;
  cfg.n_critic = 1;
  cfg.lr = 0.0;
  cfg.seed = 5150;
  cfg.threads = 1;
  auto corpus = toy_corpus(spec, 4, 44);
  auto res = train::train(corpus, spec, cfg);
  auto fresh = gan::init_checkpoint(spec, cfg.seed, cfg.condition);
  auto a = res.checkpoint.named_params();
  auto b = fresh.named_params();
  for (size_t i = 0; i < a.size(); ++i)
    for (long j = 0; j < a[i].second.numel(); ++j)
      CHECK(a[i].second.values()[j] == b[i].second.values()[j]);
}

TEST_CASE("train: reproducible log and parameters, independent of thread count") {
  GeneratorSpec spec = micro_spec();
  TrainConfig cfg;
  cfg.total_steps = 4;
  cfg.batch_size = 3;
  cfg.n_critic = 2;
  cfg.seed = 777;

  cfg.threads = 1;
  auto a = train::train(toy_corpus(spec, 5, 1), spec, cfg);
  cfg.threads = 2;
  auto b = train::train(toy_corpus(spec, 5, 1), spec, cfg);

  REQUIRE(a.log.rows.size() == b.log.rows.size());
  for (size_t i = 0; i < a.log.rows.size(); ++i) {
    CHECK(a.log.rows[i].d_real == b.log.rows[i].d_real);
    CHECK(a.log.rows[i].g_loss == b.log.rows[i].g_loss);
    CHECK(a.log.rows[i].wasserstein == b.log.rows[i].wasserstein);
    CHECK(std::isfinite(a.log.rows[i].wasserstein));
  }
  auto pa = a.checkpoint.named_params();
  auto pb = b.checkpoint.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    for (long j = 0; j < pa[i].second.numel(); ++j)
      CHECK(pa[i].second.values()[j] == pb[i].second.values()[j]);
}

TEST_CASE("train log: save/load round trip") {
  TrainLog log;
  log.rows.push_back({1, 0.5, -0.25, 0.75, 0.01, 1.79, -0.5});
  log.rows.push_back({2, 0.25, -0.5, 0.75, 0.02, 1.5, -0.25});
  log.save("train_log_test.tsv");
  auto loaded = TrainLog::load("train_log_test.tsv");
  REQUIRE(loaded.rows.size() == 2);
  CHECK(loaded.rows[1].q_ce == doctest::Approx(1.5));
  CHECK(loaded.rows[0].step == 1);
  std::remove("train_log_test.tsv");
}

TEST_CASE("train: divergence halts and keeps the last good parameters") {
  GeneratorSpec spec = micro_spec();
  TrainConfig cfg;
  cfg.total_steps = 50;
  cfg.batch_size = 2;
  cfg.n_critic = 1;
  cfg.lr = 1e200;  // drives activations past double range within a few steps
  cfg.seed = 31337;
  cfg.threads = 1;
  auto corpus = toy_corpus(spec, 4, 17);
  auto res = train::train(corpus, spec, cfg);
  CHECK(res.diverged);
  CHECK(res.completed_steps < 50);
  for (auto& [name, t] : res.checkpoint.named_params())
    CHECK(t.values().allFinite());
}

TEST_CASE("train: checkpoint callback fires at the interval and the end") {
  GeneratorSpec spec = micro_spec();
  TrainConfig cfg;
  cfg.total_steps = 5;
  cfg.batch_size = 2;
  cfg.n_critic = 1;
  cfg.checkpoint_interval = 2;
  cfg.seed = 2;
  cfg.threads = 1;
  std::vector<long> steps;
  auto res = train::train(toy_corpus(spec, 4, 3), spec, cfg,
                   [&](gan::ModelCheckpoint&, long s) { steps.push_back(s); });
  CHECK(steps == std::vector<long>{2, 4, 5});
  CHECK(res.log.rows.size() == 5);
}
