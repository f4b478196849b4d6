#include "phonogan/training.hpp"

#include "phonogan/ops.hpp"
#include "phonogan/parallel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace phonogan::train {

using nn::Array;
using nn::GradMap;

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (n_critic < 1) throw std::invalid_argument("train: n_critic must be >= 1");
  if (gp_lambda < 0) throw std::invalid_argument("train: gp_lambda must be >= 0");
  if (q_weight < 0) throw std::invalid_argument("train: q_weight must be >= 0");
  if (total_steps < 0) throw std::invalid_argument("train: total_steps must be >= 0");
  if (phase_shuffle_n < 0) throw std::invalid_argument("train: phase_shuffle_n must be >= 0");
}

void TrainLog::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write train log: " + path);
  os << "step\td_real\td_fake\twasserstein\tgp\tq_ce\tg_loss\n";
  os.precision(17);
  for (const auto& r : rows)
    os << r.step << '\t' << r.d_real << '\t' << r.d_fake << '\t' << r.wasserstein << '\t'
       << r.gp << '\t' << r.q_ce << '\t' << r.g_loss << '\n';
}

TrainLog TrainLog::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read train log: " + path);
  TrainLog log;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrainLogRow r;
    ls >> r.step >> r.d_real >> r.d_fake >> r.wasserstein >> r.gp >> r.q_ce >> r.g_loss;
    log.rows.push_back(r);
  }
  return log;
}

Tensor gradient_penalty(const Critic& critic, const Tensor& xhat) {
  Tensor x = xhat.clone(/*requires_grad=*/true);
  Tensor score = critic(x);
  Tensor g = nn::grad_wrt(score, x, /*create_graph=*/true);
  // eps inside the sqrt keeps the norm differentiable at g = 0
  Tensor nrm = nn::sqrt_(nn::add_scalar(nn::sum(nn::square(g)), 1e-12));
  return nn::square(nn::add_scalar(nrm, -1.0));
}

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rank() != 1) throw std::invalid_argument("cross_entropy: logits must be a vector");
  if (target < 0 || target >= logits.dim(0))
    throw std::invalid_argument("cross_entropy: target out of range");
  double m = logits.values().maxCoeff();
  Tensor lse = nn::add_scalar(nn::log_(nn::sum(nn::exp_(nn::add_scalar(logits, -m)))), m);
  return nn::sub(lse, nn::pick(logits, target));
}

namespace {

void merge_scaled(GradMap& total, const GradMap& part) {
  for (const auto& [node, grad] : part) {
    auto it = total.find(node);
    if (it == total.end()) total.emplace(node, grad);
    else it->second += grad;
  }
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw TrainingDiverged(std::string("non-finite ") + what + " encountered; step aborted");
}

int one_hot_index(const LatentInput& latent) {
  for (size_t c = 0; c < latent.code.size(); ++c)
    if (latent.code[c] == 1.0) return static_cast<int>(c);
  return 0;
}

}  // namespace

LossReport discriminator_loss(const std::vector<Tensor>& real_batch,
                              const std::vector<Tensor>& fake_batch, const GeneratorSpec& spec,
                              const gan::CriticParams& d, double lambda, int phase_shuffle_n,
                              Rng& rng, int threads) {
  if (real_batch.empty() || real_batch.size() != fake_batch.size())
    throw std::invalid_argument(
        "discriminator_loss: real and fake batches must be non-empty and equal-sized");
  int n = static_cast<int>(real_batch.size());
  for (int i = 0; i < n; ++i)
    if (real_batch[i].numel() != fake_batch[i].numel())
      throw std::invalid_argument("discriminator_loss: waveform length mismatch at sample " +
                                  std::to_string(i));

  Rng base = rng.derive(rng.next_u64(), 0xd15c);
  struct Sample {
    double loss = 0, d_real = 0, d_fake = 0, gp = 0;
    GradMap grads;
  };
  std::vector<Sample> out(n);

  parallel_for(n, threads, [&](int i) {
    Rng r = base.derive(i);
    double eps = r.uniform01();
    auto shifts_r = gan::draw_phase_shifts(spec, phase_shuffle_n, r);
    auto shifts_f = gan::draw_phase_shifts(spec, phase_shuffle_n, r);
    auto shifts_i = gan::draw_phase_shifts(spec, phase_shuffle_n, r);

    Tensor real = real_batch[i].detach();
    Tensor fake = fake_batch[i].detach();

    Tensor s_real = gan::discriminate(real, spec, d, shifts_r);
    Tensor s_fake = gan::discriminate(fake, spec, d, shifts_f);
    Tensor loss = nn::sub(s_fake, s_real);

    Sample& s = out[i];
    s.d_real = s_real.item();
    s.d_fake = s_fake.item();
    if (lambda > 0) {
      Tensor xhat = Tensor::leaf(real.shape(), eps * real.values() + (1.0 - eps) * fake.values());
      Tensor pen = gradient_penalty(
          [&](const Tensor& w) { return gan::discriminate(w, spec, d, shifts_i); }, xhat);
      s.gp = pen.item();
      loss = nn::add(loss, nn::scale(pen, lambda));
    }
    s.loss = loss.item();
    s.grads = nn::collect_grads(loss, 1.0 / n);
  });

  LossReport rep;
  for (int i = 0; i < n; ++i) {
    rep.loss += out[i].loss / n;
    rep.d_real += out[i].d_real / n;
    rep.d_fake += out[i].d_fake / n;
    rep.gp += out[i].gp / n;
    merge_scaled(rep.grads, out[i].grads);
  }
  rep.wasserstein = rep.d_real - rep.d_fake;
  check_finite(rep.loss, "discriminator loss");
  return rep;
}

LossReport generator_q_loss(const std::vector<LatentInput>& latents, const GeneratorSpec& spec,
                            const gan::GeneratorParams& g, const gan::CriticParams& q,
                            const gan::CriticParams& d, double q_weight, int phase_shuffle_n,
                            Rng& rng, int threads) {
  if (latents.empty()) throw std::invalid_argument("generator_q_loss: empty latent batch");
  int n = static_cast<int>(latents.size());
  for (const auto& l : latents) l.validate(spec);

  Rng base = rng.derive(rng.next_u64(), 0x93e7);
  struct Sample {
    double loss = 0, d_fake = 0, q_ce = 0;
    GradMap grads;
  };
  std::vector<Sample> out(n);

  parallel_for(n, threads, [&](int i) {
    Rng r = base.derive(i);
    auto shifts = gan::draw_phase_shifts(spec, phase_shuffle_n, r);
    const LatentInput& latent = latents[i];

    Tensor wave = gan::generate(latent, spec, g);
    Tensor score = gan::discriminate(wave, spec, d, shifts);
    Tensor loss = nn::neg(score);

    Sample& s = out[i];
    s.d_fake = score.item();
    if (q_weight > 0 && spec.categorical_dim > 0) {
      Tensor ce = cross_entropy(gan::q_classify(wave, spec, q), one_hot_index(latent));
      s.q_ce = ce.item();
      loss = nn::add(loss, nn::scale(ce, q_weight));
    }
    s.loss = loss.item();
    s.grads = nn::collect_grads(loss, 1.0 / n);
  });

  LossReport rep;
  for (int i = 0; i < n; ++i) {
    rep.loss += out[i].loss / n;
    rep.d_fake += out[i].d_fake / n;
    rep.q_ce += out[i].q_ce / n;
    merge_scaled(rep.grads, out[i].grads);
  }
  check_finite(rep.loss, "generator/Q loss");
  return rep;
}

namespace {

std::vector<Array> grads_for(const GradMap& grads, std::vector<Tensor> params, const char* who) {
  std::vector<Array> out;
  out.reserve(params.size());
  for (auto& p : params) {
    auto it = grads.find(p.node());
    if (it == grads.end())
      throw TrainingDiverged(std::string("missing gradient for a ") + who + " parameter");
    if (!it->second.allFinite())
      throw TrainingDiverged(std::string("non-finite gradient for a ") + who + " parameter");
    out.push_back(it->second);
  }
  return out;
}

std::vector<Array> snapshot(std::vector<Tensor> params) {
  std::vector<Array> s;
  s.reserve(params.size());
  for (auto& p : params) s.push_back(p.values());
  return s;
}

void restore(std::vector<Tensor> params, const std::vector<Array>& snap) {
  for (size_t i = 0; i < params.size(); ++i) params[i].values() = snap[i];
}

}  // namespace

TrainResult train(const std::vector<Tensor>& corpus_waves, const GeneratorSpec& spec,
                  const TrainConfig& cfg,
                  const std::function<void(gan::ModelCheckpoint&, long)>& on_checkpoint) {
  cfg.validate();
  spec.validate();
  if (corpus_waves.empty()) throw std::invalid_argument("train: corpus is empty");
  for (const auto& w : corpus_waves)
    if (w.numel() != spec.output_length())
      throw std::invalid_argument("train: corpus waveform length " + std::to_string(w.numel()) +
                                  " != spec output length " + std::to_string(spec.output_length()));

  TrainResult res;
  res.checkpoint = gan::init_checkpoint(spec, cfg.seed, cfg.condition);
  gan::ModelCheckpoint& ckpt = res.checkpoint;

  auto g_params = ckpt.g.all();
  auto d_params = ckpt.d.all();
  auto q_params = ckpt.q.all();
  nn::AdamState g_state(g_params, cfg.adam());
  nn::AdamState d_state(d_params, cfg.adam());
  nn::AdamState q_state(q_params, cfg.adam());

  Rng root(cfg.seed);
  Rng data_rng = root.derive(0xda7a);
  Rng latent_rng = root.derive(0x1a7e);
  Rng noise_rng = root.derive(0x0f5e);

  long corpus_n = static_cast<long>(corpus_waves.size());

  auto emit = [&](long step) {
    ckpt.step = step;
    if (on_checkpoint) on_checkpoint(ckpt, step);
  };

  for (long step = 1; step <= cfg.total_steps; ++step) {
    auto snap_g = snapshot(g_params);
    auto snap_d = snapshot(d_params);
    auto snap_q = snapshot(q_params);
    TrainLogRow row;
    row.step = step;
    try {
      for (int j = 0; j < cfg.n_critic; ++j) {
        Rng r = data_rng.derive(step, j);
        std::vector<Tensor> real, fake;
        real.reserve(cfg.batch_size);
        fake.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b)
          real.push_back(corpus_waves[r.uniform_int(0, corpus_n - 1)]);
        {
          // fakes are data for the critic update; no generator graph needed
          Rng lrng = latent_rng.derive(step, j);
          std::vector<LatentInput> ls;
          for (int b = 0; b < cfg.batch_size; ++b) ls.push_back(gan::random_latent(spec, lrng));
          fake.resize(cfg.batch_size);
          parallel_for(cfg.batch_size, cfg.threads, [&](int b) {
            nn::NoGradGuard ng;
            fake[b] = gan::generate(ls[b], spec, ckpt.g);
          });
        }
        Rng gp_rng = noise_rng.derive(step, j);
        auto rep = discriminator_loss(real, fake, spec, ckpt.d, cfg.gp_lambda,
                                      cfg.phase_shuffle_n, gp_rng, cfg.threads);
        nn::adam_step(d_params, grads_for(rep.grads, d_params, "critic"), d_state);
        if (j == cfg.n_critic - 1) {
          row.d_real = rep.d_real;
          row.d_fake = rep.d_fake;
          row.wasserstein = rep.wasserstein;
          row.gp = rep.gp;
        }
      }

      // one generator + Q update; the critic is frozen for this pass
      for (auto& p : d_params) p.set_requires_grad(false);
      std::vector<LatentInput> latents;
      latents.reserve(cfg.batch_size);
      Rng lrng = latent_rng.derive(step, 0x6e6);
      for (int b = 0; b < cfg.batch_size; ++b) latents.push_back(gan::random_latent(spec, lrng));
      Rng gq_rng = noise_rng.derive(step, 0x6e6);
      LossReport rep;
      try {
        rep = generator_q_loss(latents, spec, ckpt.g, ckpt.q, ckpt.d, cfg.q_weight,
                               cfg.phase_shuffle_n, gq_rng, cfg.threads);
      } catch (...) {
        for (auto& p : d_params) p.set_requires_grad(true);
        throw;
      }
      for (auto& p : d_params) p.set_requires_grad(true);

      nn::adam_step(g_params, grads_for(rep.grads, g_params, "generator"), g_state);
      if (cfg.q_weight > 0 && spec.categorical_dim > 0)
        nn::adam_step(q_params, grads_for(rep.grads, q_params, "Q-network"), q_state);
      row.q_ce = rep.q_ce;
      row.g_loss = rep.loss;
    } catch (const TrainingDiverged&) {
      restore(g_params, snap_g);
      restore(d_params, snap_d);
      restore(q_params, snap_q);
      res.diverged = true;
      res.completed_steps = step - 1;
      emit(step - 1);
      return res;
    }
    res.log.rows.push_back(row);
    res.completed_steps = step;
    if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 &&
        step < cfg.total_steps)
      emit(step);
  }
  emit(cfg.total_steps);
  return res;
}

double q_accuracy(gan::ModelCheckpoint& ckpt, int n_samples, Rng& rng, int threads) {
  if (n_samples < 1) throw std::invalid_argument("q_accuracy: n_samples must be >= 1");
  const auto& spec = ckpt.spec;
  Rng base = rng.derive(rng.next_u64(), 0xacc);
  std::vector<int> hits(n_samples, 0);
  parallel_for(n_samples, threads, [&](int i) {
    nn::NoGradGuard ng;
    Rng r = base.derive(i);
    auto latent = gan::random_latent(spec, r);
    Tensor logits = gan::q_classify(gan::generate(latent, spec, ckpt.g), spec, ckpt.q);
    long best = 0;
    for (long c = 1; c < logits.numel(); ++c)
      if (logits.values()[c] > logits.values()[best]) best = c;
    hits[i] = best == one_hot_index(latent) ? 1 : 0;
  });
  double acc = 0;
  for (int h : hits) acc += h;
  return acc / n_samples;
}

}  // namespace phonogan::train
