#include "phonogan/models.hpp"

#include <cmath>
#include <stdexcept>

namespace phonogan::gan {

using nn::Array;
using nn::Shape;

std::string condition_name(Condition c) {
  switch (c) {
    case Condition::restricted: return "restricted";
    case Condition::unrestricted: return "unrestricted";
    default: return "unspecified";
  }
}

Condition condition_from(const std::string& s) {
  if (s == "restricted") return Condition::restricted;
  if (s == "unrestricted") return Condition::unrestricted;
  if (s == "unspecified") return Condition::unspecified;
  throw std::invalid_argument("unknown condition '" + s + "'");
}

int GeneratorSpec::output_length() const {
  long n = base_frames;
  for (int i = 0; i < n_upsample_layers; ++i) n *= stride;
  return static_cast<int>(n);
}

std::vector<int> GeneratorSpec::generator_channels() const {
  std::vector<int> ch(n_upsample_layers);
  int w = base_width;
  for (int i = 0; i + 1 < n_upsample_layers; ++i) {
    ch[i] = std::max(1, w);
    w /= 2;
  }
  ch[n_upsample_layers - 1] = 1;
  return ch;
}

std::vector<int> GeneratorSpec::critic_channels() const {
  std::vector<int> ch(n_upsample_layers);
  int w = 2 * base_width;
  for (int i = n_upsample_layers - 1; i >= 0; --i) {
    ch[i] = std::max(1, w);
    w /= 2;
  }
  return ch;
}

void GeneratorSpec::validate() const {
  if (bottleneck_channels < 1) throw std::invalid_argument("spec: bottleneck_channels must be >= 1");
  if (base_frames < 1 || n_upsample_layers < 1 || stride < 1 || kernel_width < 1)
    throw std::invalid_argument("spec: structural fields must be positive");
  if (categorical_dim < 0 || continuous_dim < 1)
    throw std::invalid_argument("spec: categorical_dim >= 0 and continuous_dim >= 1 required");
  if (sample_rate < 1) throw std::invalid_argument("spec: sample_rate must be positive");
}

Tensor LatentInput::to_tensor() const {
  std::vector<double> v;
  v.reserve(code.size() + noise.size());
  v.insert(v.end(), code.begin(), code.end());
  v.insert(v.end(), noise.begin(), noise.end());
  int n = static_cast<int>(v.size());
  return Tensor::from({n}, std::move(v));
}

void LatentInput::validate(const GeneratorSpec& spec) const {
  if (static_cast<int>(code.size()) != spec.categorical_dim)
    throw std::invalid_argument("latent: code length " + std::to_string(code.size()) +
                                " != categorical_dim " + std::to_string(spec.categorical_dim));
  if (static_cast<int>(noise.size()) != spec.continuous_dim)
    throw std::invalid_argument("latent: noise length " + std::to_string(noise.size()) +
                                " != continuous_dim " + std::to_string(spec.continuous_dim));
  int ones = 0;
  for (double c : code) {
    if (c != 0.0 && c != 1.0) throw std::invalid_argument("latent: code must be one-hot");
    if (c == 1.0) ++ones;
  }
  if (!code.empty() && ones != 1) throw std::invalid_argument("latent: code must have exactly one 1");
  for (double z : noise)
    if (z < -1.0 || z > 1.0) throw std::invalid_argument("latent: noise entries must lie in [-1, 1]");
}

LatentInput latent_for_code(const GeneratorSpec& spec, int code_index, Rng& rng) {
  if (spec.categorical_dim > 0 && (code_index < 0 || code_index >= spec.categorical_dim))
    throw std::invalid_argument("latent: code index out of range");
  LatentInput l;
  l.code.assign(spec.categorical_dim, 0.0);
  if (spec.categorical_dim > 0) l.code[code_index] = 1.0;
  l.noise.resize(spec.continuous_dim);
  for (double& z : l.noise) z = rng.uniform(-1.0, 1.0);
  return l;
}

LatentInput random_latent(const GeneratorSpec& spec, Rng& rng) {
  int idx = spec.categorical_dim > 0 ? static_cast<int>(rng.uniform_int(0, spec.categorical_dim - 1)) : 0;
  return latent_for_code(spec, idx, rng);
}

std::vector<Tensor> GeneratorParams::all() {
  std::vector<Tensor> v{fc_w, fc_b};
  for (size_t i = 0; i < up_k.size(); ++i) {
    v.push_back(up_k[i]);
    v.push_back(up_b[i]);
  }
  return v;
}

std::vector<std::pair<std::string, Tensor>> GeneratorParams::named() {
  std::vector<std::pair<std::string, Tensor>> v{{"g.fc.w", fc_w}, {"g.fc.b", fc_b}};
  for (size_t i = 0; i < up_k.size(); ++i) {
    v.push_back({"g.up" + std::to_string(i) + ".k", up_k[i]});
    v.push_back({"g.up" + std::to_string(i) + ".b", up_b[i]});
  }
  return v;
}

std::vector<Tensor> CriticParams::all() {
  std::vector<Tensor> v;
  for (size_t i = 0; i < conv_k.size(); ++i) {
    v.push_back(conv_k[i]);
    v.push_back(conv_b[i]);
  }
  v.push_back(out_w);
  v.push_back(out_b);
  return v;
}

std::vector<std::pair<std::string, Tensor>> CriticParams::named(const std::string& prefix) {
  std::vector<std::pair<std::string, Tensor>> v;
  for (size_t i = 0; i < conv_k.size(); ++i) {
    v.push_back({prefix + ".conv" + std::to_string(i) + ".k", conv_k[i]});
    v.push_back({prefix + ".conv" + std::to_string(i) + ".b", conv_b[i]});
  }
  v.push_back({prefix + ".out.w", out_w});
  v.push_back({prefix + ".out.b", out_b});
  return v;
}

namespace {

// Xavier-uniform: U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]
Tensor xavier(Rng& rng, Shape shape, long fan_in, long fan_out) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return nn::uniform(rng, std::move(shape), -limit, limit, /*requires_grad=*/true);
}

}  // namespace

GeneratorParams init_generator(const GeneratorSpec& spec, Rng& rng) {
  spec.validate();
  GeneratorParams p;
  int in = spec.latent_dim();
  int out = spec.bottleneck_channels * spec.base_frames;
  p.fc_w = xavier(rng, {out, in}, in, out);
  p.fc_b = Tensor::zeros({out}, true);
  auto ch = spec.generator_channels();
  int ci = spec.bottleneck_channels;
  for (int layer = 0; layer < spec.n_upsample_layers; ++layer) {
    int co = ch[layer];
    long kw = spec.kernel_width;
    p.up_k.push_back(xavier(rng, {ci, co, spec.kernel_width}, ci * kw, co * kw));
    p.up_b.push_back(Tensor::zeros({co}, true));
    ci = co;
  }
  return p;
}

CriticParams init_critic(const GeneratorSpec& spec, int out_dim, Rng& rng) {
  spec.validate();
  if (out_dim < 1) throw std::invalid_argument("init_critic: out_dim must be >= 1");
  CriticParams p;
  auto ch = spec.critic_channels();
  int ci = 1;
  for (int layer = 0; layer < spec.n_upsample_layers; ++layer) {
    int co = ch[layer];
    long kw = spec.kernel_width;
    p.conv_k.push_back(xavier(rng, {co, ci, spec.kernel_width}, ci * kw, co * kw));
    p.conv_b.push_back(Tensor::zeros({co}, true));
    ci = co;
  }
  long flat = static_cast<long>(ch.back()) * spec.base_frames;
  p.out_w = xavier(rng, {out_dim, static_cast<int>(flat)}, flat, out_dim);
  p.out_b = Tensor::zeros({out_dim}, true);
  return p;
}

Tensor generator_fc(const Tensor& latent_vec, const GeneratorSpec& spec, const GeneratorParams& p) {
  if (latent_vec.rank() != 1 || latent_vec.dim(0) != spec.latent_dim())
    throw std::invalid_argument("generator_fc: latent " + nn::shape_str(latent_vec.shape()) +
                                " != expected (" + std::to_string(spec.latent_dim()) + ")");
  Tensor h = nn::dense(latent_vec, p.fc_w, p.fc_b);
  return nn::relu(nn::reshape(h, {spec.bottleneck_channels, spec.base_frames}));
}

Tensor generator_fc(const LatentInput& latent, const GeneratorSpec& spec, const GeneratorParams& p) {
  latent.validate(spec);
  return generator_fc(latent.to_tensor(), spec, p);
}

Tensor generator_conv_stack(const Tensor& fmap, const GeneratorSpec& spec, const GeneratorParams& p) {
  if (fmap.rank() != 2 || fmap.dim(0) != spec.bottleneck_channels || fmap.dim(1) != spec.base_frames)
    throw std::invalid_argument("generator_conv_stack: feature map " + nn::shape_str(fmap.shape()) +
                                " != expected (" + std::to_string(spec.bottleneck_channels) + "x" +
                                std::to_string(spec.base_frames) + ")");
  Tensor x = fmap;
  for (int layer = 0; layer < spec.n_upsample_layers; ++layer) {
    x = nn::conv1d_transpose(x, p.up_k[layer], spec.stride);
    x = nn::add(x, nn::broadcast_col(p.up_b[layer], x.dim(1)));
    x = (layer + 1 < spec.n_upsample_layers) ? nn::relu(x) : nn::tanh_(x);
  }
  return nn::reshape(x, {spec.output_length()});
}

Tensor generate(const LatentInput& latent, const GeneratorSpec& spec, const GeneratorParams& p) {
  return generator_conv_stack(generator_fc(latent, spec, p), spec, p);
}

namespace {

Tensor critic_trunk(const Tensor& wave, const GeneratorSpec& spec, const CriticParams& p,
                    const std::vector<int>& shifts, const char* who) {
  if (wave.rank() != 1 || wave.dim(0) != spec.output_length())
    throw std::invalid_argument(std::string(who) + ": waveform " + nn::shape_str(wave.shape()) +
                                " != expected (" + std::to_string(spec.output_length()) + ")");
  if (!shifts.empty() && static_cast<int>(shifts.size()) != spec.n_upsample_layers - 1)
    throw std::invalid_argument(std::string(who) + ": expected " +
                                std::to_string(spec.n_upsample_layers - 1) + " phase shifts");
  Tensor x = nn::reshape(wave, {1, spec.output_length()});
  for (int layer = 0; layer < spec.n_upsample_layers; ++layer) {
    x = nn::conv1d(x, p.conv_k[layer], spec.stride);
    x = nn::add(x, nn::broadcast_col(p.conv_b[layer], x.dim(1)));
    x = nn::leaky_relu(x, 0.2);
    if (!shifts.empty() && layer + 1 < spec.n_upsample_layers && shifts[layer] != 0)
      x = nn::time_shift_reflect(x, shifts[layer]);
  }
  return nn::dense(nn::reshape(x, {static_cast<int>(x.numel())}), p.out_w, p.out_b);
}

}  // namespace

Tensor discriminate(const Tensor& wave, const GeneratorSpec& spec, const CriticParams& p,
                    const std::vector<int>& shifts) {
  Tensor out = critic_trunk(wave, spec, p, shifts, "discriminate");
  if (out.numel() != 1) throw std::invalid_argument("discriminate: critic head must emit one score");
  return out;
}

std::vector<int> draw_phase_shifts(const GeneratorSpec& spec, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("draw_phase_shifts: n must be >= 0");
  std::vector<int> shifts(std::max(0, spec.n_upsample_layers - 1), 0);
  for (auto& s : shifts) s = n == 0 ? 0 : static_cast<int>(rng.uniform_int(-n, n));
  return shifts;
}

Tensor q_classify(const Tensor& wave, const GeneratorSpec& spec, const CriticParams& p) {
  if (spec.categorical_dim < 1)
    throw std::invalid_argument("q_classify: categorical_dim must be >= 1");
  return critic_trunk(wave, spec, p, {}, "q_classify");
}

long parameter_count(std::vector<Tensor> params) {
  long n = 0;
  for (auto& p : params) n += p.numel();
  return n;
}

long fc_parameter_count(const GeneratorSpec& spec) {
  return static_cast<long>(spec.latent_dim() + 1) * spec.bottleneck_channels * spec.base_frames;
}

}  // namespace phonogan::gan
