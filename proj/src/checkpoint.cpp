#include "phonogan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace phonogan::gan {

namespace {

constexpr std::uint16_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

void put_spec(std::ostream& os, const GeneratorSpec& s) {
  put_u32(os, s.bottleneck_channels);
  put_u32(os, s.base_frames);
  put_u32(os, s.n_upsample_layers);
  put_u32(os, s.stride);
  put_u32(os, s.kernel_width);
  put_u32(os, s.categorical_dim);
  put_u32(os, s.continuous_dim);
  put_u32(os, s.base_width);
  put_u32(os, s.sample_rate);
}

GeneratorSpec get_spec(std::istream& is) {
  GeneratorSpec s;
  s.bottleneck_channels = static_cast<int>(get_u32(is));
  s.base_frames = static_cast<int>(get_u32(is));
  s.n_upsample_layers = static_cast<int>(get_u32(is));
  s.stride = static_cast<int>(get_u32(is));
  s.kernel_width = static_cast<int>(get_u32(is));
  s.categorical_dim = static_cast<int>(get_u32(is));
  s.continuous_dim = static_cast<int>(get_u32(is));
  s.base_width = static_cast<int>(get_u32(is));
  s.sample_rate = static_cast<int>(get_u32(is));
  return s;
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelCheckpoint::named_params() {
  auto v = g.named();
  for (auto& kv : d.named("d")) v.push_back(kv);
  for (auto& kv : q.named("q")) v.push_back(kv);
  return v;
}

ModelCheckpoint init_checkpoint(const GeneratorSpec& spec, std::uint64_t seed, Condition condition) {
  nn::Rng root(seed);
  ModelCheckpoint c;
  c.spec = spec;
  nn::Rng rg = root.derive('g');
  nn::Rng rd = root.derive('d');
  nn::Rng rq = root.derive('q');
  c.g = init_generator(spec, rg);
  c.d = init_critic(spec, 1, rd);
  c.q = init_critic(spec, spec.categorical_dim, rq);
  c.step = 0;
  c.seed = seed;
  c.condition = condition;
  return c;
}

void save_checkpoint(const std::string& path, ModelCheckpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write("PPCK", 4);
  put_u16(os, kVersion);
  auto params = ckpt.named_params();
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, t] : params) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(0);  // dtype tag: f32
    os.put(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    for (long i = 0; i < t.numel(); ++i) put_f32(os, static_cast<float>(t.values()[i]));
  }
  put_spec(os, ckpt.spec);
  os.put(static_cast<char>(ckpt.condition));
  put_u64(os, static_cast<std::uint64_t>(ckpt.step));
  put_u64(os, ckpt.seed);
  if (!os) throw std::runtime_error("short write on checkpoint: " + path);
}

ModelCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "PPCK", 4) != 0)
    throw std::runtime_error("not a PPCK checkpoint: " + path);
  std::uint16_t version = get_u16(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  std::uint32_t count = get_u32(is);
  std::map<std::string, Tensor> loaded;
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    int dtype = is.get();
    if (dtype != 0) throw std::runtime_error("unknown dtype tag in checkpoint record " + name);
    int rank = is.get();
    nn::Shape shape(rank);
    for (int i = 0; i < rank; ++i) shape[i] = static_cast<int>(get_u32(is));
    long n = nn::numel(shape);
    nn::Array vals(n);
    for (long i = 0; i < n; ++i) vals[i] = static_cast<double>(get_f32(is));
    if (!is) throw std::runtime_error("truncated checkpoint record " + name);
    if (!loaded.emplace(name, Tensor::leaf(shape, std::move(vals), true)).second)
      throw std::runtime_error("duplicate parameter '" + name + "' in checkpoint");
  }

  ModelCheckpoint c;
  c.spec = get_spec(is);
  c.spec.validate();
  int cond = is.get();
  c.condition = static_cast<Condition>(cond);
  c.step = static_cast<long>(get_u64(is));
  c.seed = get_u64(is);
  if (!is) throw std::runtime_error("truncated checkpoint trailer: " + path);

  // shape the containers from the spec, then fill by name
  nn::Rng dummy(0);
  c.g = init_generator(c.spec, dummy);
  c.d = init_critic(c.spec, 1, dummy);
  c.q = init_critic(c.spec, std::max(1, c.spec.categorical_dim), dummy);
  auto expected = c.named_params();
  if (expected.size() != loaded.size())
    throw std::runtime_error("checkpoint " + path + " holds " + std::to_string(loaded.size()) +
                             " records, architecture requires " + std::to_string(expected.size()));
  for (auto& [name, t] : expected) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw std::runtime_error("checkpoint missing parameter '" + name + "'");
    if (it->second.shape() != t.shape())
      throw std::runtime_error("checkpoint parameter '" + name + "' has shape " +
                               nn::shape_str(it->second.shape()) + ", architecture requires " +
                               nn::shape_str(t.shape()));
    t.values() = it->second.values();
  }
  return c;
}

}  // namespace phonogan::gan
