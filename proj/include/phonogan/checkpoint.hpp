#pragma once

#include "phonogan/models.hpp"

#include <cstdint>
#include <string>

namespace phonogan::gan {

/// Trained state of one model triple plus the architecture that shaped it.
struct ModelCheckpoint {
  GeneratorSpec spec;
  GeneratorParams g;
  CriticParams d;
  CriticParams q;
  long step = 0;
  std::uint64_t seed = 0;
  Condition condition = Condition::unspecified;

  std::vector<std::pair<std::string, Tensor>> named_params();
};

ModelCheckpoint init_checkpoint(const GeneratorSpec& spec, std::uint64_t seed,
                                Condition condition = Condition::unspecified);

/// PPCK container: magic "PPCK", u16 version, u32 record count, records of
/// (u32 name length, name, u8 dtype tag 0 = f32, u8 rank, u32 dims...,
/// little-endian f32 payload), then the GeneratorSpec block, condition tag,
/// step counter and seed. Values are rounded to f32 on save; save(load(x))
/// is byte-identical to x.
void save_checkpoint(const std::string& path, ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace phonogan::gan
