#pragma once

#include <string>
#include <vector>

namespace phonogan::wav {

/// Mono PCM 16-bit signed little-endian RIFF/WAVE. Samples are clamped to
/// [-1, 1] and scaled by 32767 on write.
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate);

struct WavData {
  std::vector<double> samples;
  int sample_rate = 0;
};

WavData read_wav(const std::string& path);

}  // namespace phonogan::wav
