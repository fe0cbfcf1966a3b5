#pragma once

#include <string>
#include <vector>

namespace th::io {

struct WavData {
  std::vector<double> samples;  // mono, [-1, 1]
  int sample_rate = 0;
};

/// Reads 16-bit PCM WAV; stereo is downmixed by averaging the channels.
WavData read_wav(const std::string& path);
void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate);

}  // namespace th::io
