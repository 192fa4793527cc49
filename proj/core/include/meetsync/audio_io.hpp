#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace meetsync {

struct PcmBuffer {
  double sample_rate_hz = 48000.0;
  std::vector<double> samples;  // normalized to [-1, 1]
};

/// 16-bit little-endian mono PCM WAV.
std::string encode_wav16(const PcmBuffer& pcm);
PcmBuffer decode_wav16(std::string_view bytes, std::string_view source_name);

/// Headerless little-endian float32 mono; the rate is not stored in the file.
std::string encode_f32(const PcmBuffer& pcm);
PcmBuffer decode_f32(std::string_view bytes, double sample_rate_hz, std::string_view source_name);

/// Dispatches on extension: .wav is WAV, .f32/.raw is float32.
PcmBuffer read_pcm(const std::filesystem::path& path, double raw_sample_rate_hz = 48000.0);

}  // namespace meetsync
