#include "meetsync/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "meetsync/digest.hpp"
#include "meetsync/error.hpp"

namespace meetsync {

namespace {

static_assert(std::endian::native == std::endian::little, "PCM codecs assume a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}
std::uint16_t get_u16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    (static_cast<unsigned char>(b[at + 1]) << 8));
}

[[noreturn]] void bad(std::string_view source, const std::string& why) {
  throw Error(ErrorKind::parse, std::string(source) + ": " + why);
}

}  // namespace

std::string encode_wav16(const PcmBuffer& pcm) {
  const auto n = static_cast<std::uint32_t>(pcm.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(pcm.sample_rate_hz));
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, rate);
  put_u32(out, rate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double x : pcm.samples) {
    const double clamped = std::clamp(x, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

PcmBuffer decode_wav16(std::string_view b, std::string_view source) {
  if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") {
    bad(source, "not a RIFF/WAVE file");
  }
  PcmBuffer pcm;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const auto id = b.substr(pos, 4);
    const std::size_t len = get_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > b.size()) bad(source, "truncated chunk '" + std::string(id) + "'");
    if (id == "fmt ") {
      if (len < 16) bad(source, "short fmt chunk");
      if (get_u16(b, body) != 1) bad(source, "only integer PCM is supported");
      if (get_u16(b, body + 2) != 1) bad(source, "only mono WAV is supported");
      if (get_u16(b, body + 14) != 16) bad(source, "only 16-bit WAV is supported");
      pcm.sample_rate_hz = get_u32(b, body + 4);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) bad(source, "data chunk before fmt chunk");
      pcm.samples.resize(len / 2);
      for (std::size_t i = 0; i < pcm.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(get_u16(b, body + 2 * i));
        pcm.samples[i] = static_cast<double>(v) / 32767.0;
      }
      return pcm;
    }
    pos = body + len + (len & 1);
  }
  bad(source, "no data chunk");
}

std::string encode_f32(const PcmBuffer& pcm) {
  std::string out(pcm.samples.size() * 4, '\0');
  for (std::size_t i = 0; i < pcm.samples.size(); ++i) {
    const auto f = static_cast<float>(pcm.samples[i]);
    std::memcpy(out.data() + 4 * i, &f, 4);
  }
  return out;
}

PcmBuffer decode_f32(std::string_view bytes, double sample_rate_hz, std::string_view source) {
  if (bytes.size() % 4 != 0) bad(source, "float32 file size is not a multiple of 4");
  PcmBuffer pcm;
  pcm.sample_rate_hz = sample_rate_hz;
  pcm.samples.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < pcm.samples.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + 4 * i, 4);
    if (!std::isfinite(f)) bad(source, "non-finite sample at index " + std::to_string(i));
    pcm.samples[i] = f;
  }
  return pcm;
}

PcmBuffer read_pcm(const std::filesystem::path& path, double raw_sample_rate_hz) {
  const auto ext = path.extension().string();
  const auto bytes = read_file(path);
  if (ext == ".wav") return decode_wav16(bytes, path.string());
  if (ext == ".f32" || ext == ".raw") return decode_f32(bytes, raw_sample_rate_hz, path.string());
  throw Error(ErrorKind::configuration, "unsupported PCM file extension: " + path.string());
}

}  // namespace meetsync
