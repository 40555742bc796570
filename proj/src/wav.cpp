#include "avlit/wav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "byte_io.hpp"

namespace avlit {

namespace {

using detail::put_le;

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::int16_t to_pcm16(float x) {
  const double q = std::nearbyint(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
}

}  // namespace

std::string wav_bytes(const Wav& wav, WavEncoding encoding) {
  if (wav.channels == 0) throw std::invalid_argument("wav: zero channels");
  if (wav.samples.size() % wav.channels != 0) throw std::invalid_argument("wav: sample count not a multiple of channels");
  const std::uint16_t bytes_per = encoding == WavEncoding::pcm16 ? 2 : 4;
  const std::uint64_t data_size = static_cast<std::uint64_t>(wav.samples.size()) * bytes_per;
  if (data_size > 0xFFFFFFFFull - 36) throw std::invalid_argument("wav: data exceeds the 4 GiB RIFF limit");

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(36 + data_size));
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, wav.channels);
  put_le<std::uint32_t>(out, wav.sample_rate);
  put_le<std::uint32_t>(out, wav.sample_rate * wav.channels * bytes_per);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(wav.channels * bytes_per));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per));
  out += "data";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data_size));
  if (encoding == WavEncoding::pcm16) {
    for (float x : wav.samples) put_le<std::int16_t>(out, to_pcm16(x));
  } else {
    out.append(reinterpret_cast<const char*>(wav.samples.data()), wav.samples.size() * sizeof(float));
  }
  return out;
}

Wav wav_from_bytes(const std::string& bytes) {
  detail::ByteReader in(bytes, "wav");
  if (std::string(in.raw(4, "RIFF tag"), 4) != "RIFF") in.fail("missing RIFF tag", 0);
  in.get<std::uint32_t>("RIFF size");
  if (std::string(in.raw(4, "WAVE tag"), 4) != "WAVE") in.fail("missing WAVE tag", 8);

  Wav wav;
  std::uint16_t format = 0, bits = 0, block_align = 0;
  bool have_fmt = false;
  while (true) {
    const std::size_t chunk_at = in.pos();
    const std::string id(in.raw(4, "chunk id"), 4);
    const auto size = in.get<std::uint32_t>("chunk size");
    if (id == "fmt ") {
      if (size < 16) in.fail("fmt chunk shorter than 16 bytes", chunk_at + 4);
      const std::size_t body = in.pos();
      const std::size_t format_at = in.pos();
      format = in.get<std::uint16_t>("format tag");
      wav.channels = in.get<std::uint16_t>("channel count");
      wav.sample_rate = in.get<std::uint32_t>("sample rate");
      in.get<std::uint32_t>("byte rate");
      block_align = in.get<std::uint16_t>("block align");
      bits = in.get<std::uint16_t>("bits per sample");
      if (format == kFormatExtensible) {
        if (size < 40) in.fail("extensible fmt chunk shorter than 40 bytes", chunk_at + 4);
        in.skip(8, "extension header");
        format = in.get<std::uint16_t>("sub-format");
      }
      if (format != kFormatPcm && format != kFormatFloat) in.fail("unsupported format tag " + std::to_string(format), format_at);
      if (wav.channels == 0) in.fail("zero channels", format_at + 2);
      if ((format == kFormatPcm && bits != 16) || (format == kFormatFloat && bits != 32)) {
        in.fail("unsupported bit depth " + std::to_string(bits), format_at + 14);
      }
      if (block_align != wav.channels * bits / 8) in.fail("block align inconsistent with channels", format_at + 12);
      in.skip(size - (in.pos() - body) + (size & 1), "fmt chunk");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) in.fail("data chunk before fmt chunk", chunk_at);
      if (size % block_align != 0) in.fail("data size not a multiple of the block size", chunk_at + 4);
      const char* p = in.raw(size, "sample data");
      const std::size_t n = size / (bits / 8);
      wav.samples.resize(n);
      if (format == kFormatPcm) {
        for (std::size_t i = 0; i < n; ++i) {
          std::int16_t v;
          std::memcpy(&v, p + 2 * i, 2);
          wav.samples[i] = static_cast<float>(v) / 32768.0f;
        }
      } else {
        std::memcpy(wav.samples.data(), p, size);
      }
      return wav;
    } else {
      in.skip(size + (size & 1), "chunk body");
    }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

void wav_write(const std::string& path, const Wav& wav, WavEncoding encoding) {
  write_file(path, wav_bytes(wav, encoding));
}

Wav wav_read(const std::string& path) { return wav_from_bytes(read_file(path)); }

void wav_write(const std::string& path, const std::vector<float>& mono, std::uint32_t sample_rate,
               WavEncoding encoding) {
  wav_write(path, Wav{sample_rate, 1, mono}, encoding);
}

}  // namespace avlit
