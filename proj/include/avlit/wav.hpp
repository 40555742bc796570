#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avlit {

enum class WavEncoding { pcm16, float32 };

/// Interleaved samples in [-1, 1] (not enforced for float32).
struct Wav {
  std::uint32_t sample_rate = 16000;
  std::uint16_t channels = 1;
  std::vector<float> samples;

  std::size_t frames() const { return channels == 0 ? 0 : samples.size() / channels; }
};

/// RIFF/WAVE serialisation. PCM16 maps x to round(x * 32768) clamped to int16.
std::string wav_bytes(const Wav& wav, WavEncoding encoding);
/// Accepts PCM16, IEEE float32 and their WAVE_FORMAT_EXTENSIBLE forms.
/// Throws FormatError with the byte offset of the first bad field.
Wav wav_from_bytes(const std::string& bytes);

void wav_write(const std::string& path, const Wav& wav, WavEncoding encoding = WavEncoding::float32);
Wav wav_read(const std::string& path);

/// Mono convenience wrappers.
void wav_write(const std::string& path, const std::vector<float>& mono, std::uint32_t sample_rate,
               WavEncoding encoding = WavEncoding::float32);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace avlit
