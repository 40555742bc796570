#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace avlit {

/// One speaker's grayscale frame sequence, row-major [F, H, W].
struct FrameStack {
  std::uint32_t frames = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width; }
  bool operator==(const FrameStack&) const = default;
};

inline constexpr std::size_t kFramesHeaderBytes = 16;

/// AVFR container: "AVFR", u32 F, H, W (little-endian), then the pixels.
std::string frames_bytes(const FrameStack& stack);
FrameStack frames_from_bytes(const std::string& bytes);

void frames_write(const std::string& path, const FrameStack& stack);
FrameStack frames_read(const std::string& path);

}  // namespace avlit
