#include "avlit/frames.hpp"

#include <stdexcept>

#include "avlit/wav.hpp"
#include "byte_io.hpp"

namespace avlit {

std::string frames_bytes(const FrameStack& s) {
  if (s.frames == 0 || s.height == 0 || s.width == 0) throw std::invalid_argument("avfr: empty frame stack");
  if (s.pixels.size() != s.frame_size() * s.frames) throw std::invalid_argument("avfr: pixel count does not match F*H*W");
  std::string out = "AVFR";
  detail::put_le(out, s.frames);
  detail::put_le(out, s.height);
  detail::put_le(out, s.width);
  out.append(reinterpret_cast<const char*>(s.pixels.data()), s.pixels.size());
  return out;
}

FrameStack frames_from_bytes(const std::string& bytes) {
  detail::ByteReader in(bytes, "avfr");
  if (std::string(in.raw(4, "magic"), 4) != "AVFR") in.fail("bad magic", 0);
  FrameStack s;
  s.frames = in.get<std::uint32_t>("frame count");
  s.height = in.get<std::uint32_t>("height");
  s.width = in.get<std::uint32_t>("width");
  if (s.frames == 0) in.fail("zero frames", 4);
  if (s.height == 0 || s.width == 0) in.fail("zero frame size", s.height == 0 ? 8 : 12);
  const std::size_t n = s.frame_size() * s.frames;
  if (in.remaining() != n) {
    in.fail("payload is " + std::to_string(in.remaining()) + " bytes, header implies " + std::to_string(n),
            kFramesHeaderBytes);
  }
  const char* p = in.raw(n, "pixels");
  s.pixels.assign(reinterpret_cast<const std::uint8_t*>(p), reinterpret_cast<const std::uint8_t*>(p) + n);
  return s;
}

void frames_write(const std::string& path, const FrameStack& stack) { write_file(path, frames_bytes(stack)); }

FrameStack frames_read(const std::string& path) { return frames_from_bytes(read_file(path)); }

}  // namespace avlit
