#pragma once

#include "avlit/model.hpp"

namespace avlit::testing {

/// Small model for gradient checks: 16x16 frames, 8 kHz, 160 fps so that
/// 200 samples span 4 frames.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.speakers = 2;
  c.audio_iters = 2;
  c.video_iters = 1;
  c.fusion_positions = {0};
  c.enc_channels = 16;
  c.audio_block = {.io_channels = 16, .bottleneck = 8, .stage_channels = 16, .stages = 2};
  c.video_block = {.io_channels = 8, .bottleneck = 8, .stage_channels = 8, .stages = 2};
  c.frame_height = 16;
  c.frame_width = 16;
  c.video_embed = frame_embedding_size(16, 16);
  c.sample_rate = 8000;
  c.fps = 160.0;
  return c;
}

}  // namespace avlit::testing
