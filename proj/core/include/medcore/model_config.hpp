#pragma once

#include <string>
#include <utility>

namespace medcore {

/// Architecture of the prompt-conditioned ViT segmenter. Per-block head and
/// MLP widths are read from the parameter shapes, so the same config drives
/// both the full and physically pruned models.
struct ModelConfig {
  int image_size = 32;
  int patch_size = 4;
  int embed_dim = 64;
  int num_blocks = 4;
  int heads = 4;
  int mlp_hidden = 128;
  int decoder_channels1 = 32;
  int decoder_channels2 = 16;
  double ln_eps = 1e-5;

  int head_dim() const { return embed_dim / heads; }
  int grid() const { return image_size / patch_size; }
  int num_patches() const { return grid() * grid(); }
  /// Patch tokens plus the prompt token.
  int tokens() const { return num_patches() + 1; }
  /// Integer upsampling factors of the two decoder stages; product == patch_size.
  std::pair<int, int> upsample_factors() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Box prompt in pixel coordinates, half-open: [x0, x1) x [y0, y1).
struct PromptBox {
  int x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  void validate(int width, int height) const;
  friend bool operator==(const PromptBox&, const PromptBox&) = default;
};

std::string block_param(int block, const std::string& leaf);

}  // namespace medcore
