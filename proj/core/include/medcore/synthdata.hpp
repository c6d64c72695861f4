#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "medcore/model_config.hpp"
#include "medcore/tensor.hpp"

namespace medcore {

/// Row-major H x W binary mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width) : height_(height), width_(width), data_(static_cast<std::size_t>(height * width), 0) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y * width_ + x)]; }
  void set(int y, int x, bool v) { data_[static_cast<std::size_t>(y * width_ + x)] = v ? 1 : 0; }
  /// Out-of-image coordinates read as background.
  bool get(int y, int x) const { return y >= 0 && y < height_ && x >= 0 && x < width_ && at(y, x) != 0; }

  std::int64_t count() const;
  bool empty() const { return count() == 0; }
  const std::vector<std::uint8_t>& data() const noexcept { return data_; }

  Tensor to_tensor() const;
  static BinaryMask from_tensor(const Tensor& t, double threshold = 0.5);
  /// Pixels whose logit is strictly positive (probability > 0.5).
  static BinaryMask from_logits(const Tensor& logits);

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class ShapeFamily { crisp_ellipse, low_contrast_blob, textured_ellipse, ragged_polygon };
const char* shape_family_name(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& name);

struct DistributionSpec {
  int id = 0;
  ShapeFamily family = ShapeFamily::crisp_ellipse;
  double contrast = 0.5;
  double noise_sigma = 0.02;
  int softness = 0;        ///< box-blur radius of the intensity edge, pixels
  double texture = 0.0;    ///< amplitude of the sinusoidal texture
  int size_min = 4;        ///< shape radius range, pixels
  int size_max = 11;
  int jitter = 2;          ///< prompt box jitter j, pixels
  double weight = 1.0;     ///< mixture weight pi_r
};

/// Integer shape description in doubled pixel coordinates (pixel (x, y) has
/// centre (2x + 1, 2y + 1)). Rasterization is an exact integer inequality test.
struct Ellipse {
  std::int64_t cx = 0, cy = 0;  ///< doubled centre
  std::int64_t a = 1, b = 1;    ///< doubled semi-axes
  std::int64_t p = 1, q = 0, r = 1;  ///< rotation (cos, sin) = (p/r, q/r), p^2 + q^2 = r^2
  bool contains(std::int64_t x2, std::int64_t y2) const;
};

struct Geometry {
  std::vector<Ellipse> ellipses;  ///< union
  std::vector<std::pair<std::int64_t, std::int64_t>> polygon;  ///< doubled vertices, simple polygon
  bool contains(std::int64_t x2, std::int64_t y2) const;
  BinaryMask rasterize(int image_size) const;
};

struct Sample {
  Tensor image;  ///< 3 x H x W in [0, 1]
  BinaryMask mask;
  PromptBox box;
  Geometry geometry;
};

/// Deterministic given (spec, seed); sample i depends only on (spec.id, seed, i).
std::vector<Sample> generate(const DistributionSpec& spec, std::uint64_t seed, int n, int image_size);
Sample generate_one(const DistributionSpec& spec, std::uint64_t seed, std::int64_t index, int image_size);

/// Inclusive-exclusive tight bounding box of a nonempty mask.
PromptBox tight_box(const BinaryMask& mask);

/// Mixture of specs drawn by weight; index i picks its spec and sample deterministically.
class MixtureSource {
 public:
  MixtureSource(std::vector<DistributionSpec> specs, std::uint64_t seed, int image_size);
  Sample sample(std::int64_t index) const;
  std::vector<Sample> take(std::int64_t first, int n) const;
  const std::vector<DistributionSpec>& specs() const noexcept { return specs_; }

 private:
  std::vector<DistributionSpec> specs_;
  std::uint64_t seed_;
  int image_size_;
};

/// Default task suite: the base distribution and R = 3 adapted ones.
DistributionSpec default_base_spec();
std::vector<DistributionSpec> default_adapted_specs();

/// Dump samples with the checkpoint tensor encoding ("sample/<i>/image|mask|box").
void dump_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

}  // namespace medcore
