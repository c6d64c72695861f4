#include "medcore/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "medcore/checkpoint.hpp"
#include "medcore/error.hpp"
#include "medcore/rng.hpp"

namespace medcore {

std::int64_t BinaryMask::count() const {
  std::int64_t n = 0;
  for (auto v : data_) n += v != 0;
  return n;
}

Tensor BinaryMask::to_tensor() const {
  Tensor t(Shape{height_, width_});
  for (std::size_t i = 0; i < data_.size(); ++i) t[i] = data_[i] ? 1.0 : 0.0;
  return t;
}

BinaryMask BinaryMask::from_tensor(const Tensor& t, double threshold) {
  if (t.rank() != 2) throw ShapeError("BinaryMask::from_tensor: expected H x W, got " + shape_string(t.dims()));
  BinaryMask m(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
  for (std::size_t i = 0; i < t.size(); ++i) m.data_[i] = t[i] > threshold ? 1 : 0;
  return m;
}

BinaryMask BinaryMask::from_logits(const Tensor& logits) { return from_tensor(logits, 0.0); }

const char* shape_family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::crisp_ellipse: return "crisp-ellipse";
    case ShapeFamily::low_contrast_blob: return "low-contrast-blob";
    case ShapeFamily::textured_ellipse: return "textured-ellipse";
    case ShapeFamily::ragged_polygon: return "ragged-polygon";
  }
  return "?";
}

ShapeFamily parse_shape_family(const std::string& name) {
  for (auto f : {ShapeFamily::crisp_ellipse, ShapeFamily::low_contrast_blob, ShapeFamily::textured_ellipse,
                 ShapeFamily::ragged_polygon}) {
    if (name == shape_family_name(f)) return f;
  }
  throw ConfigError("unknown shape family '" + name + "'");
}

bool Ellipse::contains(std::int64_t x2, std::int64_t y2) const {
  const std::int64_t dx = x2 - cx, dy = y2 - cy;
  const std::int64_t u = p * dx + q * dy;
  const std::int64_t v = -q * dx + p * dy;
  // (u / (r a))^2 + (v / (r b))^2 <= 1, cleared of denominators.
  return u * u * b * b + v * v * a * a <= r * r * a * a * b * b;
}

bool Geometry::contains(std::int64_t x2, std::int64_t y2) const {
  for (const auto& e : ellipses) {
    if (e.contains(x2, y2)) return true;
  }
  if (polygon.size() < 3) return false;
  // Even-odd crossing test along +x with exact integer comparisons.
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const auto [xi, yi] = polygon[i];
    const auto [xj, yj] = polygon[j];
    if ((yi > y2) == (yj > y2)) continue;
    const std::int64_t lhs = (x2 - xi) * (yj - yi);
    const std::int64_t rhs = (y2 - yi) * (xj - xi);
    if (yj > yi ? lhs < rhs : lhs > rhs) inside = !inside;
  }
  return inside;
}

BinaryMask Geometry::rasterize(int image_size) const {
  BinaryMask m(image_size, image_size);
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x) m.set(y, x, contains(2 * x + 1, 2 * y + 1));
  return m;
}

PromptBox tight_box(const BinaryMask& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) throw ArgumentError("tight_box: mask is empty");
  return {x0, y0, x1 + 1, y1 + 1};
}

namespace {

// Rotations with rational cosine and sine: Pythagorean triples (p, q, r).
constexpr std::array<std::array<std::int64_t, 3>, 7> kRotations = {{
    {1, 0, 1}, {4, 3, 5}, {3, 4, 5}, {12, 5, 13}, {5, 12, 13}, {15, 8, 17}, {8, 15, 17}}};

// 16 directions round(1000 * (cos, sin)(2 pi k / 16)), written out so vertex
// placement never depends on libm.
constexpr std::array<std::array<std::int64_t, 2>, 16> kDirections = {{{1000, 0},
                                                                     {924, 383},
                                                                     {707, 707},
                                                                     {383, 924},
                                                                     {0, 1000},
                                                                     {-383, 924},
                                                                     {-707, 707},
                                                                     {-924, 383},
                                                                     {-1000, 0},
                                                                     {-924, -383},
                                                                     {-707, -707},
                                                                     {-383, -924},
                                                                     {0, -1000},
                                                                     {383, -924},
                                                                     {707, -707},
                                                                     {924, -383}}};

Ellipse random_ellipse(CounterRng& rng, const DistributionSpec& spec, int size) {
  Ellipse e;
  e.a = 2 * rng.uniform_int(spec.size_min, spec.size_max);
  e.b = 2 * rng.uniform_int(spec.size_min, spec.size_max);
  const std::int64_t margin = std::min<std::int64_t>(std::max(e.a, e.b), size);
  e.cx = rng.uniform_int(margin, 2 * size - margin);
  e.cy = rng.uniform_int(margin, 2 * size - margin);
  const auto& rot = kRotations[static_cast<std::size_t>(rng.uniform_int(0, kRotations.size() - 1))];
  e.p = rot[0];
  e.q = rng.uniform_int(0, 1) ? rot[1] : -rot[1];
  e.r = rot[2];
  return e;
}

Geometry random_geometry(CounterRng& rng, const DistributionSpec& spec, int size) {
  Geometry g;
  switch (spec.family) {
    case ShapeFamily::crisp_ellipse:
    case ShapeFamily::textured_ellipse:
      g.ellipses.push_back(random_ellipse(rng, spec, size));
      break;
    case ShapeFamily::low_contrast_blob: {
      const Ellipse main = random_ellipse(rng, spec, size);
      g.ellipses.push_back(main);
      Ellipse lobe = main;
      lobe.a = std::max<std::int64_t>(2, main.a * 3 / 5);
      lobe.b = std::max<std::int64_t>(2, main.b * 3 / 5);
      const std::int64_t side = rng.uniform_int(0, 1) ? 1 : -1;
      lobe.cx = main.cx + side * (main.a * 3 / 5);
      lobe.cy = main.cy + rng.uniform_int(-main.b / 2, main.b / 2);
      g.ellipses.push_back(lobe);
      break;
    }
    case ShapeFamily::ragged_polygon: {
      const std::int64_t radius = 2 * rng.uniform_int(spec.size_min, spec.size_max);
      const std::int64_t margin = std::min<std::int64_t>(radius, size);
      const std::int64_t cx = rng.uniform_int(margin, 2 * size - margin);
      const std::int64_t cy = rng.uniform_int(margin, 2 * size - margin);
      const std::int64_t rmin = std::max<std::int64_t>(2, (radius * 11 + 19) / 20);
      for (const auto& d : kDirections) {
        const std::int64_t rk = rng.uniform_int(rmin, radius);
        g.polygon.emplace_back(cx + rk * d[0] / 1000, cy + rk * d[1] / 1000);
      }
      break;
    }
  }
  return g;
}

void soften(const BinaryMask& mask, int radius, std::vector<double>& out) {
  const int h = mask.height(), w = mask.width();
  out.assign(static_cast<std::size_t>(h * w), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          acc += mask.at(yy, xx);
          ++n;
        }
      }
      out[static_cast<std::size_t>(y * w + x)] = acc / n;
    }
  }
}

void validate_spec(const DistributionSpec& spec, int image_size) {
  if (spec.size_min < 1 || spec.size_max < spec.size_min) {
    throw ArgumentError("degenerate distribution spec " + std::to_string(spec.id) + ": shape radius range [" +
                        std::to_string(spec.size_min) + ", " + std::to_string(spec.size_max) + "] has zero area");
  }
  if (image_size < 4) throw ArgumentError("image_size must be >= 4");
  if (spec.jitter < 0) throw ArgumentError("box jitter must be >= 0");
  if (spec.softness < 0 || spec.noise_sigma < 0 || spec.contrast < 0 || spec.texture < 0) {
    throw ArgumentError("distribution spec " + std::to_string(spec.id) + " has a negative appearance parameter");
  }
  if (!(spec.weight >= 0)) throw ArgumentError("distribution weight must be >= 0");
}

}  // namespace

Sample generate_one(const DistributionSpec& spec, std::uint64_t seed, std::int64_t index, int image_size) {
  validate_spec(spec, image_size);
  const std::uint64_t stream = (static_cast<std::uint64_t>(spec.id) << 40) ^ static_cast<std::uint64_t>(index);
  CounterRng rng(seed, stream);
  const std::int64_t pixels = static_cast<std::int64_t>(image_size) * image_size;

  Sample s;
  constexpr int kAttempts = 2000;
  int attempt = 0;
  for (; attempt < kAttempts; ++attempt) {
    s.geometry = random_geometry(rng, spec, image_size);
    s.mask = s.geometry.rasterize(image_size);
    const std::int64_t area = s.mask.count();
    // Foreground fraction within [4%, 60%].
    if (25 * area >= pixels && 5 * area <= 3 * pixels) break;
  }
  if (attempt == kAttempts) {
    throw ArgumentError("distribution spec " + std::to_string(spec.id) +
                        " cannot produce masks covering 4%-60% of the image");
  }

  PromptBox box = tight_box(s.mask);
  box.x0 = std::max<int>(0, box.x0 - static_cast<int>(rng.uniform_int(0, spec.jitter)));
  box.y0 = std::max<int>(0, box.y0 - static_cast<int>(rng.uniform_int(0, spec.jitter)));
  box.x1 = std::min<int>(image_size, box.x1 + static_cast<int>(rng.uniform_int(0, spec.jitter)));
  box.y1 = std::min<int>(image_size, box.y1 + static_cast<int>(rng.uniform_int(0, spec.jitter)));
  s.box = box;

  std::vector<double> soft;
  soften(s.mask, spec.softness, soft);
  std::array<double, 3> bg{}, fg{};
  for (int c = 0; c < 3; ++c) {
    bg[static_cast<std::size_t>(c)] = rng.uniform(0.15, 0.45);
    fg[static_cast<std::size_t>(c)] = bg[static_cast<std::size_t>(c)] + spec.contrast * rng.uniform(0.7, 1.0);
  }
  const double freq_fg = rng.uniform(0.6, 1.2), freq_bg = rng.uniform(0.3, 0.7);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  s.image = Tensor(Shape{3, image_size, image_size});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image_size; ++y) {
      for (int x = 0; x < image_size; ++x) {
        const double t = soft[static_cast<std::size_t>(y * image_size + x)];
        const auto ci = static_cast<std::size_t>(c);
        double v = bg[ci] + (fg[ci] - bg[ci]) * t;
        if (spec.texture > 0) {
          v += spec.texture * t * std::sin(freq_fg * (x + y) + phase);
          v += 0.5 * spec.texture * (1.0 - t) * std::sin(freq_bg * (x - y) + phase);
        }
        if (spec.noise_sigma > 0) v += spec.noise_sigma * rng.normal();
        s.image[static_cast<std::size_t>((c * image_size + y) * image_size + x)] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return s;
}

std::vector<Sample> generate(const DistributionSpec& spec, std::uint64_t seed, int n, int image_size) {
  if (n < 1) throw ArgumentError("generate: n must be >= 1, got " + std::to_string(n));
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(generate_one(spec, seed, i, image_size));
  return out;
}

MixtureSource::MixtureSource(std::vector<DistributionSpec> specs, std::uint64_t seed, int image_size)
    : specs_(std::move(specs)), seed_(seed), image_size_(image_size) {
  if (specs_.empty()) throw ArgumentError("MixtureSource: no distributions");
  double total = 0.0;
  for (const auto& s : specs_) {
    validate_spec(s, image_size);
    total += s.weight;
  }
  if (!(total > 0)) throw ArgumentError("MixtureSource: weights sum to zero");
}

Sample MixtureSource::sample(std::int64_t index) const {
  CounterRng pick(seed_, 0x6d69787475726500ULL ^ static_cast<std::uint64_t>(index));
  double total = 0.0;
  for (const auto& s : specs_) total += s.weight;
  double u = pick.uniform() * total;
  std::size_t k = 0;
  for (; k + 1 < specs_.size(); ++k) {
    if (u < specs_[k].weight) break;
    u -= specs_[k].weight;
  }
  return generate_one(specs_[k], seed_, index, image_size_);
}

std::vector<Sample> MixtureSource::take(std::int64_t first, int n) const {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(sample(first + i));
  return out;
}

DistributionSpec default_base_spec() {
  DistributionSpec s;
  s.id = 0;
  s.family = ShapeFamily::crisp_ellipse;
  s.contrast = 0.5;
  s.noise_sigma = 0.02;
  return s;
}

std::vector<DistributionSpec> default_adapted_specs() {
  DistributionSpec blob;
  blob.id = 1;
  blob.family = ShapeFamily::low_contrast_blob;
  blob.contrast = 0.2;
  blob.noise_sigma = 0.05;
  blob.softness = 1;
  DistributionSpec textured;
  textured.id = 2;
  textured.family = ShapeFamily::textured_ellipse;
  textured.contrast = 0.35;
  textured.noise_sigma = 0.03;
  textured.texture = 0.15;
  DistributionSpec ragged;
  ragged.id = 3;
  ragged.family = ShapeFamily::ragged_polygon;
  ragged.contrast = 0.4;
  ragged.noise_sigma = 0.03;
  std::vector<DistributionSpec> out{blob, textured, ragged};
  for (auto& s : out) s.weight = 1.0 / 3.0;
  return out;
}

void dump_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  TensorEntries entries;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string prefix = "sample/" + std::to_string(i) + "/";
    const auto& s = samples[i];
    entries.emplace_back(prefix + "image", s.image);
    entries.emplace_back(prefix + "mask", s.mask.to_tensor());
    entries.emplace_back(prefix + "box", Tensor(Shape{4}, {static_cast<double>(s.box.x0), static_cast<double>(s.box.y0),
                                                            static_cast<double>(s.box.x1), static_cast<double>(s.box.y1)}));
  }
  save_entries(path, entries);
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  const TensorEntries entries = load_entries(path);
  if (entries.size() % 3 != 0) throw IoError("sample dump " + path.string() + " has a partial record");
  std::vector<Sample> out;
  for (std::size_t i = 0; i < entries.size(); i += 3) {
    Sample s;
    s.image = entries[i].second;
    s.mask = BinaryMask::from_tensor(entries[i + 1].second);
    const Tensor& b = entries[i + 2].second;
    if (b.size() != 4) throw IoError("sample dump " + path.string() + ": malformed box entry");
    s.box = {static_cast<int>(b[0]), static_cast<int>(b[1]), static_cast<int>(b[2]), static_cast<int>(b[3])};
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace medcore
