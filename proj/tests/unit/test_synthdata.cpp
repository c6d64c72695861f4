#include <cstdlib>

#include "doctest.h"
#include "medcore/error.hpp"
#include "medcore/morphology.hpp"
#include "medcore/synthdata.hpp"
#include "test_support.hpp"

using namespace medcore;
using medcore::testing::scratch_dir;

namespace {

BinaryMask random_mask(std::uint64_t seed, int size, double p) {
  CounterRng rng(seed, 11);
  BinaryMask m(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) m.set(y, x, rng.uniform() < p);
  }
  return m;
}

// Brute force: dilation reaches every pixel within Manhattan distance w of the
// foreground; erosion keeps pixels whose whole Manhattan w-ball is in-image foreground.
BinaryMask band_oracle(const BinaryMask& m, int w) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      bool dil = false, ero = true;
      for (int dy = -w; dy <= w; ++dy) {
        for (int dx = -w; dx <= w; ++dx) {
          if (std::abs(dx) + std::abs(dy) > w) continue;
          const bool v = m.get(y + dy, x + dx);
          dil |= v;
          ero &= v;
        }
      }
      out.set(y, x, dil && !ero);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("synthdata") {
  TEST_CASE("generation is deterministic per sample index") {
    const auto spec = default_adapted_specs()[1];
    const auto a = generate(spec, 5, 4, 32);
    const auto b = generate(spec, 5, 4, 32);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].image == b[i].image);
      CHECK(a[i].mask == b[i].mask);
      CHECK(a[i].box == b[i].box);
    }
    const Sample third = generate_one(spec, 5, 2, 32);
    CHECK(third.image == a[2].image);
    CHECK_FALSE(generate(spec, 6, 1, 32)[0].mask == a[0].mask);
  }

  TEST_CASE("masks cover 4%-60% of the image and sit inside their box") {
    std::vector<DistributionSpec> specs = default_adapted_specs();
    specs.push_back(default_base_spec());
    for (const auto& spec : specs) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Sample s = generate_one(spec, seed, 0, 32);
        const double frac = static_cast<double>(s.mask.count()) / (32.0 * 32.0);
        CHECK(frac >= 0.04);
        CHECK(frac <= 0.60);
        const PromptBox t = tight_box(s.mask);
        CHECK(s.box.x0 <= t.x0);
        CHECK(s.box.y0 <= t.y0);
        CHECK(s.box.x1 >= t.x1);
        CHECK(s.box.y1 >= t.y1);
        CHECK(t.x0 - s.box.x0 <= spec.jitter);
        CHECK(s.box.x1 - t.x1 <= spec.jitter);
        for (std::size_t i = 0; i < s.image.size(); ++i) {
          CHECK(s.image[i] >= 0.0);
          CHECK(s.image[i] <= 1.0);
        }
      }
    }
  }

  TEST_CASE("zero jitter gives the tight bounding box") {
    DistributionSpec spec = default_base_spec();
    spec.jitter = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Sample s = generate_one(spec, seed, 0, 32);
      CHECK(s.box == tight_box(s.mask));
    }
  }

  TEST_CASE("crisp ellipse mask matches a per-pixel inequality test") {
    DistributionSpec spec = default_base_spec();
    spec.noise_sigma = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Sample s = generate_one(spec, seed, 0, 32);
      REQUIRE(s.geometry.ellipses.size() >= 1);
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
          bool inside = false;
          for (const auto& e : s.geometry.ellipses) {
            // Rotate the doubled pixel centre into the ellipse frame and test the quadric.
            const std::int64_t dx = 2 * x + 1 - e.cx, dy = 2 * y + 1 - e.cy;
            const std::int64_t u = e.p * dx + e.q * dy, v = -e.q * dx + e.p * dy;
            inside |= u * u * e.b * e.b + v * v * e.a * e.a <= e.a * e.a * e.b * e.b * e.r * e.r;
          }
          CHECK(s.mask.get(y, x) == inside);
        }
      }
    }
  }

  TEST_CASE("degenerate specs are rejected") {
    DistributionSpec spec = default_base_spec();
    spec.size_min = 0;
    spec.size_max = 0;
    CHECK_THROWS_AS(generate(spec, 1, 1, 32), ArgumentError);
    CHECK_THROWS_AS(generate(default_base_spec(), 1, 0, 32), ArgumentError);
  }

  TEST_CASE("mixture picks specs deterministically") {
    const MixtureSource mix(default_adapted_specs(), 3, 32);
    const auto a = mix.take(10, 5);
    const auto b = mix.take(10, 5);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].image == b[i].image);
    CHECK(mix.sample(12).mask == a[2].mask);
  }

  TEST_CASE("sample dump round trip") {
    const auto samples = generate(default_base_spec(), 2, 3, 16);
    const auto path = scratch_dir("samples") / "s.bin";
    dump_samples(path, samples);
    const auto back = load_samples(path);
    REQUIRE(back.size() == samples.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].image == samples[i].image);
      CHECK(back[i].mask == samples[i].mask);
      CHECK(back[i].box == samples[i].box);
    }
  }
}

TEST_SUITE("morphology") {
  TEST_CASE("boundary map examples") {
    CHECK(boundary_map(BinaryMask(8, 8), 1).empty());

    BinaryMask dot(5, 5);
    dot.set(2, 2, true);
    const BinaryMask b = boundary_map(dot, 1);
    CHECK(b.count() == 5);
    CHECK(b.get(2, 2));
    CHECK(b.get(1, 2));
    CHECK(b.get(3, 2));
    CHECK(b.get(2, 1));
    CHECK(b.get(2, 3));

    BinaryMask full(6, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) full.set(y, x, true);
    }
    const BinaryMask frame = boundary_map(full, 1);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) CHECK(frame.get(y, x) == (y == 0 || x == 0 || y == 5 || x == 5));
    }
    CHECK_THROWS_AS(boundary_map(dot, 0), ArgumentError);
  }

  TEST_CASE("boundary map matches a brute-force oracle and grows with width") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const BinaryMask m = random_mask(seed, 12, 0.3 + 0.02 * static_cast<double>(seed));
      for (int w = 1; w <= 4; ++w) {
        const BinaryMask band = boundary_map(m, w);
        CHECK(band == band_oracle(m, w));
        if (w >= 2) {
          const BinaryMask inner = boundary_map(m, w - 1);
          for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) CHECK((!inner.get(y, x) || band.get(y, x)));
          }
        }
      }
    }
  }
}
