#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "medcore/error.hpp"
#include "medcore/losses.hpp"
#include "medcore/metrics.hpp"
#include "medcore/morphology.hpp"
#include "medcore/stats.hpp"
#include "test_support.hpp"

using namespace medcore;

namespace {

BinaryMask rect(int size, int y0, int x0, int y1, int x1) {
  BinaryMask m(size, size);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.set(y, x, true);
  }
  return m;
}

BinaryMask random_blob(std::uint64_t seed, int size) {
  CounterRng rng(seed, 21);
  BinaryMask m(size, size);
  const int cy = static_cast<int>(rng.uniform_int(2, size - 3)), cx = static_cast<int>(rng.uniform_int(2, size - 3));
  const double r = rng.uniform(1.5, size / 3.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double d = std::hypot(y - cy, x - cx) + 0.6 * rng.uniform();
      m.set(y, x, d <= r);
    }
  }
  return m;
}

double eval_loss(const Tensor& logits, const std::function<Var(Var)>& f) {
  Tape tape(false);
  return f(tape.constant(logits)).value().item();
}

Tensor saturated(const BinaryMask& m, double v = 20.0) {
  Tensor t({m.height(), m.width()});
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) t[static_cast<std::size_t>(y * m.width() + x)] = m.get(y, x) ? v : -v;
  }
  return t;
}

std::vector<std::pair<int, int>> contour(const BinaryMask& m) {
  std::vector<std::pair<int, int>> pts;
  const BinaryMask c = contour_pixels(m);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (c.get(y, x)) pts.emplace_back(y, x);
    }
  }
  return pts;
}

// All-pairs distances, independent of the library's distance code.
double hd95_oracle(const BinaryMask& a, const BinaryMask& b) {
  const auto pa = contour(a), pb = contour(b);
  std::vector<double> d;
  auto nearest = [](const std::pair<int, int>& p, const std::vector<std::pair<int, int>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set) best = std::min(best, std::hypot(p.first - q.first, p.second - q.second));
    return best;
  };
  for (const auto& p : pa) d.push_back(nearest(p, pb));
  for (const auto& p : pb) d.push_back(nearest(p, pa));
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - static_cast<double>(lo)) * (d[hi] - d[lo]);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("seg loss examples") {
    const BinaryMask m = rect(8, 2, 2, 6, 6);
    CHECK(eval_loss(saturated(m), [&](Var l) { return seg_loss(l, m); }) < 1e-6);

    BinaryMask half(2, 2);
    half.set(0, 0, true);
    half.set(0, 1, true);
    const double expected = (1.0 - 2.0 * (0.5 * 2.0) / (0.5 * 4.0 + 2.0)) + std::log(2.0);
    CHECK(eval_loss(Tensor({2, 2}), [&](Var l) { return seg_loss(l, half, 0.0); }) == doctest::Approx(expected).epsilon(1e-14));

    BinaryMask comp(8, 8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) comp.set(y, x, !m.get(y, x));
    }
    CHECK(eval_loss(saturated(comp), [&](Var l) { return dice_loss(l, m, 1e-6); }) == doctest::Approx(1.0).epsilon(1e-6));

    Tensor bad({8, 8});
    bad[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(eval_loss(bad, [&](Var l) { return seg_loss(l, m); }), NumericError);
    CHECK_THROWS_AS(eval_loss(Tensor({4, 4}), [&](Var l) { return seg_loss(l, m); }), ShapeError);
  }

  TEST_CASE("boundary loss collapses to seg loss") {
    const BinaryMask m = rect(12, 3, 2, 9, 8);
    const Tensor logits = medcore::testing::random_tensor({12, 12}, 4, -3, 3);
    LossWeights w;
    w.lambda_bd = 0.0;
    const double seg = eval_loss(logits, [&](Var l) { return seg_loss(l, m); });
    CHECK(std::abs(eval_loss(logits, [&](Var l) { return boundary_loss(l, m, w); }) - seg) <= 1e-12);
    w.lambda_bd = 3.0;
    const BinaryMask empty(12, 12);
    CHECK(std::abs(eval_loss(logits, [&](Var l) { return boundary_loss(l, empty, w); }) -
                   eval_loss(logits, [&](Var l) { return seg_loss(l, empty); })) <= 1e-12);
  }

  TEST_CASE("a single mispredicted boundary pixel doubles its BCE contribution at lambda 1") {
    const BinaryMask m = rect(8, 2, 2, 6, 6);
    const Tensor good = saturated(m);
    Tensor bad = good;
    bad[2 * 8 + 2] = -2.0;  // a corner pixel of the mask, inside the band
    REQUIRE(boundary_map(m, 3).get(2, 2));
    LossWeights w0, w1;
    w0.lambda_bd = 0.0;
    w1.lambda_bd = 1.0;
    // Subtracting the unweighted loss of the same logits isolates the BCE increment.
    auto bce_part = [&](const Tensor& l, const LossWeights& w) {
      return eval_loss(l, [&](Var v) { return boundary_loss(v, m, w); }) -
             eval_loss(l, [&](Var v) { return dice_loss(v, m, w.dice_eps); });
    };
    const double d0 = bce_part(bad, w0) - bce_part(good, w0);
    const double d1 = bce_part(bad, w1) - bce_part(good, w1);
    CHECK(d1 == doctest::Approx(2.0 * d0).epsilon(1e-9));
  }

  TEST_CASE("recovery loss identities") {
    const BinaryMask m = rect(8, 2, 1, 6, 7);
    const Tensor feats = medcore::testing::random_tensor({5, 4}, 8);
    const Tensor logits = medcore::testing::random_tensor({8, 8}, 9, -2, 2);
    LossWeights zero;
    zero.lambda_boundary = zero.lambda_feat = zero.lambda_logit = zero.lambda_freq = 0.0;
    {
      Tape tape(false);
      const RecoveryTerms r = recovery_loss(tape.constant(logits), tape.constant(feats), logits, feats, m, zero);
      CHECK(std::abs(r.total.value().item() - eval_loss(logits, [&](Var l) { return seg_loss(l, m); })) <= 1e-12);
    }
    {
      // Student equals teacher and the prediction is the mask (up to saturation).
      const Tensor sat = saturated(m, 40.0);
      Tape tape(false);
      const RecoveryTerms r = recovery_loss(tape.constant(sat), tape.constant(feats), sat, feats, m, LossWeights{});
      CHECK(r.feat == 0.0);
      CHECK(r.logit == 0.0);
      CHECK(r.freq < 1e-12);
    }
    {
      // Constant probability: the prediction's Laplacian vanishes, leaving the mask's energy.
      Tape tape(false);
      const RecoveryTerms r = recovery_loss(tape.constant(Tensor({8, 8})), tape.constant(feats), Tensor({8, 8}), feats, m,
                                            LossWeights{});
      CHECK(r.freq == doctest::Approx(laplacian_energy(m.to_tensor())).epsilon(1e-12));
    }
    Tape tape(false);
    CHECK_THROWS_AS(recovery_loss(tape.constant(logits), tape.constant(feats), logits, Tensor({5, 3}), m, zero), ShapeError);
  }

  TEST_CASE("weights validate") {
    LossWeights w;
    w.lambda_feat = -1.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("dice and iou examples") {
    const BinaryMask a = rect(8, 1, 1, 5, 5);
    const auto same = dice_iou(a, a);
    CHECK(same.dice == 1.0);
    CHECK(same.iou == 1.0);
    const auto disjoint = dice_iou(a, rect(8, 6, 6, 8, 8));
    CHECK(disjoint.dice == 0.0);
    CHECK(disjoint.iou == 0.0);
    const auto half = dice_iou(rect(8, 1, 1, 3, 5), a);
    CHECK(half.dice == doctest::Approx(2.0 / 3.0));
    CHECK(half.iou == doctest::Approx(0.5));
    const auto both_empty = dice_iou(BinaryMask(8, 8), BinaryMask(8, 8));
    CHECK(both_empty.dice == 1.0);
    CHECK(both_empty.iou == 1.0);
  }

  TEST_CASE("dice dominates iou") {
    for (std::uint64_t s = 0; s < 30; ++s) {
      const auto r = dice_iou(random_blob(s, 12), random_blob(s + 100, 12));
      CHECK(r.dice >= r.iou);
      if (r.dice > 0.0 && r.dice < 1.0) CHECK(r.dice > r.iou);
    }
  }

  TEST_CASE("bf1 examples and monotonicity") {
    const BinaryMask a = rect(16, 4, 4, 10, 10);
    CHECK(bf1(a, a, 2.0) == 1.0);
    CHECK(bf1(a, rect(16, 5, 4, 11, 10), 2.0) == 1.0);
    CHECK(bf1(rect(16, 0, 0, 3, 3), rect(16, 10, 10, 14, 14), 2.0) == 0.0);
    CHECK(bf1(BinaryMask(16, 16), BinaryMask(16, 16), 2.0) == 1.0);
    CHECK(bf1(a, BinaryMask(16, 16), 2.0) == 0.0);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const BinaryMask p = random_blob(s, 16), g = random_blob(s + 50, 16);
      double prev = 0.0;
      for (double tol : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
        const double v = bf1(p, g, tol);
        CHECK(v >= prev);
        CHECK(v <= 1.0);
        prev = v;
      }
    }
  }

  TEST_CASE("hd95 examples") {
    const BinaryMask a = rect(16, 4, 4, 10, 10);
    CHECK(hd95(a, a).value == 0.0);
    BinaryMask p(16, 16), q(16, 16);
    p.set(2, 2, true);
    q.set(2, 7, true);
    CHECK(hd95(p, q).value == doctest::Approx(5.0));
    const Hd95 deg = hd95(a, BinaryMask(16, 16));
    CHECK(deg.degenerate);
    CHECK(deg.value == doctest::Approx(std::hypot(16.0, 16.0)));
  }

  TEST_CASE("hd95 matches an all-pairs oracle and is symmetric") {
    for (std::uint64_t s = 0; s < 30; ++s) {
      const BinaryMask p = random_blob(s, 12), g = random_blob(s + 7, 12);
      if (p.empty() || g.empty()) continue;
      const double v = hd95(p, g).value;
      CHECK(v == doctest::Approx(hd95_oracle(p, g)).epsilon(1e-12));
      CHECK(v == hd95(g, p).value);
      CHECK((v == 0.0) == (contour_pixels(p) == contour_pixels(g)));
    }
  }

  TEST_CASE("summaries average in sample order") {
    std::vector<SampleMetrics> s(3);
    s[0].dice = 1.0;
    s[1].dice = 0.5;
    s[2].dice = 0.0;
    s[2].hd95_degenerate = true;
    const MetricReport r = summarize(s);
    CHECK(r.dice == doctest::Approx(0.5));
    CHECK(r.degenerate == 1);
  }
}

TEST_SUITE("stats") {
  TEST_CASE("percentile, ranks and spearman") {
    CHECK(percentile({1, 2, 3, 4}, 50) == doctest::Approx(2.5));
    CHECK(percentile({5}, 95) == 5.0);
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(average_ranks({10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 1, 1}, {1, 2, 3}) == 0.0);
  }
}
