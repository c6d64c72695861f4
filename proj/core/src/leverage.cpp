#include "medcore/leverage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "medcore/csv.hpp"
#include "medcore/error.hpp"
#include "medcore/metrics.hpp"
#include "medcore/morphology.hpp"
#include "medcore/stats.hpp"

namespace medcore {

// --- LogitField --------------------------------------------------------------

LogitField::LogitField(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2) throw ShapeError("LogitField: expected H x W values, got " + shape_string(values_.dims()));
  if (!values_.all_finite()) throw NumericError("LogitField: non-finite values");
  h_ = static_cast<int>(values_.dim(0));
  w_ = static_cast<int>(values_.dim(1));
  grad_ = Tensor(Shape{h_, w_, 2});
  auto v = [this](int y, int x) { return values_[static_cast<std::size_t>(y * w_ + x)]; };
  for (int y = 0; y < h_; ++y) {
    for (int x = 0; x < w_; ++x) {
      double gx = 0.0, gy = 0.0;
      if (w_ > 1) {
        if (x == 0) gx = v(y, 1) - v(y, 0);
        else if (x == w_ - 1) gx = v(y, x) - v(y, x - 1);
        else gx = 0.5 * (v(y, x + 1) - v(y, x - 1));
      }
      if (h_ > 1) {
        if (y == 0) gy = v(1, x) - v(0, x);
        else if (y == h_ - 1) gy = v(y, x) - v(y - 1, x);
        else gy = 0.5 * (v(y + 1, x) - v(y - 1, x));
      }
      grad_[static_cast<std::size_t>((y * w_ + x) * 2)] = gx;
      grad_[static_cast<std::size_t>((y * w_ + x) * 2 + 1)] = gy;
    }
  }
}

double LogitField::grad_norm(int y, int x) const {
  const auto i = static_cast<std::size_t>((y * w_ + x) * 2);
  return std::hypot(grad_[i], grad_[i + 1]);
}

namespace {

struct Bilinear {
  int x0, y0, x1, y1;
  double fx, fy;
};

Bilinear locate(double x, double y, int w, int h) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  Bilinear b{};
  b.x0 = std::min(static_cast<int>(std::floor(x)), std::max(0, w - 2));
  b.y0 = std::min(static_cast<int>(std::floor(y)), std::max(0, h - 2));
  b.x1 = std::min(b.x0 + 1, w - 1);
  b.y1 = std::min(b.y0 + 1, h - 1);
  b.fx = x - b.x0;
  b.fy = y - b.y0;
  return b;
}

}  // namespace

double LogitField::sample(double x, double y) const {
  const Bilinear b = locate(x, y, w_, h_);
  auto v = [this](int yy, int xx) { return values_[static_cast<std::size_t>(yy * w_ + xx)]; };
  return (1 - b.fy) * ((1 - b.fx) * v(b.y0, b.x0) + b.fx * v(b.y0, b.x1)) +
         b.fy * ((1 - b.fx) * v(b.y1, b.x0) + b.fx * v(b.y1, b.x1));
}

std::array<double, 2> LogitField::sample_grad(double x, double y) const {
  const Bilinear b = locate(x, y, w_, h_);
  std::array<double, 2> out{};
  for (int c = 0; c < 2; ++c) {
    auto g = [this, c](int yy, int xx) { return grad_[static_cast<std::size_t>((yy * w_ + xx) * 2 + c)]; };
    out[static_cast<std::size_t>(c)] = (1 - b.fy) * ((1 - b.fx) * g(b.y0, b.x0) + b.fx * g(b.y0, b.x1)) +
                                       b.fy * ((1 - b.fx) * g(b.y1, b.x0) + b.fx * g(b.y1, b.x1));
  }
  return out;
}

FieldFn LogitField::as_function() const {
  return {[this](double x, double y) { return sample(x, y); },
          [this](double x, double y) { return sample_grad(x, y); }};
}

// --- boundary extraction -------------------------------------------------------

namespace {

bool positive(double v) { return v > 0.0; }

// Root of f on the segment p0 + t (p1 - p0), t in [0, 1], given a sign change.
double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if (positive(fm) == positive(flo)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

void add_crossing(BoundarySet& out, double x, double y, std::array<double, 2> g, double kappa_min) {
  const double n = std::hypot(g[0], g[1]);
  if (!(n >= kappa_min) || n == 0.0) {
    ++out.degenerate;
    return;
  }
  out.points.push_back({x, y, g[0] / n, g[1] / n, n});
}

}  // namespace

BoundarySet extract_boundary(const LogitField& field, double kappa_min, const FieldFn* refine) {
  BoundarySet out;
  const int h = field.height(), w = field.width();
  const Tensor& v = field.values();
  auto val = [&](int y, int x) { return v[static_cast<std::size_t>(y * w + x)]; };
  auto edge = [&](int y0, int x0, int y1, int x1) {
    const double a = val(y0, x0), b = val(y1, x1);
    if (positive(a) == positive(b)) return;
    double t = a / (a - b);
    const double px0 = x0, py0 = y0, dx = x1 - x0, dy = y1 - y0;
    if (refine) {
      auto f = [&](double s) { return refine->value(px0 + s * dx, py0 + s * dy); };
      if (positive(f(0.0)) != positive(f(1.0))) t = bisect(f, 0.0, 1.0);
      const double x = px0 + t * dx, y = py0 + t * dy;
      add_crossing(out, x, y, refine->gradient(x, y), kappa_min);
      return;
    }
    const double x = px0 + t * dx, y = py0 + t * dy;
    add_crossing(out, x, y, field.sample_grad(x, y), kappa_min);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x) edge(y, x, y, x + 1);
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x < w; ++x) edge(y, x, y + 1, x);
  return out;
}

BoundarySet extract_boundary(const FieldFn& field, int height, int width, double kappa_min) {
  Tensor grid(Shape{height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) grid[static_cast<std::size_t>(y * width + x)] = field.value(x, y);
  return extract_boundary(LogitField(std::move(grid)), kappa_min, &field);
}

// --- leverage ------------------------------------------------------------------

std::vector<double> leverage_ratios(const LogitField& before, const LogitField& after, const BinaryMask& band,
                                    double eps) {
  if (before.height() != after.height() || before.width() != after.width() || band.height() != before.height() ||
      band.width() != before.width()) {
    throw ShapeError("leverage: before/after/band dims differ");
  }
  std::vector<double> r;
  for (int y = 0; y < band.height(); ++y) {
    for (int x = 0; x < band.width(); ++x) {
      if (!band.at(y, x)) continue;
      const auto i = static_cast<std::size_t>(y * band.width() + x);
      r.push_back(std::abs(after.values()[i] - before.values()[i]) / (before.grad_norm(y, x) + eps));
    }
  }
  return r;
}

Leverage boundary_leverage(const LogitField& before, const LogitField& after, const BinaryMask& band, double delta_c,
                           double eps) {
  if (!(delta_c > 0)) throw ArgumentError("boundary_leverage: delta_c must be > 0");
  const std::vector<double> r = leverage_ratios(before, after, band, eps);
  if (r.empty()) throw ArgumentError("boundary_leverage: empty band");
  return {mean(r) / delta_c, percentile(r, 95.0) / delta_c};
}

// --- displacement ------------------------------------------------------------

std::vector<Displacement> measured_displacement(const std::vector<Crossing>& before, const FieldFn& after,
                                                const MarchOptions& options) {
  if (!(options.step > 0) || !(options.d_max > 0)) throw ArgumentError("march step and d_max must be positive");
  const int steps = static_cast<int>(std::ceil(options.d_max / options.step));
  std::vector<Displacement> out;
  out.reserve(before.size());
  for (const auto& c : before) {
    auto along = [&](double t) { return after.value(c.x + t * c.nx, c.y + t * c.ny); };
    const double a0 = along(0.0);
    Displacement d;
    if (a0 == 0.0) {
      out.push_back(d);
      continue;
    }
    bool found = false;
    double prev_pos = a0, prev_neg = a0;
    for (int k = 1; k <= steps && !found; ++k) {
      const double t1 = std::min(k * options.step, options.d_max), t0 = std::min((k - 1) * options.step, options.d_max);
      double best = std::numeric_limits<double>::infinity();
      for (int dir : {1, -1}) {
        double& prev = dir > 0 ? prev_pos : prev_neg;
        const double v = along(dir * t1);
        if (positive(v) != positive(a0)) {
          double t = t0 + (t1 - t0) * prev / (prev - v);
          if (options.refine) t = bisect([&](double s) { return along(dir * s); }, t0, t1);
          if (t < std::abs(best)) best = dir * t;
          found = true;
        }
        prev = v;
      }
      if (found) d.u = best;
    }
    d.capped = !found;
    out.push_back(d);
  }
  return out;
}

std::vector<Displacement> measured_displacement(const LogitField& before, const LogitField& after,
                                                const MarchOptions& options, double kappa_min) {
  const BoundarySet b = extract_boundary(before, kappa_min);
  return measured_displacement(b.points, after.as_function(), options);
}

// --- theorem check -------------------------------------------------------------

const char* field_family_name(FieldFamily f) {
  switch (f) {
    case FieldFamily::linear: return "linear";
    case FieldFamily::circle: return "circle";
    case FieldFamily::ellipse: return "ellipse";
    case FieldFamily::wavy: return "wavy";
  }
  return "?";
}

FieldFamily parse_field_family(const std::string& name) {
  for (auto f : {FieldFamily::linear, FieldFamily::circle, FieldFamily::ellipse, FieldFamily::wavy}) {
    if (name == field_family_name(f)) return f;
  }
  throw ConfigError("unknown field family '" + name + "'");
}

FieldFn make_field(FieldFamily family, int size) {
  const double c = 0.5 * (size - 1);
  switch (family) {
    case FieldFamily::linear:
      return {[c](double x, double y) { return 0.8 * (x - c - 0.3) + 0.6 * (y - c + 0.2); },
              [](double, double) { return std::array<double, 2>{0.8, 0.6}; }};
    case FieldFamily::circle: {
      const double r = 0.3 * size;
      return {[c, r](double x, double y) { return ((x - c) * (x - c) + (y - c) * (y - c) - r * r) / (2 * r); },
              [c, r](double x, double y) { return std::array<double, 2>{(x - c) / r, (y - c) / r}; }};
    }
    case FieldFamily::ellipse: {
      const double a = 0.32 * size, b = 0.2 * size, k = 4.0;
      return {[=](double x, double y) { return k * ((x - c) * (x - c) / (a * a) + (y - c) * (y - c) / (b * b) - 1.0); },
              [=](double x, double y) {
                return std::array<double, 2>{2 * k * (x - c) / (a * a), 2 * k * (y - c) / (b * b)};
              }};
    }
    case FieldFamily::wavy:
      return {[c](double x, double y) { return y - c - 3.0 * std::sin(0.3 * x); },
              [](double x, double) { return std::array<double, 2>{-0.9 * std::cos(0.3 * x), 1.0}; }};
  }
  throw ArgumentError("unknown field family");
}

FieldFn make_perturbation(FieldFamily family, double amplitude) {
  if (family == FieldFamily::linear) {
    return {[amplitude](double, double) { return amplitude; },
            [](double, double) { return std::array<double, 2>{0.0, 0.0}; }};
  }
  return {[amplitude](double x, double y) { return amplitude * (0.6 + 0.4 * std::sin(0.35 * x + 0.2 * y)); },
          [amplitude](double x, double y) {
            const double g = amplitude * 0.4 * std::cos(0.35 * x + 0.2 * y);
            return std::array<double, 2>{0.35 * g, 0.2 * g};
          }};
}

std::string TheoremReport::csv() const {
  CsvWriter w({"family", "scale", "residual", "max_residual", "ratio", "crossings", "capped", "degenerate"});
  for (const auto& r : rows) {
    w.row({field_family_name(r.family), format_double(r.scale), format_double(r.residual),
           format_double(r.max_residual), format_double(r.ratio), std::to_string(r.crossings),
           std::to_string(r.capped), std::to_string(r.degenerate)});
  }
  return w.str();
}

TheoremReport theorem_check(const std::vector<FieldFamily>& families, double amplitude,
                            const std::vector<double>& scales, int size) {
  if (scales.empty()) throw ArgumentError("theorem_check: no scales");
  TheoremReport rep;
  std::vector<double> ratios;
  for (auto fam : families) {
    const FieldFn s = make_field(fam, size);
    const FieldFn delta = make_perturbation(fam, amplitude);
    const BoundarySet b = extract_boundary(s, size, size);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (double t : scales) {
      const FieldFn after{[&s, &delta, t](double x, double y) { return s.value(x, y) + t * delta.value(x, y); },
                          [&s, &delta, t](double x, double y) {
                            auto g = s.gradient(x, y);
                            auto d = delta.gradient(x, y);
                            return std::array<double, 2>{g[0] + t * d[0], g[1] + t * d[1]};
                          }};
      MarchOptions opt;
      opt.refine = true;
      // An unperturbed field has not moved; marching would only re-find the root up to roundoff.
      const auto disp = t * amplitude == 0.0 ? std::vector<Displacement>(b.points.size())
                                             : measured_displacement(b.points, after, opt);
      std::vector<double> res;
      TheoremRow row;
      row.family = fam;
      row.scale = t;
      row.degenerate = b.degenerate;
      for (std::size_t k = 0; k < disp.size(); ++k) {
        if (disp[k].capped) {
          ++row.capped;
          continue;
        }
        const Crossing& c = b.points[k];
        const double predicted = -t * delta.value(c.x, c.y) / c.grad_norm;
        res.push_back(std::abs(disp[k].u - predicted));
      }
      row.crossings = static_cast<int>(res.size());
      if (!res.empty()) {
        row.residual = median(res);
        row.max_residual = *std::max_element(res.begin(), res.end());
      }
      if (std::isnan(prev)) {
        row.ratio = std::numeric_limits<double>::quiet_NaN();
      } else {
        row.ratio = prev == 0.0 ? 0.0 : row.residual / prev;
        if (fam != FieldFamily::linear) ratios.push_back(row.ratio);
      }
      if (fam == FieldFamily::linear) rep.linear_max_residual = std::max(rep.linear_max_residual, row.max_residual);
      prev = row.residual;
      rep.rows.push_back(row);
    }
  }
  rep.median_ratio = ratios.empty() ? 0.0 : median(ratios);
  return rep;
}

// --- sweep ---------------------------------------------------------------------

void SweepConfig::validate() const {
  auto check = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string("sweep ") + name + " list is empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] >= 0 && v[i] < 1)) throw ConfigError(std::string("sweep ") + name + " values must lie in [0, 1)");
      if (i > 0 && !(v[i] > v[i - 1])) throw ConfigError(std::string("sweep ") + name + " values must be ascending");
    }
  };
  check(h_list, "h");
  check(m_list, "m");
  if (band_width < 1) throw ConfigError("sweep band_width must be >= 1");
  if (!(eps > 0)) throw ConfigError("sweep eps must be > 0");
}

namespace {

struct CellState {
  CellRecord record;
  std::vector<LogitField> calib_logits;
  std::vector<SampleMetrics> heldout;
};

}  // namespace

SweepResult run_sweep(const SweepInputs& in, const SweepConfig& config) {
  config.validate();
  if (in.model == nullptr) throw ArgumentError("run_sweep: no model");
  if (in.calib.empty() || in.heldout.empty()) throw ArgumentError("run_sweep: calibration and held-out sets required");
  const Model& model = *in.model;
  const double total = static_cast<double>(model.params.parameter_count());
  const std::size_t nh = config.h_list.size(), nm = config.m_list.size();

  std::vector<BinaryMask> bands;
  for (const auto& s : in.calib) bands.push_back(boundary_map(s.mask, config.band_width));

  std::vector<CellState> cells(nh * nm);
  for (std::size_t i = 0; i < nh; ++i) {
    for (std::size_t j = 0; j < nm; ++j) {
      CellState& c = cells[i * nm + j];
      PruneConfig pc = in.prune;
      pc.head_sparsity = config.h_list[i];
      pc.mlp_sparsity = config.m_list[j];
      const PruningPlan plan = plan_cascade(pc, in.scores, model.catalog);
      const GroupMask mask = plan.mask(model.catalog);
      c.record.i = static_cast<int>(i);
      c.record.j = static_cast<int>(j);
      c.record.h = pc.head_sparsity;
      c.record.m = pc.mlp_sparsity;
      c.record.removed_params = plan.removed_cost(model.catalog);
      c.record.removed_pct = 100.0 * static_cast<double>(c.record.removed_params) / total;
      c.record.flagged = plan.flagged();
      for (const auto& s : in.calib) {
        c.calib_logits.emplace_back(predict_logits(model.params, model.config, model.catalog, mask, s.image, s.box));
      }
      for (const auto& s : in.heldout) {
        const Tensor logits = predict_logits(model.params, model.config, model.catalog, mask, s.image, s.box);
        c.heldout.push_back(evaluate_pair(BinaryMask::from_logits(logits), s.mask, config.bf1_tol));
      }
      const MetricReport rep = summarize(c.heldout);
      c.record.bf1 = rep.bf1;
      c.record.hd95 = rep.hd95;
      c.record.dice = rep.dice;
    }
  }

  SweepResult out;
  for (const auto& c : cells) out.cells.push_back(c.record);
  auto step = [&](GroupKind family, std::size_t i, std::size_t j, const CellState& a, const CellState& b) {
    StepRecord s;
    s.family = family;
    s.i = static_cast<int>(i);
    s.j = static_cast<int>(j);
    s.dc_params = b.record.removed_params - a.record.removed_params;
    s.dc_pct = 100.0 * static_cast<double>(s.dc_params) / total;
    s.valid = s.dc_params > 0;
    if (!s.valid) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      s.lev_mean = s.lev_p95 = s.reg_p95 = s.d_bf1 = s.d_hd95 = s.bf1_density = s.hd95_density = nan;
      return s;
    }
    std::vector<double> band_ratios, all_ratios;
    for (std::size_t k = 0; k < in.calib.size(); ++k) {
      const auto r = leverage_ratios(a.calib_logits[k], b.calib_logits[k], bands[k], config.eps);
      band_ratios.insert(band_ratios.end(), r.begin(), r.end());
      BinaryMask all(bands[k].height(), bands[k].width());
      for (int y = 0; y < all.height(); ++y)
        for (int x = 0; x < all.width(); ++x) all.set(y, x, true);
      const auto rr = leverage_ratios(a.calib_logits[k], b.calib_logits[k], all, config.eps);
      all_ratios.insert(all_ratios.end(), rr.begin(), rr.end());
    }
    if (band_ratios.empty()) throw ArgumentError("run_sweep: calibration masks have empty boundary bands");
    s.lev_mean = mean(band_ratios) / s.dc_pct;
    s.lev_p95 = percentile(band_ratios, 95.0) / s.dc_pct;
    s.reg_p95 = percentile(all_ratios, 95.0) / s.dc_pct;
    s.d_bf1 = a.record.bf1 - b.record.bf1;
    s.d_hd95 = b.record.hd95 - a.record.hd95;
    s.bf1_density = s.d_bf1 / s.dc_pct;
    s.hd95_density = s.d_hd95 / s.dc_pct;
    return s;
  };
  for (std::size_t i = 0; i + 1 < nh; ++i)
    for (std::size_t j = 0; j < nm; ++j)
      out.steps.push_back(step(GroupKind::head, i, j, cells[i * nm + j], cells[(i + 1) * nm + j]));
  for (std::size_t i = 0; i < nh; ++i)
    for (std::size_t j = 0; j + 1 < nm; ++j)
      out.steps.push_back(step(GroupKind::mlp, i, j, cells[i * nm + j], cells[i * nm + j + 1]));
  if (std::none_of(out.steps.begin(), out.steps.end(), [](const StepRecord& s) { return s.valid; })) {
    throw InfeasiblePlanError("run_sweep: no grid step changes the parameter count");
  }
  out.summary = summarize_steps(out.steps);
  return out;
}

SweepSummary summarize_steps(const std::vector<StepRecord>& steps) {
  SweepSummary s;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> hl, ml, hr, mr, hb, mb, hh, mh;
  for (const auto& r : steps) {
    const bool head = r.family == GroupKind::head;
    (head ? s.head_total : s.mlp_total) += 1;
    if (!r.valid) continue;
    (head ? s.head_valid : s.mlp_valid) += 1;
    (head ? hl : ml).push_back(r.lev_p95);
    (head ? hr : mr).push_back(r.reg_p95);
    (head ? hb : mb).push_back(r.bf1_density);
    (head ? hh : mh).push_back(r.hd95_density);
  }
  auto med = [nan](const std::vector<double>& v) { return v.empty() ? nan : median(v); };
  s.head_lev95 = med(hl);
  s.mlp_lev95 = med(ml);
  s.blr95 = s.head_lev95 / s.mlp_lev95;
  s.rlr = med(hr) / med(mr);
  s.bsr = s.blr95 / s.rlr;
  s.head_bf1_density = med(hb);
  s.mlp_bf1_density = med(mb);
  s.head_hd95_density = med(hh);
  s.mlp_hd95_density = med(mh);
  std::vector<double> diffs;
  for (const auto& h : steps) {
    if (h.family != GroupKind::head || !h.valid) continue;
    for (const auto& m : steps) {
      if (m.family != GroupKind::mlp || !m.valid || m.i != h.i || m.j != h.j) continue;
      ++s.paired;
      s.wins += h.lev_p95 > m.lev_p95;
      diffs.push_back(h.lev_p95 - m.lev_p95);
    }
  }
  s.win_rate = s.paired ? static_cast<double>(s.wins) / s.paired : nan;
  s.median_paired_diff = med(diffs);
  return s;
}

std::string step_records_csv(const std::vector<StepRecord>& steps) {
  CsvWriter w({"family", "i", "j", "dC_params", "dC_pct", "lev_mean", "lev_p95", "d_bf1", "d_hd95", "bf1_density",
               "hd95_density", "valid", "reg_p95"});
  for (const auto& s : steps) {
    w.row({group_kind_name(s.family), std::to_string(s.i), std::to_string(s.j), std::to_string(s.dc_params),
           format_double(s.dc_pct), format_double(s.lev_mean), format_double(s.lev_p95), format_double(s.d_bf1),
           format_double(s.d_hd95), format_double(s.bf1_density), format_double(s.hd95_density), s.valid ? "1" : "0",
           format_double(s.reg_p95)});
  }
  return w.str();
}

std::vector<StepRecord> parse_step_records(const std::string& text) {
  const CsvTable t = parse_csv(text);
  std::vector<StepRecord> out;
  auto num = [](const std::string& s) { return std::stod(s); };
  for (const auto& row : t.rows) {
    StepRecord s;
    const std::string fam = row[t.column("family")];
    if (fam != "head" && fam != "mlp") throw IoError("step records: unknown family '" + fam + "'");
    s.family = fam == "head" ? GroupKind::head : GroupKind::mlp;
    s.i = std::stoi(row[t.column("i")]);
    s.j = std::stoi(row[t.column("j")]);
    s.dc_params = std::stoll(row[t.column("dC_params")]);
    s.dc_pct = num(row[t.column("dC_pct")]);
    s.lev_mean = num(row[t.column("lev_mean")]);
    s.lev_p95 = num(row[t.column("lev_p95")]);
    s.d_bf1 = num(row[t.column("d_bf1")]);
    s.d_hd95 = num(row[t.column("d_hd95")]);
    s.bf1_density = num(row[t.column("bf1_density")]);
    s.hd95_density = num(row[t.column("hd95_density")]);
    s.valid = row[t.column("valid")] == "1";
    s.reg_p95 = num(row[t.column("reg_p95")]);
    out.push_back(s);
  }
  return out;
}

std::string cell_records_csv(const std::vector<CellRecord>& cells) {
  CsvWriter w({"i", "j", "h", "m", "removed_params", "removed_pct", "dice", "bf1", "hd95", "flagged"});
  for (const auto& c : cells) {
    w.row({std::to_string(c.i), std::to_string(c.j), format_double(c.h), format_double(c.m),
           std::to_string(c.removed_params), format_double(c.removed_pct), format_double(c.dice),
           format_double(c.bf1), format_double(c.hd95), c.flagged ? "1" : "0"});
  }
  return w.str();
}

// --- budget probe --------------------------------------------------------------

BudgetProbe budget_rule_probe(const BoundaryErrorFn& error, double c_h, double c_m, double eta,
                              const BudgetBounds& bounds) {
  if (!(eta >= 0)) throw ArgumentError("budget_rule_probe: eta must be >= 0");
  const bool interior = c_h - eta > bounds.head_lo && c_h + eta < bounds.head_hi && c_m - eta > bounds.mlp_lo &&
                        c_m + eta < bounds.mlp_hi;
  if (!interior) {
    throw InfeasiblePlanError("budget_rule_probe: allocation (" + format_double(c_h) + ", " + format_double(c_m) +
                              ") +- " + format_double(eta) + " touches a floor or cap");
  }
  BudgetProbe p;
  if (eta == 0.0) return p;
  p.d_head = (error(c_h + eta, c_m) - error(c_h - eta, c_m)) / (2 * eta);
  p.d_mlp = (error(c_h, c_m + eta) - error(c_h, c_m - eta)) / (2 * eta);
  p.shift_delta = p.d_mlp - p.d_head;
  p.shift_beneficial = p.shift_delta < 0;
  return p;
}

}  // namespace medcore
