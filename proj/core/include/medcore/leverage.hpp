#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "medcore/planner.hpp"
#include "medcore/synthdata.hpp"

namespace medcore {

/// Continuous scalar field on the image plane; x is the column and y the row
/// coordinate, pixel centres sit at integers.
struct FieldFn {
  std::function<double(double, double)> value;
  std::function<std::array<double, 2>(double, double)> gradient;
};

/// H x W logit map with its central-difference gradient (one-sided at the border).
class LogitField {
 public:
  LogitField() = default;
  explicit LogitField(Tensor values);

  const Tensor& values() const noexcept { return values_; }
  /// H x W x 2, (d/dx, d/dy).
  const Tensor& grad() const noexcept { return grad_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  double grad_norm(int y, int x) const;

  /// Bilinear interpolation, clamped to the grid.
  double sample(double x, double y) const;
  std::array<double, 2> sample_grad(double x, double y) const;
  FieldFn as_function() const;

 private:
  Tensor values_, grad_;
  int h_ = 0, w_ = 0;
};

struct Crossing {
  double x = 0, y = 0;
  double nx = 0, ny = 0;  ///< unit normal, pointing towards increasing s
  double grad_norm = 0;
};

struct BoundarySet {
  std::vector<Crossing> points;
  int degenerate = 0;  ///< crossings dropped because |grad s| < kappa_min
};

/// Zero crossings on horizontal and vertical pixel edges with linear sub-pixel
/// interpolation. When `refine` is given, each crossing is moved to the exact
/// root of that function along its edge and the normal is taken from it.
BoundarySet extract_boundary(const LogitField& field, double kappa_min = 1e-4, const FieldFn* refine = nullptr);
BoundarySet extract_boundary(const FieldFn& field, int height, int width, double kappa_min = 1e-4);

struct Leverage {
  double mean = 0;
  double p95 = 0;
};

/// Per-pixel ratio |after - before| / (|grad before| + eps) over the band.
std::vector<double> leverage_ratios(const LogitField& before, const LogitField& after, const BinaryMask& band,
                                    double eps = 1e-6);
/// (mean, p95) of the band ratios divided by delta_c.
Leverage boundary_leverage(const LogitField& before, const LogitField& after, const BinaryMask& band, double delta_c,
                           double eps = 1e-6);

struct Displacement {
  double u = 0;          ///< signed distance along the old normal
  bool capped = false;   ///< no sign change within d_max
};

struct MarchOptions {
  double step = 0.05;   ///< sampling interval along the normal, pixels
  double d_max = 10.0;  ///< search cap, pixels
  bool refine = false;  ///< bisect to the exact root instead of linear interpolation
};

/// Marches from each old crossing along +n and -n until `after` changes sign.
std::vector<Displacement> measured_displacement(const std::vector<Crossing>& before, const FieldFn& after,
                                                const MarchOptions& options = {});
std::vector<Displacement> measured_displacement(const LogitField& before, const LogitField& after,
                                                const MarchOptions& options = {}, double kappa_min = 1e-4);

enum class FieldFamily { linear, circle, ellipse, wavy };
const char* field_family_name(FieldFamily f);
FieldFamily parse_field_family(const std::string& name);

struct TheoremRow {
  FieldFamily family = FieldFamily::linear;
  double scale = 1.0;
  double residual = 0;      ///< median |u_measured - u_predicted|
  double max_residual = 0;
  double ratio = 0;         ///< residual(scale) / residual(2 * scale); 0 when both vanish
  int crossings = 0;
  int capped = 0;
  int degenerate = 0;
};

struct TheoremReport {
  std::vector<TheoremRow> rows;
  /// Median of the halving ratios over the non-linear families.
  double median_ratio = 0;
  double linear_max_residual = 0;
  std::string csv() const;
};

/// Smooth test fields on a size x size domain with perturbation
/// delta(x, y) = amplitude * t * bump(x, y).
FieldFn make_field(FieldFamily family, int size);
FieldFn make_perturbation(FieldFamily family, double amplitude);

TheoremReport theorem_check(const std::vector<FieldFamily>& families, double amplitude = 0.2,
                            const std::vector<double>& scales = {1.0, 0.5, 0.25}, int size = 32);

// --- sweep -----------------------------------------------------------------

struct SweepConfig {
  std::vector<double> h_list = {0.3, 0.5, 0.7, 0.9};
  std::vector<double> m_list = {0.3, 0.5, 0.7, 0.9};
  int band_width = 3;
  double eps = 1e-6;
  double bf1_tol = 2.0;
  void validate() const;
};

struct CellRecord {
  int i = 0, j = 0;
  double h = 0, m = 0;
  std::int64_t removed_params = 0;
  double removed_pct = 0;
  double bf1 = 0, hd95 = 0, dice = 0;
  bool flagged = false;
};

struct StepRecord {
  GroupKind family = GroupKind::head;
  int i = 0, j = 0;
  std::int64_t dc_params = 0;
  double dc_pct = 0;
  double lev_mean = 0, lev_p95 = 0;
  double reg_p95 = 0;  ///< same statistic over every pixel
  double d_bf1 = 0, d_hd95 = 0;
  double bf1_density = 0, hd95_density = 0;
  bool valid = false;
};

struct SweepSummary {
  double head_lev95 = 0, mlp_lev95 = 0;  ///< medians over valid steps
  double blr95 = 0;                       ///< head / mlp
  double rlr = 0;                         ///< same ratio of region statistics
  double bsr = 0;                         ///< blr95 / rlr
  int paired = 0, wins = 0;
  double win_rate = 0;
  double median_paired_diff = 0;
  double head_bf1_density = 0, mlp_bf1_density = 0;
  double head_hd95_density = 0, mlp_hd95_density = 0;
  int head_valid = 0, head_total = 0, mlp_valid = 0, mlp_total = 0;
};

struct SweepInputs {
  const Model* model = nullptr;
  ScoreTable scores;   ///< reused for every cell
  PruneConfig prune;   ///< sparsities are overridden per cell
  std::vector<Sample> calib;    ///< leverage statistics
  std::vector<Sample> heldout;  ///< BF1 / HD95 deltas
};

struct SweepResult {
  std::vector<CellRecord> cells;
  std::vector<StepRecord> steps;
  SweepSummary summary;
};

SweepResult run_sweep(const SweepInputs& inputs, const SweepConfig& config);
SweepSummary summarize_steps(const std::vector<StepRecord>& steps);

/// CSV: family,i,j,dC_params,dC_pct,lev_mean,lev_p95,d_bf1,d_hd95,bf1_density,hd95_density,valid,reg_p95.
std::string step_records_csv(const std::vector<StepRecord>& steps);
std::vector<StepRecord> parse_step_records(const std::string& csv);
std::string cell_records_csv(const std::vector<CellRecord>& cells);

// --- budget probe ------------------------------------------------------------

/// Boundary error (e.g. 1 - BF1) at head / MLP budgets (c_h, c_m).
using BoundaryErrorFn = std::function<double(double c_h, double c_m)>;

struct BudgetProbe {
  double d_head = 0;        ///< dE / dc_h
  double d_mlp = 0;         ///< dE / dc_m
  double shift_delta = 0;   ///< first-order change when moving eta from heads to MLPs
  bool shift_beneficial = false;
};

struct BudgetBounds {
  double head_lo = 0, head_hi = 100;
  double mlp_lo = 0, mlp_hi = 100;
};

/// Symmetric finite differences at +-eta. Throws when the stencil leaves the open bounds.
BudgetProbe budget_rule_probe(const BoundaryErrorFn& error, double c_h, double c_m, double eta,
                              const BudgetBounds& bounds = {});

}  // namespace medcore
