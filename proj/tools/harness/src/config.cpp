#include "medcore_harness/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "medcore/csv.hpp"
#include "medcore/error.hpp"
#include "medcore/rng.hpp"

namespace medcore::harness {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, const std::string& source)
      : j_(j), path_(std::move(path)), source_(source) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <class Fn>
  void field(const std::string& key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it != j_.end()) fn(*it, child(key));
  }

  void number(const std::string& key, double& out) {
    field(key, [&](const json& v, const std::string& p) { out = as_number(v, p); });
  }
  void integer(const std::string& key, int& out) {
    field(key, [&](const json& v, const std::string& p) { out = static_cast<int>(as_int(v, p, INT32_MIN, INT32_MAX)); });
  }
  void integer(const std::string& key, std::int64_t& out) {
    field(key, [&](const json& v, const std::string& p) {
      out = as_int(v, p, std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::max());
    });
  }
  void boolean(const std::string& key, bool& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_boolean()) fail(p, "expected true or false");
      out = v.get<bool>();
    });
  }
  void string(const std::string& key, std::string& out) {
    field(key, [&](const json& v, const std::string& p) { out = as_string(v, p); });
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    field(key, [&](const json& v, const std::string& p) {
      if (!v.is_array()) fail(p, "expected an array of numbers");
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], p + "[" + std::to_string(i) + "]"));
    });
  }
  template <class Parse, class T>
  void choice(const std::string& key, T& out, Parse parse) {
    field(key, [&](const json& v, const std::string& p) {
      const std::string s = as_string(v, p);
      try {
        out = parse(s);
      } catch (const Error& e) {
        fail(p, e.what());
      }
    });
  }
  template <class Fn>
  void object(const std::string& key, Fn&& fn) {
    field(key, [&](const json& v, const std::string& p) {
      ObjectReader r(v, p, source_);
      fn(r);
      r.finish();
    });
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!seen_.count(key)) fail(child(key), "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(source_ + ": " + (path.empty() ? "<root>" : path) + ": " + msg);
  }
  const std::string& source() const { return source_; }

  double as_number(const json& v, const std::string& p) const {
    if (!v.is_number()) fail(p, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(p, "expected a finite number");
    return d;
  }
  std::int64_t as_int(const json& v, const std::string& p, std::int64_t lo, std::int64_t hi) const {
    if (!v.is_number_integer()) fail(p, "expected an integer");
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi)) fail(p, "integer out of range");
    const std::int64_t x = v.get<std::int64_t>();
    if (x < lo || x > hi) fail(p, "integer out of range");
    return x;
  }
  std::string as_string(const json& v, const std::string& p) const {
    if (!v.is_string()) fail(p, "expected a string");
    return v.get<std::string>();
  }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

TrainLoss parse_train_loss(const std::string& s) {
  if (s == "seg") return TrainLoss::seg;
  if (s == "boundary") return TrainLoss::boundary;
  throw ArgumentError("expected \"seg\" or \"boundary\", got \"" + s + "\"");
}
const char* train_loss_name(TrainLoss l) { return l == TrainLoss::seg ? "seg" : "boundary"; }

PruneMode parse_mode(const std::string& s) {
  if (s == "one-time") return PruneMode::one_time;
  if (s == "sequential") return PruneMode::sequential;
  throw ArgumentError("expected \"one-time\" or \"sequential\", got \"" + s + "\"");
}
const char* mode_name(PruneMode m) { return m == PruneMode::one_time ? "one-time" : "sequential"; }

void read_model(ObjectReader& r, ModelConfig& m) {
  r.integer("image_size", m.image_size);
  r.integer("patch_size", m.patch_size);
  r.integer("embed_dim", m.embed_dim);
  r.integer("num_blocks", m.num_blocks);
  r.integer("heads", m.heads);
  r.integer("mlp_hidden", m.mlp_hidden);
  r.integer("decoder_channels1", m.decoder_channels1);
  r.integer("decoder_channels2", m.decoder_channels2);
  r.number("ln_eps", m.ln_eps);
}

void read_spec(ObjectReader& r, DistributionSpec& s) {
  r.integer("id", s.id);
  r.choice("family", s.family, parse_shape_family);
  r.number("contrast", s.contrast);
  r.number("noise_sigma", s.noise_sigma);
  r.integer("softness", s.softness);
  r.number("texture", s.texture);
  r.integer("size_min", s.size_min);
  r.integer("size_max", s.size_max);
  r.integer("jitter", s.jitter);
  r.number("weight", s.weight);
}

void read_data(ObjectReader& r, DataConfig& d) {
  r.object("base", [&](ObjectReader& o) { read_spec(o, d.base); });
  r.field("adapted", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.empty()) r.fail(p, "expected a non-empty array of distribution specs");
    std::vector<DistributionSpec> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      // Entries default to the matching built-in spec, or a plain one past the end.
      const auto defaults = default_adapted_specs();
      DistributionSpec s = i < defaults.size() ? defaults[i] : DistributionSpec{};
      s.id = static_cast<int>(i) + 1;
      ObjectReader o(v[i], p + "[" + std::to_string(i) + "]", r.source());
      read_spec(o, s);
      o.finish();
      out.push_back(s);
    }
    d.adapted = std::move(out);
  });
  r.integer("calib_per_distribution", d.calib_per_distribution);
  r.integer("heldout", d.heldout);
  r.integer("base_heldout", d.base_heldout);
  r.integer("train_pool", d.train_pool);
}

void read_losses(ObjectReader& r, LossWeights& w) {
  r.number("lambda_bd", w.lambda_bd);
  r.integer("band_width", w.band_width);
  r.number("bce_scale", w.bce_scale);
  r.number("dice_eps", w.dice_eps);
  r.number("lambda_boundary", w.lambda_boundary);
  r.number("lambda_feat", w.lambda_feat);
  r.number("lambda_logit", w.lambda_logit);
  r.number("lambda_freq", w.lambda_freq);
}

void read_prune(ObjectReader& r, PruneConfig& p) {
  r.choice("scorer", p.scorer, parse_scorer);
  r.choice("mode", p.mode, parse_mode);
  r.number("alpha_default", p.alpha_default);
  r.numbers("alpha", p.alpha);
  r.number("beta", p.beta);
  r.number("tau", p.tau);
  r.number("eps", p.eps);
  r.number("eps_f", p.eps_f);
  r.numbers("pi", p.pi);
  r.number("head_sparsity", p.head_sparsity);
  r.number("mlp_sparsity", p.mlp_sparsity);
  r.field("protected_blocks", [&](const json& v, const std::string& path) {
    if (v.is_null()) {
      p.protected_blocks.reset();
      return;
    }
    if (!v.is_array()) r.fail(path, "expected an array of block indices or null");
    std::vector<int> blocks;
    for (std::size_t i = 0; i < v.size(); ++i) {
      blocks.push_back(static_cast<int>(r.as_int(v[i], path + "[" + std::to_string(i) + "]", 0, INT32_MAX)));
    }
    p.protected_blocks = blocks;
  });
  r.integer("min_heads", p.min_heads);
  r.number("rho_min", p.rho_min);
  r.boolean("rescore_mlp", p.rescore_mlp);
}

void read_train(ObjectReader& r, TrainConfig& t) {
  r.integer("steps", t.steps);
  r.integer("batch_size", t.batch_size);
  r.number("lr", t.lr);
  r.number("beta1", t.beta1);
  r.number("beta2", t.beta2);
  r.number("adam_eps", t.adam_eps);
  r.choice("loss", t.loss, parse_train_loss);
  r.field("frozen", [&](const json& v, const std::string& p) {
    if (!v.is_array()) r.fail(p, "expected an array of tensor-name prefixes");
    t.frozen.clear();
    for (std::size_t i = 0; i < v.size(); ++i) t.frozen.push_back(r.as_string(v[i], p + "[" + std::to_string(i) + "]"));
  });
  r.integer("log_every", t.log_every);
}

void read_root(ObjectReader& r, ExperimentConfig& c) {
  r.string("run_id", c.run_id);
  r.string("output_dir", c.output_dir);
  r.field("seed", [&](const json& v, const std::string& p) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      r.fail(p, "expected a non-negative integer");
    }
    c.seed = v.get<std::uint64_t>();
  });
  r.object("model", [&](ObjectReader& o) { read_model(o, c.model); });
  r.object("data", [&](ObjectReader& o) { read_data(o, c.data); });
  r.object("losses", [&](ObjectReader& o) { read_losses(o, c.losses); });
  r.object("prune", [&](ObjectReader& o) { read_prune(o, c.prune); });
  r.object("train", [&](ObjectReader& o) {
    o.object("base", [&](ObjectReader& t) { read_train(t, c.train.base); });
    o.object("adapt", [&](ObjectReader& t) { read_train(t, c.train.adapt); });
    o.object("recover", [&](ObjectReader& t) { read_train(t, c.train.recover); });
    o.integer("interleaved_steps", c.train.interleaved_steps);
  });
  r.object("sweep", [&](ObjectReader& o) {
    o.numbers("h_list", c.sweep.h_list);
    o.numbers("m_list", c.sweep.m_list);
    o.integer("band_width", c.sweep.band_width);
    o.number("eps", c.sweep.eps);
    o.number("bf1_tol", c.sweep.bf1_tol);
  });
  r.object("probe", [&](ObjectReader& o) {
    o.boolean("enabled", c.probe.enabled);
    o.number("h", c.probe.h);
    o.number("m", c.probe.m);
    o.number("eta", c.probe.eta);
  });
  r.object("theorem", [&](ObjectReader& o) {
    o.number("amplitude", c.theorem.amplitude);
    o.numbers("scales", c.theorem.scales);
    o.integer("size", c.theorem.size);
  });
  r.object("eval", [&](ObjectReader& o) {
    o.number("bf1_tol", c.eval.bf1_tol);
    o.number("base_dice_min", c.eval.base_dice_min);
    o.number("adapt_gain_min", c.eval.adapt_gain_min);
  });
}

// Re-labels module validation errors with the config section they came from.
template <class Fn>
void section(const std::string& name, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

ordered spec_json(const DistributionSpec& s) {
  return ordered{{"id", s.id},
                 {"family", shape_family_name(s.family)},
                 {"contrast", s.contrast},
                 {"noise_sigma", s.noise_sigma},
                 {"softness", s.softness},
                 {"texture", s.texture},
                 {"size_min", s.size_min},
                 {"size_max", s.size_max},
                 {"jitter", s.jitter},
                 {"weight", s.weight}};
}

ordered train_json(const TrainConfig& t) {
  return ordered{{"steps", t.steps},     {"batch_size", t.batch_size}, {"lr", t.lr},
                 {"beta1", t.beta1},     {"beta2", t.beta2},           {"adam_eps", t.adam_eps},
                 {"loss", train_loss_name(t.loss)}, {"frozen", t.frozen}, {"log_every", t.log_every}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("run_id must be a non-empty name without path separators");
  }
  section("model", [&] { model.validate(); });
  section("data", [&] {
    const auto check = [&](const DistributionSpec& s) {
      if (s.size_min < 1 || s.size_max < s.size_min) throw ConfigError("spec " + std::to_string(s.id) + ": bad size range");
      if (!(s.contrast > 0) || !(s.noise_sigma >= 0) || !(s.texture >= 0) || s.softness < 0 || s.jitter < 0) {
        throw ConfigError("spec " + std::to_string(s.id) + ": contrast must be > 0; noise, texture, softness, jitter >= 0");
      }
      if (!(s.weight >= 0)) throw ConfigError("spec " + std::to_string(s.id) + ": weight must be >= 0");
    };
    check(data.base);
    double total = 0;
    for (const auto& s : data.adapted) {
      check(s);
      total += s.weight;
    }
    if (!(total > 0)) throw ConfigError("adapted weights must not all be zero");
    if (data.calib_per_distribution < 1 || data.heldout < 1 || data.base_heldout < 1) {
      throw ConfigError("sample counts must be >= 1");
    }
    if (data.train_pool < 0) throw ConfigError("train_pool must be >= 0");
  });
  section("losses", [&] { losses.validate(); });
  section("prune", [&] {
    prune.validate(model.num_blocks);
    if (!prune.pi.empty() && prune.pi.size() != data.adapted.size()) {
      throw ConfigError("pi needs one weight per adapted distribution");
    }
  });
  section("train.base", [&] { train.base.validate(); });
  section("train.adapt", [&] { train.adapt.validate(); });
  section("train.recover", [&] { train.recover.validate(); });
  if (train.interleaved_steps < 0) throw ConfigError("train: interleaved_steps must be >= 0");
  section("sweep", [&] { sweep.validate(); });
  if (!(probe.eta > 0) || !(probe.h >= 0 && probe.h < 1) || !(probe.m >= 0 && probe.m < 1)) {
    throw ConfigError("probe: eta must be > 0 and h, m must lie in [0, 1)");
  }
  if (!(theorem.amplitude > 0) || theorem.scales.size() < 2 || theorem.size < 8) {
    throw ConfigError("theorem: amplitude must be > 0, at least two scales, size >= 8");
  }
  if (!(eval.bf1_tol >= 0)) throw ConfigError("eval: bf1_tol must be >= 0");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.train.base.steps = 3000;
  c.train.base.lr = 1e-3;
  c.train.adapt.steps = 1500;
  c.train.adapt.lr = 5e-4;
  c.train.recover.steps = 500;
  c.train.recover.lr = 2e-4;
  c.train.recover.loss = TrainLoss::boundary;
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  ExperimentConfig c = default_config();
  ObjectReader r(doc, "", source);
  read_root(r, c);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return parse_config(text, path.string());
}

std::string resolved_config_json(const ExperimentConfig& c) {
  ordered specs = ordered::array();
  for (const auto& s : c.data.adapted) specs.push_back(spec_json(s));
  const ordered doc = {
      {"run_id", c.run_id},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"model",
       {{"image_size", c.model.image_size},
        {"patch_size", c.model.patch_size},
        {"embed_dim", c.model.embed_dim},
        {"num_blocks", c.model.num_blocks},
        {"heads", c.model.heads},
        {"mlp_hidden", c.model.mlp_hidden},
        {"decoder_channels1", c.model.decoder_channels1},
        {"decoder_channels2", c.model.decoder_channels2},
        {"ln_eps", c.model.ln_eps}}},
      {"data",
       {{"base", spec_json(c.data.base)},
        {"adapted", specs},
        {"calib_per_distribution", c.data.calib_per_distribution},
        {"heldout", c.data.heldout},
        {"base_heldout", c.data.base_heldout},
        {"train_pool", c.data.train_pool}}},
      {"losses",
       {{"lambda_bd", c.losses.lambda_bd},
        {"band_width", c.losses.band_width},
        {"bce_scale", c.losses.bce_scale},
        {"dice_eps", c.losses.dice_eps},
        {"lambda_boundary", c.losses.lambda_boundary},
        {"lambda_feat", c.losses.lambda_feat},
        {"lambda_logit", c.losses.lambda_logit},
        {"lambda_freq", c.losses.lambda_freq}}},
      {"prune",
       {{"scorer", scorer_name(c.prune.scorer)},
        {"mode", mode_name(c.prune.mode)},
        {"alpha_default", c.prune.alpha_default},
        {"alpha", c.prune.alpha},
        {"beta", c.prune.beta},
        {"tau", c.prune.tau},
        {"eps", c.prune.eps},
        {"eps_f", c.prune.eps_f},
        {"pi", c.prune.resolved_pi(c.data.adapted.size())},
        {"head_sparsity", c.prune.head_sparsity},
        {"mlp_sparsity", c.prune.mlp_sparsity},
        {"protected_blocks", c.prune.resolved_protected(c.model.num_blocks)},
        {"min_heads", c.prune.min_heads},
        {"rho_min", c.prune.rho_min},
        {"rescore_mlp", c.prune.rescore_mlp}}},
      {"train",
       {{"base", train_json(c.train.base)},
        {"adapt", train_json(c.train.adapt)},
        {"recover", train_json(c.train.recover)},
        {"interleaved_steps", c.train.interleaved_steps}}},
      {"sweep",
       {{"h_list", c.sweep.h_list},
        {"m_list", c.sweep.m_list},
        {"band_width", c.sweep.band_width},
        {"eps", c.sweep.eps},
        {"bf1_tol", c.sweep.bf1_tol}}},
      {"probe", {{"enabled", c.probe.enabled}, {"h", c.probe.h}, {"m", c.probe.m}, {"eta", c.probe.eta}}},
      {"theorem", {{"amplitude", c.theorem.amplitude}, {"scales", c.theorem.scales}, {"size", c.theorem.size}}},
      {"eval",
       {{"bf1_tol", c.eval.bf1_tol},
        {"base_dice_min", c.eval.base_dice_min},
        {"adapt_gain_min", c.eval.adapt_gain_min}}},
  };
  return doc.dump(2) + "\n";
}

void apply_grid(SweepConfig& sweep, const std::string& grid) {
  auto fail = [&](const std::string& m) { throw ConfigError("--grid \"" + grid + "\": " + m); };
  SweepConfig out = sweep;
  bool have_h = false, have_m = false;
  std::stringstream parts(grid);
  std::string part;
  while (std::getline(parts, part, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) fail("expected key=v1,v2,...");
    const std::string key = part.substr(0, eq);
    std::vector<double> values;
    std::stringstream vs(part.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(v, &used);
      } catch (const std::exception&) {
        fail("'" + v + "' is not a number");
      }
      if (used != v.size()) fail("'" + v + "' is not a number");
      values.push_back(x);
    }
    if (key == "h") {
      out.h_list = values;
      have_h = true;
    } else if (key == "m") {
      out.m_list = values;
      have_m = true;
    } else {
      fail("unknown key '" + key + "' (expected h or m)");
    }
  }
  if (!have_h && !have_m) fail("no h or m list given");
  try {
    out.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  }
  sweep = out;
}

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) {
  return CounterRng(seed, static_cast<std::uint64_t>(stream)).next_u64();
}

}  // namespace medcore::harness
