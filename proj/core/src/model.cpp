#include "medcore/model.hpp"

#include <cmath>

#include "medcore/error.hpp"
#include "medcore/rng.hpp"

namespace medcore {

std::pair<int, int> ModelConfig::upsample_factors() const {
  int second = 1;
  for (int f = 1; f * f <= patch_size; ++f) {
    if (patch_size % f == 0) second = f;
  }
  return {patch_size / second, second};
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (image_size <= 0 || patch_size <= 0 || embed_dim <= 0 || num_blocks <= 0 || heads <= 0 || mlp_hidden <= 0 ||
      decoder_channels1 <= 0 || decoder_channels2 <= 0) {
    fail("all sizes must be positive");
  }
  if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (!(ln_eps > 0)) fail("ln_eps must be positive");
}

void PromptBox::validate(int width, int height) const {
  if (!(0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height)) {
    throw ArgumentError("prompt box (" + std::to_string(x0) + "," + std::to_string(y0) + "," + std::to_string(x1) +
                        "," + std::to_string(y1) + ") outside " + std::to_string(width) + "x" +
                        std::to_string(height) + " image");
  }
}

std::string block_param(int block, const std::string& leaf) {
  return "enc.blocks." + std::to_string(block) + "." + leaf;
}

ParamStore build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  CounterRng rng(seed, 0x6d6f64656cULL);
  ParamStore p;
  auto normal = [&rng](Shape dims, double stddev) {
    Tensor t(std::move(dims));
    for (auto& v : t.data()) v = rng.normal(0.0, stddev);
    return t;
  };
  const std::int64_t d = config.embed_dim;
  const std::int64_t patch_in = 3LL * config.patch_size * config.patch_size;
  const std::int64_t n = config.num_patches();
  const std::int64_t hd = static_cast<std::int64_t>(config.heads) * config.head_dim();
  const std::int64_t m = config.mlp_hidden;
  auto inv_sqrt = [](std::int64_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  p.add("prompt.w", normal({4, d}, 0.5));
  p.add("prompt.b", Tensor({d}));
  p.add("enc.patch.w", normal({patch_in, d}, inv_sqrt(patch_in)));
  p.add("enc.patch.b", Tensor({d}));
  p.add("enc.pos", normal({n, d}, 0.1));
  for (int b = 0; b < config.num_blocks; ++b) {
    p.add(block_param(b, "ln1.g"), Tensor::full({d}, 1.0));
    p.add(block_param(b, "ln1.b"), Tensor({d}));
    for (const char* w : {"q", "k", "v"}) {
      p.add(block_param(b, std::string("attn.w") + w), normal({d, hd}, inv_sqrt(d)));
      p.add(block_param(b, std::string("attn.b") + w), Tensor({hd}));
    }
    p.add(block_param(b, "attn.wo"), normal({hd, d}, inv_sqrt(hd)));
    p.add(block_param(b, "attn.bo"), Tensor({d}));
    p.add(block_param(b, "ln2.g"), Tensor::full({d}, 1.0));
    p.add(block_param(b, "ln2.b"), Tensor({d}));
    p.add(block_param(b, "mlp.w1"), normal({d, m}, inv_sqrt(d)));
    p.add(block_param(b, "mlp.b1"), Tensor({m}));
    p.add(block_param(b, "mlp.w2"), normal({m, d}, inv_sqrt(m)));
    p.add(block_param(b, "mlp.b2"), Tensor({d}));
  }
  p.add("enc.ln_f.g", Tensor::full({d}, 1.0));
  p.add("enc.ln_f.b", Tensor({d}));
  const std::int64_t c1 = config.decoder_channels1, c2 = config.decoder_channels2;
  p.add("dec.up1.w", normal({d, c1}, inv_sqrt(d)));
  p.add("dec.up1.b", Tensor({c1}));
  p.add("dec.up2.w", normal({c1, c2}, inv_sqrt(c1)));
  p.add("dec.up2.b", Tensor({c2}));
  p.add("dec.head.w", normal({c2, 1}, inv_sqrt(c2)));
  p.add("dec.head.b", Tensor({1}));
  return p;
}

const Var& BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ArgumentError("model parameter '" + name + "' is not bound");
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamStore& params, const TrainablePredicate& trainable) {
  BoundParams bound;
  for (const auto& [name, t] : params.entries()) {
    const bool train = tape.grad_enabled() && !ParamStore::is_frozen(name) && (!trainable || trainable(name));
    bound.emplace(name, train ? tape.parameter(name, t) : tape.constant(t));
  }
  return bound;
}

namespace {

struct BlockMasks {
  std::vector<bool> head_active;
  bool mlp_all_active = true;
  Tensor mlp_scale;
};

std::vector<BlockMasks> block_masks(const GroupCatalog& catalog, const GroupMask& mask, int num_blocks) {
  if (!mask.empty() && mask.size() != catalog.size()) {
    throw ShapeError("forward: mask length " + std::to_string(mask.size()) + " does not match " +
                     std::to_string(catalog.size()) + " groups");
  }
  std::vector<BlockMasks> out(static_cast<std::size_t>(num_blocks));
  for (int b = 0; b < num_blocks; ++b) {
    auto& bm = out[static_cast<std::size_t>(b)];
    bm.head_active.assign(static_cast<std::size_t>(catalog.count(GroupKind::head, b)), true);
    bm.mlp_scale = Tensor::full({catalog.count(GroupKind::mlp, b)}, 1.0);
  }
  if (mask.empty()) return out;
  for (const auto& g : catalog.groups()) {
    if (mask[g.id] != 0) continue;
    auto& bm = out[static_cast<std::size_t>(g.block)];
    if (g.kind == GroupKind::head) {
      bm.head_active[static_cast<std::size_t>(g.unit)] = false;
    } else {
      bm.mlp_scale[static_cast<std::size_t>(g.unit)] = 0.0;
      bm.mlp_all_active = false;
    }
  }
  return out;
}

Var affine(Var x, const BoundParams& p, const std::string& w, const std::string& b) {
  return ops::add(ops::matmul(x, p[w]), p[b]);
}

Var layer_norm(Var x, const BoundParams& p, const std::string& prefix, double eps) {
  return ops::add(ops::mul(ops::layernorm_last(x, eps), p[prefix + ".g"]), p[prefix + ".b"]);
}

}  // namespace

ModelOutput forward(Tape& tape, const BoundParams& p, const ModelConfig& config, const GroupCatalog& catalog,
                    const GroupMask& mask, const Tensor& image, const PromptBox& box) {
  const std::int64_t s = config.image_size;
  if (image.dims() != Shape{3, s, s}) {
    throw ShapeError("forward: image shape " + shape_string(image.dims()) + " does not match [3," +
                     std::to_string(s) + "," + std::to_string(s) + "]");
  }
  box.validate(config.image_size, config.image_size);
  const auto masks = block_masks(catalog, mask, config.num_blocks);
  const std::int64_t d = config.embed_dim;
  const std::int64_t dh = config.head_dim();
  const std::int64_t t_count = config.tokens();
  const std::int64_t n = config.num_patches();

  Var img = tape.constant(image);
  Var tokens = affine(ops::patch_fold(img, config.patch_size), p, "enc.patch.w", "enc.patch.b");
  tokens = ops::add(tokens, p["enc.pos"]);
  const double inv = 1.0 / static_cast<double>(config.image_size);
  Var box_vec = tape.constant(Tensor::matrix(1, 4, {box.x0 * inv, box.y0 * inv, box.x1 * inv, box.y1 * inv}));
  Var prompt = affine(box_vec, p, "prompt.w", "prompt.b");
  Var x = ops::concat({tokens, prompt}, 0);

  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int b = 0; b < config.num_blocks; ++b) {
    const auto& bm = masks[static_cast<std::size_t>(b)];
    Var h = layer_norm(x, p, block_param(b, "ln1"), config.ln_eps);
    Var q = affine(h, p, block_param(b, "attn.wq"), block_param(b, "attn.bq"));
    // The key bias adds a per-query constant to every score row, which softmax cancels.
    // It is kept as a parameter but left out of the graph so its gradient is exactly zero.
    Var k = ops::matmul(h, p[block_param(b, "attn.wk")]);
    Var v = affine(h, p, block_param(b, "attn.wv"), block_param(b, "attn.bv"));
    std::vector<Var> heads;
    for (std::size_t hi = 0; hi < bm.head_active.size(); ++hi) {
      const std::int64_t off = static_cast<std::int64_t>(hi) * dh;
      if (!bm.head_active[hi]) {
        heads.push_back(tape.constant(Tensor({t_count, dh})));
        continue;
      }
      Var qh = ops::slice(q, 1, off, dh);
      Var kh = ops::slice(k, 1, off, dh);
      Var vh = ops::slice(v, 1, off, dh);
      Var att = ops::softmax_last(ops::scale(ops::matmul(qh, ops::transpose(kh)), attn_scale));
      heads.push_back(ops::matmul(att, vh));
    }
    Var attn = affine(ops::concat(heads, 1), p, block_param(b, "attn.wo"), block_param(b, "attn.bo"));
    x = ops::add(x, attn);

    Var h2 = layer_norm(x, p, block_param(b, "ln2"), config.ln_eps);
    Var u = ops::gelu(affine(h2, p, block_param(b, "mlp.w1"), block_param(b, "mlp.b1")));
    if (!bm.mlp_all_active) u = ops::mul(u, tape.constant(bm.mlp_scale));
    x = ops::add(x, affine(u, p, block_param(b, "mlp.w2"), block_param(b, "mlp.b2")));
  }
  Var features = layer_norm(x, p, "enc.ln_f", config.ln_eps);

  const auto [f1, f2] = config.upsample_factors();
  const std::int64_t g = config.grid();
  const std::int64_t g1 = g * f1;
  Var grid = ops::reshape(ops::slice(features, 0, 0, n), {g, g, d});
  Var up1 = ops::reshape(ops::upsample_bilinear(grid, f1), {g1 * g1, d});
  const std::int64_t c1 = p["dec.up1.w"].value().dim(1);
  Var d1 = ops::reshape(ops::gelu(affine(up1, p, "dec.up1.w", "dec.up1.b")), {g1, g1, c1});
  Var up2 = ops::reshape(ops::upsample_bilinear(d1, f2), {s * s, c1});
  Var d2 = ops::gelu(affine(up2, p, "dec.up2.w", "dec.up2.b"));
  Var logits = ops::reshape(affine(d2, p, "dec.head.w", "dec.head.b"), {s, s});
  return {logits, features};
}

ModelOutputs predict(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                     const GroupMask& mask, const Tensor& image, const PromptBox& box) {
  Tape tape(false);
  BoundParams bound = bind_params(tape, params);
  ModelOutput out = forward(tape, bound, config, catalog, mask, image, box);
  return {out.logits.value(), out.features.value()};
}

Tensor predict_logits(const ParamStore& params, const ModelConfig& config, const GroupCatalog& catalog,
                      const GroupMask& mask, const Tensor& image, const PromptBox& box) {
  return predict(params, config, catalog, mask, image, box).logits;
}

std::int64_t estimate_flops(const ModelConfig& config, const ParamStore& params, const GroupCatalog& catalog,
                            const GroupMask& mask) {
  const auto masks = block_masks(catalog, mask, config.num_blocks);
  const std::int64_t d = config.embed_dim;
  const std::int64_t dh = config.head_dim();
  const std::int64_t t = config.tokens();
  const std::int64_t n = config.num_patches();
  const std::int64_t p2 = 3LL * config.patch_size * config.patch_size;
  std::int64_t flops = 2 * n * p2 * d + 2 * 4 * d;
  for (int b = 0; b < config.num_blocks; ++b) {
    const auto& bm = masks[static_cast<std::size_t>(b)];
    std::int64_t heads = 0;
    for (bool a : bm.head_active) heads += a ? 1 : 0;
    std::int64_t hidden = 0;
    for (double v : bm.mlp_scale.data()) hidden += v != 0.0 ? 1 : 0;
    flops += 3 * 2 * t * d * heads * dh;       // q, k, v projections
    flops += heads * 2 * (2 * t * t * dh);     // scores and weighted values
    flops += 2 * t * heads * dh * d;           // output projection
    flops += 2 * (2 * t * d * hidden);         // two MLP layers
  }
  const auto [f1, f2] = config.upsample_factors();
  const std::int64_t g1 = static_cast<std::int64_t>(config.grid()) * f1;
  const std::int64_t s = config.image_size;
  const std::int64_t c1 = params.at("dec.up1.w").dim(1);
  const std::int64_t c2 = params.at("dec.up2.w").dim(1);
  flops += 2 * g1 * g1 * d * c1 + 2 * s * s * c1 * c2 + 2 * s * s * c2;
  return flops;
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) { return wrap(config, build_model(config, seed)); }

Model Model::wrap(const ModelConfig& config, ParamStore params) {
  GroupCatalog catalog = GroupCatalog::build(config, params);
  return {config, std::move(params), std::move(catalog)};
}

}  // namespace medcore
