#include <fstream>
#include <sstream>

#include "doctest.h"
#include "medcore/error.hpp"
#include "medcore_harness/config.hpp"
#include "medcore_harness/manifest.hpp"
#include "medcore_harness/pipeline.hpp"
#include "test_support.hpp"

using namespace medcore;
using namespace medcore::harness;
using medcore::testing::scratch_dir;

namespace {

const char* kTiny = R"({
  "run_id": "unit",
  "model": {"embed_dim": 16, "num_blocks": 2, "heads": 2, "mlp_hidden": 8},
  "data": {"calib_per_distribution": 2, "heldout": 4, "base_heldout": 4},
  "train": {"base": {"steps": 4, "batch_size": 2}, "adapt": {"steps": 2, "batch_size": 2},
            "recover": {"steps": 2, "batch_size": 2}},
  "prune": {"head_sparsity": 0.5, "mlp_sparsity": 0.5},
  "sweep": {"h_list": [0.0, 0.5], "m_list": [0.25, 0.5]}
})";

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config errors name the field") {
    CHECK(config_error(R"({"prune": {"head_sparsity": "x"}})").find("prune.head_sparsity") != std::string::npos);
    CHECK(config_error(R"({"prune": {"bogus": 1}})").find("unknown key") != std::string::npos);
    try {
      parse_config(R"({"prune": {"head_sparsity": 1.5}})").validate();
      FAIL("out-of-range sparsity accepted");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("prune") != std::string::npos);
    }
    const std::string syntax = config_error("{\n  \"seed\": 1,\n  oops\n}");
    CHECK(syntax.find("cfg.json") != std::string::npos);
    CHECK(syntax.find("line 3") != std::string::npos);
    CHECK_FALSE(config_error(kTiny) != "");
  }

  TEST_CASE("resolved config round-trips") {
    const ExperimentConfig a = parse_config(kTiny);
    const std::string resolved = resolved_config_json(a);
    const ExperimentConfig b = parse_config(resolved, "resolved");
    CHECK(resolved_config_json(b) == resolved);
    CHECK(b.model.embed_dim == 16);
    CHECK(b.prune.head_sparsity == 0.5);
  }

  TEST_CASE("grid parsing") {
    SweepConfig s;
    apply_grid(s, "h=0.3,0.5;m=0.5,0.7,0.9");
    CHECK(s.h_list == std::vector<double>{0.3, 0.5});
    CHECK(s.m_list == std::vector<double>{0.5, 0.7, 0.9});
    CHECK_THROWS_AS(apply_grid(s, "h=0.3;q=0.1"), ConfigError);
    CHECK_THROWS_AS(apply_grid(s, "h=abc"), ConfigError);
  }

  TEST_CASE("derived seeds differ per stream") {
    CHECK(derive_seed(1, SeedStream::model_init) != derive_seed(1, SeedStream::heldout));
    CHECK(derive_seed(1, SeedStream::model_init) == derive_seed(1, SeedStream::model_init));
  }

  TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK_THROWS_AS(sha256_file(scratch_dir("sha") / "missing"), IoError);
  }

  TEST_CASE("stages need their inputs and guard foreign run directories") {
    RunContext ctx;
    ctx.config = parse_config(kTiny);
    ctx.run_dir = scratch_dir("harness_guard") / "run";
    try {
      run_command("adapt", ctx);
      FAIL("adapt ran without a base checkpoint");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("train-base") != std::string::npos);
    }
    run_command("train-base", ctx);
    RunContext other = ctx;
    other.config.seed = 99;
    CHECK_THROWS_AS(run_command("adapt", other), IoError);
    CHECK_THROWS_AS(run_command("no-such-command", ctx), Error);
  }

  TEST_CASE("pipeline writes the three metric rows and manifests") {
    RunContext ctx;
    ctx.config = parse_config(kTiny);
    ctx.run_dir = scratch_dir("harness_pipeline") / "run";
    cmd_pipeline(ctx);
    const std::string metrics = slurp(ctx.run_dir / "evaluate" / "medcore" / "metrics.csv");
    CHECK(metrics.find("\nunpruned,") != std::string::npos);
    CHECK(metrics.find("\npruned-no-recovery,") != std::string::npos);
    CHECK(metrics.find("\npruned+recovery,") != std::string::npos);
    const ManifestInfo info = read_manifest_info(ctx.run_dir / "prune" / "medcore" / "manifest.json");
    CHECK(info.command == "prune");
    CHECK(info.run_id == "unit");
  }
}
