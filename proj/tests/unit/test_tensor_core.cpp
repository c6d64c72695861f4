#include <cmath>
#include <fstream>

#include "doctest.h"
#include "medcore/autograd.hpp"
#include "medcore/checkpoint.hpp"
#include "medcore/error.hpp"
#include "medcore/gradcheck.hpp"
#include "medcore/param_store.hpp"
#include "medcore/rng.hpp"
#include "test_support.hpp"

using namespace medcore;
using medcore::testing::random_tensor;
using medcore::testing::scratch_dir;

TEST_SUITE("tensor-core") {
  TEST_CASE("tensor construction validates shapes") {
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m.at(1, 2) == 6);
    CHECK(m.reshaped({3, 2}).at(2, 1) == 6);
    CHECK_THROWS_AS(m.reshaped({4, 2}), ShapeError);
    CHECK(Tensor::scalar(3.5).item() == 3.5);
    CHECK_THROWS(m.item());
  }

  TEST_CASE("matmul matches a hand-computed product") {
    Tape tape;
    const Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var b = tape.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
    const Tensor c = ops::matmul(a, b).value();
    CHECK(c == Tensor::matrix(2, 2, {19, 22, 43, 50}));
    CHECK_THROWS_AS(ops::matmul(a, tape.constant(Tensor({3, 2}))), ShapeError);
  }

  TEST_CASE("backward of a known function") {
    // f(x) = sum(x^2) has gradient 2x.
    Tape tape;
    const Tensor x0 = Tensor::vector({1.0, -2.0, 0.5});
    const Var x = tape.parameter("x", x0);
    const Gradients g = tape.backward(ops::sum(ops::square(x)));
    const Tensor gx = g.wrt(x);
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK(gx[i] == doctest::Approx(2.0 * x0[i]));
    CHECK(g.parameters().count("x") == 1);
  }

  TEST_CASE("gradients of unreached nodes are zero") {
    Tape tape;
    const Var x = tape.parameter("x", Tensor::vector({1.0, 2.0}));
    const Var y = tape.parameter("y", Tensor::vector({3.0, 4.0}));
    const Tensor gy = tape.backward(ops::sum(x)).wrt(y);
    CHECK(gy == Tensor::zeros({2}));
  }

  TEST_CASE("grad_check passes for every differentiable op over 20 seeds") {
    const std::vector<std::pair<const char*, ScalarFn>> fns = {
        {"matmul", [](Tape& t, Var x) { return ops::sum(ops::matmul(x, t.constant(Tensor::matrix(3, 2, {1, -0.5, 2, 0.5, -0.3, 0.9})))); }},
        {"mul/div", [](Tape&, Var x) { return ops::sum(ops::div(ops::mul(x, x), ops::add_scalar(ops::square(x), 1.0))); }},
        {"softmax", [](Tape& t, Var x) { return ops::sum(ops::mul(ops::softmax_last(x), t.constant(random_tensor({2, 3}, 9)))); }},
        {"layernorm", [](Tape& t, Var x) { return ops::sum(ops::mul(ops::layernorm_last(x), t.constant(random_tensor({2, 3}, 8)))); }},
        {"gelu", [](Tape&, Var x) { return ops::sum(ops::gelu(x)); }},
        {"sigmoid/log", [](Tape&, Var x) { return ops::sum(ops::log(ops::add_scalar(ops::sigmoid(x), 0.1))); }},
        {"exp", [](Tape&, Var x) { return ops::mean(ops::exp(x)); }},
        {"transpose/slice", [](Tape&, Var x) { return ops::sum(ops::square(ops::slice(ops::transpose(x), 0, 1, 2))); }},
        {"bce", [](Tape&, Var x) { return ops::mean(ops::bce_with_logits(x, Tensor::matrix(2, 3, {1, 0, 1, 0, 0, 1}))); }},
        {"laplacian", [](Tape&, Var x) { return ops::sum(ops::square(ops::laplacian4(x))); }},
        {"broadcast", [](Tape& t, Var x) { return ops::sum(ops::square(ops::add(x, t.constant(Tensor::vector({1, 2, 3}))))); }},
    };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor theta = random_tensor({2, 3}, seed);
      for (const auto& [name, f] : fns) {
        const std::string op = name;
        CAPTURE(op);
        CAPTURE(seed);
        CHECK(grad_check(f, theta, 1e-5).max_rel_error < 1e-6);
      }
    }
  }

  TEST_CASE("grad_check rejects a step outside its range") {
    CHECK_THROWS(grad_check([](Tape&, Var x) { return ops::sum(x); }, Tensor::vector({1.0}), 1e-1));
  }

  TEST_CASE("upsampling and patch folding have correct gradients") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Tensor w = random_tensor({4, 4, 2}, seed + 100);
      const Tensor feat = random_tensor({2, 2, 2}, seed);
      CHECK(grad_check([&](Tape& t, Var x) { return ops::sum(ops::mul(ops::upsample_bilinear(x, 2), t.constant(w))); }, feat, 1e-5)
                .max_rel_error < 1e-6);
      CHECK(grad_check([&](Tape& t, Var x) { return ops::sum(ops::mul(ops::upsample_nearest(x, 2), t.constant(w))); }, feat, 1e-5)
                .max_rel_error < 1e-6);
      const Tensor img = random_tensor({3, 4, 4}, seed + 7);
      const Tensor pw = random_tensor({4, 12}, seed + 3);
      CHECK(grad_check([&](Tape& t, Var x) { return ops::sum(ops::mul(ops::patch_fold(x, 2), t.constant(pw))); }, img, 1e-5)
                .max_rel_error < 1e-6);
    }
  }
}

TEST_SUITE("param-store") {
  TEST_CASE("insertion order, alignment and roles") {
    ParamStore a;
    a.add("enc.x", Tensor({2}));
    a.add("prompt.w", Tensor({1}));
    a.add("dec.y", Tensor({3}));
    CHECK(a.names() == std::vector<std::string>{"enc.x", "prompt.w", "dec.y"});
    CHECK(a.parameter_count() == 6);
    CHECK(a.parameter_count(ParamRole::decoder) == 3);
    CHECK(ParamStore::is_frozen("prompt.w"));
    CHECK_FALSE(ParamStore::is_frozen("enc.x"));
    CHECK_THROWS(a.add("enc.x", Tensor({2})));
    ParamStore b = a;
    CHECK(a.aligned_with(b));
    b.set("dec.y", Tensor({4}));
    CHECK_FALSE(a.aligned_with(b));
    CHECK_THROWS_AS(a.require_aligned(b, "test"), ArgumentError);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save/load round trip is bit exact") {
    const auto dir = scratch_dir("ckpt");
    ParamStore p;
    p.add("enc.a", random_tensor({3, 4}, 1));
    p.add("dec.b", Tensor::vector({1e-300, -0.0, 3.141592653589793}));
    save_checkpoint(dir / "p.ckpt", p);
    const ParamStore q = load_checkpoint(dir / "p.ckpt");
    CHECK(q == p);
    CHECK(std::signbit(q.at("dec.b")[1]));
  }

  TEST_CASE("corrupt files raise precise errors") {
    ParamStore p;
    p.add("enc.a", random_tensor({2, 2}, 2));
    std::vector<std::uint8_t> bytes = encode_entries(p.entries());

    auto code_of = [](const std::vector<std::uint8_t>& b) {
      try {
        decode_entries(b);
      } catch (const CheckpointError& e) {
        return static_cast<int>(e.code());
      }
      return -1;
    };
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK(code_of(bad_magic) == static_cast<int>(CheckpointError::Code::bad_magic));
    auto bad_version = bytes;
    bad_version[4] = 99;
    CHECK(code_of(bad_version) == static_cast<int>(CheckpointError::Code::version_mismatch));
    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK(code_of(truncated) == static_cast<int>(CheckpointError::Code::truncated));
    CHECK_THROWS_AS(load_checkpoint(scratch_dir("ckpt_missing") / "none.ckpt"), IoError);
  }
}

TEST_SUITE("rng") {
  TEST_CASE("counter streams are reproducible and independent") {
    CounterRng a(42, 1), b(42, 1), c(42, 2);
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      CHECK(x != c.next_u64());
    }
  }

  TEST_CASE("uniform_int stays in range and hits both ends") {
    CounterRng r(7);
    bool lo = false, hi = false;
    for (int i = 0; i < 2000; ++i) {
      const auto v = r.uniform_int(-2, 3);
      CHECK(v >= -2);
      CHECK(v <= 3);
      lo |= v == -2;
      hi |= v == 3;
    }
    CHECK(lo);
    CHECK(hi);
  }

  TEST_CASE("first outputs are pinned") {
    // SplitMix64 finalizer of key + gamma; guards against accidental stream changes.
    CounterRng r(0, 0);
    const std::uint64_t key = CounterRng::mix(0 ^ CounterRng::mix(CounterRng::kGamma));
    CHECK(r.next_u64() == CounterRng::mix(key + CounterRng::kGamma));
  }
}
