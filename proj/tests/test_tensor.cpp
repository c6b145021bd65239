#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "vertexgen/checkpoint.hpp"
#include "vertexgen/rng.hpp"
#include "vertexgen/tensor.hpp"

using namespace vgen;
using testsup::max_fd_error_inputs;

namespace {

TensorData<double> rnd(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorData<double> t(std::move(shape));
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// Scalar readout that keeps per-element gradients nontrivial.
template <class Tp>
typename Tp::Id square_mean(Tp& tape, typename Tp::Id y) {
  return tape.mean(tape.mul(y, y));
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("d/dx of x squared at x = 3 is 6") {
    Tape<double> tape;
    TensorData<double> x({1});
    x.v[0] = 3.0;
    auto xid = tape.input(x);
    auto y = tape.mul(xid, xid);
    tape.backward(y);
    CHECK(tape.val(y).v[0] == 9.0);
    CHECK(tape.grad_of(xid)[0] == 6.0);
  }

  TEST_CASE("softmax rows sum to one") {
    Rng rng = Rng::derive(41, "tensor.softmax");
    Tape<double> tape;
    auto x = tape.input(rnd({3, 7}, rng, -4.0, 4.0));
    auto y = tape.softmax(x);
    const auto& v = tape.val(y);
    for (int r = 0; r < 3; ++r) {
      double s = 0.0;
      for (int c = 0; c < 7; ++c) s += v.v[size_t(r) * 7 + c];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("finite differences: every op") {
    Rng rng = Rng::derive(42, "tensor.fd");
    const double tol = 1e-4;

    SUBCASE("matmul") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng), rnd({4, 5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.matmul(in[0], in[1]));
                                }) < tol);
    }
    SUBCASE("linear") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng), rnd({4, 5}, rng), rnd({5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.linear(in[0], in[1], in[2]));
                                }) < tol);
    }
    SUBCASE("add same shape and broadcast row") {
      CHECK(max_fd_error_inputs({rnd({4, 5}, rng), rnd({4, 5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.add(in[0], in[1]));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({4, 5}, rng), rnd({1, 5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.add(in[0], in[1]));
                                }) < tol);
    }
    SUBCASE("mul same shape and broadcast row") {
      CHECK(max_fd_error_inputs({rnd({4, 5}, rng), rnd({4, 5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.mul(in[0], in[1]));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({4, 5}, rng), rnd({1, 5}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.mul(in[0], in[1]));
                                }) < tol);
    }
    SUBCASE("sub") {
      CHECK(max_fd_error_inputs({rnd({3, 3}, rng), rnd({3, 3}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.sub(in[0], in[1]));
                                }) < tol);
    }
    SUBCASE("affine") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.affine(in[0], 1.7, -0.3));
                                }) < tol);
    }
    SUBCASE("sigmoid") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng, -3.0, 3.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.sigmoid(in[0]));
                                }) < tol);
    }
    SUBCASE("gelu") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng, -3.0, 3.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.gelu(in[0]));
                                }) < tol);
    }
    SUBCASE("sin and cos") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng, -3.0, 3.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.sin_op(in[0]));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng, -3.0, 3.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.cos_op(in[0]));
                                }) < tol);
    }
    SUBCASE("log") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng, 0.5, 2.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.log_op(in[0]));
                                }) < tol);
    }
    SUBCASE("clamp away from its kinks") {
      TensorData<double> x = rnd({4, 4}, rng);
      for (double& v : x.v)
        if (std::fabs(std::fabs(v) - 0.5) < 0.02) v += 0.05;
      CHECK(max_fd_error_inputs({x},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.clamp(in[0], -0.5, 0.5));
                                }) < tol);
    }
    SUBCASE("softmax") {
      CHECK(max_fd_error_inputs({rnd({3, 5}, rng, -2.0, 2.0)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.softmax(in[0]));
                                }) < tol);
    }
    SUBCASE("layer norm") {
      CHECK(max_fd_error_inputs({rnd({3, 6}, rng), rnd({6}, rng, 0.5, 1.5), rnd({6}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.layer_norm(in[0], in[1], in[2]));
                                }) < tol);
    }
    SUBCASE("sum and mean") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.sum(in[0]));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.mean(in[0]));
                                }) < tol);
    }
    SUBCASE("slices") {
      CHECK(max_fd_error_inputs({rnd({3, 6}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.slice_cols(in[0], 1, 4));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({5, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.slice_rows(in[0], 1, 3));
                                }) < tol);
    }
    SUBCASE("concatenation") {
      CHECK(max_fd_error_inputs({rnd({2, 4}, rng), rnd({3, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.concat_rows({in[0], in[1]}));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({3, 2}, rng), rnd({3, 3}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.concat_cols({in[0], in[1]}));
                                }) < tol);
    }
    SUBCASE("reshape and repeat") {
      CHECK(max_fd_error_inputs({rnd({3, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.reshape(in[0], {2, 6}));
                                }) < tol);
      CHECK(max_fd_error_inputs({rnd({2, 3}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.repeat_rows(in[0], 3));
                                }) < tol);
    }
    SUBCASE("attention, plain and causal") {
      CHECK(max_fd_error_inputs(
                {rnd({4, 6}, rng), rnd({5, 6}, rng), rnd({5, 6}, rng)},
                [](auto& t, auto& in) {
                  return square_mean(t, t.attention(in[0], in[1], in[2], 2, false));
                }) < tol);
      CHECK(max_fd_error_inputs(
                {rnd({4, 6}, rng), rnd({4, 6}, rng), rnd({4, 6}, rng)},
                [](auto& t, auto& in) {
                  return square_mean(t, t.attention(in[0], in[1], in[2], 2, true));
                }) < tol);
    }
    SUBCASE("cross entropy") {
      CHECK(max_fd_error_inputs({rnd({4, 7}, rng, -2.0, 2.0)},
                                [](auto& t, auto& in) {
                                  return t.cross_entropy(in[0], {1, 0, 6, 3});
                                }) < tol);
    }
    SUBCASE("embedding, with repeated ids") {
      CHECK(max_fd_error_inputs({rnd({7, 4}, rng)},
                                [](auto& t, auto& in) {
                                  return square_mean(t, t.embed(in[0], {1, 3, 3, 6}));
                                }) < tol);
    }
  }

  TEST_CASE("composite MLP gradient vs finite differences") {
    Rng rng = Rng::derive(43, "tensor.mlp");
    double err = max_fd_error_inputs(
        {rnd({2, 4}, rng), rnd({4, 8}, rng, -0.5, 0.5), rnd({8}, rng, -0.1, 0.1),
         rnd({8, 1}, rng, -0.5, 0.5), rnd({1}, rng, -0.1, 0.1)},
        [](auto& t, auto& in) {
          auto h = t.gelu(t.linear(in[0], in[1], in[2]));
          auto y = t.linear(h, in[3], in[4]);
          return square_mean(t, y);
        });
    CHECK(err < 1e-3);
  }

  TEST_CASE("backward semantics: ones, accumulation, error cases") {
    ParamStore<double> store;
    Param<double>& p = store.add("p", {2, 3});
    for (size_t k = 0; k < p.value.v.size(); ++k) p.value.v[k] = 0.1 * double(k);

    Tape<double> tape;
    tape.attach(store);
    auto loss = tape.sum(tape.param(p));
    tape.backward(loss);
    for (double g : p.grad.v) CHECK(g == 1.0);

    // Backward again without zeroing accumulates.
    tape.backward(loss);
    for (double g : p.grad.v) CHECK(g == 2.0);
    CHECK(store.backward_runs() == 2);
    store.zero_grad();
    for (double g : p.grad.v) CHECK(g == 0.0);
    CHECK(store.backward_runs() == 0);

    // Non-scalar root is rejected; backward on an empty tape is an order
    // violation.
    Tape<double> t2;
    auto vec = t2.input(TensorData<double>({2}));
    CHECK_THROWS_AS(t2.backward(vec), std::invalid_argument);
    Tape<double> t3;
    CHECK_THROWS_AS(t3.backward(0), InvalidState);

    Tape<double> t4;
    auto a = t4.input(TensorData<double>({2, 3}));
    auto b = t4.input(TensorData<double>({2, 3}));
    CHECK_THROWS_AS(t4.matmul(a, b), std::invalid_argument);
  }

  TEST_CASE("adamw: state gating, inert parameters, quadratic convergence") {
    ParamStore<float> store;
    Param<float>& w = store.add("w", {1});
    Param<float>& idle = store.add("idle", {2});
    w.value.v[0] = 0.0f;
    idle.value.v = {1.5f, -2.5f};

    AdamW<float> opt;
    CHECK_THROWS_AS(opt.step(store, 0.05, 0.0), InvalidState);

    // Quadratic objective (w - 3)^2: converges to its minimum in 500 steps.
    for (int it = 0; it < 500; ++it) {
      Tape<float> tape;
      tape.attach(store);
      auto diff = tape.affine(tape.param(w), 1.0f, -3.0f);
      auto loss = tape.mul(diff, diff);
      tape.backward(loss);
      opt.step(store, 0.05, 0.0);
      store.zero_grad();
    }
    CHECK(std::fabs(double(w.value.v[0]) - 3.0) < 0.01);
    // A parameter with zero gradient and zero weight decay never moves.
    CHECK(idle.value.v[0] == 1.5f);
    CHECK(idle.value.v[1] == -2.5f);
  }

  TEST_CASE("attention work counter") {
    Rng rng = Rng::derive(44, "tensor.flops");
    Tape<double> tape;
    auto q = tape.input(rnd({5, 8}, rng));
    auto k = tape.input(rnd({9, 8}, rng));
    auto v = tape.input(rnd({9, 8}, rng));
    CHECK(tape.attention_flops() == 0);
    tape.attention(q, k, v, 2, false);
    uint64_t cross = uint64_t(4) * 8 * 5 * 9;
    CHECK(tape.attention_flops() == cross);
    auto s = tape.input(rnd({6, 8}, rng));
    tape.attention(s, s, s, 2, true);
    CHECK(tape.attention_flops() == cross + uint64_t(4) * 8 * (6 * 7 / 2));
  }

  TEST_CASE("checkpoint: bit-exact round trip of weights and optimizer") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "vgen-test-ckpt";
    fs::create_directories(dir);
    std::string path = (dir / "t.ckpt").string();

    ParamStore<float> store;
    Rng rng = Rng::derive(45, "tensor.ckpt");
    Param<float>& a = store.add("a", {2, 3});
    Param<float>& b = store.add("b", {4});
    for (float& x : a.value.v) x = float(rng.uniform(-1.0, 1.0));
    for (float& x : b.value.v) x = float(rng.uniform(-1.0, 1.0));

    AdamW<float> opt;
    {
      Tape<float> tape;
      tape.attach(store);
      auto loss = tape.mean(tape.mul(tape.param(a), tape.param(a)));
      auto l2 = tape.add(loss, tape.mean(tape.param(b)));
      tape.backward(l2);
      opt.step(store, 1e-3, 1e-2);
      store.zero_grad();
    }

    Checkpoint ck = pack_params(store);
    ck.meta["model"] = "unit-test";
    pack_optimizer(ck, opt, store);
    save_checkpoint(path, ck);

    Checkpoint back = load_checkpoint(path);
    CHECK(back.meta["model"] == "unit-test");
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (size_t k = 0; k < ck.tensors.size(); ++k) {
      CHECK(back.tensors[k].name == ck.tensors[k].name);
      CHECK(back.tensors[k].shape == ck.tensors[k].shape);
      CHECK(back.tensors[k].v == ck.tensors[k].v);
    }

    ParamStore<float> store2;
    store2.add("a", {2, 3});
    store2.add("b", {4});
    unpack_params(back, store2);
    CHECK(store2.at("a").value.v == a.value.v);
    CHECK(store2.at("b").value.v == b.value.v);

    AdamW<float> opt2;
    CHECK(unpack_optimizer(back, opt2, store2));
    CHECK(opt2.step_count() == opt.step_count());
    CHECK(opt2.moment1("a").v == opt.moment1("a").v);
    CHECK(opt2.moment2("b").v == opt.moment2("b").v);

    // Shape disagreement is rejected.
    ParamStore<float> store3;
    store3.add("a", {3, 2});
    store3.add("b", {4});
    CHECK_THROWS_AS(unpack_params(back, store3), std::runtime_error);

    // A params-only checkpoint reports no optimizer state.
    Checkpoint plain = pack_params(store);
    AdamW<float> opt3;
    CHECK_FALSE(unpack_optimizer(plain, opt3, store));

    fs::remove_all(dir);
  }
}
