#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "cyclemorph/dtf.hpp"
#include "cyclemorph/ops.hpp"
#include "cyclemorph/rng.hpp"
#include "oracles.hpp"

using namespace cm;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.0f);
  CHECK(t.numel() == 6);
  CHECK(t.strides() == std::vector<std::int64_t>{3, 1});
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1.0f}), ShapeError);
}

TEST_CASE("elementwise examples") {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, std::vector<float>{1, 2}));
  Var b = tape.leaf(Tensor({2}, std::vector<float>{3, 4}));
  CHECK(ops::add(a, b).value().data == std::vector<float>{4, 6});
  CHECK(ops::sub(b, a).value().data == std::vector<float>{2, 2});
  CHECK(ops::mul(a, b).value().data == std::vector<float>{3, 8});

  Var ones = tape.leaf(Tensor({2, 2}, 1.0f));
  CHECK(ops::sum(ones).value().data[0] == doctest::Approx(4.0));
  CHECK(ops::mean(ones).value().data[0] == doctest::Approx(1.0));

  Var c = tape.leaf(Tensor({3}, std::vector<float>{-1, 0, 2}));
  CHECK(ops::abs(c).value().data == std::vector<float>{1, 0, 2});
  CHECK(ops::leaky_relu(c, 0.2).value().data == std::vector<float>{-0.2f, 0, 2});

  Var d = tape.leaf(Tensor({2}, std::vector<float>{5, 7}));
  CHECK_THROWS_AS(ops::add(d, tape.leaf(Tensor({3}))), ShapeError);
}

TEST_CASE("identity conv kernel reproduces the interior") {
  RandomStream rng(3);
  auto img = oracle::random_tensor<float>({1, 5, 5}, rng, 0.0, 1.0);
  Tensor w({1, 1, 3, 3});
  w.data[4] = 1.0f;  // center tap
  Tensor b({1});
  auto out = kern::conv_forward(img, w, b, ConvSpec{1});
  for (std::int64_t i = 0; i < img.numel(); ++i)
    CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-6));
}

TEST_CASE("conv matches the direct oracle") {
  RandomStream rng(11);
  for (int rank = 2; rank <= 3; ++rank) {
    for (int stride = 1; stride <= 2; ++stride) {
      std::vector<int> in_shape = rank == 2 ? std::vector<int>{2, 6, 7}
                                            : std::vector<int>{2, 4, 5, 6};
      std::vector<int> w_shape = rank == 2 ? std::vector<int>{3, 2, 3, 3}
                                           : std::vector<int>{3, 2, 3, 3, 3};
      auto in = oracle::random_tensor<float>(in_shape, rng);
      auto w = oracle::random_tensor<float>(w_shape, rng);
      auto b = oracle::random_tensor<float>({3}, rng);
      auto got = kern::conv_forward(in, w, b, ConvSpec{stride});
      auto want = oracle::direct_conv(in, w, b, stride);
      REQUIRE(got.shape == want.shape);
      for (std::int64_t i = 0; i < got.numel(); ++i)
        CHECK(got[i] == doctest::Approx(want.data[static_cast<size_t>(i)]).epsilon(1e-5));
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("loss = sum(x^2)") {
    Tape tape;
    Tensor x({3}, std::vector<float>{1, 2, 3});
    x.requires_grad = true;
    Var xv = tape.leaf(x);
    auto grads = tape.backward(ops::sum(ops::square(xv)));
    CHECK(grads.at(xv.id).data == std::vector<float>{2, 4, 6});
  }
  SUBCASE("loss = mean(x) gives 1/n") {
    Tape tape;
    Tensor x({4}, 5.0f);
    x.requires_grad = true;
    Var xv = tape.leaf(x);
    auto grads = tape.backward(ops::mean(xv));
    for (float g : grads.at(xv.id).data) CHECK(g == doctest::Approx(0.25));
  }
  SUBCASE("non-scalar loss rejected") {
    Tape tape;
    Tensor x({2});
    x.requires_grad = true;
    Var xv = tape.leaf(x);
    CHECK_THROWS_AS(tape.backward(xv), ShapeError);
  }
  SUBCASE("consumed tape rejected") {
    Tape tape;
    Tensor x({1});
    x.requires_grad = true;
    Var xv = tape.leaf(x);
    auto loss = ops::sum(xv);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), NumericError);
  }
  SUBCASE("unreached leaves get zero gradients") {
    Tape tape;
    Tensor x({2});
    x.requires_grad = true;
    Tensor y({2}, 1.0f);
    y.requires_grad = true;
    Var xv = tape.leaf(x);
    Var yv = tape.leaf(y);
    auto grads = tape.backward(ops::sum(xv));
    CHECK(grads.at(yv.id).data == std::vector<float>{0, 0});
  }
}

TEST_CASE("finite differences validate every primitive") {
  RandomStream rng(17);
  using D = TensorT<double>;

  auto check1 = [&](const char* name, const D& input,
                    std::function<VarT<double>(TapeT<double>&, VarT<double>)> op) {
    // fixed weighting of the output so the gradient is non-uniform
    D weights;
    {
      TapeT<double> scratch;
      auto probe = op(scratch, scratch.leaf(input));
      weights = oracle::random_tensor<double>(probe.value().shape, rng, 0.5, 1.5);
    }
    auto rep = oracle::fd_check({input}, [&, weights](TapeT<double>& t,
                                                      std::vector<VarT<double>>& in) {
      return ops::sum(ops::mul(op(t, in[0]), t.leaf(weights)));
    });
    INFO(name, ": ", rep.detail);
    CHECK(rep.ok);
  };

  auto in4 = oracle::random_tensor<double>({1, 4, 4}, rng, 0.2, 0.8);
  check1("square", in4, [](TapeT<double>&, VarT<double> x) { return ops::square(x); });
  check1("sqrt", in4, [](TapeT<double>&, VarT<double> x) { return ops::sqrt(x, 1e-5); });
  check1("neg", in4, [](TapeT<double>&, VarT<double> x) { return ops::neg(x); });
  check1("mul_scalar", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::mul_scalar(x, 2.5); });
  check1("add_scalar", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::add_scalar(x, -0.3); });
  check1("window_sum", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::window_sum_spatial(x, 1); });
  check1("forward_diff", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::forward_diff(x, 1); });
  check1("upsample", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::upsample_nearest(x, 2); });
  check1("downsample", in4,
         [](TapeT<double>&, VarT<double> x) { return ops::downsample_avg(x, {2, 2}); });
  check1("sum_axis", in4, [](TapeT<double>&, VarT<double> x) { return ops::sum_axis(x, 1); });
  check1("crop", in4, [](TapeT<double>&, VarT<double> x) {
    return ops::crop_spatial(x, {1, 0}, {2, 3});
  });
  check1("pad", in4, [](TapeT<double>&, VarT<double> x) {
    return ops::pad_spatial(x, {1, 2}, {0, 1});
  });

  // abs and leaky_relu away from their kinks
  auto kinky = oracle::random_tensor<double>({1, 4, 4}, rng, 0.1, 0.9);
  for (auto& v : kinky.data)
    if (rng.uniform() < 0.5) v = -v;
  check1("abs", kinky, [](TapeT<double>&, VarT<double> x) { return ops::abs(x); });
  check1("leaky_relu", kinky,
         [](TapeT<double>&, VarT<double> x) { return ops::leaky_relu(x, 0.2); });

  SUBCASE("binary ops") {
    auto a = oracle::random_tensor<double>({1, 4, 4}, rng, 0.2, 0.9);
    auto b = oracle::random_tensor<double>({1, 4, 4}, rng, 0.3, 1.0);
    for (auto op_kind : {0, 1, 2, 3}) {
      auto rep = oracle::fd_check({a, b}, [&](TapeT<double>&, std::vector<VarT<double>>& in) {
        VarT<double> r;
        switch (op_kind) {
          case 0: r = ops::add(in[0], in[1]); break;
          case 1: r = ops::sub(in[0], in[1]); break;
          case 2: r = ops::mul(in[0], in[1]); break;
          default: r = ops::div(in[0], in[1], 1e-5); break;
        }
        return ops::sum(ops::square(r));
      });
      INFO("binary op ", op_kind, ": ", rep.detail);
      CHECK(rep.ok);
    }
  }

  SUBCASE("conv gradients, both ranks and strides") {
    for (int rank = 2; rank <= 3; ++rank) {
      for (int stride = 1; stride <= 2; ++stride) {
        auto in = oracle::random_tensor<double>(
            rank == 2 ? std::vector<int>{2, 4, 4} : std::vector<int>{1, 4, 4, 4}, rng);
        auto w = oracle::random_tensor<double>(
            rank == 2 ? std::vector<int>{2, 2, 3, 3} : std::vector<int>{2, 1, 3, 3, 3}, rng,
            -0.5, 0.5);
        auto b = oracle::random_tensor<double>({2}, rng);
        auto rep =
            oracle::fd_check({in, w, b}, [&](TapeT<double>&, std::vector<VarT<double>>& leaves) {
              return ops::sum(ops::square(ops::conv(leaves[0], leaves[1], leaves[2], stride)));
            });
        INFO("conv rank ", rank, " stride ", stride, ": ", rep.detail);
        CHECK(rep.ok);
      }
    }
  }

  SUBCASE("concat gradients") {
    auto a = oracle::random_tensor<double>({1, 3, 3}, rng);
    auto b = oracle::random_tensor<double>({2, 3, 3}, rng);
    auto rep = oracle::fd_check({a, b}, [](TapeT<double>&, std::vector<VarT<double>>& in) {
      return ops::sum(ops::square(ops::concat_channels(in[0], in[1])));
    });
    CHECK(rep.ok);
  }
}

TEST_CASE("backward linearity: grad(a f + b g) = a grad f + b grad g") {
  RandomStream rng(23);
  auto x0 = oracle::random_tensor<double>({1, 4, 4}, rng, 0.2, 0.8);
  const double ca = 2.25, cb = -0.5;

  auto grad_of = [&](std::function<VarT<double>(VarT<double>)> f) {
    TapeT<double> tape;
    auto x = x0;
    x.requires_grad = true;
    auto leaf = tape.leaf(x);
    auto grads = tape.backward(f(leaf));
    return grads.at(leaf.id);
  };

  auto f = [](VarT<double> x) { return ops::sum(ops::square(x)); };
  auto g = [](VarT<double> x) { return ops::mean(ops::mul(x, x)); };
  auto combo = [&](VarT<double> x) {
    return ops::add(ops::mul_scalar(f(x), ca), ops::mul_scalar(g(x), cb));
  };

  auto gf = grad_of(f), gg = grad_of(g), gc = grad_of(combo);
  for (size_t i = 0; i < gc.data.size(); ++i)
    CHECK(gc.data[i] == doctest::Approx(ca * gf.data[i] + cb * gg.data[i]).epsilon(1e-12));
}

TEST_CASE("seeded rng contract") {
  SUBCASE("same seed, same stream") {
    RandomStream a(0), b(0);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  }
  SUBCASE("different seeds differ") {
    RandomStream a(0), b(1);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.uniform() == b.uniform();
    CHECK(same < 5);
  }
  SUBCASE("gaussian sample mean near zero") {
    RandomStream rng(42);
    double acc = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += rng.gaussian();
    CHECK(std::abs(acc / n) < 0.02);
  }
}

TEST_CASE("forward determinism is bit-exact") {
  RandomStream rng(5);
  auto in = oracle::random_tensor<float>({2, 8, 8}, rng);
  auto w = oracle::random_tensor<float>({4, 2, 3, 3}, rng);
  auto b = oracle::random_tensor<float>({4}, rng);
  auto r1 = kern::conv_forward(in, w, b, ConvSpec{2});
  auto r2 = kern::conv_forward(in, w, b, ConvSpec{2});
  CHECK(r1.data == r2.data);
}

TEST_CASE("dtf round trip and failure modes") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "cm_dtf_test";
  fs::create_directories(dir);
  RandomStream rng(9);
  auto t = oracle::random_tensor<float>({2, 3, 4}, rng);
  const auto path = (dir / "t.dtf").string();
  dtf::write_file(path, t);
  auto back = dtf::read_file(path);
  CHECK(back.shape == t.shape);
  CHECK(back.data == t.data);

  SUBCASE("bad magic") {
    std::istringstream bad("NOPE....");
    CHECK_THROWS_AS(dtf::read(bad), IoError);
  }
  SUBCASE("truncated payload") {
    std::ostringstream os;
    dtf::write(os, t);
    std::string bytes = os.str();
    bytes.resize(bytes.size() - 7);
    std::istringstream is(bytes);
    CHECK_THROWS_AS(dtf::read(is), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("non-finite forward output raises a structured error") {
  Tape tape;
  Tensor big({2}, 3e38f);
  Var v = tape.leaf(big);
  CHECK_THROWS_AS(ops::mul(v, v), NumericError);
}
