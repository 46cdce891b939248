#include <doctest.h>

#include <memory>

#include "cyclemorph/losses.hpp"
#include "cyclemorph/regnet.hpp"
#include "oracles.hpp"

using namespace cm;
using losses::Normalization;

namespace {

template <typename T>
VarT<T> leaf_of(TapeT<T>& tape, const TensorT<T>& t) {
  return tape.leaf(t);
}

// zero-displacement network stub
template <typename T>
losses::NetFn<T> zero_net() {
  return [](VarT<T> moving, VarT<T>) {
    auto shape = moving.shape();
    shape[0] = static_cast<int>(shape.size()) - 1;
    return moving.tape->leaf(TensorT<T>(shape));
  };
}

}  // namespace

TEST_CASE("local_ncc basics") {
  RandomStream rng(41);
  SUBCASE("identical textured images under one full-image window score ~1") {
    auto img = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto v = leaf_of(tape, img);
    auto ncc = losses::local_ncc<double>(v, v, 25, 1e-5, Normalization::kMean);
    CHECK(ncc.scalar() == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("constant image scores 0") {
    TensorT<double> flat({1, 10, 10});
    for (auto& v : flat.data) v = 0.6;
    auto other = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto ncc = losses::local_ncc<double>(leaf_of(tape, flat), leaf_of(tape, other), 9, 1e-5,
                                         Normalization::kMean);
    CHECK(ncc.scalar() == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("random 12x12 pair matches the sliding-window oracle") {
    for (int trial = 0; trial < 5; ++trial) {
      auto a = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
      auto b = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
      TapeT<double> tape;
      auto got = losses::local_ncc<double>(leaf_of(tape, a), leaf_of(tape, b), 5, 1e-5,
                                           Normalization::kMean);
      const double want = oracle::direct_ncc(a, b, 5, 1e-5, true);
      CHECK(got.scalar() == doctest::Approx(want).epsilon(1e-9));
    }
  }
  SUBCASE("symmetry is exact") {
    auto a = oracle::random_tensor<float>({1, 10, 10}, rng, 0.0, 1.0);
    auto b = oracle::random_tensor<float>({1, 10, 10}, rng, 0.0, 1.0);
    Tape t1, t2;
    auto ab = losses::local_ncc<float>(t1.leaf(a), t1.leaf(b), 7, 1e-5);
    auto ba = losses::local_ncc<float>(t2.leaf(b), t2.leaf(a), 7, 1e-5);
    CHECK(ab.scalar() == ba.scalar());
  }
  SUBCASE("invariant to affine intensity rescaling") {
    auto a = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
    auto b = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
    auto a2 = a;
    for (auto& v : a2.data) v = 1.7 * v + 0.25;
    TapeT<double> tape;
    auto base = losses::local_ncc<double>(leaf_of(tape, a), leaf_of(tape, b), 9, 1e-5);
    auto scaled = losses::local_ncc<double>(leaf_of(tape, a2), leaf_of(tape, b), 9, 1e-5);
    CHECK(scaled.scalar() == doctest::Approx(base.scalar()).epsilon(1e-4));
  }
  SUBCASE("per-voxel values stay in [0, 1+delta]") {
    auto a = oracle::random_tensor<double>({1, 14, 14}, rng, 0.0, 1.0);
    auto b = oracle::random_tensor<double>({1, 14, 14}, rng, 0.0, 1.0);
    TapeT<double> tape;
    // sum mode equals the per-voxel total; with 14^2 voxels a bound of
    // numel * (1+delta) holds only if each voxel is bounded
    auto total = losses::local_ncc<double>(leaf_of(tape, a), leaf_of(tape, b), 5, 1e-5,
                                           Normalization::kSum);
    CHECK(total.scalar() >= 0.0);
    CHECK(total.scalar() <= 14 * 14 * (1.0 + 1e-3));
  }
  SUBCASE("even window raises") {
    auto a = oracle::random_tensor<float>({1, 8, 8}, rng);
    Tape tape;
    auto v = tape.leaf(a);
    CHECK_THROWS_AS(losses::local_ncc<float>(v, v, 4, 1e-5), ShapeError);
  }
}

TEST_CASE("smoothness") {
  SUBCASE("constant field costs nothing") {
    TensorT<double> c({2, 6, 6});
    for (std::int64_t i = 0; i < 36; ++i) {
      c[i] = 1.2;
      c[36 + i] = -0.7;
    }
    TapeT<double> tape;
    CHECK(losses::smoothness<double>(tape.leaf(c), Normalization::kSum).scalar() ==
          doctest::Approx(0.0));
  }
  SUBCASE("hand-enumerated forward differences") {
    // single component along one axis: [0,1,2] -> squared diffs 1,1,0
    TensorT<double> ramp({1, 1, 3}, std::vector<double>{0, 1, 2});
    // treat as a 1-component field on a 1x3 lattice: rank mismatch is fine
    // for the operation (it differentiates spatial axes only)
    TapeT<double> tape;
    auto s = losses::smoothness<double>(tape.leaf(ramp), Normalization::kSum);
    CHECK(s.scalar() == doctest::Approx(2.0));
  }
  SUBCASE("random field matches the oracle in both modes") {
    RandomStream rng(43);
    auto phi = oracle::random_tensor<double>({2, 7, 9}, rng, -2.0, 2.0);
    for (bool mean_mode : {false, true}) {
      TapeT<double> tape;
      auto got = losses::smoothness<double>(
          tape.leaf(phi), mean_mode ? Normalization::kMean : Normalization::kSum);
      CHECK(got.scalar() ==
            doctest::Approx(oracle::direct_smoothness(phi, mean_mode)).epsilon(1e-9));
    }
  }
}

TEST_CASE("registration loss") {
  RandomStream rng(44);
  losses::HyperParams hp;
  hp.ncc_window = 5;
  SUBCASE("perfect alignment with zero field scores about -1") {
    auto img = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto x = tape.leaf(img);
    auto phi = tape.leaf(TensorT<double>({2, 12, 12}));
    hp.lambda = 3.0;  // smoothness of the zero field contributes nothing
    auto loss = losses::registration_loss<double>(x, x, phi, hp);
    CHECK(loss.scalar() == doctest::Approx(-1.0).epsilon(2e-2));
  }
  SUBCASE("lambda 0 equals pure negative similarity") {
    auto a = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    auto b = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    auto phi = oracle::random_tensor<double>({2, 10, 10}, rng, -1.0, 1.0);
    hp.lambda = 0.0;
    TapeT<double> tape;
    auto xv = tape.leaf(a);
    auto yv = tape.leaf(b);
    auto pv = tape.leaf(phi);
    auto loss = losses::registration_loss<double>(xv, yv, pv, hp);
    auto warped = ops::warp(xv, pv);
    auto ncc = losses::local_ncc<double>(warped, yv, hp.ncc_window, hp.eps, hp.normalization);
    CHECK(loss.scalar() == doctest::Approx(-ncc.scalar()).epsilon(1e-12));
  }
  SUBCASE("random instance equals the oracle composition") {
    auto a = oracle::random_tensor<double>({1, 9, 9}, rng, 0.0, 1.0);
    auto b = oracle::random_tensor<double>({1, 9, 9}, rng, 0.0, 1.0);
    auto phi = oracle::random_tensor<double>({2, 9, 9}, rng, -1.5, 1.5);
    hp.lambda = 0.8;
    TapeT<double> tape;
    auto loss = losses::registration_loss<double>(tape.leaf(a), tape.leaf(b), tape.leaf(phi), hp);
    auto warped = oracle::direct_warp(a, phi);
    TensorT<double> wt;
    wt.shape = warped.shape;
    wt.data = warped.data;
    const double want = -oracle::direct_ncc(wt, b, hp.ncc_window, hp.eps, true) +
                        hp.lambda * oracle::direct_smoothness(phi, true);
    CHECK(loss.scalar() == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("cycle loss") {
  RandomStream rng(45);
  SUBCASE("identical pair with zero fields costs nothing") {
    auto img = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto x = tape.leaf(img);
    auto zero = tape.leaf(TensorT<double>({2, 8, 8}));
    auto loss = losses::cycle_loss<double>(x, x, x, x, zero, zero, Normalization::kMean);
    CHECK(loss.scalar() == doctest::Approx(0.0));
  }
  SUBCASE("random instance matches the absolute-difference oracle") {
    auto x = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto xh = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto yh = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto pf = oracle::random_tensor<double>({2, 8, 8}, rng, -1.0, 1.0);
    auto pr = oracle::random_tensor<double>({2, 8, 8}, rng, -1.0, 1.0);
    TapeT<double> tape;
    auto got = losses::cycle_loss<double>(tape.leaf(x), tape.leaf(y), tape.leaf(xh),
                                          tape.leaf(yh), tape.leaf(pf), tape.leaf(pr),
                                          Normalization::kSum);
    auto back_x = oracle::direct_warp(yh, pr);
    auto back_y = oracle::direct_warp(xh, pf);
    double want = 0;
    for (size_t i = 0; i < back_x.data.size(); ++i) {
      want += std::abs(back_x.data[i] - x.data[i]);
      want += std::abs(back_y.data[i] - y.data[i]);
    }
    CHECK(got.scalar() == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("non-negative and zero only at exact reconstruction") {
    RandomStream r2(46);
    auto x = oracle::random_tensor<double>({1, 6, 6}, r2, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 6, 6}, r2, 0.0, 1.0);
    TapeT<double> tape;
    auto zero = tape.leaf(TensorT<double>({2, 6, 6}));
    // y_hat = x and x_hat = y already "cycled" back by zero fields
    auto loss = losses::cycle_loss<double>(tape.leaf(x), tape.leaf(y), tape.leaf(y),
                                           tape.leaf(x), zero, zero, Normalization::kMean);
    CHECK(loss.scalar() == doctest::Approx(0.0));
    auto off = losses::cycle_loss<double>(tape.leaf(x), tape.leaf(y), tape.leaf(x),
                                          tape.leaf(y), zero, zero, Normalization::kMean);
    CHECK(off.scalar() > 0.0);
  }
}

TEST_CASE("identity loss") {
  RandomStream rng(47);
  losses::HyperParams hp;
  hp.ncc_window = 5;
  SUBCASE("zero-field networks reach the analytic minimum of about -2") {
    auto x = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto loss = losses::identity_loss<double>(tape.leaf(x), tape.leaf(y), zero_net<double>(),
                                              zero_net<double>(), hp);
    CHECK(loss.scalar() == doctest::Approx(-2.0).epsilon(2e-2));
  }
  SUBCASE("identical inputs give two identical terms") {
    auto x = oracle::random_tensor<double>({1, 10, 10}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto v = tape.leaf(x);
    auto loss = losses::identity_loss<double>(v, v, zero_net<double>(), zero_net<double>(), hp);
    auto warped = ops::warp(v, tape.leaf(TensorT<double>({2, 10, 10})));
    auto one_term = losses::local_ncc<double>(warped, v, hp.ncc_window, hp.eps);
    CHECK(loss.scalar() == doctest::Approx(-2.0 * one_term.scalar()).epsilon(1e-12));
  }
  SUBCASE("tiny network matches a manual chained evaluation") {
    regnet::RegNetConfig net;
    net.enc_widths = {2, 2};
    net.dec_widths = {2, 2, 2};
    auto params = regnet::init(net, 99);
    // give the final layer real output so the test exercises a nonzero field
    for (auto& [name, t] : params)
      if (name == "flow.w")
        for (auto& v : t.data) v = 0.05f;
    auto x = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);

    TapeT<double> tape;
    auto vars = regnet::params_to_vars<double>(tape, params, false);
    losses::NetFn<double> fwd = [&](VarT<double> m, VarT<double> f) {
      return regnet::forward<double>(net, vars, m, f);
    };
    auto xv = tape.leaf(x);
    auto yv = tape.leaf(y);
    auto loss = losses::identity_loss<double>(xv, yv, fwd, fwd, hp);

    auto manual_term = [&](VarT<double> img) {
      auto phi = regnet::forward<double>(net, vars, img, img);
      auto warped = ops::warp(img, phi);
      return losses::local_ncc<double>(warped, img, hp.ncc_window, hp.eps).scalar();
    };
    CHECK(loss.scalar() ==
          doctest::Approx(-manual_term(yv) - manual_term(xv)).epsilon(1e-9));
  }
}

TEST_CASE("total loss") {
  RandomStream rng(48);
  regnet::RegNetConfig net;
  net.enc_widths = {2, 2};
  net.dec_widths = {2, 2, 2};

  auto make_netfn = [&](TapeT<double>& tape, const regnet::RegNetParams& p) {
    auto vars = std::make_shared<regnet::VarMap<double>>(
        regnet::params_to_vars<double>(tape, p, false));
    return losses::NetFn<double>([&, vars](VarT<double> m, VarT<double> f) {
      return regnet::forward<double>(net, *vars, m, f);
    });
  };

  SUBCASE("zero weights reduce the objective to the registration terms") {
    losses::HyperParams hp;
    hp.alpha = 0;
    hp.beta = 0;
    hp.ncc_window = 5;
    auto pf = regnet::init(net, 1);
    auto pr = regnet::init(net, 2);
    auto x = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto loss = losses::total_loss<double>(tape.leaf(x), tape.leaf(y), make_netfn(tape, pf),
                                           make_netfn(tape, pr), hp);
    CHECK(loss.total_value == doctest::Approx(loss.reg_fwd + loss.reg_rev).epsilon(1e-12));
    CHECK(loss.total.scalar() ==
          doctest::Approx(loss.reg_fwd + loss.reg_rev).epsilon(1e-9));
  }

  SUBCASE("zero-field networks on an identical pair score -2(1+beta)") {
    losses::HyperParams hp;
    hp.alpha = 0.3;
    hp.beta = 0.7;
    hp.ncc_window = 5;
    auto img = oracle::random_tensor<double>({1, 12, 12}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto x = tape.leaf(img);
    auto loss =
        losses::total_loss<double>(x, x, zero_net<double>(), zero_net<double>(), hp);
    CHECK(loss.total_value == doctest::Approx(-2.0 - 2.0 * hp.beta).epsilon(2e-2));
  }

  SUBCASE("breakdown components sum to the total exactly") {
    losses::HyperParams hp;
    hp.alpha = 0.45;
    hp.beta = 0.2;
    hp.ncc_window = 5;
    auto pf = regnet::init(net, 5);
    auto pr = regnet::init(net, 6);
    auto x = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    auto y = oracle::random_tensor<double>({1, 8, 8}, rng, 0.0, 1.0);
    TapeT<double> tape;
    auto loss = losses::total_loss<double>(tape.leaf(x), tape.leaf(y), make_netfn(tape, pf),
                                           make_netfn(tape, pr), hp);
    CHECK(loss.total_value ==
          loss.reg_fwd + loss.reg_rev + hp.alpha * loss.cycle + hp.beta * loss.identity);
  }
}

TEST_CASE("losses are differentiable end to end") {
  RandomStream rng(49);
  SUBCASE("ncc gradient") {
    auto a = oracle::random_tensor<double>({1, 8, 8}, rng, 0.1, 0.9);
    auto b = oracle::random_tensor<double>({1, 8, 8}, rng, 0.1, 0.9);
    auto rep = oracle::fd_check({a, b}, [](TapeT<double>&, std::vector<VarT<double>>& in) {
      return losses::local_ncc<double>(in[0], in[1], 5, 1e-5);
    });
    INFO(rep.detail);
    CHECK(rep.ok);
  }
  SUBCASE("smoothness gradient") {
    auto phi = oracle::random_tensor<double>({2, 6, 6}, rng, -1.0, 1.0);
    auto rep = oracle::fd_check({phi}, [](TapeT<double>&, std::vector<VarT<double>>& in) {
      return losses::smoothness<double>(in[0], Normalization::kMean);
    });
    INFO(rep.detail);
    CHECK(rep.ok);
  }
  SUBCASE("cycle L1 gradient away from zero residuals") {
    auto x = oracle::random_tensor<double>({1, 6, 6}, rng, 0.0, 0.4);
    auto yh = oracle::random_tensor<double>({1, 6, 6}, rng, 0.6, 1.0);
    auto phi = oracle::random_tensor<double>({2, 6, 6}, rng, 0.1, 0.4);
    auto rep =
        oracle::fd_check({x, yh, phi}, [](TapeT<double>&, std::vector<VarT<double>>& in) {
          auto zero = in[0].tape->leaf(TensorT<double>({2, 6, 6}));
          return losses::cycle_loss<double>(in[0], in[0], in[1], in[1], zero, in[2],
                                            Normalization::kMean);
        });
    INFO(rep.detail);
    CHECK(rep.ok);
  }
}
