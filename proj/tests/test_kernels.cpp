#include <doctest.h>

#include "cyclemorph/kernels.hpp"
#include "oracles.hpp"

using namespace cm;

// The OpenMP kernels must agree with the serial reference path. Accumulation
// orders differ, so comparisons use a tight tolerance rather than bit equality.

namespace {

void check_close(const Tensor& a, const TensorT<float>& b, double tol = 1e-5) {
  REQUIRE(a.shape == b.shape);
  for (std::int64_t i = 0; i < a.numel(); ++i)
    CHECK(static_cast<double>(a[i]) ==
          doctest::Approx(static_cast<double>(b[i])).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("conv kernels match the serial reference") {
  RandomStream rng(101);
  for (int rank = 2; rank <= 3; ++rank) {
    for (int stride : {1, 2}) {
      CAPTURE(rank);
      CAPTURE(stride);
      auto in = oracle::random_tensor<float>(
          rank == 2 ? std::vector<int>{3, 9, 10} : std::vector<int>{2, 6, 7, 8}, rng);
      auto w = oracle::random_tensor<float>(
          rank == 2 ? std::vector<int>{4, 3, 3, 3} : std::vector<int>{3, 2, 3, 3, 3}, rng);
      auto b = oracle::random_tensor<float>({w.shape[0]}, rng);
      ConvSpec spec{stride};

      auto f_omp = kern::conv_forward(in, w, b, spec);
      auto f_ref = kern_ref::conv_forward(in, w, b, spec);
      check_close(f_omp, f_ref);

      auto gi_omp = kern::conv_grad_input(f_omp, w, in.shape, spec);
      auto gi_ref = kern_ref::conv_grad_input(f_ref, w, in.shape, spec);
      check_close(gi_omp, gi_ref);

      Tensor gw_omp(w.shape), gb_omp(b.shape), gw_ref(w.shape), gb_ref(b.shape);
      kern::conv_grad_params(f_omp, in, spec, gw_omp, gb_omp);
      kern_ref::conv_grad_params(f_ref, in, spec, gw_ref, gb_ref);
      check_close(gw_omp, gw_ref, 1e-4);
      check_close(gb_omp, gb_ref, 1e-4);
    }
  }
}

TEST_CASE("window sums match the serial reference") {
  RandomStream rng(102);
  auto in = oracle::random_tensor<float>({2, 11, 13}, rng);
  for (int axis : {1, 2}) {
    for (int radius : {1, 2, 4}) {
      check_close(kern::window_sum1d(in, axis, radius), kern_ref::window_sum1d(in, axis, radius));
    }
  }
}

TEST_CASE("warp kernels match the serial reference") {
  RandomStream rng(103);
  for (int rank = 2; rank <= 3; ++rank) {
    CAPTURE(rank);
    auto img = oracle::random_tensor<float>(
        rank == 2 ? std::vector<int>{2, 9, 8} : std::vector<int>{1, 5, 6, 7}, rng, 0.0, 1.0);
    std::vector<int> phi_shape = img.shape;
    phi_shape[0] = rank;
    auto phi = oracle::random_tensor<float>(phi_shape, rng, -2.5, 2.5);

    auto f_omp = kern::warp_forward(img, phi);
    auto f_ref = kern_ref::warp_forward(img, phi);
    check_close(f_omp, f_ref);

    auto gout = oracle::random_tensor<float>(img.shape, rng);
    Tensor gi_omp(img.shape), gp_omp(phi.shape), gi_ref(img.shape), gp_ref(phi.shape);
    kern::warp_grad(img, phi, gout, &gi_omp, &gp_omp);
    kern_ref::warp_grad(img, phi, gout, &gi_ref, &gp_ref);
    check_close(gi_omp, gi_ref);
    check_close(gp_omp, gp_ref);
  }
}

TEST_CASE("resampling kernels match the serial reference") {
  RandomStream rng(104);
  auto in = oracle::random_tensor<float>({3, 6, 8}, rng);
  check_close(kern::upsample_nearest(in, 2), kern_ref::upsample_nearest(in, 2));
  auto big = oracle::random_tensor<float>({2, 12, 16}, rng);
  check_close(kern::upsample_nearest_grad(big, {2, 6, 8}, 2),
              kern_ref::upsample_nearest_grad(big, {2, 6, 8}, 2));
  check_close(kern::downsample_avg(big, {2, 2}), kern_ref::downsample_avg(big, {2, 2}));
  auto small = oracle::random_tensor<float>({2, 6, 8}, rng);
  check_close(kern::downsample_avg_grad(small, {2, 12, 16}, {2, 2}),
              kern_ref::downsample_avg_grad(small, {2, 12, 16}, {2, 2}));
}

TEST_CASE("deterministic reduction matches the serial sum") {
  RandomStream rng(105);
  auto in = oracle::random_tensor<float>({1, 100, 123}, rng);
  CHECK(kern::reduce_sum(in) ==
        doctest::Approx(kern_ref::reduce_sum(in)).epsilon(1e-10));
}
