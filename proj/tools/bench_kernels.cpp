// Times the OpenMP kernels against the serial reference implementation.

#include <chrono>
#include <cstdio>
#include <functional>

#include "cyclemorph/kernels.hpp"
#include "cyclemorph/rng.hpp"

using namespace cm;

namespace {

Tensor random_tensor(const std::vector<int>& shape, RandomStream& rng) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

double time_ms(const std::function<void()>& fn, int repeats) {
  fn();  // warm-up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

void report(const char* name, double omp_ms, double ref_ms) {
  std::printf("%-28s omp %9.3f ms   serial %9.3f ms   speedup %5.2fx\n", name, omp_ms, ref_ms,
              ref_ms / omp_ms);
}

}  // namespace

int main() {
  RandomStream rng(7);
  const int repeats = 5;

  std::printf("threads: %d\n", thread_count());

  {
    Tensor in = random_tensor({16, 128, 128}, rng);
    Tensor w = random_tensor({32, 16, 3, 3}, rng);
    Tensor b = random_tensor({32}, rng);
    ConvSpec spec{1};
    report("conv2d 16->32 128^2",
           time_ms([&] { kern::conv_forward(in, w, b, spec); }, repeats),
           time_ms([&] { kern_ref::conv_forward(in, w, b, spec); }, repeats));

    Tensor out = kern::conv_forward(in, w, b, spec);
    report("conv2d grad_input",
           time_ms([&] { kern::conv_grad_input(out, w, in.shape, spec); }, repeats),
           time_ms([&] { kern_ref::conv_grad_input(out, w, in.shape, spec); }, repeats));

    Tensor gw(w.shape), gb(b.shape);
    report("conv2d grad_params",
           time_ms([&] { kern::conv_grad_params(out, in, spec, gw, gb); }, repeats),
           time_ms([&] { kern_ref::conv_grad_params(out, in, spec, gw, gb); }, repeats));
  }

  {
    Tensor in = random_tensor({8, 16, 64, 64}, rng);
    Tensor w = random_tensor({8, 8, 3, 3, 3}, rng);
    Tensor b = random_tensor({8}, rng);
    ConvSpec spec{2};
    report("conv3d stride2 8ch 16x64^2",
           time_ms([&] { kern::conv_forward(in, w, b, spec); }, repeats),
           time_ms([&] { kern_ref::conv_forward(in, w, b, spec); }, repeats));
  }

  {
    Tensor img = random_tensor({1, 256, 256}, rng);
    report("window_sum r=4 256^2",
           time_ms(
               [&] {
                 Tensor t = kern::window_sum1d(img, 1, 4);
                 kern::window_sum1d(t, 2, 4);
               },
               repeats),
           time_ms(
               [&] {
                 Tensor t = kern_ref::window_sum1d(img, 1, 4);
                 kern_ref::window_sum1d(t, 2, 4);
               },
               repeats));

    Tensor phi = random_tensor({2, 256, 256}, rng);
    for (auto& v : phi.data) v *= 3.0f;
    report("warp 256^2",
           time_ms([&] { kern::warp_forward(img, phi); }, repeats),
           time_ms([&] { kern_ref::warp_forward(img, phi); }, repeats));

    report("reduce_sum 256^2",
           time_ms([&] { kern::reduce_sum(img); }, repeats * 20),
           time_ms([&] { kern_ref::reduce_sum(img); }, repeats * 20));
  }

  return 0;
}
