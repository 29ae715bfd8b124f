#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "manipdt/nn.hpp"
#include "manipdt/rng.hpp"

// Times the serial reference kernels against their OpenMP counterparts and
// verifies both report the same bits. On a single hardware thread the two
// columns should read about the same; the point of the table is that enabling
// the parallel path never changes results, only wall time.
namespace {

using nn::Mat;
using Clock = std::chrono::steady_clock;

Mat<float> randn(rng::Rng& rg, int r, int c) {
  Mat<float> m(r, c);
  for (float& x : m.v) x = float(rg.gaussian());
  return m;
}

double ms_per_call(const std::function<void()>& fn, int iters) {
  fn();  // warm up, and make sure outputs are sized before timing
  auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) fn();
  auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
  std::printf("%-22s %10.3f %12.3f %9.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, identical ? "bit-identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
  int iters = 20;
  int dim = 256;
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  app.add_option("--iters", iters, "timed iterations per kernel");
  app.add_option("--dim", dim, "square matrix / sequence size");
  CLI11_PARSE(app, argc, argv);

  rng::Rng rg(42);
  std::printf("threads available: %d\n", nn::kernels::max_threads());
  std::printf("%-22s %10s %12s %10s\n", "kernel", "serial ms", "parallel ms", "speedup");

  {
    Mat<float> a = randn(rg, dim, dim), b = randn(rg, dim, dim), ys, yp;
    double s = ms_per_call([&] { nn::kernels::matmul_serial(a, false, b, false, ys, false); },
                           iters);
    double p = ms_per_call([&] { nn::kernels::matmul_parallel(a, false, b, false, yp, false); },
                           iters);
    report("matmul " + std::to_string(dim) + "^3", s, p, ys == yp);
  }
  {
    Mat<float> x = randn(rg, dim, dim), ys, yp;
    double s = ms_per_call([&] { nn::kernels::gelu_serial(x, ys); }, iters);
    double p = ms_per_call([&] { nn::kernels::gelu_parallel(x, yp); }, iters);
    report("gelu " + std::to_string(dim * dim), s, p, ys == yp);
  }
  {
    Mat<float> x = randn(rg, dim, dim), gm = randn(rg, 1, dim), bt = randn(rg, 1, dim), ys, yp;
    std::vector<float> m1, r1, m2, r2;
    double s =
        ms_per_call([&] { nn::kernels::layer_norm_serial(x, gm, bt, ys, m1, r1); }, iters);
    double p =
        ms_per_call([&] { nn::kernels::layer_norm_parallel(x, gm, bt, yp, m2, r2); }, iters);
    report("layer_norm " + std::to_string(dim) + " rows", s, p, ys == yp && m1 == m2 && r1 == r2);
  }
  {
    int rows = dim, width = 64, heads = 4;
    Mat<float> q = randn(rg, rows, width), k = randn(rg, rows, width), v = randn(rg, rows, width);
    Mat<float> ys, yp;
    std::vector<float> ws, wp;
    double s =
        ms_per_call([&] { nn::kernels::attention_serial(q, k, v, heads, ys, ws); }, iters);
    double p =
        ms_per_call([&] { nn::kernels::attention_parallel(q, k, v, heads, yp, wp); }, iters);
    report("attention T=" + std::to_string(rows), s, p, ys == yp && ws == wp);

    Mat<float> dy = randn(rg, rows, width);
    Mat<float> dq1(rows, width), dk1(rows, width), dv1(rows, width);
    Mat<float> dq2(rows, width), dk2(rows, width), dv2(rows, width);
    double bs = ms_per_call(
        [&] {
          dq1 = Mat<float>(rows, width);
          dk1 = Mat<float>(rows, width);
          dv1 = Mat<float>(rows, width);
          nn::kernels::attention_backward_serial(q, k, v, heads, ws, dy, dq1, dk1, dv1);
        },
        iters);
    double bp = ms_per_call(
        [&] {
          dq2 = Mat<float>(rows, width);
          dk2 = Mat<float>(rows, width);
          dv2 = Mat<float>(rows, width);
          nn::kernels::attention_backward_parallel(q, k, v, heads, wp, dy, dq2, dk2, dv2);
        },
        iters);
    report("attention bwd", bs, bp, dq1 == dq2 && dk1 == dk2 && dv1 == dv2);
  }
  return 0;
}
