#include "manipdt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

#include "manipdt/jsonio.hpp"

namespace nn {

namespace {

std::string shape_of(int r, int c) { return std::to_string(r) + "x" + std::to_string(c); }

template <typename T>
std::string shape_of(const Mat<T>& m) { return shape_of(m.rows, m.cols); }

}  // namespace

namespace kernels {

namespace {
bool g_parallel = true;
}

void set_parallel(bool on) { g_parallel = on; }
bool parallel() { return g_parallel; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void matmul_serial(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc) {
  int m = ta ? a.cols : a.rows;
  int kk = ta ? a.rows : a.cols;
  int kb = tb ? b.cols : b.rows;
  int n = tb ? b.rows : b.cols;
  if (kk != kb)
    throw Error(Error::Kind::ShapeMismatch, "matmul: " + shape_of(a) + (ta ? "^T" : "") + " @ " +
                                                shape_of(b) + (tb ? "^T" : ""));
  if (y.rows != m || y.cols != n) y = Mat<T>(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = acc ? y.at(i, j) : T(0);
      for (int p = 0; p < kk; ++p)
        s += (ta ? a.at(p, i) : a.at(i, p)) * (tb ? b.at(j, p) : b.at(p, j));
      y.at(i, j) = s;
    }
}

template <typename T>
void matmul_parallel(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc) {
  int m = ta ? a.cols : a.rows;
  int kk = ta ? a.rows : a.cols;
  int kb = tb ? b.cols : b.rows;
  int n = tb ? b.rows : b.cols;
  if (kk != kb)
    throw Error(Error::Kind::ShapeMismatch, "matmul: " + shape_of(a) + (ta ? "^T" : "") + " @ " +
                                                shape_of(b) + (tb ? "^T" : ""));
  if (y.rows != m || y.cols != n) y = Mat<T>(m, n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s = acc ? y.at(i, j) : T(0);
      for (int p = 0; p < kk; ++p)
        s += (ta ? a.at(p, i) : a.at(i, p)) * (tb ? b.at(j, p) : b.at(p, j));
      y.at(i, j) = s;
    }
}

template <typename T>
void matmul(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc) {
  if (g_parallel)
    matmul_parallel(a, ta, b, tb, y, acc);
  else
    matmul_serial(a, ta, b, tb, y, acc);
}

namespace {

const double kInvSqrt2 = 0.70710678118654752;
const double kInvSqrt2Pi = 0.39894228040143268;

template <typename T>
T gelu_one(T x) {
  return T(0.5) * x * (T(1) + T(std::erf(double(x) * kInvSqrt2)));
}

}  // namespace

template <typename T>
void gelu_serial(const Mat<T>& x, Mat<T>& y) {
  if (y.rows != x.rows || y.cols != x.cols) y = Mat<T>(x.rows, x.cols);
  for (size_t i = 0; i < x.v.size(); ++i) y.v[i] = gelu_one(x.v[i]);
}

template <typename T>
void gelu_parallel(const Mat<T>& x, Mat<T>& y) {
  if (y.rows != x.rows || y.cols != x.cols) y = Mat<T>(x.rows, x.cols);
  int n = int(x.v.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) y.v[size_t(i)] = gelu_one(x.v[size_t(i)]);
}

template <typename T>
void gelu(const Mat<T>& x, Mat<T>& y) {
  if (g_parallel)
    gelu_parallel(x, y);
  else
    gelu_serial(x, y);
}

namespace {

template <typename T>
void layer_norm_row(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                    std::vector<T>& mean, std::vector<T>& rstd, int r) {
  const T eps = T(1e-5);
  int c = x.cols;
  T mu = 0;
  for (int j = 0; j < c; ++j) mu += x.at(r, j);
  mu /= T(c);
  T var = 0;
  for (int j = 0; j < c; ++j) {
    T d = x.at(r, j) - mu;
    var += d * d;
  }
  var /= T(c);
  T rs = T(1) / std::sqrt(var + eps);
  mean[size_t(r)] = mu;
  rstd[size_t(r)] = rs;
  for (int j = 0; j < c; ++j) y.at(r, j) = (x.at(r, j) - mu) * rs * gamma.at(0, j) + beta.at(0, j);
}

}  // namespace

template <typename T>
void layer_norm_serial(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                       std::vector<T>& mean, std::vector<T>& rstd) {
  if (gamma.rows != 1 || gamma.cols != x.cols || beta.rows != 1 || beta.cols != x.cols)
    throw Error(Error::Kind::ShapeMismatch, "layer_norm: scale/shift must be 1x" +
                                                std::to_string(x.cols));
  if (y.rows != x.rows || y.cols != x.cols) y = Mat<T>(x.rows, x.cols);
  mean.assign(size_t(x.rows), T(0));
  rstd.assign(size_t(x.rows), T(0));
  for (int r = 0; r < x.rows; ++r) layer_norm_row(x, gamma, beta, y, mean, rstd, r);
}

template <typename T>
void layer_norm_parallel(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                         std::vector<T>& mean, std::vector<T>& rstd) {
  if (gamma.rows != 1 || gamma.cols != x.cols || beta.rows != 1 || beta.cols != x.cols)
    throw Error(Error::Kind::ShapeMismatch, "layer_norm: scale/shift must be 1x" +
                                                std::to_string(x.cols));
  if (y.rows != x.rows || y.cols != x.cols) y = Mat<T>(x.rows, x.cols);
  mean.assign(size_t(x.rows), T(0));
  rstd.assign(size_t(x.rows), T(0));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int r = 0; r < x.rows; ++r) layer_norm_row(x, gamma, beta, y, mean, rstd, r);
}

template <typename T>
void layer_norm(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                std::vector<T>& mean, std::vector<T>& rstd) {
  if (g_parallel)
    layer_norm_parallel(x, gamma, beta, y, mean, rstd);
  else
    layer_norm_serial(x, gamma, beta, y, mean, rstd);
}

namespace {

template <typename T>
void check_attention_shapes(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads) {
  if (k.rows != q.rows || v.rows != q.rows || k.cols != q.cols || v.cols != q.cols)
    throw Error(Error::Kind::ShapeMismatch, "attention: q/k/v must share a shape");
  if (heads <= 0 || q.cols % heads != 0)
    throw Error(Error::Kind::ShapeMismatch,
                "attention: width " + std::to_string(q.cols) + " not divisible into " +
                    std::to_string(heads) + " heads");
}

// one (head, query row) cell: scores over j <= i only, then the weighted sum
template <typename T>
void attention_cell(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int hd, T scale, Mat<T>& y,
                    std::vector<T>& w, int h, int i) {
  int R = q.rows;
  int o = h * hd;
  T* wrow = &w[(size_t(h) * size_t(R) + size_t(i)) * size_t(R)];
  T mx = -std::numeric_limits<T>::infinity();
  for (int j = 0; j <= i; ++j) {
    T e = 0;
    for (int c = 0; c < hd; ++c) e += q.at(i, o + c) * k.at(j, o + c);
    e *= scale;
    wrow[j] = e;
    if (e > mx) mx = e;
  }
  T z = 0;
  for (int j = 0; j <= i; ++j) {
    wrow[j] = std::exp(wrow[j] - mx);
    z += wrow[j];
  }
  for (int j = 0; j <= i; ++j) wrow[j] /= z;
  for (int c = 0; c < hd; ++c) {
    T s = 0;
    for (int j = 0; j <= i; ++j) s += wrow[j] * v.at(j, o + c);
    y.at(i, o + c) = s;
  }
}

}  // namespace

template <typename T>
void attention_serial(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
                      std::vector<T>& w) {
  check_attention_shapes(q, k, v, heads);
  int R = q.rows, hd = q.cols / heads;
  T scale = T(1) / std::sqrt(T(hd));
  if (y.rows != R || y.cols != q.cols) y = Mat<T>(R, q.cols);
  w.assign(size_t(heads) * size_t(R) * size_t(R), T(0));
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < R; ++i) attention_cell(q, k, v, hd, scale, y, w, h, i);
}

template <typename T>
void attention_parallel(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
                        std::vector<T>& w) {
  check_attention_shapes(q, k, v, heads);
  int R = q.rows, hd = q.cols / heads;
  T scale = T(1) / std::sqrt(T(hd));
  if (y.rows != R || y.cols != q.cols) y = Mat<T>(R, q.cols);
  w.assign(size_t(heads) * size_t(R) * size_t(R), T(0));
  int cells = heads * R;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int cell = 0; cell < cells; ++cell)
    attention_cell(q, k, v, hd, scale, y, w, cell / R, cell % R);
}

template <typename T>
void attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
               std::vector<T>& w) {
  if (g_parallel)
    attention_parallel(q, k, v, heads, y, w);
  else
    attention_serial(q, k, v, heads, y, w);
}

namespace {

// one head's backward; heads touch disjoint column slices of dq/dk/dv, and
// within a head the i-loop runs in fixed order, so parallelizing over heads
// keeps every accumulation sequence identical to the serial version
template <typename T>
void attention_head_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int hd,
                             const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq, Mat<T>& dk,
                             Mat<T>& dv, int h) {
  int R = q.rows;
  int o = h * hd;
  T scale = T(1) / std::sqrt(T(hd));
  std::vector<T> dwrow(size_t(R), T(0));
  for (int i = 0; i < R; ++i) {
    const T* wrow = &w[(size_t(h) * size_t(R) + size_t(i)) * size_t(R)];
    for (int j = 0; j <= i; ++j) {
      T dw = 0;
      for (int c = 0; c < hd; ++c) {
        dv.at(j, o + c) += wrow[j] * dy.at(i, o + c);
        dw += dy.at(i, o + c) * v.at(j, o + c);
      }
      dwrow[size_t(j)] = dw;
    }
    T mix = 0;
    for (int j = 0; j <= i; ++j) mix += wrow[j] * dwrow[size_t(j)];
    for (int j = 0; j <= i; ++j) {
      T de = wrow[j] * (dwrow[size_t(j)] - mix) * scale;
      for (int c = 0; c < hd; ++c) {
        dq.at(i, o + c) += de * k.at(j, o + c);
        dk.at(j, o + c) += de * q.at(i, o + c);
      }
    }
  }
}

}  // namespace

template <typename T>
void attention_backward_serial(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                               const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq, Mat<T>& dk,
                               Mat<T>& dv) {
  int hd = q.cols / heads;
  for (int h = 0; h < heads; ++h) attention_head_backward(q, k, v, hd, w, dy, dq, dk, dv, h);
}

template <typename T>
void attention_backward_parallel(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                                 const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq,
                                 Mat<T>& dk, Mat<T>& dv) {
  int hd = q.cols / heads;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int h = 0; h < heads; ++h) attention_head_backward(q, k, v, hd, w, dy, dq, dk, dv, h);
}

template <typename T>
void attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                        const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq, Mat<T>& dk,
                        Mat<T>& dv) {
  if (g_parallel)
    attention_backward_parallel(q, k, v, heads, w, dy, dq, dk, dv);
  else
    attention_backward_serial(q, k, v, heads, w, dy, dq, dk, dv);
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// tape

template <typename T>
int Tape<T>::input(Mat<T> m) {
  return push(std::move(m));
}

template <typename T>
int Tape<T>::param(Mat<T> m) {
  return push(std::move(m));
}

template <typename T>
int Tape<T>::matmul(int a, int b) {
  if (v(a).cols != v(b).rows)
    throw Error(Error::Kind::ShapeMismatch,
                "matmul: " + shape_of(v(a)) + " @ " + shape_of(v(b)));
  Mat<T> y;
  kernels::matmul(v(a), false, v(b), false, y, false);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, b, out] {
    kernels::matmul(g(out), false, v(b), true, g(a), true);
    kernels::matmul(v(a), true, g(out), false, g(b), true);
  };
  return out;
}

template <typename T>
int Tape<T>::add(int a, int b) {
  if (v(a).rows != v(b).rows || v(a).cols != v(b).cols)
    throw Error(Error::Kind::ShapeMismatch, "add: " + shape_of(v(a)) + " vs " + shape_of(v(b)));
  Mat<T> y = v(a);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] += v(b).v[i];
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, b, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) {
      g(a).v[i] += g(out).v[i];
      g(b).v[i] += g(out).v[i];
    }
  };
  return out;
}

template <typename T>
int Tape<T>::add_bias(int a, int bias) {
  if (v(bias).rows != 1 || v(bias).cols != v(a).cols)
    throw Error(Error::Kind::ShapeMismatch,
                "add_bias: " + shape_of(v(bias)) + " onto " + shape_of(v(a)));
  Mat<T> y = v(a);
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) y.at(r, c) += v(bias).at(0, c);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, bias, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) g(a).v[i] += g(out).v[i];
    for (int r = 0; r < g(out).rows; ++r)
      for (int c = 0; c < g(out).cols; ++c) g(bias).at(0, c) += g(out).at(r, c);
  };
  return out;
}

template <typename T>
int Tape<T>::mul(int a, int b) {
  if (v(a).rows != v(b).rows || v(a).cols != v(b).cols)
    throw Error(Error::Kind::ShapeMismatch, "mul: " + shape_of(v(a)) + " vs " + shape_of(v(b)));
  Mat<T> y = v(a);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] *= v(b).v[i];
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, b, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) {
      g(a).v[i] += g(out).v[i] * v(b).v[i];
      g(b).v[i] += g(out).v[i] * v(a).v[i];
    }
  };
  return out;
}

template <typename T>
int Tape<T>::scale(int a, T s) {
  Mat<T> y = v(a);
  for (T& x : y.v) x *= s;
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, s, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) g(a).v[i] += s * g(out).v[i];
  };
  return out;
}

template <typename T>
int Tape<T>::tanh_(int a) {
  Mat<T> y = v(a);
  for (T& x : y.v) x = std::tanh(x);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) {
      T t = v(out).v[i];
      g(a).v[i] += g(out).v[i] * (T(1) - t * t);
    }
  };
  return out;
}

template <typename T>
int Tape<T>::gelu(int a) {
  Mat<T> y;
  kernels::gelu(v(a), y);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, out] {
    for (size_t i = 0; i < g(out).v.size(); ++i) {
      double x = double(v(a).v[i]);
      double phi = 0.5 * (1.0 + std::erf(x * kernels::kInvSqrt2));
      double dens = kernels::kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g(a).v[i] += g(out).v[i] * T(phi + x * dens);
    }
  };
  return out;
}

template <typename T>
int Tape<T>::layer_norm(int x, int gamma, int beta) {
  Mat<T> y;
  auto mean = std::make_shared<std::vector<T>>();
  auto rstd = std::make_shared<std::vector<T>>();
  kernels::layer_norm(v(x), v(gamma), v(beta), y, *mean, *rstd);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, x, gamma, beta, out, mean, rstd] {
    const Mat<T>& X = v(x);
    const Mat<T>& G = v(gamma);
    const Mat<T>& dy = g(out);
    int C = X.cols;
    for (int r = 0; r < X.rows; ++r) {
      T mu = (*mean)[size_t(r)], rs = (*rstd)[size_t(r)];
      T s1 = 0, s2 = 0;
      for (int c = 0; c < C; ++c) {
        T h = (X.at(r, c) - mu) * rs;
        T dyg = dy.at(r, c) * G.at(0, c);
        s1 += dyg;
        s2 += dyg * h;
        g(gamma).at(0, c) += dy.at(r, c) * h;
        g(beta).at(0, c) += dy.at(r, c);
      }
      s1 /= T(C);
      s2 /= T(C);
      for (int c = 0; c < C; ++c) {
        T h = (X.at(r, c) - mu) * rs;
        g(x).at(r, c) += rs * (dy.at(r, c) * G.at(0, c) - s1 - h * s2);
      }
    }
  };
  return out;
}

template <typename T>
int Tape<T>::causal_attention(int q, int k, int vv, int heads) {
  Mat<T> y;
  auto w = std::make_shared<std::vector<T>>();
  kernels::attention(v(q), v(k), v(vv), heads, y, *w);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, q, k, vv, heads, w, out] {
    kernels::attention_backward(v(q), v(k), v(vv), heads, *w, g(out), g(q), g(k), g(vv));
  };
  return out;
}

template <typename T>
int Tape<T>::vcat(const std::vector<int>& parts) {
  if (parts.empty()) throw Error(Error::Kind::ShapeMismatch, "vcat of nothing");
  int cols = v(parts[0]).cols, rows = 0;
  for (int p : parts) {
    if (v(p).cols != cols)
      throw Error(Error::Kind::ShapeMismatch, "vcat: width " + std::to_string(v(p).cols) +
                                                  " != " + std::to_string(cols));
    rows += v(p).rows;
  }
  Mat<T> y(rows, cols);
  int r0 = 0;
  for (int p : parts) {
    std::copy(v(p).v.begin(), v(p).v.end(), y.v.begin() + size_t(r0) * size_t(cols));
    r0 += v(p).rows;
  }
  int out = push(std::move(y));
  std::vector<int> ps = parts;
  nodes_[size_t(out)].back = [this, ps, out] {
    size_t off = 0;
    for (int p : ps) {
      for (size_t i = 0; i < g(p).v.size(); ++i) g(p).v[i] += g(out).v[off + i];
      off += g(p).v.size();
    }
  };
  return out;
}

template <typename T>
int Tape<T>::gather_rows(int a, std::vector<int> idx) {
  const Mat<T>& A = v(a);
  for (int i : idx)
    if (i < 0 || i >= A.rows)
      throw Error(Error::Kind::ShapeMismatch,
                  "gather_rows: row " + std::to_string(i) + " of " + shape_of(A));
  Mat<T> y(int(idx.size()), A.cols);
  for (size_t r = 0; r < idx.size(); ++r)
    for (int c = 0; c < A.cols; ++c) y.at(int(r), c) = A.at(idx[r], c);
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, a, idx, out] {
    for (size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < g(a).cols; ++c) g(a).at(idx[r], c) += g(out).at(int(r), c);
  };
  return out;
}

template <typename T>
int Tape<T>::mse(int pred, int target) {
  const Mat<T>& P = v(pred);
  const Mat<T>& Q = v(target);
  if (P.rows != Q.rows || P.cols != Q.cols)
    throw Error(Error::Kind::ShapeMismatch, "mse: " + shape_of(P) + " vs " + shape_of(Q));
  T n = T(P.v.size());
  T loss = 0;
  for (size_t i = 0; i < P.v.size(); ++i) {
    T d = P.v[i] - Q.v[i];
    loss += d * d;
  }
  Mat<T> y(1, 1);
  y.at(0, 0) = loss / n;
  int out = push(std::move(y));
  nodes_[size_t(out)].back = [this, pred, target, n, out] {
    T dl = g(out).at(0, 0);
    for (size_t i = 0; i < g(pred).v.size(); ++i) {
      T d = T(2) * (v(pred).v[i] - v(target).v[i]) / n;
      g(pred).v[i] += dl * d;
      g(target).v[i] -= dl * d;
    }
  };
  return out;
}

template <typename T>
void Tape<T>::backward(int id) {
  if (v(id).rows != 1 || v(id).cols != 1)
    throw Error(Error::Kind::ShapeMismatch, "backward wants a scalar, got " + shape_of(v(id)));
  for (Node& n : nodes_) n.g = Mat<T>(n.v.rows, n.v.cols);
  nodes_[size_t(id)].g.at(0, 0) = T(1);
  for (size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

// ---------------------------------------------------------------------------
// optimizer

template <typename T>
void AdamW<T>::step(std::vector<Mat<T>>& params, const std::vector<Mat<T>>& grads,
                    const std::vector<bool>& no_decay) {
  if (grads.size() != params.size() || no_decay.size() != params.size())
    throw Error(Error::Kind::ShapeMismatch, "optimizer: param/grad list sizes differ");
  if (m.empty()) {
    for (const Mat<T>& p : params) {
      m.emplace_back(p.rows, p.cols);
      v.emplace_back(p.rows, p.cols);
    }
  }
  t += 1;
  T c1 = T(1.0 / (1.0 - std::pow(beta1, double(t))));
  T c2 = T(1.0 / (1.0 - std::pow(beta2, double(t))));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat<T>& p = params[i];
    const Mat<T>& gr = grads[i];
    if (gr.rows != p.rows || gr.cols != p.cols)
      throw Error(Error::Kind::ShapeMismatch, "optimizer: grad " + shape_of(gr) +
                                                  " for param " + shape_of(p));
    T wd = no_decay[i] ? T(0) : T(weight_decay);
    for (size_t e = 0; e < p.v.size(); ++e) {
      T gg = gr.v[e];
      m[i].v[e] = T(beta1) * m[i].v[e] + (T(1) - T(beta1)) * gg;
      v[i].v[e] = T(beta2) * v[i].v[e] + (T(1) - T(beta2)) * gg * gg;
      T mhat = m[i].v[e] * c1;
      T vhat = v[i].v[e] * c2;
      p.v[e] -= T(lr) * (mhat / (std::sqrt(vhat) + T(eps)) + wd * p.v[e]);
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

const char kMagic[8] = {'M', 'D', 'T', '1', 'C', 'K', 'P', 'T'};
const uint32_t kVersion = 1;

void put_u32(std::string& s, uint32_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 24) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t& pos) {
  if (pos + 4 > s.size()) throw Error(Error::Kind::BadCheckpoint, "checkpoint truncated");
  uint32_t v = uint32_t(uint8_t(s[pos])) | uint32_t(uint8_t(s[pos + 1])) << 8 |
               uint32_t(uint8_t(s[pos + 2])) << 16 | uint32_t(uint8_t(s[pos + 3])) << 24;
  pos += 4;
  return v;
}

void put_f32(std::string& s, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(s, u);
}

float get_f32(const std::string& s, size_t& pos) {
  uint32_t u = get_u32(s, pos);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<NamedMat>& tensors) {
  jsonio::Writer tw;
  tw.raw("[");
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (i) tw.raw(",");
    tw.raw("{\"name\":");
    tw.str(tensors[i].name);
    tw.raw(",\"rows\":");
    tw.num(int64_t(tensors[i].m.rows));
    tw.raw(",\"cols\":");
    tw.num(int64_t(tensors[i].m.cols));
    tw.raw("}");
  }
  tw.raw("]");

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, uint32_t(meta_json.size()));
  out += meta_json;
  put_u32(out, uint32_t(tw.out.size()));
  out += tw.out;
  for (const NamedMat& t : tensors)
    for (float f : t.m.v) put_f32(out, f);
  jsonio::write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string s = jsonio::read_file(path);
  if (s.size() < sizeof(kMagic) || std::memcmp(s.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(Error::Kind::BadCheckpoint, path + ": bad magic");
  size_t pos = sizeof(kMagic);
  uint32_t ver = get_u32(s, pos);
  if (ver != kVersion)
    throw Error(Error::Kind::BadCheckpoint,
                path + ": version " + std::to_string(ver) + ", expected " +
                    std::to_string(kVersion));
  uint32_t meta_len = get_u32(s, pos);
  if (pos + meta_len > s.size()) throw Error(Error::Kind::BadCheckpoint, "checkpoint truncated");
  Checkpoint ck;
  ck.meta_json = s.substr(pos, meta_len);
  pos += meta_len;
  uint32_t table_len = get_u32(s, pos);
  if (pos + table_len > s.size()) throw Error(Error::Kind::BadCheckpoint, "checkpoint truncated");
  nlohmann::json table = nlohmann::json::parse(s.substr(pos, table_len), nullptr, false);
  pos += table_len;
  if (table.is_discarded() || !table.is_array())
    throw Error(Error::Kind::BadCheckpoint, path + ": bad tensor table");
  for (const auto& e : table) {
    NamedMat t;
    try {
      t.name = e.at("name").get<std::string>();
      t.m = Mat<float>(e.at("rows").get<int>(), e.at("cols").get<int>());
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Error::Kind::BadCheckpoint, path + ": " + ex.what());
    }
    for (float& f : t.m.v) f = get_f32(s, pos);
    ck.tensors.push_back(std::move(t));
  }
  if (pos != s.size())
    throw Error(Error::Kind::BadCheckpoint, path + ": trailing bytes after tensor data");
  return ck;
}

// ---------------------------------------------------------------------------

#define MANIPDT_NN_INSTANTIATE(T)                                                              \
  template class Tape<T>;                                                                      \
  template struct AdamW<T>;                                                                    \
  namespace kernels {                                                                          \
  template void matmul_serial<T>(const Mat<T>&, bool, const Mat<T>&, bool, Mat<T>&, bool);     \
  template void matmul_parallel<T>(const Mat<T>&, bool, const Mat<T>&, bool, Mat<T>&, bool);   \
  template void matmul<T>(const Mat<T>&, bool, const Mat<T>&, bool, Mat<T>&, bool);            \
  template void gelu_serial<T>(const Mat<T>&, Mat<T>&);                                        \
  template void gelu_parallel<T>(const Mat<T>&, Mat<T>&);                                      \
  template void gelu<T>(const Mat<T>&, Mat<T>&);                                               \
  template void layer_norm_serial<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,     \
                                     std::vector<T>&, std::vector<T>&);                        \
  template void layer_norm_parallel<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,   \
                                       std::vector<T>&, std::vector<T>&);                      \
  template void layer_norm<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>&,            \
                              std::vector<T>&, std::vector<T>&);                               \
  template void attention_serial<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int, Mat<T>&, \
                                    std::vector<T>&);                                          \
  template void attention_parallel<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int,        \
                                      Mat<T>&, std::vector<T>&);                               \
  template void attention<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int, Mat<T>&,        \
                             std::vector<T>&);                                                 \
  template void attention_backward_serial<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int, \
                                             const std::vector<T>&, const Mat<T>&, Mat<T>&,    \
                                             Mat<T>&, Mat<T>&);                                \
  template void attention_backward_parallel<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,    \
                                               int, const std::vector<T>&, const Mat<T>&,      \
                                               Mat<T>&, Mat<T>&, Mat<T>&);                     \
  template void attention_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, int,        \
                                      const std::vector<T>&, const Mat<T>&, Mat<T>&, Mat<T>&,  \
                                      Mat<T>&);                                                \
  }

MANIPDT_NN_INSTANTIATE(float)
MANIPDT_NN_INSTANTIATE(double)

#undef MANIPDT_NN_INSTANTIATE

}  // namespace nn
