#pragma once
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

// Small dense tensor library: row-major matrices, a define-by-run autodiff
// tape, AdamW, and a binary checkpoint format. The hot kernels (matmul,
// causal attention, gelu, layer norm) come in a serial reference version and
// an OpenMP version that splits work along independent rows/heads, so both
// produce bit-identical results at any thread count.
namespace nn {

struct Error : std::runtime_error {
  enum class Kind { ShapeMismatch, BadCheckpoint };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), T(0)) {}
  T& at(int r, int c) { return v[size_t(r) * size_t(cols) + size_t(c)]; }
  T at(int r, int c) const { return v[size_t(r) * size_t(cols) + size_t(c)]; }
  size_t size() const { return v.size(); }
  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

namespace kernels {

// choose the OpenMP variants; with OpenMP absent the dispatch stays serial
void set_parallel(bool on);
bool parallel();
int max_threads();

// y (+)= op(a) @ op(b) with optional transposes; the contraction always runs
// in ascending index order so serial and parallel agree bitwise.
template <typename T>
void matmul_serial(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc);
template <typename T>
void matmul_parallel(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc);
template <typename T>
void matmul(const Mat<T>& a, bool ta, const Mat<T>& b, bool tb, Mat<T>& y, bool acc);

template <typename T> void gelu_serial(const Mat<T>& x, Mat<T>& y);
template <typename T> void gelu_parallel(const Mat<T>& x, Mat<T>& y);
template <typename T> void gelu(const Mat<T>& x, Mat<T>& y);

// per-row normalization; mean and reciprocal std are kept for the backward pass
template <typename T>
void layer_norm_serial(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                       std::vector<T>& mean, std::vector<T>& rstd);
template <typename T>
void layer_norm_parallel(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                         std::vector<T>& mean, std::vector<T>& rstd);
template <typename T>
void layer_norm(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, Mat<T>& y,
                std::vector<T>& mean, std::vector<T>& rstd);

// multi-head scaled dot-product attention over the causal mask. Scores for
// j > i are never computed, so a row's output cannot depend on later rows.
// The softmax weights (heads x rows x rows, lower triangle) are kept for the
// backward pass.
template <typename T>
void attention_serial(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
                      std::vector<T>& w);
template <typename T>
void attention_parallel(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
                        std::vector<T>& w);
template <typename T>
void attention(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads, Mat<T>& y,
               std::vector<T>& w);

template <typename T>
void attention_backward_serial(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                               const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq, Mat<T>& dk,
                               Mat<T>& dv);
template <typename T>
void attention_backward_parallel(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                                 const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq,
                                 Mat<T>& dk, Mat<T>& dv);
template <typename T>
void attention_backward(const Mat<T>& q, const Mat<T>& k, const Mat<T>& v, int heads,
                        const std::vector<T>& w, const Mat<T>& dy, Mat<T>& dq, Mat<T>& dk,
                        Mat<T>& dv);

}  // namespace kernels

// Define-by-run reverse-mode tape. Build a graph per sample, call backward()
// on a scalar node, read leaf gradients, throw the tape away.
template <typename T>
class Tape {
 public:
  int input(Mat<T> m);  // constant leaf, no gradient tracked
  int param(Mat<T> m);  // leaf whose gradient is wanted

  int matmul(int a, int b);
  int add(int a, int b);          // same shape
  int add_bias(int a, int bias);  // bias is 1 x cols, broadcast over rows
  int mul(int a, int b);          // elementwise
  int scale(int a, T s);
  int tanh_(int a);
  int gelu(int a);
  int layer_norm(int x, int gamma, int beta);  // gamma, beta are 1 x cols
  int causal_attention(int q, int k, int v, int heads);
  int vcat(const std::vector<int>& parts);
  int gather_rows(int a, std::vector<int> idx);
  int mse(int pred, int target);  // mean over all entries, scalar result

  void backward(int id);  // id must be 1 x 1

  const Mat<T>& val(int id) const { return nodes_[size_t(id)].v; }
  const Mat<T>& grad(int id) const { return nodes_[size_t(id)].g; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> v, g;
    std::function<void()> back;  // empty for leaves
  };
  std::vector<Node> nodes_;

  int push(Mat<T> v) {
    nodes_.push_back(Node{std::move(v), {}, {}});
    return int(nodes_.size()) - 1;
  }
  Mat<T>& g(int id) { return nodes_[size_t(id)].g; }
  const Mat<T>& v(int id) const { return nodes_[size_t(id)].v; }
};

// AdamW with decoupled weight decay; decay is skipped for entries of
// `no_decay` (biases, norm scales, embeddings).
template <typename T>
struct AdamW {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-2;
  int t = 0;
  std::vector<Mat<T>> m, v;

  void step(std::vector<Mat<T>>& params, const std::vector<Mat<T>>& grads,
            const std::vector<bool>& no_decay);
};

struct NamedMat {
  std::string name;
  Mat<float> m;
};

// Checkpoint layout: 8-byte magic, u32 version, u32 metadata length, metadata
// JSON (caller-owned bytes, returned verbatim on load), then each tensor's
// entries as little-endian f32 in declaration order. Tensor names and shapes
// live in a trailer inside the metadata block written by save_checkpoint.
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<NamedMat>& tensors);
struct Checkpoint {
  std::string meta_json;
  std::vector<NamedMat> tensors;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nn
