#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace synforge::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Portable generator: the engine is fully specified by the standard, and the
// conversions below avoid the implementation-defined distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class Init { zeros, recurrent, glorot };

struct Parameter {
  std::string name;
  Mat value;
  Init init = Init::glorot;
};

class ParamSet {
 public:
  int add(std::string name, int rows, int cols, Init init);
  int id(std::string_view name) const;
  int size() const { return static_cast<int>(params_.size()); }
  Parameter& operator[](int i) { return params_.at(static_cast<std::size_t>(i)); }
  const Parameter& operator[](int i) const { return params_.at(static_cast<std::size_t>(i)); }
  std::size_t scalar_count() const;

  // Recurrent weights U(-0.08, 0.08), projections and embeddings Glorot
  // uniform, biases zero.
  void initialize(std::uint64_t seed);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, int, std::less<>> index_;
};

// One gradient buffer per parameter, same shapes.
class Grads {
 public:
  explicit Grads(const ParamSet& params);
  Mat& operator[](int i) { return g_[static_cast<std::size_t>(i)]; }
  const Mat& operator[](int i) const { return g_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(g_.size()); }
  void zero();
  void add(const Grads& other);
  void scale(double s);
  double norm() const;

 private:
  std::vector<Mat> g_;
};

// Reverse-mode tape over dense double matrices. Vectors are single columns and
// scalars are 1x1. Products with a parameter matrix defer their weight
// gradient so backward() can fold all of them into one GEMM per parameter.
class Tape {
 public:
  using Var = int;

  explicit Tape(const ParamSet& params) : params_(&params) {}

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  std::size_t size() const { return nodes_.size(); }

  Var input(Mat m);
  Var param(int pid);
  // W X for a parameter W (X may have several columns).
  Var matmul(int pid, Var x);
  // Row r of a parameter, as a column (embedding tables are vocab x dim).
  Var row(int pid, int r);
  // Column c of a parameter.
  Var col(int pid, int c);

  Var add(Var a, Var b);
  // Adds column vector b to every column of a.
  Var add_col(Var a, Var b);
  Var add_bias(Var a, int pid) { return add_col(a, param(pid)); }
  Var mul(Var a, Var b);
  // Elementwise product with a constant (dropout masks).
  Var mul_const(Var a, const Mat& mask);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var concat(std::initializer_list<Var> parts);
  Var concat(std::span<const Var> parts);
  Var hcat(std::span<const Var> cols);
  Var slice(Var a, int start, int len);
  // A B for two tape values.
  Var product(Var a, Var b);
  // A^T b.
  Var transpose_product(Var a, Var b);
  Var softmax(Var a);
  Var log_softmax(Var a);
  Var pick(Var a, int i);
  Var logsumexp(std::span<const Var> scalars);
  Var sum(std::span<const Var> scalars);
  Var neg(Var a);
  // Fused LSTM cell; returns [h'; c'].
  Var lstm(int w, int b, Var x, Var h, Var c);

  // Accumulates scale * d(root)/d(param) into out.
  void backward(Var root, Grads& out, double scale = 1.0);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, Node&)> back;
  };
  struct Deferred {
    int pid;
    Mat dy;
    Mat x;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Tape&, Node&)> back);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v)].needs_grad; }
  // Gradient buffer of v, zero-filled on first use.
  Mat& grad_of(Var v);
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    if (needs(v)) grad_of(v) += g;
  }

  const ParamSet* params_;
  std::vector<Node> nodes_;
  std::vector<Deferred> deferred_;
  Grads* out_ = nullptr;
};

Vec softmax(const Vec& scores);
Vec log_softmax(const Vec& scores);
// Column-wise log-softmax.
Mat log_softmax_cols(const Mat& scores);
double logsumexp(std::span<const double> xs);

// Inverted dropout mask: zeros with probability p, 1/(1-p) otherwise.
Mat dropout_mask(int rows, int cols, double p, Rng& rng);
Mat dropout(const Mat& x, double p, bool train, Rng& rng);

struct LstmState {
  Mat h;
  Mat c;
};

// Tape-free LSTM step over a batch of columns.
LstmState lstm_step(const Mat& w, const Vec& b, const Mat& x, const LstmState& prev);

double sigmoid(double x);

class Adam {
 public:
  Adam(const ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamSet& params, const Grads& g);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Rescales g so its global norm is at most max_norm; returns the norm before.
double clip_global_norm(Grads& g, double max_norm);

}  // namespace synforge::nn
