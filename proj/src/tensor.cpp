#include "synforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "synforge/error.hpp"

namespace synforge::nn {

int ParamSet::add(std::string name, int rows, int cols, Init init) {
  if (rows < 1 || cols < 1) throw ModelError("parameter '" + name + "' has an empty shape");
  if (index_.count(name)) throw ModelError("duplicate parameter '" + name + "'");
  int id = size();
  index_.emplace(name, id);
  params_.push_back({std::move(name), Mat::Zero(rows, cols), init});
  return id;
}

int ParamSet::id(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ModelError("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamSet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params_) {
    double bound = 0.0;
    switch (p.init) {
      case Init::zeros:
        p.value.setZero();
        continue;
      case Init::recurrent:
        bound = 0.08;
        break;
      case Init::glorot:
        bound = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
        break;
    }
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = rng.uniform(-bound, bound);
    }
  }
}

Grads::Grads(const ParamSet& params) {
  g_.reserve(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    g_.push_back(Mat::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void Grads::zero() {
  for (auto& m : g_) m.setZero();
}

void Grads::add(const Grads& other) {
  for (std::size_t i = 0; i < g_.size(); ++i) g_[i] += other.g_[i];
}

void Grads::scale(double s) {
  for (auto& m : g_) m *= s;
}

double Grads::norm() const {
  double sq = 0.0;
  for (const auto& m : g_) sq += m.squaredNorm();
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, Node&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Mat& Tape::grad_of(Var v) {
  auto& n = nodes_[static_cast<std::size_t>(v)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Tape::Var Tape::input(Mat m) { return push(std::move(m), false, nullptr); }

Tape::Var Tape::param(int pid) {
  return push((*params_)[pid].value, true, [pid](Tape& t, Node& n) { (*t.out_)[pid] += n.grad; });
}

Tape::Var Tape::matmul(int pid, Var x) {
  const Mat& w = (*params_)[pid].value;
  if (w.cols() != value(x).rows()) throw ModelError("shape mismatch in product with '" + (*params_)[pid].name + "'");
  return push(w * value(x), true, [pid, x](Tape& t, Node& n) {
    if (t.needs(x)) t.grad_of(x).noalias() += (*t.params_)[pid].value.transpose() * n.grad;
    t.deferred_.push_back({pid, n.grad, t.value(x)});
  });
}

Tape::Var Tape::row(int pid, int r) {
  const Mat& w = (*params_)[pid].value;
  if (r < 0 || r >= w.rows()) throw ModelError("row index out of range for '" + (*params_)[pid].name + "'");
  return push(w.row(r).transpose(), true, [pid, r](Tape& t, Node& n) { (*t.out_)[pid].row(r) += n.grad.transpose(); });
}

Tape::Var Tape::col(int pid, int c) {
  const Mat& w = (*params_)[pid].value;
  if (c < 0 || c >= w.cols()) throw ModelError("column index out of range for '" + (*params_)[pid].name + "'");
  return push(w.col(c), true, [pid, c](Tape& t, Node& n) { (*t.out_)[pid].col(c) += n.grad; });
}

Tape::Var Tape::add(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ModelError("shape mismatch in add");
  }
  return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
    t.accumulate(b, n.grad);
  });
}

Tape::Var Tape::add_col(Var a, Var b) {
  if (value(b).cols() != 1 || value(a).rows() != value(b).rows()) throw ModelError("shape mismatch in add_col");
  Mat v = value(a).colwise() + value(b).col(0);
  return push(std::move(v), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
    t.accumulate(a, n.grad);
    t.accumulate(b, n.grad.rowwise().sum());
  });
}

Tape::Var Tape::mul(Var a, Var b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw ModelError("shape mismatch in mul");
  }
  return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
    t.accumulate(a, n.grad.cwiseProduct(t.value(b)));
    t.accumulate(b, n.grad.cwiseProduct(t.value(a)));
  });
}

Tape::Var Tape::mul_const(Var a, const Mat& mask) {
  if (value(a).rows() != mask.rows() || value(a).cols() != mask.cols()) throw ModelError("shape mismatch in mask");
  return push(value(a).cwiseProduct(mask), needs(a),
              [a, mask](Tape& t, Node& n) { t.accumulate(a, n.grad.cwiseProduct(mask)); });
}

Tape::Var Tape::tanh(Var a) {
  Mat y = value(a).array().tanh().matrix();
  return push(std::move(y), needs(a), [a](Tape& t, Node& n) {
    t.accumulate(a, (n.grad.array() * (1.0 - n.value.array().square())).matrix());
  });
}

Tape::Var Tape::sigmoid(Var a) {
  Mat y = value(a).unaryExpr([](double x) { return nn::sigmoid(x); });
  return push(std::move(y), needs(a), [a](Tape& t, Node& n) {
    t.accumulate(a, (n.grad.array() * n.value.array() * (1.0 - n.value.array())).matrix());
  });
}

Tape::Var Tape::concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Tape::Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ModelError("concat of nothing");
  Eigen::Index rows = 0, cols = value(parts[0]).cols();
  bool any = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw ModelError("shape mismatch in concat");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  std::vector<Var> ids(parts.begin(), parts.end());
  return push(std::move(v), any, [ids](Tape& t, Node& n) {
    Eigen::Index off = 0;
    for (Var p : ids) {
      auto r = t.value(p).rows();
      t.accumulate(p, n.grad.middleRows(off, r));
      off += r;
    }
  });
}

Tape::Var Tape::hcat(std::span<const Var> cols) {
  if (cols.empty()) throw ModelError("hcat of nothing");
  Eigen::Index rows = value(cols[0]).rows(), n = 0;
  bool any = false;
  for (Var c : cols) {
    if (value(c).rows() != rows) throw ModelError("shape mismatch in hcat");
    n += value(c).cols();
    any = any || needs(c);
  }
  Mat v(rows, n);
  Eigen::Index at = 0;
  for (Var c : cols) {
    v.middleCols(at, value(c).cols()) = value(c);
    at += value(c).cols();
  }
  std::vector<Var> ids(cols.begin(), cols.end());
  return push(std::move(v), any, [ids](Tape& t, Node& n) {
    Eigen::Index off = 0;
    for (Var c : ids) {
      auto k = t.value(c).cols();
      t.accumulate(c, n.grad.middleCols(off, k));
      off += k;
    }
  });
}

Tape::Var Tape::slice(Var a, int start, int len) {
  if (start < 0 || len < 1 || start + len > value(a).rows()) throw ModelError("slice out of range");
  return push(value(a).middleRows(start, len), needs(a), [a, start, len](Tape& t, Node& n) {
    t.grad_of(a).middleRows(start, len) += n.grad;
  });
}

Tape::Var Tape::product(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ModelError("shape mismatch in product");
  return push(value(a) * value(b), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
    if (t.needs(a)) t.grad_of(a).noalias() += n.grad * t.value(b).transpose();
    if (t.needs(b)) t.grad_of(b).noalias() += t.value(a).transpose() * n.grad;
  });
}

Tape::Var Tape::transpose_product(Var a, Var b) {
  if (value(a).rows() != value(b).rows()) throw ModelError("shape mismatch in transpose product");
  return push(value(a).transpose() * value(b), needs(a) || needs(b), [a, b](Tape& t, Node& n) {
    if (t.needs(a)) t.grad_of(a).noalias() += t.value(b) * n.grad.transpose();
    if (t.needs(b)) t.grad_of(b).noalias() += t.value(a) * n.grad;
  });
}

Tape::Var Tape::softmax(Var a) {
  if (value(a).cols() != 1 || value(a).rows() == 0) throw ModelError("softmax expects a non-empty column");
  return push(nn::softmax(value(a).col(0)), needs(a), [a](Tape& t, Node& n) {
    double dot = n.grad.col(0).dot(n.value.col(0));
    t.accumulate(a, (n.value.array() * (n.grad.array() - dot)).matrix());
  });
}

Tape::Var Tape::log_softmax(Var a) {
  if (value(a).cols() != 1 || value(a).rows() == 0) throw ModelError("log_softmax expects a non-empty column");
  return push(nn::log_softmax(value(a).col(0)), needs(a), [a](Tape& t, Node& n) {
    double total = n.grad.sum();
    t.accumulate(a, (n.grad.array() - n.value.array().exp() * total).matrix());
  });
}

Tape::Var Tape::pick(Var a, int i) {
  if (i < 0 || i >= value(a).rows()) throw ModelError("pick index out of range");
  Mat v(1, 1);
  v(0, 0) = value(a)(i, 0);
  return push(std::move(v), needs(a), [a, i](Tape& t, Node& n) { t.grad_of(a)(i, 0) += n.grad(0, 0); });
}

Tape::Var Tape::logsumexp(std::span<const Var> scalars) {
  if (scalars.empty()) throw ModelError("logsumexp of nothing");
  std::vector<double> xs;
  bool any = false;
  for (Var s : scalars) {
    xs.push_back(value(s)(0, 0));
    any = any || needs(s);
  }
  Mat v(1, 1);
  v(0, 0) = nn::logsumexp(xs);
  std::vector<Var> ids(scalars.begin(), scalars.end());
  return push(std::move(v), any, [ids](Tape& t, Node& n) {
    double y = n.value(0, 0);
    for (Var s : ids) {
      if (t.needs(s)) t.grad_of(s)(0, 0) += n.grad(0, 0) * std::exp(t.value(s)(0, 0) - y);
    }
  });
}

Tape::Var Tape::sum(std::span<const Var> scalars) {
  Mat v = Mat::Zero(1, 1);
  bool any = false;
  for (Var s : scalars) {
    v(0, 0) += value(s)(0, 0);
    any = any || needs(s);
  }
  std::vector<Var> ids(scalars.begin(), scalars.end());
  return push(std::move(v), any, [ids](Tape& t, Node& n) {
    for (Var s : ids) t.accumulate(s, n.grad);
  });
}

Tape::Var Tape::neg(Var a) {
  return push(-value(a), needs(a), [a](Tape& t, Node& n) { t.accumulate(a, -n.grad); });
}

Tape::Var Tape::lstm(int w, int b, Var x, Var h, Var c) {
  const Mat& W = (*params_)[w].value;
  const Mat& B = (*params_)[b].value;
  const Eigen::Index H = value(h).rows();
  if (value(c).rows() != H || W.rows() != 4 * H || W.cols() != value(x).rows() + H || B.rows() != 4 * H) {
    throw ModelError("shape mismatch in LSTM cell '" + (*params_)[w].name + "'");
  }
  Mat xh(W.cols(), 1);
  xh.topRows(value(x).rows()) = value(x);
  xh.bottomRows(H) = value(h);
  Vec z = W * xh + B.col(0);
  Vec ig = z.segment(0, H).unaryExpr([](double v) { return nn::sigmoid(v); });
  Vec fg = z.segment(H, H).unaryExpr([](double v) { return nn::sigmoid(v); });
  Vec og = z.segment(2 * H, H).unaryExpr([](double v) { return nn::sigmoid(v); });
  Vec gg = z.segment(3 * H, H).array().tanh();
  Vec c_prev = value(c).col(0);
  Vec c_new = fg.cwiseProduct(c_prev) + ig.cwiseProduct(gg);
  Vec tc = c_new.array().tanh();
  Mat out(2 * H, 1);
  out.topRows(H) = og.cwiseProduct(tc);
  out.bottomRows(H) = c_new;
  const Eigen::Index I = value(x).rows();
  return push(std::move(out), true, [w, b, x, h, c, H, I, ig, fg, og, gg, c_prev, tc, xh](Tape& t, Node& n) {
    Vec dh = n.grad.col(0).head(H);
    Vec dc = n.grad.col(0).tail(H) + dh.cwiseProduct(og).cwiseProduct((1.0 - tc.array().square()).matrix());
    Vec dz(4 * H);
    dz.segment(0, H) = (dc.array() * gg.array() * ig.array() * (1.0 - ig.array())).matrix();
    dz.segment(H, H) = (dc.array() * c_prev.array() * fg.array() * (1.0 - fg.array())).matrix();
    dz.segment(2 * H, H) = (dh.array() * tc.array() * og.array() * (1.0 - og.array())).matrix();
    dz.segment(3 * H, H) = (dc.array() * ig.array() * (1.0 - gg.array().square())).matrix();
    (*t.out_)[b].col(0) += dz;
    if (t.needs(x) || t.needs(h)) {
      Vec dxh = (*t.params_)[w].value.transpose() * dz;
      t.accumulate(x, dxh.head(I));
      t.accumulate(h, dxh.tail(H));
    }
    t.accumulate(c, dc.cwiseProduct(fg));
    t.deferred_.push_back({w, dz, xh});
  });
}

void Tape::backward(Var root, Grads& out, double scale) {
  if (value(root).size() != 1) throw ModelError("backward needs a scalar root");
  out_ = &out;
  deferred_.clear();
  grad_of(root)(0, 0) += scale;
  for (Var v = root; v >= 0; --v) {
    auto& n = nodes_[static_cast<std::size_t>(v)];
    if (n.needs_grad && n.back && n.grad.size() != 0) n.back(*this, n);
  }
  // Fold the deferred weight gradients: one GEMM per parameter.
  std::map<int, std::vector<const Deferred*>> by_param;
  for (const auto& d : deferred_) by_param[d.pid].push_back(&d);
  for (const auto& [pid, list] : by_param) {
    Eigen::Index k = 0;
    for (const auto* d : list) k += d->dy.cols();
    Mat dy(list.front()->dy.rows(), k), xs(list.front()->x.rows(), k);
    Eigen::Index at = 0;
    for (const auto* d : list) {
      dy.middleCols(at, d->dy.cols()) = d->dy;
      xs.middleCols(at, d->x.cols()) = d->x;
      at += d->dy.cols();
    }
    out[pid].noalias() += dy * xs.transpose();
  }
  deferred_.clear();
  out_ = nullptr;
}

// ---------------------------------------------------------------------------
// Tape-free helpers

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Vec log_softmax(const Vec& scores) {
  if (scores.size() == 0) throw ModelError("softmax of an empty score vector");
  double m = scores.maxCoeff();
  double lse = m + std::log((scores.array() - m).exp().sum());
  return scores.array() - lse;
}

Vec softmax(const Vec& scores) {
  if (scores.size() == 0) throw ModelError("softmax of an empty score vector");
  Vec e = (scores.array() - scores.maxCoeff()).exp();
  return e / e.sum();
}

Mat log_softmax_cols(const Mat& scores) {
  Mat out(scores.rows(), scores.cols());
  for (Eigen::Index j = 0; j < scores.cols(); ++j) out.col(j) = log_softmax(scores.col(j));
  return out;
}

double logsumexp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Mat dropout_mask(int rows, int cols, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ModelError("dropout probability must be in [0, 1)");
  Mat m(rows, cols);
  double keep = 1.0 / (1.0 - p);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform() < p ? 0.0 : keep;
  }
  return m;
}

Mat dropout(const Mat& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ModelError("dropout probability must be in [0, 1)");
  if (!train || p == 0.0) return x;
  return x.cwiseProduct(dropout_mask(static_cast<int>(x.rows()), static_cast<int>(x.cols()), p, rng));
}

LstmState lstm_step(const Mat& w, const Vec& b, const Mat& x, const LstmState& prev) {
  const Eigen::Index H = prev.h.rows();
  if (w.rows() != 4 * H || w.cols() != x.rows() + H || b.size() != 4 * H || prev.c.rows() != H ||
      prev.h.cols() != x.cols()) {
    throw ModelError("shape mismatch in LSTM step");
  }
  Mat z = w.leftCols(x.rows()) * x;
  z.noalias() += w.rightCols(H) * prev.h;
  z.colwise() += b;
  auto sig = [](double v) { return nn::sigmoid(v); };
  Mat ig = z.middleRows(0, H).unaryExpr(sig);
  Mat fg = z.middleRows(H, H).unaryExpr(sig);
  Mat og = z.middleRows(2 * H, H).unaryExpr(sig);
  Mat gg = z.middleRows(3 * H, H).array().tanh();
  LstmState next;
  next.c = fg.cwiseProduct(prev.c) + ig.cwiseProduct(gg);
  next.h = og.cwiseProduct(Mat(next.c.array().tanh()));
  return next;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const ParamSet& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (int i = 0; i < params.size(); ++i) {
    m_.push_back(Mat::Zero(params[i].value.rows(), params[i].value.cols()));
    v_.push_back(Mat::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void Adam::step(ParamSet& params, const Grads& g) {
  ++t_;
  double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    auto& m = m_[static_cast<std::size_t>(i)];
    auto& v = v_[static_cast<std::size_t>(i)];
    m = b1_ * m + (1.0 - b1_) * g[i];
    v = b2_ * v + (1.0 - b2_) * g[i].cwiseProduct(g[i]);
    params[i].value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_global_norm(Grads& g, double max_norm) {
  double n = g.norm();
  if (n > max_norm && n > 0.0) g.scale(max_norm / n);
  return n;
}

}  // namespace synforge::nn
