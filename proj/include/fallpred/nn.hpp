#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fallpred/error.hpp"

namespace fallpred::nn {

using Vector = std::vector<double>;

inline void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ShapeError(std::string("non-finite value in ") + what);
  }
}

inline void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// y = W x + b with W of shape (out, in).
struct LinearParams {
  Matrix weight;
  Vector bias;

  LinearParams() = default;
  LinearParams(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

  std::size_t in_size() const { return weight.cols; }
  std::size_t out_size() const { return weight.rows; }

  friend bool operator==(const LinearParams&, const LinearParams&) = default;
};

/// Gate weights act on the concatenation [h_{t-1}, x_t]: the first
/// `hidden` columns multiply the previous hidden state.
struct LstmCellParams {
  Matrix w_i, w_f, w_o, w_c;
  Vector b_i, b_f, b_o, b_c;

  LstmCellParams() = default;
  LstmCellParams(std::size_t input, std::size_t hidden)
      : w_i(hidden, hidden + input),
        w_f(hidden, hidden + input),
        w_o(hidden, hidden + input),
        w_c(hidden, hidden + input),
        b_i(hidden, 0.0),
        b_f(hidden, 0.0),
        b_o(hidden, 0.0),
        b_c(hidden, 0.0) {}

  std::size_t hidden_size() const { return w_i.rows; }
  std::size_t input_size() const { return w_i.cols - w_i.rows; }

  friend bool operator==(const LstmCellParams&, const LstmCellParams&) = default;
};

struct LstmState {
  Vector h;
  Vector c;

  static LstmState zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

// ---------------------------------------------------------------------------
// Parameter containers are visited buffer by buffer. Every model type
// provides visit_buffers overloads; the generic helpers below build on them.

template <class F>
void visit_buffers(Matrix& m, F&& f) {
  f(std::span<double>(m.data));
}
template <class F>
void visit_buffers(const Matrix& m, F&& f) {
  f(std::span<const double>(m.data));
}
template <class F>
void visit_buffers(Vector& v, F&& f) {
  f(std::span<double>(v));
}
template <class F>
void visit_buffers(const Vector& v, F&& f) {
  f(std::span<const double>(v));
}

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, LinearParams>
void visit_buffers(P& p, F&& f) {
  visit_buffers(p.weight, f);
  visit_buffers(p.bias, f);
}

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, LstmCellParams>
void visit_buffers(P& p, F&& f) {
  visit_buffers(p.w_i, f);
  visit_buffers(p.w_f, f);
  visit_buffers(p.w_o, f);
  visit_buffers(p.w_c, f);
  visit_buffers(p.b_i, f);
  visit_buffers(p.b_f, f);
  visit_buffers(p.b_o, f);
  visit_buffers(p.b_c, f);
}

template <class P>
std::vector<std::span<double>> buffers(P& p) {
  std::vector<std::span<double>> out;
  visit_buffers(p, [&](std::span<double> s) { out.push_back(s); });
  return out;
}

template <class P>
std::vector<std::span<const double>> buffers(const P& p) {
  std::vector<std::span<const double>> out;
  visit_buffers(p, [&](std::span<const double> s) { out.push_back(s); });
  return out;
}

template <class P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  visit_buffers(p, [&](std::span<const double> s) { n += s.size(); });
  return n;
}

template <class P>
void fill(P& p, double value) {
  visit_buffers(p, [&](std::span<double> s) { std::fill(s.begin(), s.end(), value); });
}

template <class P>
P zeros_like(const P& p) {
  P out = p;
  fill(out, 0.0);
  return out;
}

template <class P>
Vector flatten(const P& p) {
  Vector out;
  out.reserve(parameter_count(p));
  visit_buffers(p, [&](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

template <class P>
void assign_flat(P& p, std::span<const double> flat) {
  require_size(flat.size(), parameter_count(p), "flat parameter vector");
  std::size_t pos = 0;
  visit_buffers(p, [&](std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.size(), s.begin());
    pos += s.size();
  });
}

template <class P>
void require_same_shape(const P& a, const P& b, const char* what) {
  auto sa = buffers(a);
  auto sb = buffers(b);
  bool ok = sa.size() == sb.size();
  for (std::size_t i = 0; ok && i < sa.size(); ++i) ok = sa[i].size() == sb[i].size();
  if (!ok) throw ShapeError(std::string(what) + ": parameter shapes differ");
}

/// acc += scale * g
template <class P>
void add_scaled(P& acc, const P& g, double scale) {
  auto a = buffers(acc);
  auto b = buffers(g);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].size(); ++k) a[i][k] += scale * b[i][k];
  }
}

template <class P>
double global_norm(const P& p) {
  double sum = 0.0;
  visit_buffers(p, [&](std::span<const double> s) {
    for (double v : s) sum += v * v;
  });
  return std::sqrt(sum);
}

/// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
template <class P>
double clip_global_norm(P& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    visit_buffers(grads, [&](std::span<double> b) {
      for (double& v : b) v *= s;
    });
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Initialization

inline void init_uniform(Matrix& m, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(m.cols, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : m.data) v = dist(rng);
}

inline void init_uniform(Vector& b, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : b) v = dist(rng);
}

inline void init_uniform(LinearParams& p, std::mt19937_64& rng) {
  init_uniform(p.weight, rng);
  init_uniform(p.bias, p.in_size(), rng);
}

/// Uniform in +-1/sqrt(fan_in); forget-gate bias starts at `forget_bias`.
inline void init_uniform(LstmCellParams& p, std::mt19937_64& rng, double forget_bias = 1.0) {
  const std::size_t fan_in = p.w_i.cols;
  for (Matrix* m : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) init_uniform(*m, rng);
  for (Vector* b : {&p.b_i, &p.b_o, &p.b_c}) init_uniform(*b, fan_in, rng);
  std::fill(p.b_f.begin(), p.b_f.end(), forget_bias);
}

// ---------------------------------------------------------------------------
// Scalar functions

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax of empty vector");
  require_finite(logits, "softmax logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Forward kernels

inline Vector linear_forward(const LinearParams& p, std::span<const double> x) {
  require_size(x.size(), p.in_size(), "linear input");
  require_finite(x, "linear input");
  Vector y(p.out_size());
  for (std::size_t r = 0; r < p.out_size(); ++r) {
    const auto w = p.weight.row(r);
    double acc = p.bias[r];
    for (std::size_t c = 0; c < w.size(); ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
  return y;
}

/// Intermediate values of one LSTM step; kept for the backward pass.
struct LstmStepCache {
  Vector hx;      // [h_{t-1}, x_t]
  Vector c_prev;
  Vector i, f, o, g;  // gate activations, g = candidate cell
  Vector c;
  Vector tanh_c;
  Vector h;
};

namespace detail {

inline void gate_preactivation(const Matrix& w, const Vector& b, const Vector& hx, Vector& out) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.data.data() + r * w.cols;
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * hx[c];
    out[r] = acc;
  }
}

}  // namespace detail

inline LstmStepCache lstm_step_cached(const LstmCellParams& p, std::span<const double> x,
                                      std::span<const double> h_prev, std::span<const double> c_prev) {
  const std::size_t hidden = p.hidden_size();
  require_size(x.size(), p.input_size(), "lstm input");
  require_size(h_prev.size(), hidden, "lstm hidden state");
  require_size(c_prev.size(), hidden, "lstm cell state");
  require_finite(x, "lstm input");
  require_finite(h_prev, "lstm hidden state");
  require_finite(c_prev, "lstm cell state");

  LstmStepCache s;
  s.hx.resize(hidden + x.size());
  std::copy(h_prev.begin(), h_prev.end(), s.hx.begin());
  std::copy(x.begin(), x.end(), s.hx.begin() + static_cast<std::ptrdiff_t>(hidden));
  s.c_prev.assign(c_prev.begin(), c_prev.end());
  s.i.resize(hidden);
  s.f.resize(hidden);
  s.o.resize(hidden);
  s.g.resize(hidden);
  detail::gate_preactivation(p.w_i, p.b_i, s.hx, s.i);
  detail::gate_preactivation(p.w_f, p.b_f, s.hx, s.f);
  detail::gate_preactivation(p.w_o, p.b_o, s.hx, s.o);
  detail::gate_preactivation(p.w_c, p.b_c, s.hx, s.g);
  s.c.resize(hidden);
  s.tanh_c.resize(hidden);
  s.h.resize(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    s.i[k] = sigmoid(s.i[k]);
    s.f[k] = sigmoid(s.f[k]);
    s.o[k] = sigmoid(s.o[k]);
    s.g[k] = std::tanh(s.g[k]);
    s.c[k] = s.f[k] * s.c_prev[k] + s.i[k] * s.g[k];
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = s.o[k] * s.tanh_c[k];
  }
  return s;
}

inline LstmState lstm_step(const LstmCellParams& p, std::span<const double> x, const LstmState& prev) {
  auto s = lstm_step_cached(p, x, prev.h, prev.c);
  return {std::move(s.h), std::move(s.c)};
}

// ---------------------------------------------------------------------------
// Backward kernels. Parameter gradients are accumulated into `grad`.

/// Returns dx; adds dW, db into `grad`.
inline Vector linear_backward(const LinearParams& p, std::span<const double> x, std::span<const double> dy,
                              LinearParams& grad) {
  Vector dx(p.in_size(), 0.0);
  for (std::size_t r = 0; r < p.out_size(); ++r) {
    const double g = dy[r];
    grad.bias[r] += g;
    if (g == 0.0) continue;
    const double* w = p.weight.data.data() + r * p.weight.cols;
    double* gw = grad.weight.data.data() + r * p.weight.cols;
    for (std::size_t c = 0; c < p.in_size(); ++c) {
      gw[c] += g * x[c];
      dx[c] += w[c] * g;
    }
  }
  return dx;
}

struct LstmStepGrad {
  Vector dx;
  Vector dh_prev;
  Vector dc_prev;
};

inline LstmStepGrad lstm_step_backward(const LstmCellParams& p, const LstmStepCache& s,
                                       std::span<const double> dh, std::span<const double> dc_next,
                                       LstmCellParams& grad) {
  const std::size_t hidden = p.hidden_size();
  Vector dz_i(hidden), dz_f(hidden), dz_o(hidden), dz_g(hidden);
  LstmStepGrad out;
  out.dc_prev.resize(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    const double d_o = dh[k] * s.tanh_c[k];
    const double dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
    const double d_f = dc * s.c_prev[k];
    const double d_i = dc * s.g[k];
    const double d_g = dc * s.i[k];
    out.dc_prev[k] = dc * s.f[k];
    dz_i[k] = d_i * s.i[k] * (1.0 - s.i[k]);
    dz_f[k] = d_f * s.f[k] * (1.0 - s.f[k]);
    dz_o[k] = d_o * s.o[k] * (1.0 - s.o[k]);
    dz_g[k] = d_g * (1.0 - s.g[k] * s.g[k]);
  }
  Vector dhx(s.hx.size(), 0.0);
  auto accumulate = [&](const Matrix& w, Matrix& gw, Vector& gb, const Vector& dz) {
    const std::size_t cols = w.cols;
    for (std::size_t r = 0; r < hidden; ++r) {
      const double g = dz[r];
      gb[r] += g;
      if (g == 0.0) continue;
      const double* wr = w.data.data() + r * cols;
      double* gr = gw.data.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        gr[c] += g * s.hx[c];
        dhx[c] += wr[c] * g;
      }
    }
  };
  accumulate(p.w_i, grad.w_i, grad.b_i, dz_i);
  accumulate(p.w_f, grad.w_f, grad.b_f, dz_f);
  accumulate(p.w_o, grad.w_o, grad.b_o, dz_o);
  accumulate(p.w_c, grad.w_c, grad.b_c, dz_g);
  out.dh_prev.assign(dhx.begin(), dhx.begin() + static_cast<std::ptrdiff_t>(hidden));
  out.dx.assign(dhx.begin() + static_cast<std::ptrdiff_t>(hidden), dhx.end());
  return out;
}

// ---------------------------------------------------------------------------
// Losses

struct LossResult {
  double value = 0.0;
  Vector grad;  // d value / d prediction
};

inline LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty()) throw ShapeError("mse_loss of empty vectors");
  require_size(target.size(), pred.size(), "mse target");
  require_finite(pred, "mse prediction");
  require_finite(target, "mse target");
  const double n = static_cast<double>(pred.size());
  LossResult out;
  out.grad.resize(pred.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = pred[k] - target[k];
    sum += d * d;
    out.grad[k] = 2.0 * d / n;
  }
  out.value = sum / n;
  return out;
}

inline LossResult cross_entropy_loss(std::span<const double> logits, std::size_t class_index) {
  if (logits.size() < 2) throw ShapeError("cross_entropy_loss needs at least two logits");
  if (class_index >= logits.size()) {
    throw ShapeError("class index " + std::to_string(class_index) + " out of range");
  }
  require_finite(logits, "cross-entropy logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_sum = std::log(sum);
  LossResult out;
  out.value = -(logits[class_index] - mx - log_sum);
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.grad[k] = std::exp(logits[k] - mx - log_sum) - (k == class_index ? 1.0 : 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution record for reverse-mode differentiation.
//
// Forward ops append a node holding the values they need; backward() walks
// the nodes in reverse and accumulates parameter gradients into the grad
// containers supplied at record time.

class Tape {
 public:
  using Var = std::size_t;

  Var input(Vector value) { return push(std::move(value)); }

  Var linear(const LinearParams& p, LinearParams& grad, Var x) {
    Vector y = linear_forward(p, values_[x]);
    const Var out = push(std::move(y));
    nodes_.push_back([this, &p, &grad, x, out] {
      auto dx = linear_backward(p, values_[x], grads_[out], grad);
      accumulate(x, dx);
    });
    return out;
  }

  /// Returns (h, c) of the new state.
  std::pair<Var, Var> lstm(const LstmCellParams& p, LstmCellParams& grad, Var x, Var h_prev, Var c_prev) {
    auto cache = lstm_step_cached(p, values_[x], values_[h_prev], values_[c_prev]);
    const Var h = push(cache.h);
    const Var c = push(cache.c);
    nodes_.push_back([this, &p, &grad, x, h_prev, c_prev, h, c, cache = std::move(cache)] {
      auto g = lstm_step_backward(p, cache, grads_[h], grads_[c], grad);
      accumulate(x, g.dx);
      accumulate(h_prev, g.dh_prev);
      accumulate(c_prev, g.dc_prev);
    });
    return {h, c};
  }

  Var relu(Var x) {
    Vector y = values_[x];
    for (double& v : y) v = v > 0.0 ? v : 0.0;
    const Var out = push(std::move(y));
    nodes_.push_back([this, x, out] {
      Vector dx(values_[x].size());
      for (std::size_t k = 0; k < dx.size(); ++k) dx[k] = values_[x][k] > 0.0 ? grads_[out][k] : 0.0;
      accumulate(x, dx);
    });
    return out;
  }

  Var concat(std::span<const Var> parts) {
    Vector y;
    for (Var v : parts) y.insert(y.end(), values_[v].begin(), values_[v].end());
    const Var out = push(std::move(y));
    nodes_.push_back([this, parts = std::vector<Var>(parts.begin(), parts.end()), out] {
      std::size_t pos = 0;
      for (Var v : parts) {
        const std::size_t n = values_[v].size();
        accumulate(v, std::span<const double>(grads_[out]).subspan(pos, n));
        pos += n;
      }
    });
    return out;
  }

  Var slice(Var x, std::size_t offset, std::size_t length) {
    if (offset + length > values_[x].size()) throw ShapeError("slice out of range");
    Vector y(values_[x].begin() + static_cast<std::ptrdiff_t>(offset),
             values_[x].begin() + static_cast<std::ptrdiff_t>(offset + length));
    const Var out = push(std::move(y));
    nodes_.push_back([this, x, offset, length, out] {
      Vector dx(values_[x].size(), 0.0);
      std::copy_n(grads_[out].begin(), length, dx.begin() + static_cast<std::ptrdiff_t>(offset));
      accumulate(x, dx);
    });
    return out;
  }

  double mse(Var pred, std::span<const double> target) {
    return set_loss(pred, mse_loss(values_[pred], target));
  }

  double cross_entropy(Var logits, std::size_t class_index) {
    return set_loss(logits, cross_entropy_loss(values_[logits], class_index));
  }

  bool has_loss() const { return loss_var_.has_value(); }
  double loss() const {
    if (!loss_var_) throw UsageError("no loss recorded");
    return loss_value_;
  }

  /// Propagates d loss / d node through the record. Can run once.
  void backward() {
    if (!loss_var_) throw UsageError("backward called before a forward pass recorded a loss");
    if (done_) throw UsageError("backward already ran on this record");
    done_ = true;
    accumulate(*loss_var_, loss_grad_);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  const Vector& value(Var v) const { return values_[v]; }
  const Vector& grad(Var v) const {
    if (!done_) throw UsageError("gradients requested before backward");
    return grads_[v];
  }

 private:
  Var push(Vector value) {
    grads_.emplace_back(value.size(), 0.0);
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  void accumulate(Var v, std::span<const double> g) {
    auto& dst = grads_[v];
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
  }

  double set_loss(Var v, LossResult r) {
    if (loss_var_) throw UsageError("a loss is already recorded on this tape");
    loss_var_ = v;
    loss_value_ = r.value;
    loss_grad_ = std::move(r.grad);
    return loss_value_;
  }

  std::vector<Vector> values_;
  std::vector<Vector> grads_;
  std::vector<std::function<void()>> nodes_;
  std::optional<Var> loss_var_;
  double loss_value_ = 0.0;
  Vector loss_grad_;
  bool done_ = false;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class P>
struct AdamState {
  std::int64_t step = 0;
  P m;
  P v;
  AdamOptions options;

  AdamState() = default;
  explicit AdamState(const P& params, AdamOptions opts = {})
      : m(zeros_like(params)), v(zeros_like(params)), options(opts) {}
};

/// One bias-corrected Adam step.
template <class P>
void adam_update(P& params, const P& grads, AdamState<P>& state) {
  require_same_shape(params, grads, "adam_update gradients");
  require_same_shape(params, state.m, "adam_update state");
  visit_buffers(grads, [](std::span<const double> s) { require_finite(s, "gradient"); });
  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  auto p = buffers(params);
  auto g = buffers(grads);
  auto m = buffers(state.m);
  auto v = buffers(state.v);
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (std::size_t k = 0; k < p[b].size(); ++k) {
      const double gk = g[b][k];
      m[b][k] = o.beta1 * m[b][k] + (1.0 - o.beta1) * gk;
      v[b][k] = o.beta2 * v[b][k] + (1.0 - o.beta2) * gk * gk;
      const double m_hat = m[b][k] / c1;
      const double v_hat = v[b][k] / c2;
      p[b][k] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic` against central differences of `loss` around
/// `params`, coordinate by coordinate.
template <class P, class LossFn>
GradCheckResult grad_check(const LossFn& loss, const P& params, const P& analytic, double step = 1e-5) {
  require_same_shape(params, analytic, "grad_check");
  P probe = params;
  const Vector base = flatten(params);
  const Vector grad = flatten(analytic);
  auto slots = buffers(probe);
  GradCheckResult result;
  std::size_t flat = 0;
  for (auto slot : slots) {
    for (std::size_t k = 0; k < slot.size(); ++k, ++flat) {
      const double original = base[flat];
      slot[k] = original + step;
      const double up = loss(static_cast<const P&>(probe));
      slot[k] = original - step;
      const double down = loss(static_cast<const P&>(probe));
      slot[k] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err = relative_error(grad[flat], numeric);
      if (err > result.max_rel_error || result.checked == 0) {
        result.max_rel_error = err;
        result.worst_index = flat;
        result.analytic_at_worst = grad[flat];
        result.numeric_at_worst = numeric;
      }
      ++result.checked;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// JSON serialization of parameter blocks

inline void to_json(nlohmann::json& j, const Matrix& m) {
  j = nlohmann::json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

inline void from_json(const nlohmann::json& j, Matrix& m) {
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.data = j.at("data").get<std::vector<double>>();
  if (m.data.size() != m.rows * m.cols) throw ParseError("matrix data length does not match its shape");
  require_finite(m.data, "matrix");
}

inline void to_json(nlohmann::json& j, const LinearParams& p) {
  j = nlohmann::json{{"weight", p.weight}, {"bias", p.bias}};
}

inline void from_json(const nlohmann::json& j, LinearParams& p) {
  p.weight = j.at("weight").get<Matrix>();
  p.bias = j.at("bias").get<Vector>();
  if (p.bias.size() != p.weight.rows) throw ParseError("linear bias length does not match weight rows");
  require_finite(p.bias, "linear bias");
}

inline void to_json(nlohmann::json& j, const LstmCellParams& p) {
  j = nlohmann::json{{"w_i", p.w_i}, {"w_f", p.w_f}, {"w_o", p.w_o}, {"w_c", p.w_c},
                     {"b_i", p.b_i}, {"b_f", p.b_f}, {"b_o", p.b_o}, {"b_c", p.b_c}};
}

inline void from_json(const nlohmann::json& j, LstmCellParams& p) {
  p.w_i = j.at("w_i").get<Matrix>();
  p.w_f = j.at("w_f").get<Matrix>();
  p.w_o = j.at("w_o").get<Matrix>();
  p.w_c = j.at("w_c").get<Matrix>();
  p.b_i = j.at("b_i").get<Vector>();
  p.b_f = j.at("b_f").get<Vector>();
  p.b_o = j.at("b_o").get<Vector>();
  p.b_c = j.at("b_c").get<Vector>();
  const std::size_t h = p.w_i.rows;
  const std::size_t cols = p.w_i.cols;
  for (const Matrix* m : {&p.w_f, &p.w_o, &p.w_c}) {
    if (m->rows != h || m->cols != cols) throw ParseError("lstm gate matrices disagree in shape");
  }
  for (const Vector* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_c}) {
    if (b->size() != h) throw ParseError("lstm bias length does not match hidden size");
    require_finite(*b, "lstm bias");
  }
  if (cols < h) throw ParseError("lstm gate matrices are narrower than the hidden size");
}

}  // namespace fallpred::nn
