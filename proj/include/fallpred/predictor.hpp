#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fallpred/error.hpp"
#include "fallpred/nn.hpp"
#include "fallpred/vectorize.hpp"

namespace fallpred {

struct PredictorConfig {
  std::size_t t_obs = 25;
  std::size_t t_pred = 50;
  std::size_t n_p = 5;
  std::size_t hidden_size = 256;

  std::size_t package_width() const { return kPoseDim * n_p; }
  std::size_t obs_packages() const { return (t_obs + n_p - 1) / n_p; }
  std::size_t pred_packages() const { return (t_pred + n_p - 1) / n_p; }

  void validate() const {
    if (t_obs == 0 || t_pred == 0 || n_p == 0 || hidden_size == 0) {
      throw ConfigError("predictor config values must all be positive");
    }
  }

  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

inline void to_json(nlohmann::json& j, const PredictorConfig& c) {
  j = nlohmann::json{{"t_obs", c.t_obs}, {"t_pred", c.t_pred}, {"n_p", c.n_p}, {"hidden_size", c.hidden_size}};
}

inline void from_json(const nlohmann::json& j, PredictorConfig& c) {
  c.t_obs = j.at("t_obs").get<std::size_t>();
  c.t_pred = j.at("t_pred").get<std::size_t>();
  c.n_p = j.at("n_p").get<std::size_t>();
  c.hidden_size = j.at("hidden_size").get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Vector packing

/// Consecutive pose vectors concatenated n_p at a time; the last package is
/// zero-padded to full width.
struct PackedSequence {
  std::vector<nn::Vector> packages;
  std::size_t real_count = 0;

  friend bool operator==(const PackedSequence&, const PackedSequence&) = default;
};

inline PackedSequence pack(std::span<const PoseVector> vectors, std::size_t n_p) {
  if (vectors.empty()) throw DataError("cannot pack an empty sequence");
  if (n_p == 0) throw ConfigError("n_p must be positive");
  PackedSequence out;
  out.real_count = vectors.size();
  const std::size_t count = (vectors.size() + n_p - 1) / n_p;
  out.packages.assign(count, nn::Vector(kPoseDim * n_p, 0.0));
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    auto& pkg = out.packages[k / n_p];
    std::copy(vectors[k].begin(), vectors[k].end(),
              pkg.begin() + static_cast<std::ptrdiff_t>((k % n_p) * kPoseDim));
  }
  return out;
}

inline PackedSequence pack(const PoseVectorSequence& seq, std::size_t n_p) { return pack(seq.vectors, n_p); }

inline std::vector<PoseVector> unpack(const PackedSequence& packed, std::size_t n_p, std::size_t expected_count) {
  if (n_p == 0) throw ConfigError("n_p must be positive");
  if (expected_count > packed.packages.size() * n_p) {
    throw DataError("cannot unpack " + std::to_string(expected_count) + " vectors from " +
                    std::to_string(packed.packages.size()) + " packages of " + std::to_string(n_p));
  }
  std::vector<PoseVector> out(expected_count);
  for (std::size_t k = 0; k < expected_count; ++k) {
    const auto& pkg = packed.packages[k / n_p];
    nn::require_size(pkg.size(), kPoseDim * n_p, "package");
    std::copy_n(pkg.begin() + static_cast<std::ptrdiff_t>((k % n_p) * kPoseDim), kPoseDim, out[k].begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct PredictorParams {
  PredictorConfig config;
  nn::LstmCellParams encoder;
  nn::LstmCellParams decoder;
  nn::LinearParams out_proj;  // hidden -> 24 * n_p

  friend bool operator==(const PredictorParams&, const PredictorParams&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, PredictorParams>
void visit_buffers(P& p, F&& f) {
  nn::visit_buffers(p.encoder, f);
  nn::visit_buffers(p.decoder, f);
  nn::visit_buffers(p.out_proj, f);
}

inline PredictorParams make_predictor(const PredictorConfig& config, std::uint64_t seed) {
  config.validate();
  PredictorParams p;
  p.config = config;
  p.encoder = nn::LstmCellParams(config.package_width(), config.hidden_size);
  p.decoder = nn::LstmCellParams(config.package_width(), config.hidden_size);
  p.out_proj = nn::LinearParams(config.hidden_size, config.package_width());
  std::mt19937_64 rng(seed);
  nn::init_uniform(p.encoder, rng);
  nn::init_uniform(p.decoder, rng);
  nn::init_uniform(p.out_proj, rng);
  return p;
}

inline void check_shapes(const PredictorParams& p) {
  const auto& c = p.config;
  c.validate();
  const bool ok = p.encoder.hidden_size() == c.hidden_size && p.encoder.input_size() == c.package_width() &&
                  p.decoder.hidden_size() == c.hidden_size && p.decoder.input_size() == c.package_width() &&
                  p.out_proj.in_size() == c.hidden_size && p.out_proj.out_size() == c.package_width();
  if (!ok) throw ShapeError("predictor weights do not match its config");
}

/// Folds the encoder over the packages from a zero state.
inline nn::LstmState encode(const PredictorParams& p, const PackedSequence& packed_obs) {
  auto state = nn::LstmState::zeros(p.encoder.hidden_size());
  for (const auto& pkg : packed_obs.packages) state = nn::lstm_step(p.encoder, pkg, state);
  return state;
}

/// Autoregressive decoding: the first input is the last observed package,
/// each later input is the previous output.
inline std::vector<nn::Vector> decode(const PredictorParams& p, const nn::LstmState& init,
                                      std::span<const double> last_obs_package, std::size_t steps) {
  if (steps == 0) throw DataError("decode needs at least one step");
  std::vector<nn::Vector> out;
  out.reserve(steps);
  nn::LstmState state = init;
  nn::Vector input(last_obs_package.begin(), last_obs_package.end());
  for (std::size_t k = 0; k < steps; ++k) {
    state = nn::lstm_step(p.decoder, input, state);
    out.push_back(nn::linear_forward(p.out_proj, state.h));
    input = out.back();
  }
  return out;
}

inline std::vector<PoseVector> predict(const PredictorParams& p, std::span<const PoseVector> obs) {
  const auto& c = p.config;
  if (obs.size() != c.t_obs) {
    throw DataError("predict expects " + std::to_string(c.t_obs) + " observed vectors, got " +
                    std::to_string(obs.size()));
  }
  const auto packed = pack(obs, c.n_p);
  const auto state = encode(p, packed);
  PackedSequence out;
  out.packages = decode(p, state, packed.packages.back(), c.pred_packages());
  out.real_count = c.t_pred;
  return unpack(out, c.n_p, c.t_pred);
}

// ---------------------------------------------------------------------------
// Training

struct TrainingWindow {
  std::vector<PoseVector> obs;
  std::vector<PoseVector> target;
};

/// Every contiguous run of t_obs + t_pred vectors (start positions spaced by
/// `stride`), split into observation and target.
inline std::vector<TrainingWindow> make_training_windows(std::span<const PoseVectorSequence> segments,
                                                         const PredictorConfig& config, std::size_t stride = 1) {
  if (stride == 0) throw ConfigError("window stride must be positive");
  std::vector<TrainingWindow> out;
  const std::size_t len = config.t_obs + config.t_pred;
  for (const auto& seg : segments) {
    if (seg.size() < len) continue;
    for (std::size_t s = 0; s + len <= seg.size(); s += stride) {
      const auto first = seg.vectors.begin() + static_cast<std::ptrdiff_t>(s);
      TrainingWindow w;
      w.obs.assign(first, first + static_cast<std::ptrdiff_t>(config.t_obs));
      w.target.assign(first + static_cast<std::ptrdiff_t>(config.t_obs), first + static_cast<std::ptrdiff_t>(len));
      out.push_back(std::move(w));
    }
  }
  return out;
}

/// Records the forward pass of one window and its loss on `tape`. The MSE is
/// taken over the t_pred real target vectors; zero-padded tail positions of
/// the last package are left out.
inline double record_window_loss(nn::Tape& tape, const PredictorParams& p, PredictorParams& grad,
                                 const TrainingWindow& window) {
  const auto& c = p.config;
  if (window.obs.size() != c.t_obs || window.target.size() != c.t_pred) {
    throw DataError("training window does not match the predictor config");
  }
  const auto packed = pack(window.obs, c.n_p);
  const std::size_t hidden = c.hidden_size;
  auto h = tape.input(nn::Vector(hidden, 0.0));
  auto cell = tape.input(nn::Vector(hidden, 0.0));
  nn::Tape::Var last_input = 0;
  for (const auto& pkg : packed.packages) {
    last_input = tape.input(pkg);
    std::tie(h, cell) = tape.lstm(p.encoder, grad.encoder, last_input, h, cell);
  }
  std::vector<nn::Tape::Var> outputs;
  auto input = last_input;
  for (std::size_t k = 0; k < c.pred_packages(); ++k) {
    std::tie(h, cell) = tape.lstm(p.decoder, grad.decoder, input, h, cell);
    input = tape.linear(p.out_proj, grad.out_proj, h);
    outputs.push_back(input);
  }
  auto all = tape.concat(outputs);
  auto real = tape.slice(all, 0, c.t_pred * kPoseDim);
  nn::Vector target;
  target.reserve(c.t_pred * kPoseDim);
  for (const auto& v : window.target) target.insert(target.end(), v.begin(), v.end());
  return tape.mse(real, target);
}

/// Loss of one window and its gradient (added into `grad`).
inline double window_loss_and_grad(const PredictorParams& p, const TrainingWindow& window, PredictorParams& grad) {
  nn::Tape tape;
  const double loss = record_window_loss(tape, p, grad, window);
  tape.backward();
  return loss;
}

/// Loss only, through the same packed/masked definition as training.
inline double window_loss(const PredictorParams& p, const TrainingWindow& window) {
  const auto& c = p.config;
  const auto pred = predict(p, window.obs);
  double sum = 0.0;
  for (std::size_t j = 0; j < c.t_pred; ++j) {
    for (std::size_t k = 0; k < kPoseDim; ++k) {
      const double d = pred[j][k] - window.target[j][k];
      sum += d * d;
    }
  }
  return sum / static_cast<double>(c.t_pred * kPoseDim);
}

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double lr = 0.001;
  double clip_norm = 5.0;
  /// Stop after this many optimizer steps; 0 means no limit.
  std::size_t max_steps = 0;
  /// Stop early when the epoch loss improves by less than this relative
  /// amount over `plateau_epochs` epochs. Disabled when plateau_epochs is 0.
  double plateau_tolerance = 1e-4;
  std::size_t plateau_epochs = 5;
  /// Stop once an epoch's mean loss falls below this; 0 disables.
  double target_loss = 0.0;
  /// Called after every epoch with (epoch, mean loss).
  std::function<void(std::size_t, double)> on_epoch;
};

inline void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = nlohmann::json{{"epochs", o.epochs},       {"batch_size", o.batch_size},
                     {"seed", o.seed},           {"lr", o.lr},
                     {"clip_norm", o.clip_norm}, {"max_steps", o.max_steps},
                     {"plateau_tolerance", o.plateau_tolerance}, {"plateau_epochs", o.plateau_epochs},
                     {"target_loss", o.target_loss}};
}

struct LossPoint {
  std::size_t epoch;
  std::size_t step;
  double loss;
};

struct TrainReport {
  std::vector<LossPoint> curve;  // one point per epoch
  std::size_t steps = 0;
  bool stopped_on_plateau = false;
};

inline bool plateaued(const std::vector<LossPoint>& curve, const TrainOptions& o) {
  if (o.plateau_epochs == 0 || curve.size() <= o.plateau_epochs) return false;
  const double before = curve[curve.size() - 1 - o.plateau_epochs].loss;
  const double now = curve.back().loss;
  if (before <= 0.0) return true;
  return (before - now) / before < o.plateau_tolerance;
}

/// Shared mini-batch loop: shuffles sample indices each epoch, averages the
/// per-sample gradients of a batch, clips and applies Adam.
template <class P, class SampleFn>
TrainReport run_minibatch_training(P& params, std::size_t sample_count, const TrainOptions& options,
                                   SampleFn&& loss_and_grad) {
  if (options.batch_size == 0) throw ConfigError("batch size must be positive");
  nn::AdamState<P> adam(params, nn::AdamOptions{options.lr});
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(sample_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainReport report;
  P grad = nn::zeros_like(params);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < sample_count; start += options.batch_size) {
      if (options.max_steps != 0 && report.steps >= options.max_steps) break;
      const std::size_t end = std::min(sample_count, start + options.batch_size);
      nn::fill(grad, 0.0);
      for (std::size_t k = start; k < end; ++k) epoch_loss += loss_and_grad(params, order[k], grad);
      seen += end - start;
      const double scale = 1.0 / static_cast<double>(end - start);
      visit_buffers(grad, [&](std::span<double> b) {
        for (double& v : b) v *= scale;
      });
      if (options.clip_norm > 0.0) nn::clip_global_norm(grad, options.clip_norm);
      nn::adam_update(params, grad, adam);
      ++report.steps;
    }
    if (seen == 0) break;
    report.curve.push_back({epoch, report.steps, epoch_loss / static_cast<double>(seen)});
    if (options.on_epoch) options.on_epoch(epoch, report.curve.back().loss);
    if (options.max_steps != 0 && report.steps >= options.max_steps) break;
    if (report.curve.back().loss < options.target_loss) break;
    if (plateaued(report.curve, options)) {
      report.stopped_on_plateau = true;
      break;
    }
  }
  return report;
}

struct PredictorTrainResult {
  PredictorParams params;
  TrainReport report;
};

/// Minimizes the masked MSE of autoregressive forecasts with Adam. Pass
/// `initial` to continue from existing weights; its config must match.
inline PredictorTrainResult train_predictor(std::span<const TrainingWindow> windows, const PredictorConfig& config,
                                            const TrainOptions& options,
                                            const PredictorParams* initial = nullptr) {
  if (windows.empty()) throw DataError("no training windows");
  config.validate();
  PredictorTrainResult result;
  if (initial) {
    if (!(initial->config == config)) throw ConfigError("cannot resume: model config differs from requested config");
    check_shapes(*initial);
    result.params = *initial;
  } else {
    result.params = make_predictor(config, options.seed);
  }
  result.report = run_minibatch_training(result.params, windows.size(), options,
                                         [&](const PredictorParams& p, std::size_t idx, PredictorParams& grad) {
                                           return window_loss_and_grad(p, windows[idx], grad);
                                         });
  return result;
}

// ---------------------------------------------------------------------------
// Mean cosine similarity

/// Cosine of two pose vectors; 0 when either has zero norm.
inline double cosine(const PoseVector& a, const PoseVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < kPoseDim; ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Mean over samples of the per-sample mean cosine between aligned vectors.
inline double mcs(std::span<const std::vector<PoseVector>> ground, std::span<const std::vector<PoseVector>> pred) {
  if (ground.empty()) throw DataError("mcs needs at least one sample");
  if (ground.size() != pred.size()) throw ShapeError("mcs: ground and prediction counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < ground.size(); ++i) {
    if (ground[i].size() != pred[i].size() || ground[i].empty()) {
      throw ShapeError("mcs: sample " + std::to_string(i) + " has mismatched or empty sequences");
    }
    double c = 0.0;
    for (std::size_t j = 0; j < ground[i].size(); ++j) c += cosine(ground[i][j], pred[i][j]);
    total += c / static_cast<double>(ground[i].size());
  }
  return total / static_cast<double>(ground.size());
}

/// MCS of the model's forecasts over a set of windows.
inline double evaluate_mcs(const PredictorParams& p, std::span<const TrainingWindow> windows) {
  std::vector<std::vector<PoseVector>> ground, pred;
  ground.reserve(windows.size());
  pred.reserve(windows.size());
  for (const auto& w : windows) {
    ground.push_back(w.target);
    pred.push_back(predict(p, w.obs));
  }
  return mcs(ground, pred);
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json predictor_to_json(const PredictorParams& p, const nlohmann::json& training = {}) {
  nlohmann::json j;
  j["format"] = "fallpred-predictor";
  j["version"] = kModelFormatVersion;
  j["config"] = p.config;
  j["training"] = training;
  j["encoder"] = p.encoder;
  j["decoder"] = p.decoder;
  j["out_proj"] = p.out_proj;
  return j;
}

inline PredictorParams predictor_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "fallpred-predictor") throw ParseError("not a predictor model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ParseError("unsupported predictor model version " + j.at("version").dump());
    }
    PredictorParams p;
    p.config = j.at("config").get<PredictorConfig>();
    p.encoder = j.at("encoder").get<nn::LstmCellParams>();
    p.decoder = j.at("decoder").get<nn::LstmCellParams>();
    p.out_proj = j.at("out_proj").get<nn::LinearParams>();
    check_shapes(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid predictor model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("invalid predictor model file: ") + e.what());
  }
}

}  // namespace fallpred
