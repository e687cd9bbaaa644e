#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fallpred/error.hpp"
#include "fallpred/nn.hpp"
#include "fallpred/predictor.hpp"
#include "fallpred/vectorize.hpp"

namespace fallpred {

enum class FallLabel : int { kNoFall = 0, kFall = 1, kUnknown = 2 };

constexpr std::string_view to_string(FallLabel label) {
  switch (label) {
    case FallLabel::kNoFall: return "no_fall";
    case FallLabel::kFall: return "fall";
    case FallLabel::kUnknown: return "unknown";
  }
  return "?";
}

/// Layer widths of the fully connected classifier, input to output.
inline constexpr std::array<std::size_t, 7> kClassifierWidths{kPoseDim, 96, 192, 192, 96, 24, 2};
inline constexpr std::size_t kClassifierLayers = kClassifierWidths.size() - 1;

struct ClassifierParams {
  std::array<nn::LinearParams, kClassifierLayers> layers;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, ClassifierParams>
void visit_buffers(P& p, F&& f) {
  for (auto& layer : p.layers) nn::visit_buffers(layer, f);
}

inline ClassifierParams make_classifier(std::uint64_t seed) {
  ClassifierParams p;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < kClassifierLayers; ++l) {
    p.layers[l] = nn::LinearParams(kClassifierWidths[l], kClassifierWidths[l + 1]);
    nn::init_uniform(p.layers[l], rng);
  }
  return p;
}

inline void check_shapes(const ClassifierParams& p) {
  for (std::size_t l = 0; l < kClassifierLayers; ++l) {
    if (p.layers[l].in_size() != kClassifierWidths[l] || p.layers[l].out_size() != kClassifierWidths[l + 1]) {
      throw ShapeError("classifier layer " + std::to_string(l) + " has the wrong shape");
    }
  }
}

/// Raw output logits (no-fall, fall). Hidden layers use ReLU.
inline nn::Vector classifier_logits(const ClassifierParams& p, std::span<const double> vector) {
  nn::require_size(vector.size(), kPoseDim, "classifier input");
  nn::Vector x(vector.begin(), vector.end());
  for (std::size_t l = 0; l < kClassifierLayers; ++l) {
    x = nn::linear_forward(p.layers[l], x);
    if (l + 1 < kClassifierLayers) {
      for (double& v : x) v = v > 0.0 ? v : 0.0;
    }
  }
  return x;
}

struct Classification {
  FallLabel label = FallLabel::kUnknown;
  /// Softmax output as (p_no_fall, p_fall); zero for prejudged unknowns.
  std::array<double, 2> probabilities{0.0, 0.0};

  double p_fall() const { return probabilities[1]; }
};

/// Label from logits; an exact tie goes to NoFall.
inline Classification classification_from_logits(std::span<const double> logits) {
  const auto prob = nn::softmax(logits);
  Classification out;
  out.probabilities = {prob[0], prob[1]};
  out.label = logits[1] > logits[0] ? FallLabel::kFall : FallLabel::kNoFall;
  return out;
}

inline Classification classify(const ClassifierParams& p, std::span<const double> vector) {
  return classification_from_logits(classifier_logits(p, vector));
}

/// Frames with fewer than 8 detected body keypoints are Unknown and never
/// reach the network.
inline Classification prejudge_or_classify(const ClassifierParams& p, const SkeletonFrame& frame,
                                           std::span<const double> vector) {
  if (!is_classifiable(frame)) return Classification{};
  return classify(p, vector);
}

// ---------------------------------------------------------------------------
// Training

struct LabeledPose {
  PoseVector vector{};
  FallLabel label = FallLabel::kNoFall;
  std::size_t detected_body_count = kNumBodyKeypoints;
  std::string source_id;
  std::int64_t frame_index = 0;
};

inline double record_classifier_loss(nn::Tape& tape, const ClassifierParams& p, ClassifierParams& grad,
                                     std::span<const double> vector, std::size_t class_index) {
  nn::require_size(vector.size(), kPoseDim, "classifier input");
  auto x = tape.input(nn::Vector(vector.begin(), vector.end()));
  for (std::size_t l = 0; l < kClassifierLayers; ++l) {
    x = tape.linear(p.layers[l], grad.layers[l], x);
    if (l + 1 < kClassifierLayers) x = tape.relu(x);
  }
  return tape.cross_entropy(x, class_index);
}

inline double classifier_loss_and_grad(const ClassifierParams& p, std::span<const double> vector,
                                       std::size_t class_index, ClassifierParams& grad) {
  nn::Tape tape;
  const double loss = record_classifier_loss(tape, p, grad, vector, class_index);
  tape.backward();
  return loss;
}

inline double classifier_loss(const ClassifierParams& p, std::span<const double> vector, std::size_t class_index) {
  return nn::cross_entropy_loss(classifier_logits(p, vector), class_index).value;
}

/// Samples usable for training: labeled Fall/NoFall with at least 8 detected
/// body keypoints in their source frame.
inline std::vector<const LabeledPose*> trainable_samples(std::span<const LabeledPose> data) {
  std::vector<const LabeledPose*> out;
  for (const auto& s : data) {
    if (s.label == FallLabel::kUnknown) throw DataError("training data may not contain Unknown labels");
    if (s.detected_body_count >= kMinClassifiableKeypoints) out.push_back(&s);
  }
  return out;
}

struct ClassifierTrainResult {
  ClassifierParams params;
  TrainReport report;
  std::size_t used_samples = 0;
};

/// Mean cross-entropy minimized with Adam. Defaults: lr 0.001, batch 32.
inline ClassifierTrainResult train_classifier(std::span<const LabeledPose> data, const TrainOptions& options) {
  const auto samples = trainable_samples(data);
  if (samples.empty()) throw DataError("no classifiable training samples");
  bool has_fall = false, has_no_fall = false;
  for (const auto* s : samples) {
    has_fall = has_fall || s->label == FallLabel::kFall;
    has_no_fall = has_no_fall || s->label == FallLabel::kNoFall;
  }
  if (!has_fall || !has_no_fall) throw DataError("classifier training data must contain both classes");

  ClassifierTrainResult result;
  result.params = make_classifier(options.seed);
  result.used_samples = samples.size();
  result.report = run_minibatch_training(result.params, samples.size(), options,
                                         [&](const ClassifierParams& p, std::size_t idx, ClassifierParams& grad) {
                                           const auto& s = *samples[idx];
                                           return classifier_loss_and_grad(p, s.vector, static_cast<std::size_t>(s.label),
                                                                           grad);
                                         });
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricRow {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

inline MetricRow metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricRow r{tp, fp, fn, tn};
  const auto d = [](std::size_t a) { return static_cast<double>(a); };
  if (r.total() > 0) r.accuracy = d(tp + tn) / d(r.total());
  if (tp + fp > 0) r.precision = d(tp) / d(tp + fp);
  if (tp + fn > 0) r.recall = d(tp) / d(tp + fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

struct Metrics {
  /// Unknown predictions counted as NoFall.
  MetricRow all;
  /// Samples predicted Unknown left out.
  MetricRow known;
  std::size_t unknown = 0;
  double unknown_rate = 0.0;
};

/// Fall is the positive class.
inline Metrics evaluate(std::span<const FallLabel> preds, std::span<const FallLabel> truth) {
  if (preds.size() != truth.size()) throw ShapeError("evaluate: prediction and truth counts differ");
  std::array<std::size_t, 4> all{}, known{};  // tp fp fn tn
  std::size_t unknown = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (truth[k] == FallLabel::kUnknown) throw DataError("truth labels must be Fall or NoFall");
    const bool is_unknown = preds[k] == FallLabel::kUnknown;
    const bool p = preds[k] == FallLabel::kFall;
    const bool t = truth[k] == FallLabel::kFall;
    const std::size_t cell = p ? (t ? 0 : 1) : (t ? 2 : 3);
    ++all[cell];
    if (is_unknown) {
      ++unknown;
    } else {
      ++known[cell];
    }
  }
  Metrics m;
  m.all = metrics_from_counts(all[0], all[1], all[2], all[3]);
  m.known = metrics_from_counts(known[0], known[1], known[2], known[3]);
  m.unknown = unknown;
  m.unknown_rate = preds.empty() ? 0.0 : static_cast<double>(unknown) / static_cast<double>(preds.size());
  return m;
}

// ---------------------------------------------------------------------------
// Model files

inline nlohmann::json classifier_to_json(const ClassifierParams& p, const nlohmann::json& training = {}) {
  nlohmann::json j;
  j["format"] = "fallpred-classifier";
  j["version"] = kModelFormatVersion;
  j["widths"] = kClassifierWidths;
  j["hidden_activation"] = "relu";
  j["training"] = training;
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : p.layers) j["layers"].push_back(layer);
  return j;
}

inline ClassifierParams classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "fallpred-classifier") throw ParseError("not a classifier model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw ParseError("unsupported classifier model version " + j.at("version").dump());
    }
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != kClassifierLayers) throw ParseError("classifier must have 6 layers");
    ClassifierParams p;
    for (std::size_t l = 0; l < kClassifierLayers; ++l) p.layers[l] = layers[l].get<nn::LinearParams>();
    check_shapes(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid classifier model file: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("invalid classifier model file: ") + e.what());
  }
}

}  // namespace fallpred
