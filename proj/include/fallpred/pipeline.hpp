#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "fallpred/classifier.hpp"
#include "fallpred/dataset.hpp"
#include "fallpred/error.hpp"
#include "fallpred/predictor.hpp"
#include "fallpred/vectorize.hpp"

namespace fallpred {

enum class VerdictBasis { kForecast, kDirect };

constexpr std::string_view to_string(VerdictBasis b) { return b == VerdictBasis::kForecast ? "forecast" : "direct"; }

struct FrameVerdict {
  std::string source_id;
  std::int64_t track_id = 0;
  std::int64_t frame_index = 0;
  FallLabel label = FallLabel::kUnknown;
  std::array<double, 2> probabilities{0.0, 0.0};
  VerdictBasis basis = VerdictBasis::kDirect;

  friend bool operator==(const FrameVerdict&, const FrameVerdict&) = default;
};

/// A usable segment: its frames (for the detection-count rule) and their
/// pose vectors.
struct PreparedSegment {
  TrackedSequence frames;
  PoseVectorSequence vectors;
};

inline PreparedSegment prepare_segment(TrackedSequence seg) {
  PreparedSegment out;
  out.vectors = vectorize_sequence(seg);
  out.frames = std::move(seg);
  return out;
}

inline std::vector<PreparedSegment> prepare_segments(std::span<const TrackedSequence> segments) {
  std::vector<PreparedSegment> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(prepare_segment(s));
  return out;
}

struct PipelineConfig {
  PredictorConfig predictor;
  bool emit_unknowns = false;
};

/// Verdict for the frame at position p of each segment (p counted from 1,
/// p >= t_obs + t_pred) from the forecast made with positions
/// [p - t_obs - t_pred + 1, p - t_pred]. The forecast is renormalized per
/// connection before classification. The unknown rule is applied to the last
/// observed frame, the newest frame the forecast may use.
inline std::vector<FrameVerdict> run_forecast_pipeline(const PredictorParams& predictor,
                                                       const ClassifierParams& classifier,
                                                       const PipelineConfig& config,
                                                       std::span<const PreparedSegment> segments) {
  if (!(predictor.config == config.predictor)) {
    throw ConfigError("pipeline predictor config does not match the loaded predictor model");
  }
  const auto& c = predictor.config;
  const std::size_t span = c.t_obs + c.t_pred;
  std::vector<FrameVerdict> out;
  for (const auto& seg : segments) {
    const auto& vec = seg.vectors.vectors;
    for (std::size_t end = span; end <= vec.size(); ++end) {
      const std::size_t obs_begin = end - span;
      const std::size_t obs_last = obs_begin + c.t_obs - 1;
      FrameVerdict v;
      v.source_id = seg.frames.source_id;
      v.track_id = seg.frames.track_id;
      v.frame_index = seg.vectors.frame_indices[end - 1];
      v.basis = VerdictBasis::kForecast;
      if (!is_classifiable(seg.frames.frames[obs_last])) {
        if (!config.emit_unknowns) continue;
        v.label = FallLabel::kUnknown;
      } else {
        const auto forecast = predict(predictor, std::span<const PoseVector>(vec).subspan(obs_begin, c.t_obs));
        const auto cls = classify(classifier, renormalize(forecast.back()));
        v.label = cls.label;
        v.probabilities = cls.probabilities;
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

/// Classifies each frame's own pose vector.
inline std::vector<FrameVerdict> run_direct_pipeline(const ClassifierParams& classifier, const PipelineConfig& config,
                                                     std::span<const PreparedSegment> segments) {
  std::vector<FrameVerdict> out;
  for (const auto& seg : segments) {
    for (std::size_t k = 0; k < seg.vectors.size(); ++k) {
      const auto cls = prejudge_or_classify(classifier, seg.frames.frames[k], seg.vectors.vectors[k]);
      if (cls.label == FallLabel::kUnknown && !config.emit_unknowns) continue;
      FrameVerdict v;
      v.source_id = seg.frames.source_id;
      v.track_id = seg.frames.track_id;
      v.frame_index = seg.vectors.frame_indices[k];
      v.label = cls.label;
      v.probabilities = cls.probabilities;
      v.basis = VerdictBasis::kDirect;
      out.push_back(std::move(v));
    }
  }
  return out;
}

/// `source_id,track_id,frame,label,p_fall,basis`; p_fall is empty for
/// Unknown rows.
inline void write_verdicts(std::ostream& os, std::span<const FrameVerdict> verdicts) {
  os << "source_id,track_id,frame,label,p_fall,basis\n";
  char buf[32];
  for (const auto& v : verdicts) {
    os << v.source_id << ',' << v.track_id << ',' << v.frame_index << ',' << to_string(v.label) << ',';
    if (v.label != FallLabel::kUnknown) {
      std::snprintf(buf, sizeof buf, "%.6f", v.probabilities[1]);
      os << buf;
    }
    os << ',' << to_string(v.basis) << '\n';
  }
}

using FrameKey = std::tuple<std::string, std::int64_t, std::int64_t>;

inline FrameKey key_of(const FrameVerdict& v) { return {v.source_id, v.track_id, v.frame_index}; }

/// Ground truth for a frame: the label from its source's annotation.
struct AnnotationTruth {
  const std::map<std::string, VideoAnnotation>* annotations;
  AnnotationPrinciple principle = AnnotationPrinciple::kFallenOnly;

  std::optional<FallLabel> operator()(const FrameVerdict& v) const {
    const auto it = annotations->find(v.source_id);
    if (it == annotations->end()) return std::nullopt;
    return frame_label(it->second, principle, v.frame_index);
  }
};

/// Truth-aligned predictions for metric evaluation; verdicts without truth
/// are skipped.
template <class TruthFn>
Metrics evaluate_verdicts(std::span<const FrameVerdict> verdicts, const TruthFn& truth) {
  std::vector<FallLabel> preds, labels;
  for (const auto& v : verdicts) {
    const auto t = truth(v);
    if (!t) continue;
    preds.push_back(v.label);
    labels.push_back(*t);
  }
  return evaluate(preds, labels);
}

struct ModeComparison {
  Metrics direct;
  Metrics forecast;
  std::size_t common_frames = 0;
};

/// Evaluates both modes on the frames present in both verdict sets.
template <class TruthFn>
ModeComparison compare_modes(std::span<const FrameVerdict> direct, std::span<const FrameVerdict> forecast,
                             const TruthFn& truth) {
  std::map<FrameKey, const FrameVerdict*> by_key;
  for (const auto& v : direct) {
    if (v.basis != VerdictBasis::kDirect) throw DataError("compare_modes: direct set holds a forecast verdict");
    if (!by_key.emplace(key_of(v), &v).second) throw DataError("compare_modes: duplicate direct verdict");
  }
  std::vector<FrameVerdict> d, f;
  std::map<FrameKey, bool> seen;
  for (const auto& v : forecast) {
    if (v.basis != VerdictBasis::kForecast) throw DataError("compare_modes: forecast set holds a direct verdict");
    if (!seen.emplace(key_of(v), true).second) throw DataError("compare_modes: duplicate forecast verdict");
    const auto it = by_key.find(key_of(v));
    if (it == by_key.end() || !truth(v)) continue;
    d.push_back(*it->second);
    f.push_back(v);
  }
  ModeComparison out;
  out.common_frames = f.size();
  out.direct = evaluate_verdicts<TruthFn>(d, truth);
  out.forecast = evaluate_verdicts<TruthFn>(f, truth);
  return out;
}

}  // namespace fallpred
