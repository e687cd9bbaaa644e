#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "fallpred/ingest.hpp"
#include "fallpred/skeleton.hpp"

namespace fallpred {

/// 12 direction sub-vectors (x, y) in topology order. Each is unit length or
/// exactly (0, 0) when the direction is unavailable.
using PoseVector = std::array<double, kPoseDim>;

struct PoseVectorSequence {
  std::vector<PoseVector> vectors;
  std::vector<std::int64_t> frame_indices;
  std::int64_t track_id = 0;
  std::string source_id;

  std::size_t size() const { return vectors.size(); }
};

inline PoseVector vectorize_frame(const SkeletonFrame& frame,
                                  const SkeletonTopology& topology = coco_topology()) {
  PoseVector out{};
  for (std::size_t p = 0; p < kNumConnections; ++p) {
    const auto& from = frame.keypoints[topology.connections[p].from];
    const auto& to = frame.keypoints[topology.connections[p].to];
    if (!from.detected || !to.detected) continue;
    const double dx = to.x - from.x;
    const double dy = to.y - from.y;
    const double norm = std::hypot(dx, dy);
    if (norm == 0.0) continue;
    out[2 * p] = dx / norm;
    out[2 * p + 1] = dy / norm;
  }
  return out;
}

inline PoseVectorSequence vectorize_sequence(const TrackedSequence& seq,
                                             const SkeletonTopology& topology = coco_topology()) {
  PoseVectorSequence out;
  out.track_id = seq.track_id;
  out.source_id = seq.source_id;
  out.vectors.reserve(seq.frames.size());
  out.frame_indices.reserve(seq.frames.size());
  for (const auto& frame : seq.frames) {
    out.vectors.push_back(vectorize_frame(frame, topology));
    out.frame_indices.push_back(frame.frame_index);
  }
  return out;
}

inline constexpr std::size_t kMinClassifiableKeypoints = 8;

/// Frames with fewer than 8 detected body keypoints are prejudged unknown.
inline bool is_classifiable(const SkeletonFrame& frame) {
  return detected_body_count(frame) >= kMinClassifiableKeypoints;
}

/// Rescales each sub-vector to unit length; sub-vectors shorter than
/// `min_norm` become (0, 0).
inline PoseVector renormalize(const PoseVector& v, double min_norm = 1e-6) {
  PoseVector out{};
  for (std::size_t p = 0; p < kNumConnections; ++p) {
    const double norm = std::hypot(v[2 * p], v[2 * p + 1]);
    if (norm < min_norm) continue;
    out[2 * p] = v[2 * p] / norm;
    out[2 * p + 1] = v[2 * p + 1] / norm;
  }
  return out;
}

/// Writes one row per frame: frame_index followed by the 24 components.
inline void write_vector_table(std::ostream& os, const PoseVectorSequence& seq) {
  os << "frame_index";
  for (std::size_t p = 0; p < kNumConnections; ++p) os << ",x" << p << ",y" << p;
  os << '\n';
  const auto old_precision = os.precision(17);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    os << seq.frame_indices[i];
    for (double v : seq.vectors[i]) os << ',' << v;
    os << '\n';
  }
  os.precision(old_precision);
}

}  // namespace fallpred
