#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>

namespace fallpred {

inline constexpr std::size_t kNumKeypoints = 18;
inline constexpr std::size_t kNumBodyKeypoints = 13;
inline constexpr std::size_t kNumConnections = 12;
inline constexpr std::size_t kPoseDim = 2 * kNumConnections;

/// MS-COCO 18 keypoints in OpenPose output order.
enum class Joint : std::size_t {
  kNose = 0,
  kNeck = 1,
  kRShoulder = 2,
  kRElbow = 3,
  kRWrist = 4,
  kLShoulder = 5,
  kLElbow = 6,
  kLWrist = 7,
  kRHip = 8,
  kRKnee = 9,
  kRAnkle = 10,
  kLHip = 11,
  kLKnee = 12,
  kLAnkle = 13,
  kREye = 14,
  kLEye = 15,
  kREar = 16,
  kLEar = 17,
};

constexpr std::size_t index(Joint j) { return static_cast<std::size_t>(j); }

constexpr bool is_face(std::size_t k) {
  return k == index(Joint::kNose) || k >= index(Joint::kREye);
}

constexpr std::string_view joint_name(std::size_t k) {
  constexpr std::array<std::string_view, kNumKeypoints> names{
      "nose",       "neck",     "r_shoulder", "r_elbow", "r_wrist",
      "l_shoulder", "l_elbow",  "l_wrist",    "r_hip",   "r_knee",
      "r_ankle",    "l_hip",    "l_knee",     "l_ankle", "r_eye",
      "l_eye",      "r_ear",    "l_ear"};
  return k < kNumKeypoints ? names[k] : std::string_view{"?"};
}

/// A 2D keypoint in image pixels. Undetected keypoints hold (0, 0).
struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool detected = false;

  static constexpr Keypoint missing() { return {}; }
  static constexpr Keypoint at(double x, double y) { return {x, y, true}; }

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct SkeletonFrame {
  std::array<Keypoint, kNumKeypoints> keypoints{};
  std::int64_t frame_index = 1;
  std::int64_t track_id = 0;

  const Keypoint& operator[](Joint j) const { return keypoints[index(j)]; }
  Keypoint& operator[](Joint j) { return keypoints[index(j)]; }

  friend bool operator==(const SkeletonFrame&, const SkeletonFrame&) = default;
};

/// A directed bone, proximal (`from`) to distal (`to`).
struct Connection {
  std::size_t from;
  std::size_t to;
};

/// The 12 body connections as a tree rooted at the neck. Slot p of a
/// PoseVector holds the direction of connections[p].
struct SkeletonTopology {
  std::array<Connection, kNumConnections> connections;
};

constexpr SkeletonTopology coco_topology() {
  using J = Joint;
  return SkeletonTopology{{{
      {index(J::kNeck), index(J::kRShoulder)},
      {index(J::kNeck), index(J::kLShoulder)},
      {index(J::kRShoulder), index(J::kRElbow)},
      {index(J::kLShoulder), index(J::kLElbow)},
      {index(J::kRElbow), index(J::kRWrist)},
      {index(J::kLElbow), index(J::kLWrist)},
      {index(J::kNeck), index(J::kRHip)},
      {index(J::kNeck), index(J::kLHip)},
      {index(J::kRHip), index(J::kRKnee)},
      {index(J::kLHip), index(J::kLKnee)},
      {index(J::kRKnee), index(J::kRAnkle)},
      {index(J::kLKnee), index(J::kLAnkle)},
  }}};
}

/// Number of detected keypoints among the 13 body keypoints.
constexpr std::size_t detected_body_count(const SkeletonFrame& frame) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    if (!is_face(k) && frame.keypoints[k].detected) ++n;
  }
  return n;
}

}  // namespace fallpred
