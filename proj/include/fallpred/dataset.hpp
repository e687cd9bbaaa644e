#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fallpred/classifier.hpp"
#include "fallpred/error.hpp"
#include "fallpred/ingest.hpp"
#include "fallpred/skeleton.hpp"

namespace fallpred {

// ---------------------------------------------------------------------------
// Annotations

/// Frame stamps of one video. A video without a fall has all three stamps 0.
struct VideoAnnotation {
  std::string source_id;
  std::int64_t fall_start = 0;  // S_fs
  std::int64_t fall_end = 0;    // S_fe
  std::int64_t get_up = 0;      // S_gu; the last frame when the actor never rises
  std::int64_t n_frames = 0;

  bool has_fall() const { return fall_start != 0 || fall_end != 0 || get_up != 0; }

  void validate() const {
    if (n_frames < 0) throw DataError("annotation " + source_id + ": negative frame count");
    if (!has_fall()) return;
    if (!(1 <= fall_start && fall_start <= fall_end && fall_end <= get_up && get_up <= n_frames)) {
      throw DataError("annotation " + source_id + ": stamps must satisfy 1 <= S_fs <= S_fe <= S_gu <= n_frames");
    }
  }

  friend bool operator==(const VideoAnnotation&, const VideoAnnotation&) = default;
};

/// Which closed frame interval is labeled Fall.
enum class AnnotationPrinciple {
  kFallingOnly,    // P1: [S_fs, S_fe]
  kFallingAndAfter,  // P2: [S_fs, S_gu]
  kFallenOnly,     // P3: [S_fe, S_gu]
};

inline AnnotationPrinciple parse_principle(std::string_view s) {
  if (s == "p1" || s == "P1") return AnnotationPrinciple::kFallingOnly;
  if (s == "p2" || s == "P2") return AnnotationPrinciple::kFallingAndAfter;
  if (s == "p3" || s == "P3") return AnnotationPrinciple::kFallenOnly;
  throw ConfigError("unknown annotation principle '" + std::string(s) + "' (expected p1, p2 or p3)");
}

constexpr std::string_view to_string(AnnotationPrinciple p) {
  switch (p) {
    case AnnotationPrinciple::kFallingOnly: return "p1";
    case AnnotationPrinciple::kFallingAndAfter: return "p2";
    case AnnotationPrinciple::kFallenOnly: return "p3";
  }
  return "?";
}

inline std::pair<std::int64_t, std::int64_t> fall_interval(const VideoAnnotation& ann, AnnotationPrinciple p) {
  switch (p) {
    case AnnotationPrinciple::kFallingOnly: return {ann.fall_start, ann.fall_end};
    case AnnotationPrinciple::kFallingAndAfter: return {ann.fall_start, ann.get_up};
    case AnnotationPrinciple::kFallenOnly: return {ann.fall_end, ann.get_up};
  }
  return {0, -1};
}

inline FallLabel frame_label(const VideoAnnotation& ann, AnnotationPrinciple p, std::int64_t frame) {
  if (!ann.has_fall()) return FallLabel::kNoFall;
  const auto [lo, hi] = fall_interval(ann, p);
  return lo <= frame && frame <= hi ? FallLabel::kFall : FallLabel::kNoFall;
}

/// Labels for frames 1..n_frames (element k is frame k + 1).
inline std::vector<FallLabel> frame_labels(const VideoAnnotation& ann, AnnotationPrinciple p) {
  ann.validate();
  std::vector<FallLabel> out(static_cast<std::size_t>(ann.n_frames));
  for (std::int64_t f = 1; f <= ann.n_frames; ++f) out[static_cast<std::size_t>(f - 1)] = frame_label(ann, p, f);
  return out;
}

enum class ClipLabel { kFall, kNoFall, kExcluded };

constexpr std::string_view to_string(ClipLabel c) {
  switch (c) {
    case ClipLabel::kFall: return "fall";
    case ClipLabel::kNoFall: return "no_fall";
    case ClipLabel::kExcluded: return "excluded";
  }
  return "?";
}

inline constexpr std::int64_t kClipSpan = 75;

/// Label of the clip [left, right] with right - left = 75. A clip holding the
/// whole falling motion and ending no later than S_gu is Fall; a clip ending
/// before the fall starts or starting after the actor got up is NoFall; any
/// other overlap is Excluded. The Fall test is applied first.
inline ClipLabel clip_label(std::int64_t left, std::int64_t right, const VideoAnnotation& ann) {
  if (right - left != kClipSpan) {
    throw DataError("clip [" + std::to_string(left) + ", " + std::to_string(right) + "] is not 75 frames long");
  }
  if (left <= ann.fall_start && ann.fall_end <= right && right <= ann.get_up) return ClipLabel::kFall;
  if (right <= ann.fall_start || left >= ann.get_up) return ClipLabel::kNoFall;
  return ClipLabel::kExcluded;
}

/// `source_id,S_fs,S_fe,S_gu,n_frames` per line; blank lines and lines
/// starting with '#' are skipped, as is a leading header line.
inline std::vector<VideoAnnotation> parse_annotations(std::istream& in) {
  std::vector<VideoAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line_no == 1 && line.rfind("source_id", 0) == 0) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": expected 5 fields, got " +
                       std::to_string(fields.size()));
    }
    VideoAnnotation ann;
    ann.source_id = fields[0];
    try {
      std::size_t used = 0;
      auto num = [&](const std::string& s) {
        const auto v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<std::int64_t>(v);
      };
      ann.fall_start = num(fields[1]);
      ann.fall_end = num(fields[2]);
      ann.get_up = num(fields[3]);
      ann.n_frames = num(fields[4]);
    } catch (const std::exception&) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": non-integer stamp");
    }
    try {
      ann.validate();
    } catch (const DataError& e) {
      throw ParseError("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(ann));
  }
  return out;
}

inline void write_annotations(std::ostream& os, std::span<const VideoAnnotation> anns) {
  os << "source_id,S_fs,S_fe,S_gu,n_frames\n";
  for (const auto& a : anns) {
    os << a.source_id << ',' << a.fall_start << ',' << a.fall_end << ',' << a.get_up << ',' << a.n_frames << '\n';
  }
}

// ---------------------------------------------------------------------------
// Train/test split

template <class T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
};

enum class SplitMode { kGroupedBySource, kPerSample };

/// Seeded shuffle with ⌊train_fraction·n⌋ samples going to train. In grouped
/// mode whole groups are shuffled and assigned, so no group spans both sides.
template <class T, class GroupFn>
Split<T> split(std::span<const T> samples, std::uint64_t seed, GroupFn group_of,
               SplitMode mode = SplitMode::kGroupedBySource, double train_fraction = 0.7) {
  if (samples.empty()) throw DataError("cannot split an empty set");
  const auto target = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples.size()) + 1e-9));
  std::mt19937_64 rng(seed);
  Split<T> out;
  if (mode == SplitMode::kPerSample) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k < target ? out.train : out.test).push_back(samples[order[k]]);
    }
    return out;
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < samples.size(); ++k) groups[std::string(group_of(samples[k]))].push_back(k);
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [key, members] : groups) order.push_back(&members);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t in_train = 0;
  for (const auto* members : order) {
    const bool to_train = in_train < target;
    for (std::size_t k : *members) (to_train ? out.train : out.test).push_back(samples[k]);
    if (to_train) in_train += members->size();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic motion

enum class MotionKind { kUprightIdle, kWalk, kFallAndLie, kFallAndRise };

inline constexpr std::array<MotionKind, 4> kAllMotionKinds{MotionKind::kUprightIdle, MotionKind::kWalk,
                                                           MotionKind::kFallAndLie, MotionKind::kFallAndRise};

constexpr std::string_view to_string(MotionKind k) {
  switch (k) {
    case MotionKind::kUprightIdle: return "upright_idle";
    case MotionKind::kWalk: return "walk";
    case MotionKind::kFallAndLie: return "fall_and_lie";
    case MotionKind::kFallAndRise: return "fall_and_rise";
  }
  return "?";
}

inline MotionKind parse_motion_kind(std::string_view s) {
  for (auto k : kAllMotionKinds) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown motion kind '" + std::string(s) + "'");
}

inline constexpr double kFramesPerSecond = 25.0;
/// Mean duration of the falling motion in seconds.
inline constexpr double kFallSeconds = 1.26;
inline constexpr double kRiseSeconds = 1.5;

struct MotionScript {
  MotionKind kind = MotionKind::kUprightIdle;
  std::int64_t duration = 250;  // frames at 25 fps
  double noise_std = 0.0;       // pixels
  double occlusion_rate = 0.0;  // per keypoint per frame
  std::uint64_t seed = 0;
  std::string source_id = "synthetic";

  std::int64_t min_duration() const {
    switch (kind) {
      case MotionKind::kUprightIdle:
      case MotionKind::kWalk: return 1;
      case MotionKind::kFallAndLie: return 80;
      case MotionKind::kFallAndRise: return 160;
    }
    return 1;
  }

  void validate() const {
    if (duration < min_duration()) {
      throw ConfigError(std::string(to_string(kind)) + " needs at least " + std::to_string(min_duration()) +
                        " frames");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise_std must be >= 0");
    if (!(occlusion_rate >= 0.0 && occlusion_rate <= 1.0)) throw ConfigError("occlusion_rate must be in [0, 1]");
  }
};

struct SyntheticVideo {
  TrackedSequence sequence;
  VideoAnnotation annotation;
};

namespace detail {

/// Limb angles in radians, measured from the body's downward axis toward
/// the body's left.
struct LimbAngles {
  double r_upper_arm, r_forearm, l_upper_arm, l_forearm;
  double r_thigh, r_shin, l_thigh, l_shin;
};

inline LimbAngles lerp(const LimbAngles& a, const LimbAngles& b, double u) {
  auto m = [u](double x, double y) { return x + (y - x) * u; };
  return {m(a.r_upper_arm, b.r_upper_arm), m(a.r_forearm, b.r_forearm), m(a.l_upper_arm, b.l_upper_arm),
          m(a.l_forearm, b.l_forearm),     m(a.r_thigh, b.r_thigh),     m(a.r_shin, b.r_shin),
          m(a.l_thigh, b.l_thigh),         m(a.l_shin, b.l_shin)};
}

struct BodyShape {
  double scale;        // pixels per torso length
  double width;        // lateral foreshortening in (0, 1]
  double upper_arm = 0.55, forearm = 0.5, thigh = 0.85, shin = 0.8;
  double shoulder_half = 0.33, hip_half = 0.17;
};

struct Pose {
  double tilt;  // whole-body rotation, 0 upright, +-pi/2 lying
  LimbAngles limbs;
};

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

/// Keypoints of `pose` with the ankle midpoint of the upright body placed at
/// `(anchor_x, anchor_y)` and the body rotated about it.
inline std::array<Keypoint, kNumKeypoints> place(const Pose& pose, const BodyShape& b, double anchor_x,
                                                 double anchor_y) {
  // Body frame: d points from neck to hips, l to the body's left.
  struct P {
    double d, l;
  };
  auto dir = [](double angle) { return P{std::cos(angle), std::sin(angle)}; };
  auto add = [](P a, P v, double len) { return P{a.d + v.d * len, a.l + v.l * len}; };

  std::array<P, kNumKeypoints> body{};
  const P neck{0.0, 0.0};
  body[index(Joint::kNeck)] = neck;
  body[index(Joint::kRShoulder)] = P{0.02, -b.shoulder_half * b.width};
  body[index(Joint::kLShoulder)] = P{0.02, b.shoulder_half * b.width};
  body[index(Joint::kRElbow)] = add(body[index(Joint::kRShoulder)], dir(pose.limbs.r_upper_arm), b.upper_arm);
  body[index(Joint::kRWrist)] = add(body[index(Joint::kRElbow)], dir(pose.limbs.r_forearm), b.forearm);
  body[index(Joint::kLElbow)] = add(body[index(Joint::kLShoulder)], dir(pose.limbs.l_upper_arm), b.upper_arm);
  body[index(Joint::kLWrist)] = add(body[index(Joint::kLElbow)], dir(pose.limbs.l_forearm), b.forearm);
  body[index(Joint::kRHip)] = P{1.0, -b.hip_half * b.width};
  body[index(Joint::kLHip)] = P{1.0, b.hip_half * b.width};
  body[index(Joint::kRKnee)] = add(body[index(Joint::kRHip)], dir(pose.limbs.r_thigh), b.thigh);
  body[index(Joint::kRAnkle)] = add(body[index(Joint::kRKnee)], dir(pose.limbs.r_shin), b.shin);
  body[index(Joint::kLKnee)] = add(body[index(Joint::kLHip)], dir(pose.limbs.l_thigh), b.thigh);
  body[index(Joint::kLAnkle)] = add(body[index(Joint::kLKnee)], dir(pose.limbs.l_shin), b.shin);
  body[index(Joint::kNose)] = P{-0.3, 0.0};
  body[index(Joint::kREye)] = P{-0.36, -0.06 * b.width};
  body[index(Joint::kLEye)] = P{-0.36, 0.06 * b.width};
  body[index(Joint::kREar)] = P{-0.33, -0.13 * b.width};
  body[index(Joint::kLEar)] = P{-0.33, 0.13 * b.width};

  // Pivot: the point below the neck at standing leg length.
  const double pivot_d = 1.0 + b.thigh + b.shin;
  // Image frame: upright d = (0, 1) (y grows downward), l = (1, 0) seen
  // from the front with the body's left on the image right. Tilting by
  // `tilt` rotates the body about the pivot.
  const double ct = std::cos(pose.tilt), st = std::sin(pose.tilt);
  std::array<Keypoint, kNumKeypoints> out{};
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    const double rd = body[k].d - pivot_d;  // relative to pivot, along d
    const double rl = body[k].l;
    // Upright image offsets (x, y) = (rl, rd); rotate by tilt.
    const double x = rl * ct - rd * st;
    const double y = rl * st + rd * ct;
    out[k] = Keypoint::at(anchor_x + b.scale * x, anchor_y + b.scale * y);
  }
  return out;
}

inline double ease_in(double u) { return 0.5 * u + 0.5 * u * u * u; }
inline double ease_out(double u) { return 1.0 - ease_in(1.0 - u); }

}  // namespace detail

/// Kinematic stick-figure motion at 25 fps with annotation stamps taken from
/// the script's phase boundaries. Noise and occlusion are applied last.
inline SyntheticVideo synth_motion(const MotionScript& script) {
  using namespace detail;
  script.validate();
  std::mt19937_64 rng(script.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  BodyShape shape{};
  shape.scale = 50.0 * uniform(0.7, 1.3);
  shape.width = uniform(0.45, 1.0);
  const double anchor_x0 = uniform(100.0, 220.0);
  const double anchor_y = uniform(190.0, 225.0);
  const double side = unit(rng) < 0.5 ? -1.0 : 1.0;  // fall / walk direction
  const double sway_period = uniform(40.0, 80.0);
  const double sway_phase = uniform(0.0, 2.0 * std::numbers::pi);
  const double sway_amp = deg(uniform(1.0, 2.5));

  const LimbAngles standing{deg(-6), deg(-4), deg(6), deg(4), deg(-2), deg(-1), deg(2), deg(1)};
  const LimbAngles lying{deg(-18), deg(-10), deg(14), deg(25), deg(-6), deg(-3), deg(5), deg(8)};

  const auto n = script.duration;
  const auto fall_frames = static_cast<std::int64_t>(std::lround(kFallSeconds * kFramesPerSecond));
  const auto rise_frames = static_cast<std::int64_t>(std::lround(kRiseSeconds * kFramesPerSecond));

  VideoAnnotation ann;
  ann.source_id = script.source_id;
  ann.n_frames = n;
  std::int64_t lie_until = n;  // last lying frame
  if (script.kind == MotionKind::kFallAndLie || script.kind == MotionKind::kFallAndRise) {
    const double start_frac = script.kind == MotionKind::kFallAndLie ? uniform(0.2, 0.4) : uniform(0.15, 0.25);
    ann.fall_start = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::lround(start_frac * double(n))));
    ann.fall_end = ann.fall_start + fall_frames - 1;
    if (script.kind == MotionKind::kFallAndLie) {
      ann.get_up = n;
    } else {
      const auto room = n - ann.fall_end - rise_frames - 10;
      const auto lie = static_cast<std::int64_t>(std::lround(uniform(0.45, 0.75) * double(room)));
      lie_until = ann.fall_end + std::max<std::int64_t>(lie, 1);
      // S_gu: last frame of the rise whose torso is still nearer horizontal
      std::int64_t k = 0;
      while (k < rise_frames && detail::ease_out(double(k + 1) / double(rise_frames)) < 0.5) ++k;
      ann.get_up = lie_until + k;
    }
  }

  auto idle_pose = [&](std::int64_t f) {
    const double t = static_cast<double>(f);
    Pose p{sway_amp * std::sin(2.0 * std::numbers::pi * t / sway_period + sway_phase), standing};
    const double arm = deg(3.0) * std::sin(2.0 * std::numbers::pi * t / (0.7 * sway_period));
    p.limbs.r_upper_arm += arm;
    p.limbs.l_upper_arm -= arm;
    return p;
  };
  auto lying_pose = [&](std::int64_t f) {
    const double t = static_cast<double>(f);
    Pose p{side * std::numbers::pi / 2.0 + deg(1.0) * std::sin(2.0 * std::numbers::pi * t / 60.0), lying};
    return p;
  };
  auto between = [&](const Pose& a, const Pose& b, double u, double flail) {
    Pose p{a.tilt + (b.tilt - a.tilt) * u, lerp(a.limbs, b.limbs, u)};
    p.limbs.r_upper_arm -= flail;
    p.limbs.l_upper_arm += flail;
    p.limbs.r_forearm -= 0.8 * flail;
    p.limbs.l_forearm += 0.8 * flail;
    return p;
  };

  const double walk_speed = uniform(0.8, 1.6) * side;  // pixels per frame
  const double stride_period = uniform(22.0, 30.0);
  const double walk_phase = uniform(0.0, 2.0 * std::numbers::pi);

  TrackedSequence seq;
  seq.source_id = script.source_id;
  seq.track_id = 0;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::int64_t f = 1; f <= n; ++f) {
    Pose pose{};
    double anchor_x = anchor_x0;
    switch (script.kind) {
      case MotionKind::kUprightIdle: pose = idle_pose(f); break;
      case MotionKind::kWalk: {
        const double ph = 2.0 * std::numbers::pi * static_cast<double>(f) / stride_period + walk_phase;
        const double swing = deg(22.0) * std::sin(ph);
        const double arm = deg(16.0) * std::sin(ph);
        pose.tilt = deg(2.0) * side + deg(1.0) * std::sin(2.0 * ph);
        pose.limbs = standing;
        pose.limbs.r_thigh += swing;
        pose.limbs.l_thigh -= swing;
        pose.limbs.r_shin += swing + deg(14.0) * std::max(0.0, std::cos(ph));
        pose.limbs.l_shin -= swing - deg(14.0) * std::max(0.0, -std::cos(ph));
        pose.limbs.r_upper_arm -= arm;
        pose.limbs.l_upper_arm += arm;
        pose.limbs.r_forearm -= 1.3 * arm;
        pose.limbs.l_forearm += 1.3 * arm;
        anchor_x += walk_speed * static_cast<double>(f);
        break;
      }
      case MotionKind::kFallAndLie:
      case MotionKind::kFallAndRise: {
        if (f < ann.fall_start) {
          pose = idle_pose(f);
        } else if (f <= ann.fall_end) {
          const double u = static_cast<double>(f - ann.fall_start) / static_cast<double>(ann.fall_end - ann.fall_start);
          const double flail = side * deg(45.0) * std::sin(std::numbers::pi * u);
          pose = between(idle_pose(ann.fall_start), lying_pose(ann.fall_end), ease_in(u), flail);
        } else if (f <= lie_until) {
          pose = lying_pose(f);
        } else if (f <= lie_until + rise_frames) {
          const double u = static_cast<double>(f - lie_until) / static_cast<double>(rise_frames);
          pose = between(lying_pose(lie_until), idle_pose(lie_until + rise_frames), ease_out(u), 0.0);
        } else {
          pose = idle_pose(f);
        }
        break;
      }
    }
    SkeletonFrame frame;
    frame.frame_index = f;
    frame.track_id = 0;
    frame.keypoints = place(pose, shape, anchor_x, anchor_y);
    for (auto& kp : frame.keypoints) {
      if (script.noise_std > 0.0) {
        kp.x += script.noise_std * noise(rng);
        kp.y += script.noise_std * noise(rng);
      }
      if (script.occlusion_rate > 0.0 && unit(rng) < script.occlusion_rate) kp = Keypoint::missing();
    }
    seq.frames.push_back(frame);
  }
  return {std::move(seq), ann};
}

/// Keypoint-file form of a synthetic video (track ids included).
inline PoseFile to_pose_file(const TrackedSequence& seq) {
  PoseFile file;
  file.source_id = seq.source_id;
  for (const auto& f : seq.frames) {
    PoseFrame frame;
    frame.frame_index = f.frame_index;
    frame.people.push_back(PersonDetection{f.keypoints, seq.track_id});
    file.frames.push_back(std::move(frame));
  }
  return file;
}

/// splitmix64, for deriving independent per-item seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t item) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (item + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct CorpusOptions {
  std::size_t count = 200;
  std::vector<MotionKind> kinds{kAllMotionKinds.begin(), kAllMotionKinds.end()};
  std::int64_t duration = 250;
  double noise_std = 1.0;
  double occlusion_rate = 0.02;
  std::uint64_t seed = 1;
  std::string prefix = "seq";
};

/// `count` scripts cycling through `kinds`, so the kinds are balanced.
inline std::vector<MotionScript> corpus_scripts(const CorpusOptions& o) {
  if (o.kinds.empty()) throw ConfigError("corpus needs at least one motion kind");
  std::vector<MotionScript> out;
  for (std::size_t i = 0; i < o.count; ++i) {
    MotionScript s;
    s.kind = o.kinds[i % o.kinds.size()];
    s.duration = o.duration;
    s.noise_std = o.noise_std;
    s.occlusion_rate = o.occlusion_rate;
    s.seed = derive_seed(o.seed, i);
    char name[32];
    std::snprintf(name, sizeof name, "_%04zu", i + 1);
    s.source_id = o.prefix + name;
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<SyntheticVideo> synth_corpus(const CorpusOptions& o) {
  std::vector<SyntheticVideo> out;
  for (const auto& s : corpus_scripts(o)) out.push_back(synth_motion(s));
  return out;
}

// ---------------------------------------------------------------------------
// Frame-level samples

/// Labeled pose samples for every frame of every segment. Frames of sources
/// without an annotation are skipped.
inline std::vector<LabeledPose> labeled_poses(std::span<const TrackedSequence> segments,
                                              const std::map<std::string, VideoAnnotation>& annotations,
                                              AnnotationPrinciple principle) {
  std::vector<LabeledPose> out;
  for (const auto& seg : segments) {
    const auto it = annotations.find(seg.source_id);
    if (it == annotations.end()) continue;
    for (const auto& frame : seg.frames) {
      LabeledPose s;
      s.vector = vectorize_frame(frame);
      s.label = frame_label(it->second, principle, frame.frame_index);
      s.detected_body_count = detected_body_count(frame);
      s.source_id = seg.source_id;
      s.frame_index = frame.frame_index;
      out.push_back(s);
    }
  }
  return out;
}

inline std::map<std::string, VideoAnnotation> index_annotations(std::span<const VideoAnnotation> anns) {
  std::map<std::string, VideoAnnotation> out;
  for (const auto& a : anns) out[a.source_id] = a;
  return out;
}

}  // namespace fallpred
