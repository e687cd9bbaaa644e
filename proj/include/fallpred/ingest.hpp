#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fallpred/error.hpp"
#include "fallpred/skeleton.hpp"

namespace fallpred {

inline constexpr std::size_t kValuesPerPerson = 3 * kNumKeypoints;

/// One person as read from a keypoint file, before tracking.
struct PersonDetection {
  std::array<Keypoint, kNumKeypoints> keypoints{};
  std::optional<std::int64_t> track_id;
};

struct PoseFrame {
  std::int64_t frame_index = 1;
  std::vector<PersonDetection> people;
};

/// In-memory form of a per-video keypoint file.
struct PoseFile {
  std::string source_id;
  std::vector<PoseFrame> frames;
};

struct TrackedSequence {
  std::int64_t track_id = 0;
  std::vector<SkeletonFrame> frames;
  std::string source_id;
};

struct DetectionBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double area() const { return (x_max - x_min) * (y_max - y_min); }
  friend bool operator==(const DetectionBox&, const DetectionBox&) = default;
};

namespace detail {

inline Keypoint keypoint_from_triple(double x, double y, double confidence) {
  // Confidence only decides detection; it is not kept.
  if (confidence > 0.0) return Keypoint::at(x, y);
  return Keypoint::missing();
}

inline PersonDetection person_from_json(const nlohmann::json& person, std::int64_t frame_index,
                                        std::size_t person_pos) {
  const nlohmann::json* values = &person;
  std::optional<std::int64_t> track_id;
  if (person.is_object()) {
    if (!person.contains("keypoints")) {
      throw ParseError("frame " + std::to_string(frame_index) + ": person " +
                       std::to_string(person_pos) + " has no \"keypoints\" field");
    }
    values = &person.at("keypoints");
    if (person.contains("track_id")) {
      if (!person.at("track_id").is_number_integer()) {
        throw ParseError("frame " + std::to_string(frame_index) + ": person " +
                         std::to_string(person_pos) + " has a non-integer track_id");
      }
      track_id = person.at("track_id").get<std::int64_t>();
    }
  }
  if (!values->is_array()) {
    throw ParseError("frame " + std::to_string(frame_index) + ": person " +
                     std::to_string(person_pos) + " keypoints are not an array");
  }
  if (values->size() != kValuesPerPerson) {
    throw ParseError("frame " + std::to_string(frame_index) + ": person " +
                     std::to_string(person_pos) + " has " + std::to_string(values->size()) +
                     " numbers, expected " + std::to_string(kValuesPerPerson));
  }
  PersonDetection out;
  out.track_id = track_id;
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    double triple[3];
    for (std::size_t t = 0; t < 3; ++t) {
      const auto& v = (*values)[3 * k + t];
      if (!v.is_number()) {
        throw ParseError("frame " + std::to_string(frame_index) + ": person " +
                         std::to_string(person_pos) + " value " + std::to_string(3 * k + t) +
                         " is not a number");
      }
      triple[t] = v.get<double>();
      if (!std::isfinite(triple[t])) {
        throw ParseError("frame " + std::to_string(frame_index) + ": non-finite keypoint value");
      }
    }
    out.keypoints[k] = keypoint_from_triple(triple[0], triple[1], triple[2]);
  }
  return out;
}

}  // namespace detail

/// Parses a keypoint file. The document is
/// `{"source_id": "...", "frames": [{"frame_index": n, "people": [person...]}]}`,
/// where a person is either `{"keypoints": [54 numbers], "track_id": k}` or a
/// bare array of 54 numbers `[x1, y1, c1, ..., x18, y18, c18]`. A confidence
/// of 0 marks an undetected keypoint.
inline PoseFile parse_pose_frames(std::string_view text) {
  std::int64_t last_frame_index = 0;
  std::string last_key;
  auto track = [&](int /*depth*/, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
    if (event == nlohmann::json::parse_event_t::key) {
      last_key = parsed.get<std::string>();
    } else if (event == nlohmann::json::parse_event_t::value && last_key == "frame_index" &&
               parsed.is_number_integer()) {
      last_frame_index = parsed.get<std::int64_t>();
      last_key.clear();
    }
    return true;
  };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end(), track);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed keypoint file at byte " + std::to_string(e.byte) +
                     " (after frame " + std::to_string(last_frame_index) + "): " + e.what());
  }

  if (!doc.is_object() || !doc.contains("frames") || !doc.at("frames").is_array()) {
    throw ParseError("keypoint file must be an object with a \"frames\" array");
  }
  PoseFile file;
  if (doc.contains("source_id") && doc.at("source_id").is_string()) {
    file.source_id = doc.at("source_id").get<std::string>();
  }
  std::int64_t previous = 0;
  for (const auto& f : doc.at("frames")) {
    if (!f.is_object() || !f.contains("frame_index") || !f.at("frame_index").is_number_integer()) {
      throw ParseError("frame after " + std::to_string(previous) + " has no integer frame_index");
    }
    PoseFrame frame;
    frame.frame_index = f.at("frame_index").get<std::int64_t>();
    if (frame.frame_index < 1) {
      throw ParseError("frame " + std::to_string(frame.frame_index) + ": frame_index must be >= 1");
    }
    if (frame.frame_index <= previous) {
      throw ParseError("frame " + std::to_string(frame.frame_index) +
                       ": frame indices must be strictly increasing");
    }
    previous = frame.frame_index;
    if (f.contains("people")) {
      const auto& people = f.at("people");
      if (!people.is_array()) {
        throw ParseError("frame " + std::to_string(frame.frame_index) + ": \"people\" is not an array");
      }
      for (std::size_t p = 0; p < people.size(); ++p) {
        frame.people.push_back(detail::person_from_json(people[p], frame.frame_index, p));
      }
    }
    file.frames.push_back(std::move(frame));
  }
  return file;
}

/// Serializes a PoseFile in the format read by parse_pose_frames. Detected
/// keypoints are written with confidence 1.
inline std::string write_pose_file(const PoseFile& file) {
  nlohmann::json doc;
  doc["source_id"] = file.source_id;
  doc["frames"] = nlohmann::json::array();
  for (const auto& frame : file.frames) {
    nlohmann::json f;
    f["frame_index"] = frame.frame_index;
    f["people"] = nlohmann::json::array();
    for (const auto& person : frame.people) {
      nlohmann::json values = nlohmann::json::array();
      for (const auto& kp : person.keypoints) {
        values.push_back(kp.detected ? kp.x : 0.0);
        values.push_back(kp.detected ? kp.y : 0.0);
        values.push_back(kp.detected ? 1.0 : 0.0);
      }
      nlohmann::json p;
      p["keypoints"] = std::move(values);
      if (person.track_id) p["track_id"] = *person.track_id;
      f["people"].push_back(std::move(p));
    }
    doc["frames"].push_back(std::move(f));
  }
  return doc.dump();
}

/// Extent of the detected keypoints, or nullopt when none are detected.
inline std::optional<DetectionBox> keypoint_box(const std::array<Keypoint, kNumKeypoints>& kps) {
  std::optional<DetectionBox> box;
  for (const auto& kp : kps) {
    if (!kp.detected) continue;
    if (!box) {
      box = DetectionBox{kp.x, kp.y, kp.x, kp.y};
    } else {
      box->x_min = std::min(box->x_min, kp.x);
      box->y_min = std::min(box->y_min, kp.y);
      box->x_max = std::max(box->x_max, kp.x);
      box->y_max = std::max(box->y_max, kp.y);
    }
  }
  return box;
}

inline double iou(const DetectionBox& a, const DetectionBox& b) {
  const double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

struct TrackerOptions {
  double min_iou = 0.3;
  /// Frames a track may go unmatched before it is closed.
  std::int64_t max_missed_frames = 10;
};

/// Greedy IoU association of per-frame detections into tracks. When every
/// person in the file carries a track_id, those identities are used as is.
inline std::vector<TrackedSequence> associate_tracks(const PoseFile& file,
                                                     const TrackerOptions& options = {}) {
  std::vector<TrackedSequence> tracks;

  bool all_tagged = true;
  bool any_person = false;
  for (const auto& frame : file.frames) {
    for (const auto& person : frame.people) {
      any_person = true;
      all_tagged = all_tagged && person.track_id.has_value();
    }
  }
  if (!any_person) return tracks;

  if (all_tagged) {
    std::map<std::int64_t, std::size_t> slot;
    for (const auto& frame : file.frames) {
      for (const auto& person : frame.people) {
        const auto id = *person.track_id;
        auto [it, inserted] = slot.try_emplace(id, tracks.size());
        if (inserted) tracks.push_back(TrackedSequence{id, {}, file.source_id});
        auto& track = tracks[it->second];
        if (!track.frames.empty() && track.frames.back().frame_index == frame.frame_index) {
          throw ParseError("frame " + std::to_string(frame.frame_index) + ": track_id " +
                           std::to_string(id) + " appears twice");
        }
        track.frames.push_back(SkeletonFrame{person.keypoints, frame.frame_index, id});
      }
    }
    return tracks;
  }

  struct Live {
    std::size_t track;
    std::optional<DetectionBox> box;
    std::int64_t last_frame;
  };
  std::vector<Live> live;
  std::int64_t next_id = 0;

  for (const auto& frame : file.frames) {
    std::erase_if(live, [&](const Live& l) {
      return frame.frame_index - l.last_frame - 1 > options.max_missed_frames;
    });

    struct Candidate {
      double score;
      std::size_t live_pos;
      std::size_t person;
    };
    std::vector<std::optional<DetectionBox>> boxes;
    boxes.reserve(frame.people.size());
    for (const auto& person : frame.people) boxes.push_back(keypoint_box(person.keypoints));

    std::vector<Candidate> candidates;
    for (std::size_t l = 0; l < live.size(); ++l) {
      if (!live[l].box) continue;
      for (std::size_t p = 0; p < frame.people.size(); ++p) {
        if (!boxes[p]) continue;
        const double score = iou(*live[l].box, *boxes[p]);
        if (score >= options.min_iou) candidates.push_back({score, l, p});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    std::vector<bool> live_used(live.size(), false);
    std::vector<std::optional<std::size_t>> assigned(frame.people.size());
    for (const auto& c : candidates) {
      if (live_used[c.live_pos] || assigned[c.person]) continue;
      live_used[c.live_pos] = true;
      assigned[c.person] = c.live_pos;
    }

    for (std::size_t p = 0; p < frame.people.size(); ++p) {
      std::size_t live_pos;
      if (assigned[p]) {
        live_pos = *assigned[p];
      } else {
        tracks.push_back(TrackedSequence{next_id++, {}, file.source_id});
        live.push_back(Live{tracks.size() - 1, std::nullopt, frame.frame_index});
        live_pos = live.size() - 1;
      }
      auto& l = live[live_pos];
      auto& track = tracks[l.track];
      track.frames.push_back(SkeletonFrame{frame.people[p].keypoints, frame.frame_index, track.track_id});
      l.box = boxes[p];
      l.last_frame = frame.frame_index;
    }
  }
  return tracks;
}

struct SegmentOptions {
  /// A run of at least this many discarded or absent frames splits a track.
  std::int64_t break_run = 10;
  std::size_t min_length = 10;
};

/// Drops frames without any detected body keypoint, splits the track at runs
/// of >= 10 missing frames and removes segments shorter than 10 frames.
inline std::vector<TrackedSequence> segment_sequences(const TrackedSequence& track,
                                                      const SegmentOptions& options = {}) {
  std::vector<TrackedSequence> out;
  TrackedSequence current{track.track_id, {}, track.source_id};
  auto flush = [&] {
    if (current.frames.size() >= options.min_length) out.push_back(std::move(current));
    current = TrackedSequence{track.track_id, {}, track.source_id};
  };
  for (const auto& frame : track.frames) {
    if (detected_body_count(frame) == 0) continue;
    if (!current.frames.empty()) {
      const auto missing = frame.frame_index - current.frames.back().frame_index - 1;
      if (missing >= options.break_run) flush();
    }
    current.frames.push_back(frame);
  }
  flush();
  return out;
}

/// Parse, track and segment one keypoint document.
inline std::vector<TrackedSequence> load_segments(std::string_view text,
                                                  std::string_view fallback_source_id = {}) {
  auto file = parse_pose_frames(text);
  if (file.source_id.empty()) file.source_id = std::string(fallback_source_id);
  std::vector<TrackedSequence> segments;
  for (const auto& track : associate_tracks(file)) {
    for (auto& s : segment_sequences(track)) segments.push_back(std::move(s));
  }
  return segments;
}

}  // namespace fallpred
