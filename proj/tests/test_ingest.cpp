#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <string>

#include "fallpred/ingest.hpp"

using namespace fallpred;

namespace {

std::string numbers_json(std::size_t count, double confidence = 1.0) {
  std::string s = "[";
  for (std::size_t k = 0; k < count; ++k) {
    if (k) s += ",";
    s += (k % 3 == 2) ? std::to_string(confidence) : std::to_string(10.0 + double(k));
  }
  return s + "]";
}

PersonDetection person_at(double x, double y, double w = 20, double h = 60) {
  PersonDetection p;
  for (std::size_t k = 0; k < kNumKeypoints; ++k) {
    const double fx = double(k % 3) / 2.0;
    const double fy = double(k) / double(kNumKeypoints - 1);
    p.keypoints[k] = Keypoint::at(x + fx * w, y + fy * h);
  }
  return p;
}

SkeletonFrame good_frame(std::int64_t idx) {
  SkeletonFrame f;
  f.frame_index = idx;
  for (std::size_t k = 0; k < kNumKeypoints; ++k) f.keypoints[k] = Keypoint::at(double(k), double(2 * k));
  return f;
}

}  // namespace

TEST_CASE("parse_pose_frames reads one person", "[ingest]") {
  const std::string doc = R"({"source_id":"v1","frames":[{"frame_index":1,"people":[)" + numbers_json(54) + "]}]}";
  const auto file = parse_pose_frames(doc);
  REQUIRE(file.frames.size() == 1);
  REQUIRE(file.frames[0].people.size() == 1);
  CHECK(file.source_id == "v1");
  const auto& kps = file.frames[0].people[0].keypoints;
  CHECK(kps.size() == 18);
  CHECK(kps[0] == Keypoint::at(10.0, 11.0));
  CHECK(kps[17] == Keypoint::at(10.0 + 51, 10.0 + 52));
}

TEST_CASE("zero confidence means undetected", "[ingest]") {
  const std::string doc = R"({"frames":[{"frame_index":3,"people":[{"keypoints":)" + numbers_json(54, 0.0) + "}]}]}";
  const auto file = parse_pose_frames(doc);
  SkeletonFrame f{file.frames[0].people[0].keypoints, 3, 0};
  CHECK(detected_body_count(f) == 0);
  for (const auto& kp : f.keypoints) CHECK(kp == Keypoint::missing());
}

TEST_CASE("wrong arity is a format error naming the frame", "[ingest]") {
  const std::string doc = R"({"frames":[{"frame_index":7,"people":[)" + numbers_json(55) + "]}]}";
  try {
    parse_pose_frames(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("frame 7") != std::string::npos);
    CHECK(msg.find("55") != std::string::npos);
  }
}

TEST_CASE("malformed document reports byte offset and frame", "[ingest]") {
  const std::string doc = R"({"frames":[{"frame_index":4,"people":[]},{"frame_index":5,"people":[1,2,)";
  try {
    parse_pose_frames(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("byte") != std::string::npos);
    CHECK(msg.find("frame 5") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_pose_frames(R"({"frames":[{"frame_index":2},{"frame_index":2}]})"), ParseError);
  CHECK_THROWS_AS(parse_pose_frames(R"([1,2,3])"), ParseError);
}

TEST_CASE("write_pose_file round-trips through the parser", "[ingest]") {
  PoseFile file;
  file.source_id = "roundtrip";
  for (std::int64_t f = 1; f <= 3; ++f) {
    PoseFrame frame;
    frame.frame_index = f * 2;
    auto p = person_at(0.1 * double(f), 1.0 / 3.0);
    p.keypoints[5] = Keypoint::missing();
    p.track_id = 9;
    frame.people.push_back(p);
    file.frames.push_back(frame);
  }
  const auto back = parse_pose_frames(write_pose_file(file));
  REQUIRE(back.frames.size() == 3);
  CHECK(back.source_id == "roundtrip");
  for (std::size_t f = 0; f < 3; ++f) {
    CHECK(back.frames[f].frame_index == file.frames[f].frame_index);
    CHECK(back.frames[f].people[0].keypoints == file.frames[f].people[0].keypoints);
    CHECK(back.frames[f].people[0].track_id == 9);
  }
}

TEST_CASE("associate_tracks follows one stationary person", "[ingest]") {
  PoseFile file;
  for (std::int64_t f = 1; f <= 50; ++f) file.frames.push_back(PoseFrame{f, {person_at(100, 50)}});
  const auto tracks = associate_tracks(file);
  REQUIRE(tracks.size() == 1);
  CHECK(tracks[0].frames.size() == 50);
}

TEST_CASE("associate_tracks keeps two separated people apart", "[ingest]") {
  // Two walkers; brute-force the optimal assignment per frame and compare.
  PoseFile file;
  for (std::int64_t f = 1; f <= 40; ++f) {
    const double t = double(f);
    auto a = person_at(20 + 1.5 * t, 40);
    auto b = person_at(250 - 1.0 * t, 60);
    PoseFrame frame{f, {}};
    if (f % 2) {
      frame.people = {a, b};
    } else {
      frame.people = {b, a};
    }
    file.frames.push_back(frame);
  }
  const auto tracks = associate_tracks(file);
  REQUIRE(tracks.size() == 2);
  for (const auto& track : tracks) {
    REQUIRE(track.frames.size() == 40);
    for (std::size_t k = 1; k < track.frames.size(); ++k) {
      const auto prev = *keypoint_box(track.frames[k - 1].keypoints);
      const auto cur = *keypoint_box(track.frames[k].keypoints);
      // brute force: among both detections of frame k, the one with the
      // larger IoU to the previous box must be the one assigned.
      const auto& frame = file.frames[k];
      double best = -1.0;
      DetectionBox best_box{};
      for (const auto& p : frame.people) {
        const auto box = *keypoint_box(p.keypoints);
        const double s = iou(prev, box);
        if (s > best) {
          best = s;
          best_box = box;
        }
      }
      CHECK(cur == best_box);
    }
  }
}

TEST_CASE("a track closes after more than 10 missed frames", "[ingest]") {
  PoseFile file;
  for (std::int64_t f = 1; f <= 20; ++f) file.frames.push_back(PoseFrame{f, {person_at(100, 50)}});
  for (std::int64_t f = 21; f <= 32; ++f) file.frames.push_back(PoseFrame{f, {}});
  for (std::int64_t f = 33; f <= 50; ++f) file.frames.push_back(PoseFrame{f, {person_at(100, 50)}});
  CHECK(associate_tracks(file).size() == 2);

  // a 10 frame gap keeps the track alive
  PoseFile short_gap;
  for (std::int64_t f = 1; f <= 20; ++f) short_gap.frames.push_back(PoseFrame{f, {person_at(100, 50)}});
  for (std::int64_t f = 31; f <= 50; ++f) short_gap.frames.push_back(PoseFrame{f, {person_at(100, 50)}});
  CHECK(associate_tracks(short_gap).size() == 1);
}

TEST_CASE("associate_tracks partitions all detections", "[ingest]") {
  PoseFile file;
  std::size_t total = 0;
  for (std::int64_t f = 1; f <= 30; ++f) {
    PoseFrame frame{f, {}};
    frame.people.push_back(person_at(10 + 3.0 * double(f % 7), 10));
    if (f % 3 == 0) frame.people.push_back(person_at(200, 100));
    if (f % 5 == 0) frame.people.push_back(PersonDetection{});  // nothing detected
    total += frame.people.size();
    file.frames.push_back(frame);
  }
  std::size_t assigned = 0;
  for (const auto& t : associate_tracks(file)) {
    assigned += t.frames.size();
    for (std::size_t k = 1; k < t.frames.size(); ++k) CHECK(t.frames[k].frame_index > t.frames[k - 1].frame_index);
  }
  CHECK(assigned == total);
}

TEST_CASE("explicit track ids bypass association", "[ingest]") {
  PoseFile file;
  for (std::int64_t f = 1; f <= 5; ++f) {
    auto a = person_at(0, 0);
    a.track_id = 4;
    auto b = person_at(0, 0);  // same place, different identity
    b.track_id = 8;
    file.frames.push_back(PoseFrame{f, {a, b}});
  }
  const auto tracks = associate_tracks(file);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[0].track_id == 4);
  CHECK(tracks[1].track_id == 8);
}

TEST_CASE("segment_sequences applies the discard rules", "[ingest]") {
  auto make = [](std::initializer_list<std::pair<int, bool>> runs) {
    TrackedSequence t;
    std::int64_t idx = 1;
    for (auto [len, good] : runs) {
      for (int k = 0; k < len; ++k) {
        auto f = good ? good_frame(idx) : SkeletonFrame{{}, idx, 0};
        t.frames.push_back(f);
        ++idx;
      }
    }
    return t;
  };

  auto s = segment_sequences(make({{30, true}}));
  REQUIRE(s.size() == 1);
  CHECK(s[0].frames.size() == 30);

  s = segment_sequences(make({{20, true}, {10, false}, {20, true}}));
  REQUIRE(s.size() == 2);
  CHECK(s[0].frames.size() == 20);
  CHECK(s[1].frames.size() == 20);

  CHECK(segment_sequences(make({{9, true}})).empty());

  // nine discarded frames do not split, they are only removed
  s = segment_sequences(make({{20, true}, {9, false}, {20, true}}));
  REQUIRE(s.size() == 1);
  CHECK(s[0].frames.size() == 40);

  // absent frame indices count as missing
  TrackedSequence gap;
  for (std::int64_t f = 1; f <= 15; ++f) gap.frames.push_back(good_frame(f));
  for (std::int64_t f = 26; f <= 40; ++f) gap.frames.push_back(good_frame(f));
  CHECK(segment_sequences(gap).size() == 2);
}

TEST_CASE("segments are order-preserving subsets without empty frames", "[ingest][property]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    TrackedSequence t;
    const int n = 5 + int(rng() % 120);
    for (int k = 1; k <= n; ++k) {
      auto f = good_frame(k);
      if (rng() % 4 == 0) f = SkeletonFrame{{}, k, 0};
      t.frames.push_back(f);
    }
    for (const auto& seg : segment_sequences(t)) {
      CHECK(seg.frames.size() >= 10);
      for (std::size_t k = 0; k < seg.frames.size(); ++k) {
        CHECK(detected_body_count(seg.frames[k]) > 0);
        if (k) CHECK(seg.frames[k].frame_index - seg.frames[k - 1].frame_index <= 10);
        const auto it = std::find(t.frames.begin(), t.frames.end(), seg.frames[k]);
        CHECK(it != t.frames.end());
      }
    }
  }
}
