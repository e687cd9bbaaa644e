#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>

#include "fallpred/dataset.hpp"

using namespace fallpred;

namespace {

VideoAnnotation ann(std::int64_t fs, std::int64_t fe, std::int64_t gu, std::int64_t n = 300) {
  return VideoAnnotation{"v", fs, fe, gu, n};
}

// The clip rule written out directly from its inequalities.
std::string clip_rule(std::int64_t l, std::int64_t r, std::int64_t fs, std::int64_t fe, std::int64_t gu) {
  const bool fall = l <= fs && fe <= r && r <= gu;
  const bool no_fall = r <= fs || l >= gu;
  if (fall) return "fall";
  if (no_fall) return "no_fall";
  return "excluded";
}

double angle_from_vertical(double x, double y) { return std::abs(std::atan2(x, y)) * 180.0 / M_PI; }

double angle_from_horizontal(double x, double y) {
  return std::abs(std::atan2(std::abs(y), std::abs(x))) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("frame labels under the three principles", "[dataset][labels]") {
  const auto a = ann(100, 130, 200);
  CHECK(frame_label(a, AnnotationPrinciple::kFallenOnly, 130) == FallLabel::kFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallenOnly, 129) == FallLabel::kNoFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallenOnly, 200) == FallLabel::kFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallenOnly, 201) == FallLabel::kNoFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallingAndAfter, 100) == FallLabel::kFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallenOnly, 100) == FallLabel::kNoFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallingOnly, 130) == FallLabel::kFall);
  CHECK(frame_label(a, AnnotationPrinciple::kFallingOnly, 131) == FallLabel::kNoFall);

  const auto none = ann(0, 0, 0, 50);
  for (auto p : {AnnotationPrinciple::kFallingOnly, AnnotationPrinciple::kFallingAndAfter,
                 AnnotationPrinciple::kFallenOnly}) {
    const auto labels = frame_labels(none, p);
    CHECK(labels.size() == 50);
    for (auto l : labels) CHECK(l == FallLabel::kNoFall);
  }
  CHECK_THROWS_AS(frame_labels(ann(100, 90, 200), AnnotationPrinciple::kFallenOnly), DataError);
  CHECK_THROWS_AS(frame_labels(ann(100, 130, 400), AnnotationPrinciple::kFallenOnly), DataError);
  CHECK(parse_principle("p3") == AnnotationPrinciple::kFallenOnly);
  CHECK_THROWS_AS(parse_principle("p4"), ConfigError);
}

TEST_CASE("principle intervals nest", "[dataset][labels][property]") {
  for (std::int64_t fs = 1; fs <= 20; fs += 3) {
    for (std::int64_t fe = fs; fe <= 25; fe += 4) {
      for (std::int64_t gu = fe; gu <= 30; gu += 5) {
        const auto a = ann(fs, fe, gu, 30);
        const auto p1 = frame_labels(a, AnnotationPrinciple::kFallingOnly);
        const auto p2 = frame_labels(a, AnnotationPrinciple::kFallingAndAfter);
        const auto p3 = frame_labels(a, AnnotationPrinciple::kFallenOnly);
        for (std::size_t k = 0; k < p1.size(); ++k) {
          if (p1[k] == FallLabel::kFall) CHECK(p2[k] == FallLabel::kFall);
          if (p3[k] == FallLabel::kFall) CHECK(p2[k] == FallLabel::kFall);
        }
      }
    }
  }
}

TEST_CASE("clip labels", "[dataset][clips]") {
  const auto a = ann(100, 130, 200);
  CHECK(clip_label(80, 155, a) == ClipLabel::kFall);
  CHECK(clip_label(1, 76, a) == ClipLabel::kNoFall);
  CHECK(clip_label(110, 185, a) == ClipLabel::kExcluded);
  CHECK(clip_label(200, 275, a) == ClipLabel::kNoFall);
  CHECK_THROWS_AS(clip_label(1, 75, a), DataError);
}

TEST_CASE("clip labels agree with the inequalities for every left edge", "[dataset][clips][property]") {
  for (const auto& a : {ann(100, 130, 200), ann(40, 71, 300), ann(1, 1, 1), ann(120, 120, 120), ann(0, 0, 0)}) {
    std::set<std::string> seen;
    for (std::int64_t l = -10; l <= 320; ++l) {
      const auto got = std::string(to_string(clip_label(l, l + 75, a)));
      CHECK(got == clip_rule(l, l + 75, a.fall_start, a.fall_end, a.get_up));
      seen.insert(got);
    }
    CHECK(!seen.empty());
  }
}

TEST_CASE("annotation files roundtrip", "[dataset][io]") {
  const std::vector<VideoAnnotation> anns{{"a", 10, 41, 90, 100}, {"b", 0, 0, 0, 250}};
  std::stringstream ss;
  write_annotations(ss, anns);
  CHECK(parse_annotations(ss) == anns);

  std::stringstream bad("source_id,S_fs,S_fe,S_gu,n_frames\nx,5,4,10,20\n");
  CHECK_THROWS_AS(parse_annotations(bad), ParseError);
  std::stringstream short_line("x,1,2,3\n");
  CHECK_THROWS_AS(parse_annotations(short_line), ParseError);
  std::stringstream junk("x,1,two,3,4\n");
  CHECK_THROWS_AS(parse_annotations(junk), ParseError);
}

TEST_CASE("7:3 split", "[dataset][split]") {
  std::vector<std::string> ids;
  for (int k = 0; k < 10; ++k) ids.push_back("video" + std::to_string(k));
  auto self = [](const std::string& s) { return s; };
  const auto s = split<std::string>(ids, 3, self);
  CHECK(s.train.size() == 7);
  CHECK(s.test.size() == 3);
  const auto again = split<std::string>(ids, 3, self);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  const auto other = split<std::string>(ids, 4, self);
  CHECK((other.train != s.train || other.test != s.test));

  std::vector<std::string> one_video(20, "same");
  const auto g = split<std::string>(one_video, 3, self);
  CHECK((g.train.empty() || g.test.empty()));
  const auto per = split<std::string>(one_video, 3, self, SplitMode::kPerSample);
  CHECK(per.train.size() == 14);
  CHECK(per.test.size() == 6);
  CHECK_THROWS_AS(split<std::string>(std::vector<std::string>{}, 3, self), DataError);
}

TEST_CASE("grouped split keeps every source on one side", "[dataset][split][property]") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> group(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, std::string>> samples;
    for (int k = 0; k < 60; ++k) samples.push_back({k, "g" + std::to_string(group(rng))});
    const auto s = split<std::pair<int, std::string>>(samples, static_cast<std::uint64_t>(trial),
                                                      [](const auto& p) { return p.second; });
    CHECK(s.train.size() + s.test.size() == samples.size());
    std::set<std::string> train_groups;
    for (const auto& p : s.train) train_groups.insert(p.second);
    for (const auto& p : s.test) CHECK(train_groups.count(p.second) == 0);
  }
}

TEST_CASE("synthetic stamps", "[dataset][synth]") {
  const auto lie = synth_motion({MotionKind::kFallAndLie, 200, 1.0, 0.02, 7, "lie"});
  CHECK(lie.annotation.get_up == 200);
  CHECK(lie.annotation.fall_end - lie.annotation.fall_start + 1 == 32);
  CHECK(lie.annotation.fall_start >= 40);
  CHECK(lie.sequence.frames.size() == 200);
  lie.annotation.validate();

  const auto idle = synth_motion({MotionKind::kUprightIdle, 100, 1.0, 0.0, 7, "idle"});
  CHECK_FALSE(idle.annotation.has_fall());
  CHECK(idle.annotation.fall_start == 0);
  CHECK(idle.annotation.get_up == 0);

  const auto rise = synth_motion({MotionKind::kFallAndRise, 250, 0.0, 0.0, 8, "rise"});
  CHECK(rise.annotation.get_up < 250);
  CHECK(rise.annotation.get_up > rise.annotation.fall_end);
  rise.annotation.validate();

  CHECK_THROWS_AS(synth_motion({MotionKind::kFallAndLie, 40, 0.0, 0.0, 1, "x"}), ConfigError);
  CHECK_THROWS_AS(synth_motion({MotionKind::kWalk, 40, -1.0, 0.0, 1, "x"}), ConfigError);
  CHECK_THROWS_AS(synth_motion({MotionKind::kWalk, 40, 0.0, 1.5, 1, "x"}), ConfigError);
}

TEST_CASE("clean synthetic frames are fully detected", "[dataset][synth]") {
  for (auto kind : kAllMotionKinds) {
    const auto v = synth_motion({kind, 200, 0.0, 0.0, 11, "clean"});
    for (const auto& f : v.sequence.frames) CHECK(detected_body_count(f) == 13);
  }
}

TEST_CASE("synthesis is deterministic", "[dataset][synth]") {
  const MotionScript s{MotionKind::kWalk, 120, 1.0, 0.05, 21, "w"};
  const auto a = synth_motion(s);
  const auto b = synth_motion(s);
  REQUIRE(a.sequence.frames.size() == b.sequence.frames.size());
  for (std::size_t k = 0; k < a.sequence.frames.size(); ++k) {
    CHECK(a.sequence.frames[k].keypoints == b.sequence.frames[k].keypoints);
  }
  auto s2 = s;
  s2.seed = 22;
  CHECK_FALSE(synth_motion(s2).sequence.frames[5].keypoints == a.sequence.frames[5].keypoints);
}

TEST_CASE("torso geometry of falls", "[dataset][synth][property]") {
  const auto topo = coco_topology();
  std::vector<std::size_t> torso;
  for (std::size_t c = 0; c < topo.connections.size(); ++c) {
    const auto [from, to] = topo.connections[c];
    if (from == index(Joint::kNeck) && (to == index(Joint::kRHip) || to == index(Joint::kLHip))) torso.push_back(c);
  }
  REQUIRE(torso.size() == 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto kind : {MotionKind::kFallAndLie, MotionKind::kFallAndRise}) {
      const auto v = synth_motion({kind, 250, 0.0, 0.0, seed, "geo"});
      const auto& a = v.annotation;
      for (const auto& f : v.sequence.frames) {
        const auto vec = vectorize_frame(f);
        for (auto c : torso) {
          const double x = vec[2 * c], y = vec[2 * c + 1];
          if (f.frame_index < a.fall_start) CHECK(angle_from_vertical(x, y) <= 15.0);
          if (kind == MotionKind::kFallAndLie && f.frame_index > a.fall_end) {
            CHECK(angle_from_horizontal(x, y) <= 15.0);
          }
        }
        // body axis: the hip offsets cancel in the sum of both torso vectors;
        // S_gu splits the rise at half progress, blurred by a few degrees of sway
        const double ax = vec[2 * torso[0]] + vec[2 * torso[1]], ay = vec[2 * torso[0] + 1] + vec[2 * torso[1] + 1];
        const std::int64_t i = f.frame_index;
        if (i >= a.fall_end && i <= a.get_up) CHECK(angle_from_horizontal(ax, ay) < 48.0);
        if (kind == MotionKind::kFallAndRise && i > a.get_up) CHECK(angle_from_horizontal(ax, ay) > 42.0);
      }
    }
  }
}

TEST_CASE("corpus scripts are balanced and named", "[dataset][synth]") {
  CorpusOptions o;
  o.count = 200;
  const auto scripts = corpus_scripts(o);
  std::map<MotionKind, int> counts;
  for (const auto& s : scripts) ++counts[s.kind];
  for (auto k : kAllMotionKinds) CHECK(counts[k] == 50);
  CHECK(scripts.front().source_id == "seq_0001");
  CHECK(scripts.back().source_id == "seq_0200");
  std::set<std::uint64_t> seeds;
  for (const auto& s : scripts) seeds.insert(s.seed);
  CHECK(seeds.size() == 200);
}

TEST_CASE("synthetic corpus parses back through ingest", "[dataset][io]") {
  const auto v = synth_motion({MotionKind::kFallAndRise, 200, 1.0, 0.02, 3, "rt"});
  const auto text = write_pose_file(to_pose_file(v.sequence));
  const auto parsed = parse_pose_frames(text);
  CHECK(parsed.source_id == "rt");
  REQUIRE(parsed.frames.size() == v.sequence.frames.size());
  for (std::size_t k = 0; k < parsed.frames.size(); ++k) {
    REQUIRE(parsed.frames[k].people.size() == 1);
    CHECK(parsed.frames[k].people[0].keypoints == v.sequence.frames[k].keypoints);
  }
}

TEST_CASE("labeled poses follow the annotation", "[dataset]") {
  const auto v = synth_motion({MotionKind::kFallAndLie, 120, 0.0, 0.0, 5, "lp"});
  const std::vector<TrackedSequence> segs{v.sequence};
  const std::vector<VideoAnnotation> anns{v.annotation};
  const auto data = labeled_poses(segs, index_annotations(anns), AnnotationPrinciple::kFallenOnly);
  REQUIRE(data.size() == 120);
  for (const auto& s : data) {
    CHECK(s.label == frame_label(v.annotation, AnnotationPrinciple::kFallenOnly, s.frame_index));
    CHECK(s.detected_body_count == 13);
  }
  const std::vector<VideoAnnotation> unrelated{{"other", 0, 0, 0, 10}};
  CHECK(labeled_poses(segs, index_annotations(unrelated), AnnotationPrinciple::kFallenOnly).empty());
}
