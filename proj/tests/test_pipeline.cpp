#include <catch_amalgamated.hpp>

#include <sstream>

#include "fallpred/pipeline.hpp"

using namespace fallpred;

namespace {

PreparedSegment segment(std::int64_t frames, std::uint64_t seed, MotionKind kind = MotionKind::kWalk,
                        std::string source = "s") {
  auto v = synth_motion({kind, frames, 1.0, 0.0, seed, std::move(source)});
  return prepare_segment(std::move(v.sequence));
}

struct Models {
  PredictorParams predictor = make_predictor(PredictorConfig{25, 50, 5, 16}, 1);
  ClassifierParams classifier = make_classifier(2);
  PipelineConfig config{PredictorConfig{25, 50, 5, 16}, false};
};

}  // namespace

TEST_CASE("forecast verdicts start once a full window exists", "[pipeline]") {
  const Models m;
  const std::vector<PreparedSegment> segs{segment(100, 1)};
  const auto v = run_forecast_pipeline(m.predictor, m.classifier, m.config, segs);
  REQUIRE(v.size() == 26);
  CHECK(v.front().frame_index == 75);
  CHECK(v.back().frame_index == 100);
  for (const auto& x : v) CHECK(x.basis == VerdictBasis::kForecast);

  const std::vector<PreparedSegment> short_segs{segment(74, 1)};
  CHECK(run_forecast_pipeline(m.predictor, m.classifier, m.config, short_segs).empty());
}

TEST_CASE("forecast verdict uses the forecast of the frame", "[pipeline]") {
  const Models m;
  const std::vector<PreparedSegment> segs{segment(90, 3)};
  const auto v = run_forecast_pipeline(m.predictor, m.classifier, m.config, segs);
  const auto& vec = segs[0].vectors.vectors;
  // verdict for frame 80 observes frames 6..30
  const auto& at80 = v[80 - 75];
  REQUIRE(at80.frame_index == 80);
  const auto forecast = predict(m.predictor, std::span<const PoseVector>(vec).subspan(5, 25));
  const auto expected = classify(m.classifier, renormalize(forecast[49]));
  CHECK(at80.label == expected.label);
  CHECK(at80.probabilities == expected.probabilities);
}

TEST_CASE("forecast verdicts only look at frames at least t_pred back", "[pipeline][property]") {
  const Models m;
  const auto full = segment(160, 4, MotionKind::kFallAndLie);
  const std::vector<PreparedSegment> full_segs{full};
  const auto all = run_forecast_pipeline(m.predictor, m.classifier, m.config, full_segs);
  for (std::int64_t i : {75, 90, 120, 160}) {
    // keep only frames <= i - 50, then pad with garbage up to frame i
    auto cut = full;
    const auto keep = static_cast<std::size_t>(i - 50);
    for (std::size_t k = keep; k < cut.vectors.vectors.size(); ++k) {
      cut.vectors.vectors[k].fill(0.3);
      cut.frames.frames[k].keypoints.fill(Keypoint::missing());
    }
    const std::vector<PreparedSegment> cut_segs{cut};
    const auto partial = run_forecast_pipeline(m.predictor, m.classifier, m.config, cut_segs);
    const auto pos = static_cast<std::size_t>(i - 75);
    CHECK(partial[pos] == all[pos]);
  }
}

TEST_CASE("unknown frames are skipped unless requested", "[pipeline]") {
  Models m;
  auto seg = segment(80, 5);
  // last observed frame of the verdict for frame 76 is frame 26
  for (std::size_t k = 1; k <= 6; ++k) seg.frames.frames[25].keypoints[k] = Keypoint::missing();
  const std::vector<PreparedSegment> segs{seg};
  const auto skipped = run_forecast_pipeline(m.predictor, m.classifier, m.config, segs);
  CHECK(skipped.size() == 5);
  m.config.emit_unknowns = true;
  const auto kept = run_forecast_pipeline(m.predictor, m.classifier, m.config, segs);
  REQUIRE(kept.size() == 6);
  CHECK(kept[1].frame_index == 76);
  CHECK(kept[1].label == FallLabel::kUnknown);

  const auto direct = run_direct_pipeline(m.classifier, m.config, segs);
  CHECK(direct.size() == 80);
  CHECK(direct[25].label == FallLabel::kUnknown);
  m.config.emit_unknowns = false;
  CHECK(run_direct_pipeline(m.classifier, m.config, segs).size() == 79);
}

TEST_CASE("direct verdicts classify each frame", "[pipeline]") {
  const Models m;
  const std::vector<PreparedSegment> segs{segment(60, 6), segment(30, 7)};
  const auto v = run_direct_pipeline(m.classifier, m.config, segs);
  REQUIRE(v.size() == 90);
  for (std::size_t k = 0; k < 60; ++k) {
    CHECK(v[k].label == classify(m.classifier, segs[0].vectors.vectors[k]).label);
    CHECK(v[k].basis == VerdictBasis::kDirect);
  }
}

TEST_CASE("config mismatch is refused", "[pipeline]") {
  Models m;
  m.config.predictor.t_obs = 10;
  const std::vector<PreparedSegment> segs{segment(100, 1)};
  CHECK_THROWS_AS(run_forecast_pipeline(m.predictor, m.classifier, m.config, segs), ConfigError);
}

TEST_CASE("verdict stream format", "[pipeline][io]") {
  std::vector<FrameVerdict> v(2);
  v[0] = {"clip", 3, 77, FallLabel::kFall, {0.25, 0.75}, VerdictBasis::kForecast};
  v[1] = {"clip", 3, 78, FallLabel::kUnknown, {0.0, 0.0}, VerdictBasis::kForecast};
  std::ostringstream os;
  write_verdicts(os, v);
  CHECK(os.str() ==
        "source_id,track_id,frame,label,p_fall,basis\n"
        "clip,3,77,fall,0.750000,forecast\n"
        "clip,3,78,unknown,,forecast\n");
}

TEST_CASE("compare_modes", "[pipeline][metrics]") {
  const std::map<std::string, VideoAnnotation> anns{{"s", {"s", 80, 90, 100, 100}}};
  const AnnotationTruth truth{&anns, AnnotationPrinciple::kFallenOnly};
  std::vector<FrameVerdict> direct, forecast;
  for (std::int64_t f = 1; f <= 100; ++f) {
    const auto label = f >= 92 ? FallLabel::kFall : FallLabel::kNoFall;
    direct.push_back({"s", 0, f, label, {}, VerdictBasis::kDirect});
    if (f >= 75) forecast.push_back({"s", 0, f, label, {}, VerdictBasis::kForecast});
  }
  const auto cmp = compare_modes(direct, forecast, truth);
  CHECK(cmp.common_frames == 26);
  CHECK(cmp.direct.all.tp == cmp.forecast.all.tp);
  CHECK(cmp.direct.all.fn == cmp.forecast.all.fn);
  CHECK(cmp.direct.all.accuracy == cmp.forecast.all.accuracy);
  CHECK(cmp.direct.all.f1 == cmp.forecast.all.f1);
  CHECK(cmp.direct.all.tp == 9);
  CHECK(cmp.direct.all.fn == 2);

  CHECK_THROWS_AS(compare_modes(forecast, forecast, truth), DataError);
  auto dup = direct;
  dup.push_back(direct.back());
  CHECK_THROWS_AS(compare_modes(dup, forecast, truth), DataError);
}
