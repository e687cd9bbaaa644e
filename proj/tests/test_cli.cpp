#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "fallpred/cli.hpp"

using namespace fallpred;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Fresh scratch directory per test case, used as the working directory.
struct Scratch {
  fs::path dir;
  fs::path previous = fs::current_path();

  explicit Scratch(const std::string& name) {
    dir = fs::temp_directory_path() / ("fallpred_cli_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::current_path(dir);
  }
  ~Scratch() {
    fs::current_path(previous);
    fs::remove_all(dir);
  }
};

std::string slurp(const fs::path& p) { return cli::read_file(p); }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void small_corpus(const std::string& dir, const std::string& seed = "3") {
  REQUIRE(run({"synth", "--out", dir, "--count", "8", "--duration", "180", "--seed", seed}).code == 0);
}

}  // namespace

TEST_CASE("synth writes a balanced, reproducible corpus", "[cli][synth]") {
  Scratch s("synth");
  small_corpus("a");
  small_corpus("b");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator("a")) {
    if (e.path().extension() != ".json" || e.path().filename() == "manifest.json") continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(fs::path("b") / e.path().filename()));
  }
  CHECK(files == 8);
  CHECK(slurp("a/annotations.csv") == slurp("b/annotations.csv"));
  std::istringstream ann(slurp("a/annotations.csv"));
  const auto anns = parse_annotations(ann);
  REQUIRE(anns.size() == 8);
  std::size_t with_fall = 0;
  for (const auto& a : anns) with_fall += a.has_fall();
  CHECK(with_fall == 4);

  const auto corpus = cli::load_corpus("a");
  CHECK(corpus.files.size() == 8);
  CHECK(corpus.annotations == anns);
  CHECK(fs::exists("a/manifest.json"));

  CHECK(run({"synth", "--out", "c", "--kinds", "walk,jump"}).code == cli::kConfigFailure);
}

TEST_CASE("train-predictor overfits one window and refuses mismatched resumes", "[cli][train]") {
  Scratch s("pred");
  small_corpus("data");
  const auto r = run({"train-predictor", "--data", "data", "--out", "m/p.json", "--hidden", "32", "--lr", "0.001",
                      "--overfit", "--quiet"});
  INFO(r.out << r.err);
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  const auto table = slurp("m/p.loss.csv");
  CHECK(table.rfind("epoch,step,loss\n", 0) == 0);
  CHECK(count_lines(table) >= 2);
  CHECK(fs::exists("m/p.loss.svg"));
  CHECK(fs::exists("m/p.manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp("m/p.manifest.json"));
  CHECK(manifest["command"] == "train-predictor");
  CHECK(manifest["config"]["hidden"] == "32");
  CHECK(manifest["results"]["overfit_mse"].get<double>() < 1e-3);

  const auto resumed = run({"train-predictor", "--data", "data", "--out", "m/q.json", "--hidden", "16", "--resume",
                            "m/p.json", "--epochs", "1", "--quiet"});
  CHECK(resumed.code == cli::kConfigFailure);
  CHECK(resumed.err.find("resume") != std::string::npos);
}

TEST_CASE("train-classifier principles and data checks", "[cli][train]") {
  Scratch s("cls");
  small_corpus("data");
  auto r = run({"train-classifier", "--data", "data", "--out", "c3.json", "--epochs", "2", "--quiet"});
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp("c3.json"))["training"]["principle"] == "p3");
  r = run({"train-classifier", "--data", "data", "--out", "c2.json", "--epochs", "2", "--principle", "p2", "--quiet"});
  REQUIRE(r.code == 0);
  const auto p2 = nlohmann::json::parse(slurp("c2.json"))["training"];
  CHECK(p2["principle"] == "p2");
  CHECK(run({"train-classifier", "--data", "data", "--out", "x.json", "--principle", "p9"}).code ==
        cli::kConfigFailure);

  REQUIRE(run({"synth", "--out", "idle", "--count", "3", "--kinds", "upright_idle", "--duration", "60"}).code == 0);
  r = run({"train-classifier", "--data", "idle", "--out", "x.json", "--epochs", "1", "--split", "none"});
  CHECK(r.code == cli::kParseFailure);
  CHECK(r.err.find("both classes") != std::string::npos);
}

TEST_CASE("eval and infer", "[cli][eval]") {
  Scratch s("eval");
  small_corpus("data");
  REQUIRE(run({"train-predictor", "--data", "data", "--out", "p.json", "--hidden", "8", "--epochs", "1", "--stride",
               "20", "--quiet"})
              .code == 0);
  REQUIRE(run({"train-classifier", "--data", "data", "--out", "c.json", "--epochs", "2", "--quiet"}).code == 0);

  auto r = run({"eval", "--data", "data", "--predictor", "p.json", "--classifier", "c.json", "--mode", "both",
                "--out-dir", "ev", "--part", "all"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("| Model") != std::string::npos);
  CHECK(r.out.find("Acc.") != std::string::npos);
  CHECK(r.out.find("Prec.") != std::string::npos);
  CHECK(r.out.find("Rec.") != std::string::npos);
  CHECK(r.out.find("Model_cls ") != std::string::npos);
  CHECK(r.out.find("Model_pred+cls ") != std::string::npos);
  CHECK(r.out.find("Unknown") != std::string::npos);
  const auto metrics = nlohmann::json::parse(slurp("ev/metrics.json"));
  CHECK(metrics.contains("Model_cls"));
  CHECK(metrics["Model_cls"].contains("unknown_rate"));
  CHECK(fs::exists("ev/verdicts_forecast.csv"));

  r = run({"eval", "--data", "data", "--classifier", "c.json", "--mode", "forecast"});
  CHECK(r.code == cli::kConfigFailure);

  // single-person file with a stretch of sparse frames
  auto video = synth_motion({MotionKind::kWalk, 120, 0.0, 0.0, 5, "one"});
  for (std::size_t f = 40; f < 44; ++f) {
    for (std::size_t k = 1; k <= 6; ++k) video.sequence.frames[f].keypoints[k] = Keypoint::missing();
  }
  cli::write_file("one.json", write_pose_file(to_pose_file(video.sequence)));
  r = run({"infer", "--input", "one.json", "--predictor", "p.json", "--classifier", "c.json", "--out", "v.csv"});
  REQUIRE(r.code == 0);
  const auto plain = slurp("v.csv");
  CHECK(count_lines(plain) == 1 + (120 - 74) - 4);
  CHECK(plain.find("unknown") == std::string::npos);
  std::istringstream rows(plain);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) CHECK(line.rfind("one,0,", 0) == 0);

  r = run({"infer", "--input", "one.json", "--predictor", "p.json", "--classifier", "c.json", "--emit-unknowns",
           "--out", "u.csv"});
  REQUIRE(r.code == 0);
  const auto with_unknowns = slurp("u.csv");
  CHECK(count_lines(with_unknowns) == 1 + (120 - 74));
  CHECK(with_unknowns.find(",unknown,,forecast") != std::string::npos);

  cli::write_file("bad.json", "{\"frames\": [{\"frame_index\": 1, \"people\": [[1, 2, 3]]}]}");
  r = run({"infer", "--input", "bad.json", "--predictor", "p.json", "--classifier", "c.json"});
  CHECK(r.code == cli::kParseFailure);
  CHECK(r.err.find("error") != std::string::npos);
  r = run({"infer", "--input", "missing.json", "--predictor", "p.json", "--classifier", "c.json"});
  CHECK(r.code == cli::kIoFailure);
}

TEST_CASE("gradcheck passes and its self-test fails", "[cli][gradcheck]") {
  Scratch s("grad");
  auto r = run({"gradcheck", "--skip-classifier"});
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  r = run({"gradcheck", "--skip-classifier", "--corrupt"});
  CHECK(r.code == cli::kCheckFailed);
  CHECK(r.out.find("FAIL") != std::string::npos);
  CHECK(fs::exists("fallpred-gradcheck.manifest.json"));
}

TEST_CASE("config files, environment and flag precedence", "[cli]") {
  Scratch s("config");
  small_corpus("data");
  cli::write_file("run.toml", "[train-classifier]\nepochs = 1\nseed = 5\nprinciple = \"p1\"\nquiet = true\n");
  ::setenv(cli::kDataDirEnv, "data", 1);
  auto r = run({"--config", "run.toml", "train-classifier", "--out", "c.json", "--seed", "6"});
  ::unsetenv(cli::kDataDirEnv);
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto manifest = nlohmann::json::parse(slurp("c.manifest.json"));
  CHECK(manifest["config"]["seed"] == "6");
  CHECK(manifest["config"]["principle"] == "p1");
  CHECK(manifest["config"]["epochs"] == "1");
  CHECK(manifest["config"]["data"] == "data");

  CHECK(run({"train-classifier", "--out", "c.json"}).code == cli::kConfigFailure);
  CHECK(run({"no-such-command"}).code == cli::kConfigFailure);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("sweep writes an MCS plot", "[cli][sweep]") {
  Scratch s("sweep");
  small_corpus("data");
  const auto r = run({"sweep", "--data", "data", "--out", "fig.svg", "--pairs", "10:10", "--np-list", "1,5",
                      "--hidden", "8", "--epochs", "1", "--stride", "20", "--quiet"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto svg = slurp("fig.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find(">n_p<") != std::string::npos);
  CHECK(svg.find(">MCS<") != std::string::npos);
  CHECK(count_lines(slurp("fig.csv")) == 3);
}

TEST_CASE("vectorize dumps one row per frame", "[cli]") {
  Scratch s("vec");
  const auto video = synth_motion({MotionKind::kWalk, 30, 0.0, 0.0, 2, "w"});
  cli::write_file("w.json", write_pose_file(to_pose_file(video.sequence)));
  REQUIRE(run({"vectorize", "--input", "w.json", "--out", "w.csv"}).code == 0);
  const auto table = slurp("w.csv");
  CHECK(count_lines(table) == 1 + 1 + 30);
  CHECK(table.find("frame_index,x0,y0") != std::string::npos);
}
