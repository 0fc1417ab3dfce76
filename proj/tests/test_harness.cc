#include <filesystem>

#include "doctest.h"
#include "eend_gla/eval.h"
#include "eend_gla/harness.h"

using namespace eend_gla;

namespace {

std::string TempPath(const std::string &name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("generator basics") {
  GenConfig g;
  g.num_speakers = 1;
  g.duration_s = 60;
  g.seed = 3;
  Scenario one = GenerateScenario(g);
  CHECK(one.num_speakers() == 1);
  CHECK(one.duration_frames == 600);
  CHECK(OverlapRatio(ScenarioActivity(one)) == 0.0);

  g.num_speakers = 4;
  g.duration_s = 300;
  g.overlap_ratio = 0.3;
  Scenario four = GenerateScenario(g);
  double ov = OverlapRatio(ScenarioActivity(four));
  CHECK(ov >= 0.25);
  CHECK(ov <= 0.35);
  CHECK(ScenarioToJson(four) == ScenarioToJson(GenerateScenario(g)));
  for (int i = 0; i < 4; ++i) {
    CHECK(four.speakers[i].prototype.norm() == doctest::Approx(1.0));
    CHECK_FALSE(four.speakers[i].segments.empty());
    for (int j = i + 1; j < 4; ++j) {
      CHECK(four.speakers[i].prototype.dot(four.speakers[j].prototype) <= 0.25);
    }
  }
  g.seed = 4;
  CHECK(ScenarioToJson(four) != ScenarioToJson(GenerateScenario(g)));
}

TEST_CASE("generator overlap targets") {
  for (double target : {0.0, 0.1, 0.5}) {
    for (int spk : {2, 5}) {
      GenConfig g;
      g.num_speakers = spk;
      g.overlap_ratio = target;
      g.seed = 11;
      double ov = OverlapRatio(ScenarioActivity(GenerateScenario(g)));
      CHECK(std::abs(ov - target) <= kOverlapTolerance);
    }
  }
}

TEST_CASE("generator rejects bad configs") {
  GenConfig g;
  g.overlap_ratio = 1.0;
  CHECK_THROWS_AS(GenerateScenario(g), ConfigError);
  g = GenConfig{};
  g.num_speakers = 0;
  CHECK_THROWS_AS(GenerateScenario(g), ConfigError);
  g = GenConfig{};
  g.dim = 2;
  g.num_speakers = 5;
  g.max_cosine = -0.9;
  CHECK_THROWS_AS(GenerateScenario(g), ConfigError);
  g = GenConfig{};
  g.num_speakers = 2;
  g.duration_s = 5;
  g.mean_utterance_s = 0.1;
  g.overlap_ratio = 0.95;
  CHECK_THROWS_AS(GenerateScenario(g), ConfigError);
}

TEST_CASE("rttm format and round trip") {
  Segment seg{"A", 0.1, 0.3};
  CHECK(RttmLine("rec", seg) == "SPEAKER rec 1 0.10 0.20 <NA> <NA> A <NA> <NA>\n");
  CHECK(FormatRttm(SegmentAnnotation{"rec", {}}).empty());

  ActivityMatrix y(2, 40);
  for (int t = 0; t < 40; ++t) {
    y(0, t) = (t / 7) % 2;
    y(1, t) = (t / 3) % 3 == 0;
  }
  SegmentAnnotation ann = ActivityToSegments(y, 0.1, {"A", "B"}, "r1");
  std::string path = TempPath("eend_gla_test.rttm");
  WriteRttm(path, ann);
  auto back = ReadRttm(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].recording_id == "r1");
  CHECK(SegmentsToActivity(back[0], 0.1, 40, {"A", "B"}) == y);
  REQUIRE(back[0].segments.size() == ann.segments.size());
  for (std::size_t i = 0; i < ann.segments.size(); ++i) {
    CHECK(std::abs(back[0].segments[i].onset - ann.segments[i].onset) < 1e-9);
    CHECK(std::abs(back[0].segments[i].offset - ann.segments[i].offset) < 1e-9);
  }
}

TEST_CASE("rttm parsing is whitespace tolerant and reports line numbers") {
  std::string text =
      "SPEAKER a 1 0.00 1.50 <NA> <NA> X <NA> <NA>\n"
      "\n"
      "  SPEAKER\tb 1  2.00   0.50 <NA> <NA> Y <NA> <NA>  \n"
      "SPEAKER a 1 3.00 1.00 <NA> <NA> Z <NA> <NA>\n";
  auto parsed = ParseRttm(text);
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].segments.size() == 2);
  CHECK(parsed[1].segments[0].offset == doctest::Approx(2.5));
  CHECK_THROWS_WITH_AS(ParseRttm("SPEAKER a 1 0.0 1.0 <NA> <NA> X\nSPEAKER a 1 zz 1 <NA> <NA> X\n"),
                       doctest::Contains("line 2"), DataError);
  CHECK_THROWS_AS(ParseRttm("SPEAKER a 1 0.0\n"), DataError);
  CHECK_THROWS_AS(ParseRttm("SPEAKER a 1 0.0 -1 <NA> <NA> X\n"), DataError);
}

TEST_CASE("feature files") {
  FeatureMatrix f(3, 4);
  f << 0.5, -1.25, 3, 1e-3, 2, 4, 8, 16, -0.1f, 0.2f, 0.3f, 0.4f;
  f = f.cast<float>().cast<double>();
  std::string path = TempPath("eend_gla_test.glaf");
  WriteFeatures(path, f);
  CHECK(ReadFeatures(path) == f);
  std::string bytes = EncodeFeatures(f);
  CHECK(bytes.size() == 16 + 4 * 12);
  CHECK(bytes.substr(0, 4) == "GLAF");
  CHECK_THROWS_WITH_AS(DecodeFeatures(bytes.substr(0, bytes.size() - 2)),
                       doctest::Contains("expected 64 bytes, got 62"), DataError);
  std::string bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(DecodeFeatures(bad), DataError);
  CHECK_THROWS_AS(EncodeFeatures(FeatureMatrix(0, 3)), DataError);
  std::string zero_dim = bytes.substr(0, 8) + std::string("\0\0\0\0", 4) + bytes.substr(12, 4);
  CHECK_THROWS_AS(DecodeFeatures(zero_dim), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("run config json") {
  RunConfig base;
  base.mode = RunMode::kOnlineBw;
  RunConfig c = RunConfigFromJson(
      R"({"mode": "online-fw", "chunk_len": 5, "seed": 9, "balanced": false})", base);
  CHECK(c.mode == RunMode::kOnlineFw);
  CHECK(c.chunk_len == 5);
  CHECK(c.seed == 9u);
  CHECK_FALSE(c.balanced);
  CHECK(c.block_len == 50);
  RunConfig again = RunConfigFromJson(RunConfigToJson(c));
  CHECK(RunConfigToJson(again) == RunConfigToJson(c));
  CHECK_THROWS_AS(RunConfigFromJson(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(RunConfigFromJson(R"({"chunk_len": "x"})"), ConfigError);
  CHECK_THROWS_AS(RunConfigFromJson("[1"), ConfigError);
  CHECK_THROWS_AS(ParseRunMode("batch"), ConfigError);
}

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK_NOTHROW(c.Validate());
  c.mode = RunMode::kOnlineBw;
  CHECK_THROWS_AS(c.Validate(), ConfigError);  // no seed
  c.seed = 1;
  CHECK_NOTHROW(c.Validate());
  c.buffer_len = 1010;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c.buffer_len = 1000;
  c.chunk_len = 7;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  RunConfig toy;
  toy.backend = BackendKind::kToy;
  CHECK_THROWS_AS(toy.Validate(), ConfigError);
}

TEST_CASE("offline runs follow the fusion rule") {
  GenConfig g;
  g.num_speakers = 2;
  g.duration_s = 120;
  g.seed = 21;
  Scenario two = GenerateScenario(g);
  RunConfig c;
  RunResult r = RunScenario(c, two);
  CHECK(r.global_count == 2);
  CHECK(r.used_global);
  CHECK(r.estimated_speakers == 2);

  g.num_speakers = 6;
  g.duration_s = 300;
  Scenario six = GenerateScenario(g);
  RunResult r6 = RunScenario(c, six);
  CHECK_FALSE(r6.used_global);
  CHECK(r6.estimated_speakers == 6);
  CHECK(ComputeDer(ScenarioAnnotation(six), r6.annotation, 0.0).der < 0.02);

  // Same as composing the modules by hand.
  GlaOptions o;
  GlaEngine engine(std::make_shared<OracleBackend>(six, CalibratedOracleOptions(0.0, 4)), o);
  GlaResult manual = engine.Diarize(FrameIndexFeatures(0, six.duration_frames));
  std::vector<std::string> labels;
  for (int s = 0; s < manual.posteriors.rows(); ++s) labels.push_back("spk" + std::to_string(s));
  CHECK(FormatRttm(ActivityToSegments(Binarize(manual.posteriors, 0.5), 0.1, labels, "rec")) ==
        FormatRttm(r6.annotation));
}

TEST_CASE("online run covers the whole recording") {
  GenConfig g;
  g.num_speakers = 3;
  g.duration_s = 95.3;
  g.seed = 8;
  Scenario s = GenerateScenario(g);
  RunConfig c;
  c.mode = RunMode::kOnlineBw;
  c.seed = 2;
  RunResult r = RunScenario(c, s);
  CHECK(r.steps == 96);
  CHECK(AnnotationEnd(r.annotation) <= s.duration_frames * 0.1 + 1e-9);
  CHECK(ComputeDer(ScenarioAnnotation(s), r.annotation, 0.0).der < 0.05);
  RunResult again = RunScenario(c, s);
  CHECK(again.report_json == r.report_json);
  CHECK(FormatRttm(again.annotation) == FormatRttm(r.annotation));
  CHECK(r.report_json.find("elapsed") == std::string::npos);
}

TEST_CASE("toy backend feature run") {
  ToyWeights w = IdentityToyWeights(2, 2, 3);
  std::string path = TempPath("eend_gla_harness_toy.glaw");
  WriteToyWeights(path, w);
  FeatureMatrix f(2, 100);
  for (int t = 0; t < 100; ++t) f.col(t) = (t / 20) % 2 ? Vector::Unit(2, 0) : Vector::Unit(2, 1);
  RunConfig c;
  c.backend = BackendKind::kToy;
  c.weights_path = path;
  RunResult r = RunFeatures(c, f);
  CHECK(r.estimated_speakers >= 1);
  c.mode = RunMode::kOnlineFw;
  c.seed = 1;
  CHECK(RunFeatures(c, f).steps == 10);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(RunScenario(c, Scenario{}), ConfigError);
}
