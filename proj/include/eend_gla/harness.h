// eend_gla/harness.h
//
// Synthetic scenario generation, file formats (RTTM, GLAF features, JSON
// run configs) and the offline / online run drivers used by the CLI.

#ifndef EEND_GLA_HARNESS_H_
#define EEND_GLA_HARNESS_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eend_gla/backend.h"
#include "eend_gla/core.h"
#include "eend_gla/engine.h"
#include "eend_gla/stb.h"

namespace eend_gla {

// ------------------------------------------------------------ generation

struct GenConfig {
  int num_speakers = 4;
  double duration_s = 300.0;
  double overlap_ratio = 0.3;
  double mean_utterance_s = 3.0;
  // Starting point; gaps are rescaled until the overlap target is met.
  double mean_gap_s = 6.0;
  int dim = 256;
  double max_cosine = 0.25;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Fraction of speech frames (>= 1 speaker) in which >= 2 speakers talk.
double OverlapRatio(const ActivityMatrix &activity);

// Per-speaker alternating speech/gap durations drawn from exponentials with
// the gap scale tuned so the overlap ratio lands within +-0.05 of the
// target. Throws ConfigError if the target cannot be reached.
Scenario GenerateScenario(const GenConfig &config);

inline constexpr double kOverlapTolerance = 0.05;

// ------------------------------------------------------------------ rttm

std::string RttmLine(const std::string &recording_id, const Segment &segment);
std::string FormatRttm(const SegmentAnnotation &annotation);
void WriteRttm(const std::string &path, const SegmentAnnotation &annotation);

// One annotation per recording id, in order of first appearance.
std::vector<SegmentAnnotation> ParseRttm(const std::string &text);
std::vector<SegmentAnnotation> ReadRttm(const std::string &path);

// --------------------------------------------------------------- features

std::string EncodeFeatures(const FeatureMatrix &features);
FeatureMatrix DecodeFeatures(const std::string &bytes,
                             const std::string &what = "features");
void WriteFeatures(const std::string &path, const FeatureMatrix &features);
FeatureMatrix ReadFeatures(const std::string &path);

// ------------------------------------------------------------------- run

enum class RunMode { kOffline, kOnlineFw, kOnlineBw };
enum class BackendKind { kOracle, kToy };

struct RunConfig {
  RunMode mode = RunMode::kOffline;
  BackendKind backend = BackendKind::kOracle;
  int chunk_len = 10;     // nu
  int block_len = 50;     // lambda
  int buffer_len = 1000;  // M
  double margin = 0.5;    // delta
  int max_trained_speakers = 4;  // N
  double threshold = 0.5;
  bool balanced = true;
  std::optional<std::uint64_t> seed;
  double noise_sigma = 0.0;  // oracle only
  int cap = 4;               // oracle only; toy weights carry their own
  bool global_only = false;
  std::string weights_path;  // toy only
  bool include_timings = false;

  void Validate() const;
};

std::string RunModeName(RunMode mode);
RunMode ParseRunMode(const std::string &name);
std::string BackendName(BackendKind kind);
BackendKind ParseBackend(const std::string &name);

// Reads a JSON object whose keys mirror RunConfig field names.
RunConfig RunConfigFromJson(const std::string &text, RunConfig base = {});
std::string RunConfigToJson(const RunConfig &config);

struct RunResult {
  SegmentAnnotation annotation;
  int estimated_speakers = 0;  // rows of the final result
  int active_speakers = 0;     // rows with any detected speech
  int global_count = 0;        // offline: global attractor count
  bool used_global = true;     // offline: fusion decision
  int steps = 0;               // online: chunks processed
  double elapsed_s = 0.0;
  std::string report_json;
};

std::shared_ptr<const Backend> MakeBackend(const RunConfig &config,
                                           const Scenario *scenario);
std::shared_ptr<const DiarizationEngine> MakeEngine(const RunConfig &config,
                                                    const Scenario *scenario);
std::unique_ptr<StreamingDiarizer> MakeStreaming(
    const RunConfig &config, std::shared_ptr<const DiarizationEngine> engine);

// Oracle-backed run over a scenario.
RunResult RunScenario(const RunConfig &config, const Scenario &scenario,
                      const std::string &recording_id = "rec");

// Toy-backed run over a feature matrix.
RunResult RunFeatures(const RunConfig &config, const FeatureMatrix &features,
                      const std::string &recording_id = "rec");

}  // namespace eend_gla

#endif  // EEND_GLA_HARNESS_H_
