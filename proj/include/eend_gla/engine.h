// eend_gla/engine.h
//
// Diarization engines: map a feature matrix to recording-level posteriors.
// GlaEngine runs the full global/local attractor pipeline on top of a
// backend; with `global_only` it reproduces plain global-attractor
// inference, whose speaker count is bounded by the backend cap.

#ifndef EEND_GLA_ENGINE_H_
#define EEND_GLA_ENGINE_H_

#include <cstdint>
#include <memory>
#include <vector>

#include "eend_gla/backend.h"
#include "eend_gla/core.h"
#include "eend_gla/stitch.h"

namespace eend_gla {

struct GlaOptions {
  int block_len = 50;             // frames (5 s)
  int max_trained_speakers = 4;   // fusion threshold N
  double margin = 0.5;            // affinity hinge
  std::uint64_t seed = 0;         // CLC-Kmeans
  bool global_only = false;
};

struct GlaResult {
  PosteriorMatrix posteriors;     // rows = estimated speakers
  int global_count = 0;
  bool global_saturated = false;
  bool used_global = true;
  // Filled when the local path ran.
  std::vector<int> block_counts;
  int eigenratio_count = 0;
  int local_count = 0;
};

// Local-attractor path: per-block counts and posteriors, affinity,
// eigenratio count, clamp, CLC-Kmeans and stitching.
struct LocalPathResult {
  PosteriorMatrix posteriors;
  std::vector<int> block_counts;
  std::vector<BlockPosteriors> block_posteriors;
  std::vector<RelativeEmbedding> embeddings;
  std::vector<double> eigenvalues;
  int eigenratio_count = 0;
  int count = 0;
  ClusterAssignment assignment;
};

LocalPathResult RunLocalPath(const BackendOutput &output, double margin,
                             std::uint64_t seed);

GlaResult DiarizeBackendOutput(const BackendOutput &output,
                               const GlaOptions &options);

class DiarizationEngine {
 public:
  virtual ~DiarizationEngine() = default;
  virtual GlaResult Diarize(const FeatureMatrix &features) const = 0;
  virtual int block_len() const = 0;
};

class GlaEngine : public DiarizationEngine {
 public:
  GlaEngine(std::shared_ptr<const Backend> backend, GlaOptions options);

  GlaResult Diarize(const FeatureMatrix &features) const override;
  int block_len() const override { return options_.block_len; }

  const GlaOptions &options() const { return options_; }

 private:
  std::shared_ptr<const Backend> backend_;
  GlaOptions options_;
};

}  // namespace eend_gla

#endif  // EEND_GLA_ENGINE_H_
