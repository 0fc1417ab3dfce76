// eend_gla/backend.h
//
// Inference backends. A backend stands in for the trained encoder and
// attractor decoder: given features it returns frame embeddings, global
// attractors, and per-block local attractors with their relative speaker
// embeddings. Two implementations are provided:
//
//  - OracleBackend: driven by a synthetic Scenario. Feature matrices are
//    1 x T rows of global frame indices, so buffers that resample frames
//    re-derive consistent outputs.
//  - ToyBackend: a deterministic forward-only network (affine map + tanh,
//    k-means attractors, one cross-attention layer for relative embeddings)
//    loaded from a GLAW weight file.

#ifndef EEND_GLA_BACKEND_H_
#define EEND_GLA_BACKEND_H_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eend_gla/core.h"

namespace eend_gla {

struct FrameRange {
  int begin = 0;
  int end = 0;  // exclusive

  int length() const { return end - begin; }
  bool operator==(const FrameRange &) const = default;
};

struct RelativeEmbedding {
  Vector vector;
  int block = 0;
  int local_index = 0;
};

struct BlockResult {
  FrameRange range;
  AttractorSet local;
  std::vector<RelativeEmbedding> relative;
};

struct BackendOutput {
  EmbeddingMatrix embeddings;
  AttractorSet global;
  std::vector<BlockResult> blocks;
};

struct ScenarioSpeaker {
  std::string label;
  Vector prototype;
  std::vector<FrameRange> segments;
};

struct Scenario {
  int duration_frames = 0;
  std::uint64_t seed = 0;
  std::vector<ScenarioSpeaker> speakers;

  int num_speakers() const { return static_cast<int>(speakers.size()); }
  int dim() const {
    return speakers.empty() ? 0 : static_cast<int>(speakers[0].prototype.size());
  }
};

// Consecutive ranges of `block_len` frames covering [0, num_frames); the
// last one may be shorter.
std::vector<FrameRange> SplitBlocks(int num_frames, int block_len);

class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendOutput Infer(const FeatureMatrix &features,
                              int block_len) const = 0;

  // Upper bound on attractors per block (and on global attractors).
  virtual int cap() const = 0;
};

// ---------------------------------------------------------------- oracle

struct OracleOptions {
  double noise_sigma = 0.0;
  int cap = 4;
  // Attractors are scaled by `logit_scale` and an extra embedding component
  // shifts every logit by -logit_scale * logit_offset, so that
  //   a_s . e_t = logit_scale * (p_s . n_t - logit_offset).
  // With the defaults (1, 0) attractors and embeddings are the raw
  // prototypes; the pipeline uses a calibrated setting (see
  // CalibratedOracleOptions) so that silence and other speakers fall below
  // the 0.5 decision threshold.
  double logit_scale = 1.0;
  double logit_offset = 0.0;
};

OracleOptions CalibratedOracleOptions(double noise_sigma, int cap);

// Existence probability of present speakers (1 - eps). The attractor list
// ends with the last present speaker.
inline constexpr double kOracleExistenceEps = 1e-3;

// Frame activity of every scenario speaker, S x duration.
ActivityMatrix ScenarioActivity(const Scenario &scenario);

void ValidateScenario(const Scenario &scenario);

// Oracle inference over the listed global frame indices. Embedding columns
// have dimension D + 1 (prototype space plus the logit-offset component).
BackendOutput OracleInfer(const Scenario &scenario,
                          std::span<const int> frame_ids, int block_len,
                          const OracleOptions &options);

class OracleBackend : public Backend {
 public:
  OracleBackend(Scenario scenario, OracleOptions options);

  BackendOutput Infer(const FeatureMatrix &features,
                      int block_len) const override;
  int cap() const override { return options_.cap; }

  const Scenario &scenario() const { return scenario_; }
  const OracleOptions &options() const { return options_; }

 private:
  Scenario scenario_;
  OracleOptions options_;
  ActivityMatrix activity_;
};

// 1 x T feature matrix holding global frame indices [begin, end).
FeatureMatrix FrameIndexFeatures(int begin, int end);

// ------------------------------------------------------------------- toy

// Tensor order in the GLAW file (all row-major float32):
//   encoder      D x F
//   encoder_bias D
//   head_weight  D
//   head_bias    1
//   output_proj  D x D
struct ToyWeights {
  int feature_dim = 0;
  int embed_dim = 0;
  int cap = 4;
  Matrix encoder;
  Vector encoder_bias;
  LinearHead head;
  Matrix output_proj;

  void Validate() const;
};

// Deterministic weights for tests and demos: the encoder copies the first
// min(F, D) features, the head accepts every centroid, output_proj = 0.
ToyWeights IdentityToyWeights(int feature_dim, int embed_dim, int cap);

ToyWeights ReadToyWeights(const std::string &path);
void WriteToyWeights(const std::string &path, const ToyWeights &weights);

// softmax(E^T a / sqrt(D)) over the columns of E.
Vector AttentionWeights(const Vector &query, const EmbeddingMatrix &keys);

// b_s = a_s + W_o (E softmax(E^T a_s / sqrt(D))).
std::vector<Vector> RelativeEmbed(const AttractorSet &attractors,
                                  const EmbeddingMatrix &embeddings,
                                  const Matrix &output_proj);

BackendOutput ToyInfer(const FeatureMatrix &features,
                       const ToyWeights &weights, int block_len);

class ToyBackend : public Backend {
 public:
  explicit ToyBackend(ToyWeights weights);

  BackendOutput Infer(const FeatureMatrix &features,
                      int block_len) const override;
  int cap() const override { return weights_.cap; }

 private:
  ToyWeights weights_;
};

// ------------------------------------------------------------- scenario io

Scenario ReadScenario(const std::string &path);
void WriteScenario(const std::string &path, const Scenario &scenario);
std::string ScenarioToJson(const Scenario &scenario);
Scenario ScenarioFromJson(const std::string &text);

// Ground truth of a scenario as a segment annotation (frame grid).
SegmentAnnotation ScenarioAnnotation(const Scenario &scenario,
                                     const std::string &recording_id = "rec");

}  // namespace eend_gla

#endif  // EEND_GLA_BACKEND_H_
