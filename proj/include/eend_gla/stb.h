// eend_gla/stb.h
//
// Speaker-tracing buffers for online diarization.
//
// Each push() runs the engine over the buffered features followed by the
// new chunk, aligns the speaker count with the stored results by appending
// zero rows, permutes the new estimate to best correlate with the stored
// results, and emits the columns of the new chunk. Two buffer policies:
//
//  FwStb  frame-wise: the buffer is a weighted sample of individual frames.
//  BwStb  block-wise: a FIFO of the newest `block_len` frames plus a
//         sampling buffer of whole blocks, so every block seen by the
//         engine is temporally contiguous.
//
// A state is owned by one stream; steps are strictly sequential.

#ifndef EEND_GLA_STB_H_
#define EEND_GLA_STB_H_

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "eend_gla/core.h"
#include "eend_gla/engine.h"

namespace eend_gla {

// result[i] = row of `estimate` that is moved to row i. Maximises
// MatrixCorrelation(reference, permuted estimate). Shapes must match.
std::vector<int> SolvePermutation(const Matrix &reference,
                                  const Matrix &estimate);

Matrix PermuteRows(const Matrix &m, std::span<const int> permutation);

// Per-frame sampling probabilities: KL divergence of the speaker-normalised
// posteriors from uniform, optionally multiplied by the speaker-balancing
// factor, normalised to sum to one. Frames with zero total posterior get
// weight zero; if every weight is zero the result is uniform.
Vector SamplingWeights(const PosteriorMatrix &posteriors, bool balanced);

// Weighted sampling of `count` distinct indices without replacement
// (exponential keys), returned in ascending order.
std::vector<int> SelectFrames(std::span<const double> weights, int count,
                              std::mt19937_64 &rng);

struct StbOptions {
  int chunk_len = 10;     // nu, frames
  int block_len = 50;     // lambda, frames (BwStb only)
  int buffer_len = 1000;  // M, frames
  bool balanced = true;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

struct ChunkOutput {
  PosteriorMatrix posteriors;    // S_n x chunk width
  std::vector<int> speaker_ids;  // persistent id per row, -1 before activity
};

// Persistent output labels: row i of the aligned results is the same
// speaker for the whole stream; an id is allocated the first time a row
// carries activity.
class LabelTracker {
 public:
  void Observe(const PosteriorMatrix &chunk, double threshold);
  const std::vector<int> &ids() const { return ids_; }
  int num_allocated() const { return next_id_; }

 private:
  std::vector<int> ids_;
  int next_id_ = 0;
};

class StreamingDiarizer {
 public:
  StreamingDiarizer(std::shared_ptr<const DiarizationEngine> engine,
                    StbOptions options);
  virtual ~StreamingDiarizer() = default;

  // Processes `chunk_len` frames (a shorter chunk is accepted once, as the
  // end of the stream).
  ChunkOutput Push(const FeatureMatrix &chunk);

  // Binarised annotation of everything emitted so far.
  SegmentAnnotation Flush(const std::string &recording_id = "rec") const;

  // All emitted posteriors, S_n x frames pushed (earlier chunks padded).
  PosteriorMatrix EmittedPosteriors() const;

  int num_speakers() const { return num_speakers_; }
  int steps() const { return steps_; }
  const LabelTracker &labels() const { return labels_; }
  const StbOptions &options() const { return options_; }
  const GlaResult &last_result() const { return last_result_; }

  // Features and results currently held, in the order fed to the engine.
  virtual FeatureMatrix BufferFeatures() const = 0;
  virtual Matrix BufferResults() const = 0;

 protected:
  // Returns the aligned posteriors of the new chunk.
  virtual PosteriorMatrix Step(const FeatureMatrix &chunk) = 0;

  // Runs the engine, pads counts, and aligns against `reference` (the stored
  // results for the first `reference.cols()` input frames).
  Matrix InferAligned(const FeatureMatrix &input, Matrix *reference);

  std::shared_ptr<const DiarizationEngine> engine_;
  StbOptions options_;
  std::mt19937_64 rng_;
  int num_speakers_ = 0;
  int steps_ = 0;
  bool finished_ = false;
  GlaResult last_result_;

 private:
  LabelTracker labels_;
  std::vector<PosteriorMatrix> emitted_;
};

class FwStb : public StreamingDiarizer {
 public:
  FwStb(std::shared_ptr<const DiarizationEngine> engine, StbOptions options);

  FeatureMatrix BufferFeatures() const override { return features_; }
  Matrix BufferResults() const override { return results_; }

 protected:
  PosteriorMatrix Step(const FeatureMatrix &chunk) override;

 private:
  FeatureMatrix features_;
  Matrix results_;
};

class BwStb : public StreamingDiarizer {
 public:
  struct Block {
    FeatureMatrix features;  // F x block_len
    Matrix results;          // S x block_len
  };

  BwStb(std::shared_ptr<const DiarizationEngine> engine, StbOptions options);

  FeatureMatrix BufferFeatures() const override;
  Matrix BufferResults() const override;

  const std::vector<Block> &sampling_blocks() const { return sampling_; }
  const FeatureMatrix &fifo_features() const { return fifo_features_; }
  int max_sampling_blocks() const {
    return options_.buffer_len / options_.block_len - 1;
  }

 protected:
  PosteriorMatrix Step(const FeatureMatrix &chunk) override;

 private:
  void ResampleBlocks(const Matrix &aligned);

  std::vector<Block> sampling_;
  FeatureMatrix fifo_features_;
  Matrix fifo_results_;
};

}  // namespace eend_gla

#endif  // EEND_GLA_STB_H_
