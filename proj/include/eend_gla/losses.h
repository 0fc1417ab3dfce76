// eend_gla/losses.h
//
// Forward values of the training objectives (no gradients) and minibatch
// reshaping for variable chunk-size training.

#ifndef EEND_GLA_LOSSES_H_
#define EEND_GLA_LOSSES_H_

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "eend_gla/backend.h"
#include "eend_gla/core.h"

namespace eend_gla {

struct PermutationResult {
  double loss = 0.0;
  // permutation[i] = reference row matched to estimated row i.
  std::vector<int> permutation;
};

// Sum over frames of binary cross entropy between reference row `y` and
// estimate row `yhat`, both length T.
double RowBce(const Matrix &y, Eigen::Index y_row, const Matrix &yhat,
              Eigen::Index yhat_row);

// Permutation-free BCE averaged over T * S, minimised by linear assignment
// on the S x S table of per-row-pair BCE sums.
PermutationResult DiarizationLoss(const ActivityMatrix &reference,
                                  const PosteriorMatrix &estimate);

// Mean BCE against targets (1, ..., 1, 0) of length S + 1.
double ExistenceLoss(int num_speakers, std::span<const double> existence);

enum class PairRule {
  // Attract same-speaker pairs, hinge different-speaker pairs.
  kSameSpeaker,
  // Literal reading where the attraction term applies to pairs from the
  // same block.
  kSameBlock,
};

// Contrastive loss over all ordered pairs of relative embeddings.
// `speaker_of[i]` in [0, num_speakers) is the speaker of embedding i.
double PairwiseLoss(std::span<const RelativeEmbedding> embeddings,
                    std::span<const int> speaker_of, int num_speakers,
                    double margin, PairRule rule = PairRule::kSameSpeaker);

struct BlockLoss {
  double diarization = 0.0;
  double existence = 0.0;
};

double LocalLoss(std::span<const BlockLoss> blocks, double pairwise,
                 double alpha = 1.0, double gamma = 1.0);
double GlobalLoss(double diarization, double existence, double alpha = 1.0);
double BothLoss(double local, double global);

double CosineSimilarity(const Vector &a, const Vector &b);

// B sequences of T frames x F features with parallel S x T labels.
struct Minibatch {
  std::vector<Matrix> features;  // each T x F
  std::vector<Matrix> labels;    // each T x S

  int size() const { return static_cast<int>(features.size()); }
  int length() const {
    return features.empty() ? 0 : static_cast<int>(features[0].rows());
  }
};

// Cuts every sequence into contiguous pieces of `target_len` frames,
// giving B * T / target_len sequences. T must be divisible by target_len.
Minibatch VctReshape(const Minibatch &batch, int target_len);

inline constexpr int kVctLengths[] = {50, 100, 200, 500, 1000};

// With probability 1/2 keeps the original length (nullopt); otherwise one of
// kVctLengths uniformly.
std::optional<int> VctSchedule(std::mt19937_64 &rng);

}  // namespace eend_gla

#endif  // EEND_GLA_LOSSES_H_
