// eend_gla/stitch.h
//
// Inter-block speaker correspondence for local attractors.
//
// Relative speaker embeddings of all blocks are compared through a hinged
// cosine affinity in which pairs from the same block are forced to zero.
// The number of speakers is read off the affinity spectrum by the smallest
// ratio of consecutive eigenvalues (restricted to eigenvalues >= 1), then
// raised to at least the largest per-block count so that cannot-link
// constrained k-means always has a solution. Cluster ids map every
// (block, local speaker) onto a recording-level row.

#ifndef EEND_GLA_STITCH_H_
#define EEND_GLA_STITCH_H_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "eend_gla/backend.h"
#include "eend_gla/core.h"

namespace eend_gla {

struct AffinityMatrix {
  Matrix values;
  std::vector<int> block;        // origin of each row
  std::vector<int> local_index;  // origin of each row
};

struct ClusterAssignment {
  std::vector<int> cluster;  // 0-based id per embedding
  int k = 0;
};

// Posterior value written where a speaker has no local attractor.
inline constexpr double kInactiveFill = 1e-6;

// Eigenvalues >= 1 - kEigenvalueTolerance count as ">= 1".
inline constexpr double kEigenvalueTolerance = 1e-9;

AffinityMatrix BuildAffinity(std::span<const RelativeEmbedding> embeddings,
                             double margin);

// Full spectrum of a symmetric matrix, descending.
std::vector<double> EigenvaluesDesc(const Matrix &symmetric);

int CountByEigenratio(std::span<const double> eigenvalues_desc);

int ClampCount(int count, std::span<const int> block_counts);

// Every unordered pair of embeddings sharing a block.
std::vector<std::pair<int, int>> SameBlockCannotLinks(
    std::span<const RelativeEmbedding> embeddings);

// Number of seeded k-means++ starts; the lowest-inertia result wins.
inline constexpr int kClcKmeansRestarts = 8;

ClusterAssignment ClcKmeans(std::span<const RelativeEmbedding> embeddings,
                            int k,
                            std::span<const std::pair<int, int>> cannot_links,
                            std::uint64_t seed);

struct BlockPosteriors {
  FrameRange range;
  PosteriorMatrix posteriors;  // S_l x range.length()
};

// Recording-level k x num_frames posteriors. `embeddings[i]` names the
// (block, local row) that cluster `assignment.cluster[i]` receives.
PosteriorMatrix Stitch(std::span<const BlockPosteriors> blocks,
                       std::span<const RelativeEmbedding> embeddings,
                       const ClusterAssignment &assignment, int num_frames);

// Global results are used while the global count is below the number of
// speakers seen in training.
bool UseGlobalResult(int global_count, int max_trained_speakers);

const PosteriorMatrix &FuseGlobalLocal(const PosteriorMatrix &global,
                                       int global_count,
                                       const PosteriorMatrix &local,
                                       int max_trained_speakers);

}  // namespace eend_gla

#endif  // EEND_GLA_STITCH_H_
