// eend_gla/stitch.cc

#include "eend_gla/stitch.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "eend_gla/losses.h"
#include "eend_gla/rng.h"

namespace eend_gla {

AffinityMatrix BuildAffinity(std::span<const RelativeEmbedding> embeddings,
                             double margin) {
  if (!(margin >= 0.0 && margin < 1.0)) {
    throw std::invalid_argument("build_affinity: margin must lie in [0,1)");
  }
  const int n = static_cast<int>(embeddings.size());
  AffinityMatrix out;
  out.values = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    out.block.push_back(embeddings[i].block);
    out.local_index.push_back(embeddings[i].local_index);
    out.values(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double r = 0.0;
      if (embeddings[i].block != embeddings[j].block) {
        double sim =
            CosineSimilarity(embeddings[i].vector, embeddings[j].vector);
        r = std::max(sim - margin, 0.0) / (1.0 - margin);
      }
      out.values(i, j) = r;
      out.values(j, i) = r;
    }
  }
  return out;
}

std::vector<double> EigenvaluesDesc(const Matrix &symmetric) {
  if (symmetric.rows() != symmetric.cols()) {
    throw std::invalid_argument("eigenvalues: matrix is not square");
  }
  if (!symmetric.allFinite()) {
    throw std::invalid_argument("eigenvalues: non-finite entries");
  }
  if (symmetric.size() == 0) return {};
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric,
                                               Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eigenvalues: solver did not converge");
  }
  const Vector &ev = solver.eigenvalues();  // ascending
  std::vector<double> desc(ev.data(), ev.data() + ev.size());
  std::reverse(desc.begin(), desc.end());
  return desc;
}

int CountByEigenratio(std::span<const double> eigenvalues_desc) {
  if (eigenvalues_desc.empty()) {
    throw std::invalid_argument("count_by_eigenratio: no eigenvalues");
  }
  int best = 1;
  double best_ratio = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(eigenvalues_desc.size());
  // 1-based s in [1, n-1]: ratio lambda_{s+1} / lambda_s.
  for (int s = 1; s <= n - 1; ++s) {
    double current = eigenvalues_desc[s - 1];
    if (current < 1.0 - kEigenvalueTolerance) continue;
    double next = std::max(eigenvalues_desc[s], 0.0);
    double ratio = next / current;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = s;
    }
  }
  return best;
}

int ClampCount(int count, std::span<const int> block_counts) {
  for (int c : block_counts) count = std::max(count, c);
  return count;
}

std::vector<std::pair<int, int>> SameBlockCannotLinks(
    std::span<const RelativeEmbedding> embeddings) {
  std::vector<std::pair<int, int>> links;
  const int n = static_cast<int>(embeddings.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (embeddings[i].block == embeddings[j].block) links.emplace_back(i, j);
    }
  }
  return links;
}

namespace {

Matrix NormalizedColumns(std::span<const RelativeEmbedding> embeddings) {
  const int n = static_cast<int>(embeddings.size());
  const Eigen::Index dim = n ? embeddings[0].vector.size() : 0;
  Matrix points(dim, n);
  for (int i = 0; i < n; ++i) {
    if (embeddings[i].vector.size() != dim) {
      throw std::invalid_argument("clc_kmeans: inconsistent embedding dims");
    }
    double norm = embeddings[i].vector.norm();
    points.col(i) = norm > 0 ? Vector(embeddings[i].vector / norm)
                             : Vector(embeddings[i].vector);
  }
  return points;
}

Matrix KMeansPlusPlus(const Matrix &points, int k, std::mt19937_64 &rng) {
  const Eigen::Index n = points.cols();
  Matrix centroids(points.rows(), k);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.col(0) = points.col(first(rng));
  Vector d2 = (points.colwise() - centroids.col(0)).colwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0) {
      pick = first(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.col(c) = points.col(pick);
    d2 = d2.cwiseMin(
        Vector((points.colwise() - centroids.col(c)).colwise().squaredNorm()));
  }
  return centroids;
}

}  // namespace

namespace {

// One constrained k-means run from a k-means++ start. Returns the labels and
// stores the within-cluster sum of squared distances in `inertia`.
std::vector<int> ClcKmeansRun(const Matrix &points, int k,
                              const std::vector<std::vector<int>> &partners,
                              std::uint64_t seed, double *inertia) {
  const int n = static_cast<int>(points.cols());
  std::mt19937_64 rng(seed);
  Matrix centroids = KMeansPlusPlus(points, k, rng);

  std::vector<int> labels(n, -1);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int iter = 0; iter < 100; ++iter) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> next(n, -1);
    std::deque<int> queue(order.begin(), order.end());
    // Each point can be displaced a bounded number of times per pass.
    std::vector<int> bumps(n, 0);
    while (!queue.empty()) {
      int p = queue.front();
      queue.pop_front();
      Vector dist = (centroids.colwise() - points.col(p)).colwise().squaredNorm();
      std::vector<int> by_dist(k);
      std::iota(by_dist.begin(), by_dist.end(), 0);
      std::stable_sort(by_dist.begin(), by_dist.end(),
                       [&](int a, int b) { return dist[a] < dist[b]; });
      std::vector<int> conflicts(k, 0);
      for (int q : partners[p]) {
        if (next[q] >= 0) ++conflicts[next[q]];
      }
      int choice = -1;
      for (int c : by_dist) {
        if (conflicts[c] == 0) {
          choice = c;
          break;
        }
      }
      if (choice < 0) {
        // Every centroid conflicts: take the least conflicting one and send
        // the displaced partners back to the queue.
        choice = by_dist[0];
        for (int c : by_dist) {
          if (conflicts[c] < conflicts[choice]) choice = c;
        }
        for (int q : partners[p]) {
          if (next[q] == choice && bumps[q] < k) {
            next[q] = -1;
            ++bumps[q];
            queue.push_back(q);
          }
        }
      }
      next[p] = choice;
    }

    Matrix sums = Matrix::Zero(points.rows(), k);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.col(next[i]) += points.col(i);
      ++counts[next[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centroids.col(c) = sums.col(c) / counts[c];
    }
    bool converged = next == labels;
    labels = std::move(next);
    if (converged) break;
  }
  *inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    *inertia += (points.col(i) - centroids.col(labels[i])).squaredNorm();
  }
  return labels;
}

}  // namespace

ClusterAssignment ClcKmeans(std::span<const RelativeEmbedding> embeddings,
                            int k,
                            std::span<const std::pair<int, int>> cannot_links,
                            std::uint64_t seed) {
  const int n = static_cast<int>(embeddings.size());
  if (k > n) {
    throw std::invalid_argument("clc_kmeans: k=" + std::to_string(k) +
                                " exceeds " + std::to_string(n) +
                                " embeddings");
  }
  ClusterAssignment result;
  result.k = k;
  if (n == 0) return result;
  if (k < 1) throw std::invalid_argument("clc_kmeans: k must be >= 1");

  std::vector<std::vector<int>> partners(n);
  for (auto [i, j] : cannot_links) {
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw std::invalid_argument("clc_kmeans: invalid cannot-link pair");
    }
    partners[i].push_back(j);
    partners[j].push_back(i);
  }

  const Matrix points = NormalizedColumns(embeddings);
  // A single k-means++ start occasionally merges two speakers and splits a
  // third; keep the restart with the smallest inertia.
  double best = INFINITY;
  for (int r = 0; r < kClcKmeansRestarts; ++r) {
    const std::uint64_t run_seed = r == 0 ? seed : HashSeed(seed, r);
    double inertia = 0.0;
    auto labels = ClcKmeansRun(points, k, partners, run_seed, &inertia);
    if (inertia < best - 1e-12) {
      best = inertia;
      result.cluster = std::move(labels);
    }
  }
  return result;
}

PosteriorMatrix Stitch(std::span<const BlockPosteriors> blocks,
                       std::span<const RelativeEmbedding> embeddings,
                       const ClusterAssignment &assignment, int num_frames) {
  if (assignment.cluster.size() != embeddings.size()) {
    throw std::invalid_argument("stitch: assignment does not cover every "
                                "relative embedding");
  }
  PosteriorMatrix out =
      PosteriorMatrix::Constant(assignment.k, num_frames, kInactiveFill);
  std::vector<std::vector<int>> owner(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto &blk = blocks[b];
    if (blk.range.begin < 0 || blk.range.end > num_frames ||
        blk.posteriors.cols() != blk.range.length()) {
      throw std::invalid_argument("stitch: block range/posterior mismatch");
    }
    owner[b].assign(blk.posteriors.rows(), -1);
  }
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const int b = embeddings[i].block;
    const int row = embeddings[i].local_index;
    const int c = assignment.cluster[i];
    if (b < 0 || b >= static_cast<int>(blocks.size()) || row < 0 ||
        row >= static_cast<int>(owner[b].size())) {
      throw std::invalid_argument("stitch: embedding block/local index out of range");
    }
    if (c < 0 || c >= assignment.k) {
      throw std::invalid_argument("stitch: cluster id out of range");
    }
    owner[b][row] = c;
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto &blk = blocks[b];
    std::vector<char> taken(assignment.k, 0);
    for (int row = 0; row < static_cast<int>(owner[b].size()); ++row) {
      const int c = owner[b][row];
      if (c < 0) {
        throw std::invalid_argument("stitch: coverage gap at block " +
                                    std::to_string(b) + ", local row " +
                                    std::to_string(row));
      }
      if (taken[c]) {
        throw std::invalid_argument("stitch: two local speakers of block " +
                                    std::to_string(b) + " share cluster " +
                                    std::to_string(c));
      }
      taken[c] = 1;
      out.row(c).segment(blk.range.begin, blk.range.length()) =
          blk.posteriors.row(row);
    }
  }
  return out;
}

bool UseGlobalResult(int global_count, int max_trained_speakers) {
  return global_count < max_trained_speakers;
}

const PosteriorMatrix &FuseGlobalLocal(const PosteriorMatrix &global,
                                       int global_count,
                                       const PosteriorMatrix &local,
                                       int max_trained_speakers) {
  return UseGlobalResult(global_count, max_trained_speakers) ? global : local;
}

}  // namespace eend_gla
