// eend_gla/losses.cc

#include "eend_gla/losses.h"

#include <cmath>
#include <stdexcept>

#include "eend_gla/assignment.h"

namespace eend_gla {

namespace {

double Bce(double target, double p) {
  // Targets are 0/1 here except in tests, so the general form is kept.
  double loss = 0.0;
  if (target > 0) loss -= target * std::log(p);
  if (target < 1) loss -= (1 - target) * std::log1p(-p);
  return loss;
}

void CheckProbabilities(const Matrix &m, const char *what) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double p = m.data()[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument(std::string(what) +
                                  ": probabilities must lie in (0,1)");
    }
  }
}

}  // namespace

double RowBce(const Matrix &y, Eigen::Index y_row, const Matrix &yhat,
              Eigen::Index yhat_row) {
  double sum = 0.0;
  for (Eigen::Index t = 0; t < y.cols(); ++t) {
    sum += Bce(y(y_row, t), yhat(yhat_row, t));
  }
  return sum;
}

PermutationResult DiarizationLoss(const ActivityMatrix &reference,
                                  const PosteriorMatrix &estimate) {
  if (reference.rows() != estimate.rows() ||
      reference.cols() != estimate.cols()) {
    throw std::invalid_argument("diarization_loss: shape mismatch");
  }
  const Eigen::Index num_speakers = reference.rows();
  const Eigen::Index num_frames = reference.cols();
  if (num_speakers < 1 || num_frames < 1) {
    throw std::invalid_argument("diarization_loss: need S >= 1 and T >= 1");
  }
  CheckProbabilities(estimate, "diarization_loss");

  const Matrix y = reference.cast<double>();
  // cost(i, k): estimated row i against reference row k.
  Matrix cost(num_speakers, num_speakers);
  for (Eigen::Index i = 0; i < num_speakers; ++i) {
    for (Eigen::Index k = 0; k < num_speakers; ++k) {
      cost(i, k) = RowBce(y, k, estimate, i);
    }
  }
  PermutationResult result;
  result.permutation = MinCostAssignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < num_speakers; ++i) {
    total += cost(i, result.permutation[i]);
  }
  result.loss = total / static_cast<double>(num_frames * num_speakers);
  return result;
}

double ExistenceLoss(int num_speakers, std::span<const double> existence) {
  if (num_speakers < 0 ||
      existence.size() != static_cast<std::size_t>(num_speakers) + 1) {
    throw std::invalid_argument("existence_loss: expected " +
                                std::to_string(num_speakers + 1) +
                                " probabilities, got " +
                                std::to_string(existence.size()));
  }
  double sum = 0.0;
  for (int s = 0; s <= num_speakers; ++s) {
    double p = existence[s];
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("existence_loss: probability outside (0,1)");
    }
    sum += Bce(s < num_speakers ? 1.0 : 0.0, p);
  }
  return sum / (num_speakers + 1);
}

double CosineSimilarity(const Vector &a, const Vector &b) {
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

double PairwiseLoss(std::span<const RelativeEmbedding> embeddings,
                    std::span<const int> speaker_of, int num_speakers,
                    double margin, PairRule rule) {
  if (embeddings.size() != speaker_of.size()) {
    throw std::invalid_argument("pairwise_loss: " +
                                std::to_string(speaker_of.size()) +
                                " assignments for " +
                                std::to_string(embeddings.size()) +
                                " embeddings");
  }
  if (embeddings.empty()) return 0.0;
  std::vector<int> counts(num_speakers, 0);
  for (int s : speaker_of) {
    if (s < 0 || s >= num_speakers) {
      throw std::invalid_argument("pairwise_loss: speaker index out of range");
    }
    ++counts[s];
  }
  const std::size_t n = embeddings.size();
  const double s2 = static_cast<double>(num_speakers) * num_speakers;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      bool attract = rule == PairRule::kSameSpeaker
                         ? speaker_of[i] == speaker_of[j]
                         : embeddings[i].block == embeddings[j].block;
      double sim = i == j ? 1.0
                          : CosineSimilarity(embeddings[i].vector,
                                             embeddings[j].vector);
      double term = attract ? 1.0 - sim : std::max(sim - margin, 0.0);
      total += term / (s2 * counts[speaker_of[i]] * counts[speaker_of[j]]);
    }
  }
  return total;
}

double LocalLoss(std::span<const BlockLoss> blocks, double pairwise,
                 double alpha, double gamma) {
  if (blocks.empty()) {
    throw std::invalid_argument("local_loss: need at least one block");
  }
  double sum = 0.0;
  for (const auto &b : blocks) sum += b.diarization + alpha * b.existence;
  return sum / static_cast<double>(blocks.size()) + gamma * pairwise;
}

double GlobalLoss(double diarization, double existence, double alpha) {
  return diarization + alpha * existence;
}

double BothLoss(double local, double global) { return local + global; }

Minibatch VctReshape(const Minibatch &batch, int target_len) {
  const int length = batch.length();
  if (target_len < 1 || length % target_len != 0) {
    throw std::invalid_argument("vct_reshape: length " +
                                std::to_string(length) +
                                " is not divisible by " +
                                std::to_string(target_len));
  }
  if (batch.labels.size() != batch.features.size()) {
    throw std::invalid_argument("vct_reshape: labels/features size mismatch");
  }
  for (int b = 0; b < batch.size(); ++b) {
    if (batch.features[b].rows() != length ||
        batch.labels[b].rows() != length ||
        batch.features[b].cols() != batch.features[0].cols()) {
      throw std::invalid_argument("vct_reshape: non-uniform minibatch");
    }
  }
  Minibatch out;
  const int pieces = length / target_len;
  out.features.reserve(static_cast<std::size_t>(batch.size()) * pieces);
  out.labels.reserve(out.features.capacity());
  for (int b = 0; b < batch.size(); ++b) {
    for (int k = 0; k < pieces; ++k) {
      out.features.push_back(
          batch.features[b].middleRows(k * target_len, target_len));
      out.labels.push_back(
          batch.labels[b].middleRows(k * target_len, target_len));
    }
  }
  return out;
}

std::optional<int> VctSchedule(std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> pick(0, 9);
  int v = pick(rng);
  if (v < 5) return std::nullopt;
  return kVctLengths[v - 5];
}

}  // namespace eend_gla
