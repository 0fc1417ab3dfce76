// eend_gla/stb.cc

#include "eend_gla/stb.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "eend_gla/assignment.h"

namespace eend_gla {

std::vector<int> SolvePermutation(const Matrix &reference,
                                  const Matrix &estimate) {
  if (reference.rows() != estimate.rows() ||
      reference.cols() != estimate.cols()) {
    throw std::invalid_argument("solve_permutation: shape mismatch (" +
                                std::to_string(reference.rows()) + "x" +
                                std::to_string(reference.cols()) + " vs " +
                                std::to_string(estimate.rows()) + "x" +
                                std::to_string(estimate.cols()) + ")");
  }
  const Eigen::Index n = reference.rows();
  if (n == 0) return {};
  if (reference.cols() == 0) {
    std::vector<int> identity(n);
    std::iota(identity.begin(), identity.end(), 0);
    return identity;
  }
  // Grand means do not change under row permutation, so the correlation
  // splits into a sum of per-row-pair terms.
  const Matrix ref_dev = reference.array() - reference.mean();
  const Matrix est_dev = estimate.array() - estimate.mean();
  const Matrix gain = ref_dev * est_dev.transpose();  // (i, k)
  return MaxWeightAssignment(gain);
}

Matrix PermuteRows(const Matrix &m, std::span<const int> permutation) {
  if (static_cast<Eigen::Index>(permutation.size()) != m.rows()) {
    throw std::invalid_argument("permute_rows: size mismatch");
  }
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(permutation[i]);
  return out;
}

Vector SamplingWeights(const PosteriorMatrix &posteriors, bool balanced) {
  const Eigen::Index num_speakers = posteriors.rows();
  const Eigen::Index num_frames = posteriors.cols();
  if (num_frames == 0) return Vector();
  Vector weights = Vector::Zero(num_frames);
  Vector row_sums = posteriors.rowwise().sum();
  for (Eigen::Index t = 0; t < num_frames; ++t) {
    const double col_sum = posteriors.col(t).sum();
    if (!(col_sum > 0)) continue;
    double kl = 0.0;
    for (Eigen::Index s = 0; s < num_speakers; ++s) {
      const double y = posteriors(s, t) / col_sum;
      if (y <= 0) continue;
      const double scaled = y * static_cast<double>(num_speakers);
      if (std::abs(scaled - 1.0) < 1e-12) continue;
      kl += y * std::log(scaled);
    }
    kl = std::max(kl, 0.0);
    if (balanced) {
      double r = 0.0;
      for (Eigen::Index s = 0; s < num_speakers; ++s) {
        if (row_sums[s] > 0) r += posteriors(s, t) / row_sums[s];
      }
      kl *= r;
    }
    weights[t] = kl;
  }
  const double total = weights.sum();
  if (!(total > 0)) {
    return Vector::Constant(num_frames, 1.0 / static_cast<double>(num_frames));
  }
  return weights / total;
}

std::vector<int> SelectFrames(std::span<const double> weights, int count,
                              std::mt19937_64 &rng) {
  const int n = static_cast<int>(weights.size());
  if (count < 0 || count > n) {
    throw std::invalid_argument("select_frames: cannot select " +
                                std::to_string(count) + " of " +
                                std::to_string(n) + " frames");
  }
  struct Key {
    double key;
    double tie;
    int index;
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Key> keys(n);
  for (int i = 0; i < n; ++i) {
    if (!(weights[i] >= 0) || !std::isfinite(weights[i])) {
      throw std::invalid_argument("select_frames: invalid weight");
    }
    // -log(u) / w is Exp(w); the smallest keys form a weighted sample
    // without replacement.
    double u = unit(rng);
    double tie = unit(rng);
    double e = -std::log1p(-u);
    double key = weights[i] > 0 ? e / weights[i]
                                : std::numeric_limits<double>::infinity();
    keys[i] = {key, tie, i};
  }
  std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                    [](const Key &a, const Key &b) {
                      if (a.key != b.key) return a.key < b.key;
                      return a.tie < b.tie;
                    });
  std::vector<int> chosen;
  chosen.reserve(count);
  for (int i = 0; i < count; ++i) chosen.push_back(keys[i].index);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

void LabelTracker::Observe(const PosteriorMatrix &chunk, double threshold) {
  if (static_cast<Eigen::Index>(ids_.size()) < chunk.rows()) {
    ids_.resize(chunk.rows(), -1);
  }
  for (Eigen::Index s = 0; s < chunk.rows(); ++s) {
    if (ids_[s] >= 0 || chunk.cols() == 0) continue;
    if (chunk.row(s).maxCoeff() >= threshold) ids_[s] = next_id_++;
  }
}

// ------------------------------------------------------- StreamingDiarizer

StreamingDiarizer::StreamingDiarizer(
    std::shared_ptr<const DiarizationEngine> engine, StbOptions options)
    : engine_(std::move(engine)), options_(options), rng_(options.seed) {
  if (!engine_) throw std::invalid_argument("stb: null engine");
  if (options_.chunk_len < 1) throw ConfigError("chunk length must be >= 1");
  if (options_.buffer_len < 1) throw ConfigError("buffer length must be >= 1");
  if (!(options_.threshold > 0 && options_.threshold < 1)) {
    throw ConfigError("threshold must lie in (0,1)");
  }
}

ChunkOutput StreamingDiarizer::Push(const FeatureMatrix &chunk) {
  if (finished_) {
    throw std::logic_error("stb: stream already ended with a partial chunk");
  }
  if (chunk.cols() < 1 || chunk.cols() > options_.chunk_len) {
    throw std::invalid_argument("stb: chunk must have 1.." +
                                std::to_string(options_.chunk_len) +
                                " frames, got " + std::to_string(chunk.cols()));
  }
  if (chunk.cols() < options_.chunk_len) finished_ = true;
  ++steps_;
  ChunkOutput out;
  out.posteriors = Step(chunk);
  labels_.Observe(out.posteriors, options_.threshold);
  out.speaker_ids.assign(labels_.ids().begin(),
                         labels_.ids().begin() + out.posteriors.rows());
  emitted_.push_back(out.posteriors);
  return out;
}

Matrix StreamingDiarizer::InferAligned(const FeatureMatrix &input,
                                       Matrix *reference) {
  last_result_ = engine_->Diarize(input);
  Matrix estimate = std::move(last_result_.posteriors);
  last_result_.posteriors = Matrix();
  const int count = std::max(num_speakers_, static_cast<int>(estimate.rows()));
  estimate = PadSpeakers(estimate, count);
  *reference = PadSpeakers(*reference, count);
  const Eigen::Index ref_cols = reference->cols();
  if (count > 0 && ref_cols > 0) {
    auto perm = SolvePermutation(*reference, estimate.leftCols(ref_cols));
    estimate = PermuteRows(estimate, perm);
  }
  num_speakers_ = count;
  return estimate;
}

PosteriorMatrix StreamingDiarizer::EmittedPosteriors() const {
  Eigen::Index total = 0;
  for (const auto &c : emitted_) total += c.cols();
  PosteriorMatrix out = PosteriorMatrix::Zero(num_speakers_, total);
  Eigen::Index col = 0;
  for (const auto &c : emitted_) {
    out.block(0, col, c.rows(), c.cols()) = c;
    col += c.cols();
  }
  return out;
}

SegmentAnnotation StreamingDiarizer::Flush(const std::string &recording_id) const {
  const PosteriorMatrix all = EmittedPosteriors();
  std::vector<std::string> names;
  for (Eigen::Index s = 0; s < all.rows(); ++s) {
    int id = s < static_cast<Eigen::Index>(labels_.ids().size())
                 ? labels_.ids()[s]
                 : -1;
    names.push_back(id >= 0 ? "spk" + std::to_string(id)
                            : "unassigned" + std::to_string(s));
  }
  return ActivityToSegments(Binarize(all, options_.threshold), kFrameSeconds,
                            names, recording_id);
}

// -------------------------------------------------------------------- FW

FwStb::FwStb(std::shared_ptr<const DiarizationEngine> engine,
             StbOptions options)
    : StreamingDiarizer(std::move(engine), options) {}

PosteriorMatrix FwStb::Step(const FeatureMatrix &chunk) {
  if (features_.size() > 0 && chunk.rows() != features_.rows()) {
    throw std::invalid_argument("fw_stb: feature dimension changed");
  }
  FeatureMatrix input(chunk.rows(), features_.cols() + chunk.cols());
  input << features_, chunk;
  Matrix reference = results_;
  Matrix aligned = InferAligned(input, &reference);
  PosteriorMatrix out = aligned.rightCols(chunk.cols());

  if (input.cols() <= options_.buffer_len) {
    features_ = std::move(input);
    results_ = std::move(aligned);
  } else {
    Vector weights = SamplingWeights(aligned, options_.balanced);
    auto keep = SelectFrames(std::span<const double>(weights.data(), weights.size()),
                             options_.buffer_len, rng_);
    FeatureMatrix kept_x(input.rows(), keep.size());
    Matrix kept_y(aligned.rows(), keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      kept_x.col(i) = input.col(keep[i]);
      kept_y.col(i) = aligned.col(keep[i]);
    }
    features_ = std::move(kept_x);
    results_ = std::move(kept_y);
  }
  return out;
}

// -------------------------------------------------------------------- BW

BwStb::BwStb(std::shared_ptr<const DiarizationEngine> engine,
             StbOptions options)
    : StreamingDiarizer(std::move(engine), options) {
  const int m = options_.buffer_len;
  const int lambda = options_.block_len;
  const int nu = options_.chunk_len;
  if (lambda < 1 || m % lambda != 0 || m <= lambda || lambda % nu != 0) {
    throw ConfigError(
        "bw_stb: buffer length must be a multiple of and longer than the "
        "block length, and the block length a multiple of the chunk length "
        "(M=" + std::to_string(m) + ", lambda=" + std::to_string(lambda) +
        ", nu=" + std::to_string(nu) + ")");
  }
  if (engine_->block_len() != lambda) {
    throw ConfigError("bw_stb: engine block length " +
                      std::to_string(engine_->block_len()) +
                      " differs from buffer block length " +
                      std::to_string(lambda));
  }
}

FeatureMatrix BwStb::BufferFeatures() const {
  const Eigen::Index rows = fifo_features_.rows();
  const Eigen::Index cols =
      static_cast<Eigen::Index>(sampling_.size()) * options_.block_len +
      fifo_features_.cols();
  FeatureMatrix out(rows, cols);
  Eigen::Index col = 0;
  for (const auto &b : sampling_) {
    out.middleCols(col, b.features.cols()) = b.features;
    col += b.features.cols();
  }
  out.middleCols(col, fifo_features_.cols()) = fifo_features_;
  return out;
}

Matrix BwStb::BufferResults() const {
  const Eigen::Index cols =
      static_cast<Eigen::Index>(sampling_.size()) * options_.block_len +
      fifo_results_.cols();
  Matrix out = Matrix::Zero(num_speakers_, cols);
  Eigen::Index col = 0;
  for (const auto &b : sampling_) {
    out.block(0, col, b.results.rows(), b.results.cols()) = b.results;
    col += b.results.cols();
  }
  out.block(0, col, fifo_results_.rows(), fifo_results_.cols()) = fifo_results_;
  return out;
}

PosteriorMatrix BwStb::Step(const FeatureMatrix &chunk) {
  const int lambda = options_.block_len;
  const Eigen::Index width = chunk.cols();
  if (fifo_features_.size() > 0 && chunk.rows() != fifo_features_.rows()) {
    throw std::invalid_argument("bw_stb: feature dimension changed");
  }

  // FIFO: shift left by the chunk width and append the chunk.
  FeatureMatrix grown(chunk.rows(), fifo_features_.cols() + width);
  grown << fifo_features_, chunk;
  const Eigen::Index fifo_width = std::min<Eigen::Index>(grown.cols(), lambda);
  fifo_features_ = grown.rightCols(fifo_width);

  const Eigen::Index samp_width =
      static_cast<Eigen::Index>(sampling_.size()) * lambda;
  FeatureMatrix input(chunk.rows(), samp_width + fifo_width);
  Matrix reference;
  if (!sampling_.empty()) {
    reference = Matrix::Zero(num_speakers_, samp_width);
    for (std::size_t k = 0; k < sampling_.size(); ++k) {
      input.middleCols(k * lambda, lambda) = sampling_[k].features;
      reference.block(0, k * lambda, sampling_[k].results.rows(), lambda) =
          sampling_[k].results;
    }
  } else {
    // Warm-up: align on the FIFO frames that were already processed.
    const Eigen::Index overlap = fifo_width - width;
    reference = Matrix::Zero(num_speakers_, overlap);
    reference.topRows(fifo_results_.rows()) = fifo_results_.rightCols(overlap);
  }
  input.rightCols(fifo_width) = fifo_features_;

  Matrix aligned = InferAligned(input, &reference);
  for (std::size_t k = 0; k < sampling_.size(); ++k) {
    sampling_[k].results = aligned.middleCols(k * lambda, lambda);
  }
  fifo_results_ = aligned.rightCols(fifo_width);
  PosteriorMatrix out = aligned.rightCols(width);

  const int steps_per_block = lambda / options_.chunk_len;
  if (!finished_ && steps_ % steps_per_block == 0 && fifo_width == lambda) {
    ResampleBlocks(aligned);
  }
  return out;
}

void BwStb::ResampleBlocks(const Matrix &aligned) {
  const int lambda = options_.block_len;
  std::vector<Block> candidates = sampling_;
  candidates.push_back({fifo_features_, fifo_results_});
  const int capacity = max_sampling_blocks();
  if (static_cast<int>(candidates.size()) <= capacity) {
    sampling_ = std::move(candidates);
    return;
  }
  const Vector frame_weights = SamplingWeights(aligned, options_.balanced);
  std::vector<double> block_weights(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    block_weights[k] = frame_weights.segment(k * lambda, lambda).sum();
  }
  auto keep = SelectFrames(block_weights, capacity, rng_);
  std::vector<Block> next;
  next.reserve(keep.size());
  for (int k : keep) next.push_back(std::move(candidates[k]));
  sampling_ = std::move(next);
}

}  // namespace eend_gla
