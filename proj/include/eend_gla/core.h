// eend_gla/core.h
//
// Domain types and the numerical primitives shared by every stage of the
// pipeline: posteriors from attractors, speaker counting from existence
// probabilities, matrix correlation, speaker padding and the conversion
// between frame activities and time segments.

#ifndef EEND_GLA_CORE_H_
#define EEND_GLA_CORE_H_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eend_gla {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// F x T, one column per frame.
using FeatureMatrix = Matrix;
// D x T, one column per frame.
using EmbeddingMatrix = Matrix;
// S x T, entries in (0,1).
using PosteriorMatrix = Matrix;
// S x T, entries in {0,1}.
using ActivityMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// One engine frame is 100 ms.
inline constexpr double kFrameSeconds = 0.1;

// Raised for malformed input data (files, segments, scenario contents).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for inconsistent configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttractorSet {
  std::vector<Vector> vectors;
  std::vector<double> existence;

  int size() const { return static_cast<int>(vectors.size()); }
};

struct LinearHead {
  Vector weight;
  double bias = 0.0;
};

struct Segment {
  std::string speaker;
  double onset = 0.0;
  double offset = 0.0;
};

struct SegmentAnnotation {
  std::string recording_id;
  std::vector<Segment> segments;
};

struct SpeakerCount {
  int count = 0;
  // True when every candidate had existence >= 0.5, i.e. the decoder would
  // have produced more attractors than were available.
  bool saturated = false;
};

// Numerically stable logistic function.
double Sigmoid(double x);

// sigmoid(a_s . e_t) for the first `take` attractors.
PosteriorMatrix Posteriors(const EmbeddingMatrix &embeddings,
                           const AttractorSet &attractors, int take);

// sigmoid(w . a_s + b) for every attractor, order preserved.
std::vector<double> ExistenceProbs(std::span<const Vector> attractors,
                                   const LinearHead &head);

// Smallest s >= 0 with z_{s+1} < 0.5.
SpeakerCount CountSpeakers(std::span<const double> existence);

// Sum over all cells of the product of deviations from the grand means.
double MatrixCorrelation(const Matrix &a, const Matrix &b);

// Appends all-zero rows until the matrix has `target` rows.
Matrix PadSpeakers(const Matrix &y, int target);

// 1 iff p >= threshold.
ActivityMatrix Binarize(const PosteriorMatrix &posteriors, double threshold);

// Maximal runs of active frames become [start * fs, (end + 1) * fs).
// `labels[s]` names row s; missing labels default to "spk<s>".
SegmentAnnotation ActivityToSegments(const ActivityMatrix &activity,
                                     double frame_seconds,
                                     const std::vector<std::string> &labels,
                                     const std::string &recording_id = "rec");

// Marks every frame whose centre falls inside a segment of the speaker named
// by `labels[s]`. Segments of speakers not in `labels` raise DataError.
ActivityMatrix SegmentsToActivity(const SegmentAnnotation &annotation,
                                  double frame_seconds, int num_frames,
                                  const std::vector<std::string> &labels);

// Speaker labels in order of first appearance in the segment list.
std::vector<std::string> SpeakerLabels(const SegmentAnnotation &annotation);

// End of the last segment, in seconds.
double AnnotationEnd(const SegmentAnnotation &annotation);

void ValidateAnnotation(const SegmentAnnotation &annotation);

}  // namespace eend_gla

#endif  // EEND_GLA_CORE_H_
