// eend_gla/core.cc

#include "eend_gla/core.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eend_gla {

double Sigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

PosteriorMatrix Posteriors(const EmbeddingMatrix &embeddings,
                           const AttractorSet &attractors, int take) {
  if (take < 0 || take > attractors.size()) {
    throw std::invalid_argument("posteriors: take=" + std::to_string(take) +
                                " exceeds attractor count " +
                                std::to_string(attractors.size()));
  }
  PosteriorMatrix out(take, embeddings.cols());
  for (int s = 0; s < take; ++s) {
    const Vector &a = attractors.vectors[s];
    if (a.size() != embeddings.rows()) {
      throw std::invalid_argument("posteriors: attractor dim " +
                                  std::to_string(a.size()) +
                                  " != embedding dim " +
                                  std::to_string(embeddings.rows()));
    }
    Eigen::RowVectorXd logits = a.transpose() * embeddings;
    for (Eigen::Index t = 0; t < logits.size(); ++t) {
      out(s, t) = Sigmoid(logits[t]);
    }
  }
  return out;
}

std::vector<double> ExistenceProbs(std::span<const Vector> attractors,
                                   const LinearHead &head) {
  std::vector<double> z;
  z.reserve(attractors.size());
  for (const auto &a : attractors) {
    if (a.size() != head.weight.size()) {
      throw std::invalid_argument("existence_probs: attractor dim " +
                                  std::to_string(a.size()) + " != head dim " +
                                  std::to_string(head.weight.size()));
    }
    z.push_back(Sigmoid(head.weight.dot(a) + head.bias));
  }
  return z;
}

SpeakerCount CountSpeakers(std::span<const double> existence) {
  for (size_t s = 0; s < existence.size(); ++s) {
    if (existence[s] < 0.5) {
      return {static_cast<int>(s), false};
    }
  }
  return {static_cast<int>(existence.size()), true};
}

double MatrixCorrelation(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("matrix_correlation: shape mismatch");
  }
  if (a.size() == 0) return 0.0;
  double ma = a.mean();
  double mb = b.mean();
  return ((a.array() - ma) * (b.array() - mb)).sum();
}

Matrix PadSpeakers(const Matrix &y, int target) {
  if (target < y.rows()) {
    throw std::invalid_argument("pad_speakers: target " +
                                std::to_string(target) + " < rows " +
                                std::to_string(y.rows()));
  }
  Matrix out = Matrix::Zero(target, y.cols());
  out.topRows(y.rows()) = y;
  return out;
}

ActivityMatrix Binarize(const PosteriorMatrix &posteriors, double threshold) {
  return (posteriors.array() >= threshold).cast<std::uint8_t>();
}

SegmentAnnotation ActivityToSegments(const ActivityMatrix &activity,
                                     double frame_seconds,
                                     const std::vector<std::string> &labels,
                                     const std::string &recording_id) {
  if (!(frame_seconds > 0)) {
    throw std::invalid_argument("activity_to_segments: frame_seconds <= 0");
  }
  SegmentAnnotation out;
  out.recording_id = recording_id;
  const Eigen::Index num_frames = activity.cols();
  for (Eigen::Index s = 0; s < activity.rows(); ++s) {
    std::string label = s < static_cast<Eigen::Index>(labels.size())
                            ? labels[s]
                            : "spk" + std::to_string(s);
    Eigen::Index t = 0;
    while (t < num_frames) {
      if (!activity(s, t)) {
        ++t;
        continue;
      }
      Eigen::Index start = t;
      while (t < num_frames && activity(s, t)) ++t;
      out.segments.push_back(
          {label, start * frame_seconds, t * frame_seconds});
    }
  }
  std::stable_sort(out.segments.begin(), out.segments.end(),
                   [](const Segment &x, const Segment &y) {
                     return x.onset < y.onset;
                   });
  return out;
}

ActivityMatrix SegmentsToActivity(const SegmentAnnotation &annotation,
                                  double frame_seconds, int num_frames,
                                  const std::vector<std::string> &labels) {
  if (!(frame_seconds > 0)) {
    throw std::invalid_argument("segments_to_activity: frame_seconds <= 0");
  }
  ActivityMatrix out =
      ActivityMatrix::Zero(static_cast<Eigen::Index>(labels.size()),
                           num_frames);
  for (const auto &seg : annotation.segments) {
    auto it = std::find(labels.begin(), labels.end(), seg.speaker);
    if (it == labels.end()) {
      throw DataError("segments_to_activity: unknown speaker '" +
                      seg.speaker + "'");
    }
    Eigen::Index row = it - labels.begin();
    // Frame t is active iff onset <= (t + 0.5) * fs < offset.
    auto first = static_cast<long>(std::ceil(seg.onset / frame_seconds - 0.5));
    auto last = static_cast<long>(std::ceil(seg.offset / frame_seconds - 0.5));
    first = std::max<long>(first, 0);
    last = std::min<long>(last, num_frames);
    for (long t = first; t < last; ++t) out(row, t) = 1;
  }
  return out;
}

std::vector<std::string> SpeakerLabels(const SegmentAnnotation &annotation) {
  std::vector<std::string> labels;
  for (const auto &seg : annotation.segments) {
    if (std::find(labels.begin(), labels.end(), seg.speaker) == labels.end()) {
      labels.push_back(seg.speaker);
    }
  }
  return labels;
}

double AnnotationEnd(const SegmentAnnotation &annotation) {
  double end = 0.0;
  for (const auto &seg : annotation.segments) end = std::max(end, seg.offset);
  return end;
}

void ValidateAnnotation(const SegmentAnnotation &annotation) {
  for (size_t i = 0; i < annotation.segments.size(); ++i) {
    const auto &seg = annotation.segments[i];
    if (!std::isfinite(seg.onset) || !std::isfinite(seg.offset) ||
        seg.onset < 0 || !(seg.offset > seg.onset)) {
      std::ostringstream os;
      os << "segment " << i << " (" << seg.speaker << ", " << seg.onset
         << ", " << seg.offset << ") violates offset > onset >= 0";
      throw DataError(os.str());
    }
  }
}

}  // namespace eend_gla
