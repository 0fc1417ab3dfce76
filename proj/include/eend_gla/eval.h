// eend_gla/eval.h
//
// Scoring: frame-based DER with a reference-boundary collar, speaker-count
// confusion matrices, per-frame error breakdown and real-time factor
// measurement of streaming runs.

#ifndef EEND_GLA_EVAL_H_
#define EEND_GLA_EVAL_H_

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eend_gla/core.h"
#include "eend_gla/stb.h"

namespace eend_gla {

// Scoring grid: 10 ms.
inline constexpr double kScoringResolution = 0.01;

struct DerReport {
  double der = 0.0;
  double miss = 0.0;
  double false_alarm = 0.0;
  double confusion = 0.0;
  double scored_time = 0.0;  // seconds of scored reference speech
  double miss_seconds = 0.0;
  double false_alarm_seconds = 0.0;
  double confusion_seconds = 0.0;
  // Reference label -> hypothesis label for mapped speakers.
  std::vector<std::pair<std::string, std::string>> mapping;
};

DerReport ComputeDer(const SegmentAnnotation &reference,
                     const SegmentAnnotation &hypothesis, double collar);

// Rows/cols are buckets 0, 1, ..., 6, 7+ of the predicted (row) and
// reference (column) speaker counts.
struct CountConfusion {
  static constexpr int kBuckets = 8;
  std::array<std::array<int, kBuckets>, kBuckets> cells{};

  static int Bucket(int count) { return count >= 7 ? 7 : count; }
  static std::string BucketLabel(int bucket) {
    return bucket >= 7 ? "7+" : std::to_string(bucket);
  }
  int ColumnSum(int ref_bucket) const;
  int Total() const;
  std::string ToCsv() const;
};

// Records are (reference count, predicted count).
CountConfusion ComputeCountConfusion(std::span<const std::pair<int, int>> records);

struct FrameErrors {
  int frame = 0;
  double time = 0.0;
  int miss = 0;
  int false_alarm = 0;
  int confusion = 0;
};

// Per-frame speaker-count errors under the recording-level optimal mapping.
std::vector<FrameErrors> FramewiseBreakdown(const ActivityMatrix &reference,
                                            const ActivityMatrix &hypothesis,
                                            double frame_seconds);

std::vector<FrameErrors> FramewiseBreakdown(const SegmentAnnotation &reference,
                                            const SegmentAnnotation &hypothesis,
                                            double frame_seconds,
                                            int num_frames);

std::string FrameErrorsToCsv(std::span<const FrameErrors> rows);

std::string DerReportToJson(const DerReport &report);

struct RtfPoint {
  int step = 0;
  double stream_time = 0.0;  // seconds of audio consumed
  double wall_time = 0.0;    // seconds spent in push()
  double rtf = 0.0;
};

struct RtfSeries {
  std::vector<RtfPoint> points;
  int fill_step = 0;  // first step whose buffer input is at capacity

  // Steps after the buffer is full.
  std::vector<double> SteadyRtf() const;
  // Steps before the buffer is full.
  std::vector<double> FillingRtf() const;
  std::string ToCsv() const;
};

// Least-squares slope of y against its index.
double TrendSlope(std::span<const double> y);
double Median(std::vector<double> v);

// Streams `features` in chunks of `chunk_len` through fresh diarizers from
// `factory`; each step's wall time is the median over `repeats` identical
// runs. `frames_per_second` converts frames to seconds.
RtfSeries RtfBenchmark(
    const std::function<std::unique_ptr<StreamingDiarizer>()> &factory,
    const FeatureMatrix &features, int chunk_len, int buffer_len,
    double frames_per_second, int repeats = 5);

}  // namespace eend_gla

#endif  // EEND_GLA_EVAL_H_
