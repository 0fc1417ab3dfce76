// eend_gla/eval.cc

#include "eend_gla/eval.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "eend_gla/assignment.h"
#include "json.hpp"

namespace eend_gla {

namespace {

// Optimal one-to-one mapping between reference rows and hypothesis rows
// maximising overlapping active frames (restricted to `mask` when given).
// Returns, for every reference row, the mapped hypothesis row or -1.
std::vector<int> OptimalMapping(const ActivityMatrix &ref,
                                const ActivityMatrix &hyp,
                                const std::vector<char> *mask) {
  const Eigen::Index r = ref.rows();
  const Eigen::Index h = hyp.rows();
  std::vector<int> mapping(r, -1);
  if (r == 0 || h == 0) return mapping;
  Matrix overlap = Matrix::Zero(r, h);
  for (Eigen::Index t = 0; t < ref.cols(); ++t) {
    if (mask && !(*mask)[t]) continue;
    for (Eigen::Index i = 0; i < r; ++i) {
      if (!ref(i, t)) continue;
      for (Eigen::Index k = 0; k < h; ++k) {
        if (hyp(k, t)) overlap(i, k) += 1.0;
      }
    }
  }
  if (r <= h) {
    auto cols = MaxWeightAssignment(overlap);
    for (Eigen::Index i = 0; i < r; ++i) mapping[i] = cols[i];
  } else {
    Matrix transposed = overlap.transpose();
    auto rows = MaxWeightAssignment(transposed);
    for (Eigen::Index k = 0; k < h; ++k) mapping[rows[k]] = static_cast<int>(k);
  }
  return mapping;
}

struct FrameCounts {
  int ref = 0;
  int hyp = 0;
  int correct = 0;
};

FrameCounts CountFrame(const ActivityMatrix &ref, const ActivityMatrix &hyp,
                       const std::vector<int> &mapping, Eigen::Index t) {
  FrameCounts c;
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    if (!ref(i, t)) continue;
    ++c.ref;
    if (mapping[i] >= 0 && hyp(mapping[i], t)) ++c.correct;
  }
  for (Eigen::Index k = 0; k < hyp.rows(); ++k) c.hyp += hyp(k, t);
  return c;
}

}  // namespace

DerReport ComputeDer(const SegmentAnnotation &reference,
                     const SegmentAnnotation &hypothesis, double collar) {
  if (!(collar >= 0)) throw std::invalid_argument("der: collar must be >= 0");
  ValidateAnnotation(reference);
  ValidateAnnotation(hypothesis);

  const double end = std::max(AnnotationEnd(reference), AnnotationEnd(hypothesis));
  const int num_frames =
      static_cast<int>(std::ceil(end / kScoringResolution - 1e-9));
  const auto ref_labels = SpeakerLabels(reference);
  const auto hyp_labels = SpeakerLabels(hypothesis);
  const ActivityMatrix ref =
      SegmentsToActivity(reference, kScoringResolution, num_frames, ref_labels);
  const ActivityMatrix hyp =
      SegmentsToActivity(hypothesis, kScoringResolution, num_frames, hyp_labels);

  // Frames whose centre lies within the collar of a reference boundary are
  // not scored.
  std::vector<char> scored(num_frames, 1);
  if (collar > 0) {
    for (const auto &seg : reference.segments) {
      for (double b : {seg.onset, seg.offset}) {
        long first = static_cast<long>(
            std::ceil((b - collar) / kScoringResolution - 0.5));
        long last = static_cast<long>(
            std::floor((b + collar) / kScoringResolution - 0.5));
        for (long t = std::max(first, 0L); t <= last && t < num_frames; ++t) {
          double centre = (t + 0.5) * kScoringResolution;
          if (std::abs(centre - b) < collar) scored[t] = 0;
        }
      }
    }
  }

  const auto mapping = OptimalMapping(ref, hyp, &scored);
  long ref_frames = 0, miss = 0, fa = 0, conf = 0;
  for (int t = 0; t < num_frames; ++t) {
    if (!scored[t]) continue;
    FrameCounts c = CountFrame(ref, hyp, mapping, t);
    ref_frames += c.ref;
    miss += std::max(c.ref - c.hyp, 0);
    fa += std::max(c.hyp - c.ref, 0);
    conf += std::min(c.ref, c.hyp) - c.correct;
  }

  DerReport report;
  report.scored_time = ref_frames * kScoringResolution;
  report.miss_seconds = miss * kScoringResolution;
  report.false_alarm_seconds = fa * kScoringResolution;
  report.confusion_seconds = conf * kScoringResolution;
  if (ref_frames > 0) {
    const double denom = static_cast<double>(ref_frames);
    report.miss = miss / denom;
    report.false_alarm = fa / denom;
    report.confusion = conf / denom;
  }
  report.der = report.miss + report.false_alarm + report.confusion;
  for (std::size_t i = 0; i < mapping.size(); ++i) {
    if (mapping[i] >= 0) report.mapping.emplace_back(ref_labels[i], hyp_labels[mapping[i]]);
  }
  return report;
}

int CountConfusion::ColumnSum(int ref_bucket) const {
  int sum = 0;
  for (int p = 0; p < kBuckets; ++p) sum += cells[p][ref_bucket];
  return sum;
}

int CountConfusion::Total() const {
  int sum = 0;
  for (int r = 0; r < kBuckets; ++r) sum += ColumnSum(r);
  return sum;
}

std::string CountConfusion::ToCsv() const {
  std::ostringstream os;
  os << "pred\\ref";
  for (int r = 0; r < kBuckets; ++r) os << ',' << BucketLabel(r);
  os << '\n';
  for (int p = 0; p < kBuckets; ++p) {
    os << BucketLabel(p);
    for (int r = 0; r < kBuckets; ++r) os << ',' << cells[p][r];
    os << '\n';
  }
  return os.str();
}

CountConfusion ComputeCountConfusion(std::span<const std::pair<int, int>> records) {
  CountConfusion out;
  for (auto [ref, pred] : records) {
    if (ref < 0 || pred < 0) {
      throw std::invalid_argument("count_confusion: negative count");
    }
    ++out.cells[CountConfusion::Bucket(pred)][CountConfusion::Bucket(ref)];
  }
  return out;
}

std::vector<FrameErrors> FramewiseBreakdown(const ActivityMatrix &reference,
                                            const ActivityMatrix &hypothesis,
                                            double frame_seconds) {
  if (reference.cols() != hypothesis.cols()) {
    throw std::invalid_argument("framewise_breakdown: grid mismatch (" +
                                std::to_string(reference.cols()) + " vs " +
                                std::to_string(hypothesis.cols()) + " frames)");
  }
  const auto mapping = OptimalMapping(reference, hypothesis, nullptr);
  std::vector<FrameErrors> rows;
  rows.reserve(reference.cols());
  for (Eigen::Index t = 0; t < reference.cols(); ++t) {
    FrameCounts c = CountFrame(reference, hypothesis, mapping, t);
    FrameErrors e;
    e.frame = static_cast<int>(t);
    e.time = t * frame_seconds;
    e.miss = std::max(c.ref - c.hyp, 0);
    e.false_alarm = std::max(c.hyp - c.ref, 0);
    e.confusion = std::min(c.ref, c.hyp) - c.correct;
    rows.push_back(e);
  }
  return rows;
}

std::vector<FrameErrors> FramewiseBreakdown(const SegmentAnnotation &reference,
                                            const SegmentAnnotation &hypothesis,
                                            double frame_seconds,
                                            int num_frames) {
  return FramewiseBreakdown(
      SegmentsToActivity(reference, frame_seconds, num_frames,
                         SpeakerLabels(reference)),
      SegmentsToActivity(hypothesis, frame_seconds, num_frames,
                         SpeakerLabels(hypothesis)),
      frame_seconds);
}

std::string FrameErrorsToCsv(std::span<const FrameErrors> rows) {
  std::ostringstream os;
  os << "frame_index,time_s,miss,fa,confusion\n";
  char buf[64];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof(buf), "%.2f", r.time);
    os << r.frame << ',' << buf << ',' << r.miss << ',' << r.false_alarm << ','
       << r.confusion << '\n';
  }
  return os.str();
}

std::string DerReportToJson(const DerReport &report) {
  nlohmann::ordered_json j;
  j["der"] = report.der;
  j["miss"] = report.miss;
  j["false_alarm"] = report.false_alarm;
  j["confusion"] = report.confusion;
  j["scored_time"] = report.scored_time;
  j["miss_seconds"] = report.miss_seconds;
  j["false_alarm_seconds"] = report.false_alarm_seconds;
  j["confusion_seconds"] = report.confusion_seconds;
  auto m = nlohmann::ordered_json::object();
  for (const auto &[r, h] : report.mapping) m[r] = h;
  j["mapping"] = std::move(m);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- RTF

std::vector<double> RtfSeries::SteadyRtf() const {
  std::vector<double> out;
  for (const auto &p : points) {
    if (p.step > fill_step) out.push_back(p.rtf);
  }
  return out;
}

std::vector<double> RtfSeries::FillingRtf() const {
  std::vector<double> out;
  for (const auto &p : points) {
    if (p.step <= fill_step) out.push_back(p.rtf);
  }
  return out;
}

std::string RtfSeries::ToCsv() const {
  std::ostringstream os;
  os << "step,stream_time_s,wall_time_s,rtf\n";
  for (const auto &p : points) {
    os << p.step << ',' << p.stream_time << ',' << p.wall_time << ',' << p.rtf
       << '\n';
  }
  return os.str();
}

double TrendSlope(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) return 0.0;
  double mx = (n - 1) / 2.0;
  double my = 0.0;
  for (double v : y) my += v;
  my /= n;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (i - mx) * (y[i] - my);
    den += (i - mx) * (i - mx);
  }
  return num / den;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

RtfSeries RtfBenchmark(
    const std::function<std::unique_ptr<StreamingDiarizer>()> &factory,
    const FeatureMatrix &features, int chunk_len, int buffer_len,
    double frames_per_second, int repeats) {
  if (chunk_len < 1 || repeats < 1 || !(frames_per_second > 0)) {
    throw std::invalid_argument("rtf_benchmark: invalid configuration");
  }
  RtfSeries series;
  const Eigen::Index total = features.cols();
  const int steps = static_cast<int>((total + chunk_len - 1) / chunk_len);
  if (steps == 0) return series;

  std::vector<std::vector<double>> walls(steps);
  series.fill_step = steps;
  for (int r = 0; r < repeats; ++r) {
    auto diarizer = factory();
    for (int n = 0; n < steps; ++n) {
      const Eigen::Index begin = static_cast<Eigen::Index>(n) * chunk_len;
      const Eigen::Index width = std::min<Eigen::Index>(chunk_len, total - begin);
      FeatureMatrix chunk = features.middleCols(begin, width);
      auto start = std::chrono::steady_clock::now();
      diarizer->Push(chunk);
      auto stop = std::chrono::steady_clock::now();
      walls[n].push_back(std::chrono::duration<double>(stop - start).count());
      if (r == 0 && series.fill_step == steps &&
          diarizer->BufferFeatures().cols() >= buffer_len) {
        series.fill_step = n + 1;
      }
    }
  }
  const double chunk_seconds = chunk_len / frames_per_second;
  for (int n = 0; n < steps; ++n) {
    RtfPoint p;
    p.step = n + 1;
    p.stream_time = std::min<double>((n + 1.0) * chunk_len, total) / frames_per_second;
    p.wall_time = Median(walls[n]);
    p.rtf = p.wall_time / chunk_seconds;
    series.points.push_back(p);
  }
  return series;
}

}  // namespace eend_gla
