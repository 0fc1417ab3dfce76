// Python bindings for the eend_gla library.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <tuple>

#include "eend_gla/core.h"
#include "eend_gla/eval.h"
#include "eend_gla/harness.h"
#include "eend_gla/losses.h"
#include "eend_gla/stb.h"
#include "eend_gla/stitch.h"

namespace py = pybind11;
using namespace eend_gla;

namespace {

using SegmentTuple = std::tuple<std::string, double, double>;

SegmentAnnotation ToAnnotation(const std::vector<SegmentTuple> &segments,
                               const std::string &recording_id) {
  SegmentAnnotation a{recording_id, {}};
  for (const auto &[speaker, onset, offset] : segments) {
    a.segments.push_back({speaker, onset, offset});
  }
  return a;
}

std::vector<SegmentTuple> FromAnnotation(const SegmentAnnotation &a) {
  std::vector<SegmentTuple> out;
  for (const auto &s : a.segments) out.emplace_back(s.speaker, s.onset, s.offset);
  return out;
}

ActivityMatrix ToActivity(const Matrix &m) {
  return (m.array() > 0.5).cast<std::uint8_t>();
}

py::dict DerDict(const DerReport &r) {
  py::dict d;
  d["der"] = r.der;
  d["miss"] = r.miss;
  d["false_alarm"] = r.false_alarm;
  d["confusion"] = r.confusion;
  d["scored_time"] = r.scored_time;
  d["mapping"] = r.mapping;
  return d;
}

}  // namespace

PYBIND11_MODULE(_eend_gla, m) {
  m.doc() = "Global/local attractor diarization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("sigmoid", &Sigmoid, py::arg("x"));

  m.def(
      "posteriors",
      [](const Matrix &embeddings, const Matrix &attractors) {
        AttractorSet set;
        for (Eigen::Index s = 0; s < attractors.rows(); ++s) {
          set.vectors.push_back(attractors.row(s).transpose());
          set.existence.push_back(1.0);
        }
        return Posteriors(embeddings, set, set.size());
      },
      py::arg("embeddings"), py::arg("attractors"),
      "embeddings: D x T, attractors: S x D; returns S x T posteriors.");

  m.def(
      "count_speakers",
      [](const std::vector<double> &existence) {
        SpeakerCount c = CountSpeakers(existence);
        return py::make_tuple(c.count, c.saturated);
      },
      py::arg("existence"));

  m.def("matrix_correlation", &MatrixCorrelation, py::arg("a"), py::arg("b"));
  m.def("pad_speakers", &PadSpeakers, py::arg("y"), py::arg("target"));

  m.def(
      "solve_permutation",
      [](const Matrix &reference, const Matrix &estimate) {
        return SolvePermutation(reference, estimate);
      },
      py::arg("reference"), py::arg("estimate"));

  m.def(
      "diarization_loss",
      [](const Matrix &reference, const Matrix &estimate) {
        PermutationResult r = DiarizationLoss(ToActivity(reference), estimate);
        return py::make_tuple(r.loss, r.permutation);
      },
      py::arg("reference"), py::arg("estimate"),
      "Permutation-free BCE; returns (loss, permutation).");

  m.def("existence_loss",
        [](int num_speakers, const std::vector<double> &existence) {
          return ExistenceLoss(num_speakers, existence);
        },
        py::arg("num_speakers"), py::arg("existence"));

  m.def("sampling_weights", &SamplingWeights, py::arg("posteriors"),
        py::arg("balanced") = true);

  m.def("eigenvalues_desc", &EigenvaluesDesc, py::arg("matrix"));
  m.def(
      "count_by_eigenratio",
      [](const std::vector<double> &eigenvalues) {
        return CountByEigenratio(eigenvalues);
      },
      py::arg("eigenvalues"));

  m.def(
      "der",
      [](const std::vector<SegmentTuple> &reference,
         const std::vector<SegmentTuple> &hypothesis, double collar) {
        return DerDict(ComputeDer(ToAnnotation(reference, "rec"),
                                  ToAnnotation(hypothesis, "rec"), collar));
      },
      py::arg("reference"), py::arg("hypothesis"), py::arg("collar") = 0.0,
      "Segments are (speaker, onset, offset) tuples in seconds.");

  m.def(
      "count_confusion",
      [](const std::vector<std::pair<int, int>> &records) {
        return ComputeCountConfusion(records).cells;
      },
      py::arg("records"),
      "Records are (reference, predicted) counts; rows are predicted buckets.");

  m.def(
      "parse_rttm",
      [](const std::string &text) {
        py::dict out;
        for (const auto &a : ParseRttm(text)) {
          out[py::str(a.recording_id)] = FromAnnotation(a);
        }
        return out;
      },
      py::arg("text"));

  m.def(
      "format_rttm",
      [](const std::vector<SegmentTuple> &segments, const std::string &recording_id) {
        return FormatRttm(ToAnnotation(segments, recording_id));
      },
      py::arg("segments"), py::arg("recording_id") = "rec");

  m.def(
      "generate_scenario",
      [](int num_speakers, double duration_s, double overlap_ratio, int dim,
         std::uint64_t seed) {
        GenConfig g;
        g.num_speakers = num_speakers;
        g.duration_s = duration_s;
        g.overlap_ratio = overlap_ratio;
        g.dim = dim;
        g.seed = seed;
        return ScenarioToJson(GenerateScenario(g));
      },
      py::arg("num_speakers") = 4, py::arg("duration_s") = 300.0,
      py::arg("overlap_ratio") = 0.3, py::arg("dim") = 256, py::arg("seed") = 0,
      "Returns the scenario as a JSON string.");

  m.def(
      "scenario_reference",
      [](const std::string &scenario_json) {
        return FromAnnotation(ScenarioAnnotation(ScenarioFromJson(scenario_json)));
      },
      py::arg("scenario_json"));

  m.def(
      "run_scenario",
      [](const std::string &scenario_json, const std::string &config_json) {
        RunConfig config = RunConfigFromJson(config_json);
        RunResult r = RunScenario(config, ScenarioFromJson(scenario_json));
        return py::make_tuple(FromAnnotation(r.annotation), r.report_json);
      },
      py::arg("scenario_json"), py::arg("config_json") = "{}",
      "Returns (segments, report_json).");
}
