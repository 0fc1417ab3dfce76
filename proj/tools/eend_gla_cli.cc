// eend-gla command line: generate scenarios, run offline/online diarization,
// score RTTM files, benchmark streaming RTF and tabulate speaker counts.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "eend_gla/binary_io.h"
#include "eend_gla/eval.h"
#include "eend_gla/harness.h"
#include "json.hpp"

using namespace eend_gla;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void Emit(const std::string &path, const std::string &text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    WriteFileBytes(path, text);
  }
}

struct GenerateArgs {
  GenConfig config;
  std::string out;
  std::string rttm;
  std::string recording = "rec";
};

struct RunArgs {
  std::string scenario;
  std::string features;
  std::string config_file;
  std::string out;
  std::string report;
  std::string recording = "rec";
  // Flag values; only applied when given on the command line.
  std::string mode, backend, weights;
  int chunk = 0, block = 0, buffer = 0, max_speakers = 0, cap = 0;
  double margin = 0, threshold = 0, sigma = 0;
  std::uint64_t seed = 0;
  bool balanced = true, global_only = false, timings = false;
  int repeats = 5;
};

struct ScoreArgs {
  std::string ref, hyp, out, breakdown;
  double collar = 0.0;
};

struct CountArgs {
  std::string records, ref, hyp, out;
};

void AddRunOptions(CLI::App *cmd, RunArgs &a, std::map<std::string, CLI::Option *> &opts) {
  cmd->add_option("--scenario", a.scenario, "Scenario JSON (oracle backend)");
  cmd->add_option("--features", a.features, "GLAF feature file (toy backend)");
  cmd->add_option("--config", a.config_file, "JSON run config; flags override it");
  opts["mode"] = cmd->add_option("--mode", a.mode, "offline | online-fw | online-bw");
  opts["backend"] = cmd->add_option("--backend", a.backend, "oracle | toy");
  opts["weights"] = cmd->add_option("--weights", a.weights, "GLAW weight file");
  opts["chunk"] = cmd->add_option("--chunk", a.chunk, "Chunk length nu, frames");
  opts["block"] = cmd->add_option("--block", a.block, "Block length lambda, frames");
  opts["buffer"] = cmd->add_option("--buffer", a.buffer, "Buffer length M, frames");
  opts["margin"] = cmd->add_option("--margin", a.margin, "Affinity margin delta");
  opts["max-speakers"] =
      cmd->add_option("--max-speakers", a.max_speakers, "Fusion threshold N");
  opts["threshold"] = cmd->add_option("--threshold", a.threshold, "Decision threshold");
  opts["balanced"] = cmd->add_option("--balanced", a.balanced, "Speaker-balanced sampling (true/false)");
  opts["seed"] = cmd->add_option("--seed", a.seed, "Random seed (required online)");
  opts["sigma"] = cmd->add_option("--sigma", a.sigma, "Oracle embedding noise");
  opts["cap"] = cmd->add_option("--cap", a.cap, "Oracle attractors per block");
  opts["global-only"] = cmd->add_flag("--global-only", a.global_only,
                                      "Use global attractors only");
  cmd->add_option("--recording", a.recording, "Recording id written to the RTTM");
}

RunConfig BuildRunConfig(const RunArgs &a,
                         const std::map<std::string, CLI::Option *> &opts) {
  RunConfig c;
  if (!a.config_file.empty()) {
    std::string text;
    try {
      text = ReadFileBytes(a.config_file);
    } catch (const DataError &e) {
      throw ConfigError(e.what());
    }
    c = RunConfigFromJson(text, c);
  }
  auto given = [&](const char *name) { return opts.at(name)->count() > 0; };
  if (given("mode")) c.mode = ParseRunMode(a.mode);
  if (given("backend")) c.backend = ParseBackend(a.backend);
  if (given("weights")) c.weights_path = a.weights;
  if (given("chunk")) c.chunk_len = a.chunk;
  if (given("block")) c.block_len = a.block;
  if (given("buffer")) c.buffer_len = a.buffer;
  if (given("margin")) c.margin = a.margin;
  if (given("max-speakers")) c.max_trained_speakers = a.max_speakers;
  if (given("threshold")) c.threshold = a.threshold;
  if (given("balanced")) c.balanced = a.balanced;
  if (given("seed")) c.seed = a.seed;
  if (given("sigma")) c.noise_sigma = a.sigma;
  if (given("cap")) c.cap = a.cap;
  if (given("global-only")) c.global_only = a.global_only;
  if (!a.weights.empty() && !given("backend")) c.backend = BackendKind::kToy;
  c.include_timings = a.timings;
  c.Validate();
  return c;
}

int DoGenerate(const GenerateArgs &a) {
  Scenario s = GenerateScenario(a.config);
  Emit(a.out, ScenarioToJson(s));
  if (!a.rttm.empty()) WriteRttm(a.rttm, ScenarioAnnotation(s, a.recording));
  return 0;
}

int DoRun(const RunArgs &a, const std::map<std::string, CLI::Option *> &opts) {
  RunConfig c = BuildRunConfig(a, opts);
  if (a.scenario.empty() == a.features.empty()) {
    throw ConfigError("run: give exactly one of --scenario or --features");
  }
  RunResult r;
  if (!a.scenario.empty()) {
    if (c.backend != BackendKind::kOracle) {
      throw ConfigError("run: --scenario needs the oracle backend");
    }
    r = RunScenario(c, ReadScenario(a.scenario), a.recording);
  } else {
    if (c.backend != BackendKind::kToy) {
      throw ConfigError("run: --features needs the toy backend (--weights)");
    }
    r = RunFeatures(c, ReadFeatures(a.features), a.recording);
  }
  Emit(a.out, FormatRttm(r.annotation));
  if (!a.report.empty()) Emit(a.report, r.report_json);
  return 0;
}

const SegmentAnnotation *FindRecording(const std::vector<SegmentAnnotation> &all,
                                       const std::string &id) {
  for (const auto &a : all) {
    if (a.recording_id == id) return &a;
  }
  return nullptr;
}

int DoScore(const ScoreArgs &a) {
  auto refs = ReadRttm(a.ref);
  auto hyps = ReadRttm(a.hyp);
  if (refs.empty()) throw DataError("score: reference RTTM has no segments");
  nlohmann::ordered_json out;
  out["collar"] = a.collar;
  out["recordings"] = nlohmann::ordered_json::array();
  double miss = 0, fa = 0, conf = 0, scored = 0;
  std::string breakdown;
  for (const auto &ref : refs) {
    const SegmentAnnotation *found = FindRecording(hyps, ref.recording_id);
    SegmentAnnotation hyp = found ? *found : SegmentAnnotation{ref.recording_id, {}};
    DerReport r = ComputeDer(ref, hyp, a.collar);
    auto j = nlohmann::ordered_json::parse(DerReportToJson(r));
    nlohmann::ordered_json rec;
    rec["recording"] = ref.recording_id;
    for (auto &[k, v] : j.items()) rec[k] = v;
    out["recordings"].push_back(rec);
    miss += r.miss_seconds;
    fa += r.false_alarm_seconds;
    conf += r.confusion_seconds;
    scored += r.scored_time;
    if (!a.breakdown.empty()) {
      const double end = std::max(AnnotationEnd(ref), AnnotationEnd(hyp));
      const int frames = static_cast<int>(std::ceil(end / kFrameSeconds - 1e-9));
      auto rows = FramewiseBreakdown(ref, hyp, kFrameSeconds, frames);
      std::string csv = FrameErrorsToCsv(rows);
      if (!breakdown.empty()) csv = csv.substr(csv.find('\n') + 1);
      breakdown += csv;
    }
  }
  nlohmann::ordered_json total;
  total["scored_time"] = scored;
  total["miss"] = scored > 0 ? miss / scored : 0.0;
  total["false_alarm"] = scored > 0 ? fa / scored : 0.0;
  total["confusion"] = scored > 0 ? conf / scored : 0.0;
  total["der"] = scored > 0 ? (miss + fa + conf) / scored : 0.0;
  out["total"] = total;
  Emit(a.out, out.dump(2) + "\n");
  if (!a.breakdown.empty()) Emit(a.breakdown, breakdown);
  return 0;
}

int DoBench(const RunArgs &a, const std::map<std::string, CLI::Option *> &opts,
            const std::string &summary_path) {
  RunConfig c = BuildRunConfig(a, opts);
  if (c.mode == RunMode::kOffline) {
    throw ConfigError("bench-rtf: choose --mode online-fw or online-bw");
  }
  if (a.scenario.empty()) throw ConfigError("bench-rtf: --scenario is required");
  if (a.repeats < 1) throw ConfigError("bench-rtf: --repeats must be >= 1");
  Scenario s = ReadScenario(a.scenario);
  auto engine = MakeEngine(c, &s);
  RtfSeries series = RtfBenchmark([&] { return MakeStreaming(c, engine); },
                                  FrameIndexFeatures(0, s.duration_frames),
                                  c.chunk_len, c.buffer_len, 1.0 / kFrameSeconds,
                                  a.repeats);
  Emit(a.out, series.ToCsv());
  if (!summary_path.empty()) {
    auto steady = series.SteadyRtf();
    auto filling = series.FillingRtf();
    nlohmann::ordered_json j;
    j["steps"] = series.points.size();
    j["fill_step"] = series.fill_step;
    j["steady_median_rtf"] = steady.empty() ? 0.0 : Median(steady);
    j["steady_max_rtf"] =
        steady.empty() ? 0.0 : *std::max_element(steady.begin(), steady.end());
    j["filling_slope"] = TrendSlope(filling);
    Emit(summary_path, j.dump(2) + "\n");
  }
  return 0;
}

int DoCount(const CountArgs &a) {
  std::vector<std::pair<int, int>> records;
  if (!a.records.empty()) {
    std::istringstream in(ReadFileBytes(a.records));
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line.rfind("ref", 0) == 0) continue;
      int ref = 0, pred = 0;
      char comma = 0;
      std::istringstream fields(line);
      if (!(fields >> ref >> comma >> pred) || comma != ',' || ref < 0 || pred < 0) {
        throw DataError("count-confusion: line " + std::to_string(line_no) +
                        ": expected 'ref,pred' non-negative integers");
      }
      records.emplace_back(ref, pred);
    }
  } else {
    if (a.ref.empty() || a.hyp.empty()) {
      throw ConfigError("count-confusion: give --records or both --ref and --hyp");
    }
    auto refs = ReadRttm(a.ref);
    auto hyps = ReadRttm(a.hyp);
    for (const auto &ref : refs) {
      const SegmentAnnotation *hyp = FindRecording(hyps, ref.recording_id);
      int pred = hyp ? static_cast<int>(SpeakerLabels(*hyp).size()) : 0;
      records.emplace_back(static_cast<int>(SpeakerLabels(ref).size()), pred);
    }
  }
  Emit(a.out, ComputeCountConfusion(records).ToCsv());
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Streaming speaker diarization with local/global attractors"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto *generate = app.add_subcommand("generate", "Generate a synthetic scenario");
  generate->add_option("--speakers", gen.config.num_speakers, "Number of speakers");
  generate->add_option("--duration", gen.config.duration_s, "Duration in seconds");
  generate->add_option("--overlap", gen.config.overlap_ratio, "Target overlap ratio");
  generate->add_option("--utterance", gen.config.mean_utterance_s, "Mean utterance, s");
  generate->add_option("--gap", gen.config.mean_gap_s, "Initial mean gap, s");
  generate->add_option("--dim", gen.config.dim, "Prototype dimension");
  generate->add_option("--max-cosine", gen.config.max_cosine, "Max prototype cosine");
  generate->add_option("--seed", gen.config.seed, "Random seed");
  generate->add_option("--out", gen.out, "Scenario JSON path (default stdout)");
  generate->add_option("--rttm", gen.rttm, "Also write the ground-truth RTTM");
  generate->add_option("--recording", gen.recording, "Recording id for --rttm");

  RunArgs run;
  std::map<std::string, CLI::Option *> run_opts;
  auto *run_cmd = app.add_subcommand("run", "Diarize a scenario or feature file");
  AddRunOptions(run_cmd, run, run_opts);
  run_cmd->add_option("--out", run.out, "RTTM path (default stdout)");
  run_cmd->add_option("--report", run.report, "JSON run report path");
  run_cmd->add_flag("--timings", run.timings, "Include wall-clock timings in the report");

  ScoreArgs score;
  auto *score_cmd = app.add_subcommand("score", "Diarization error rate");
  score_cmd->add_option("--ref", score.ref, "Reference RTTM")->required();
  score_cmd->add_option("--hyp", score.hyp, "Hypothesis RTTM")->required();
  score_cmd->add_option("--collar", score.collar, "Collar in seconds");
  score_cmd->add_option("--out", score.out, "JSON report path (default stdout)");
  score_cmd->add_option("--breakdown", score.breakdown, "Frame-wise CSV path");

  RunArgs bench;
  std::map<std::string, CLI::Option *> bench_opts;
  std::string bench_summary;
  auto *bench_cmd = app.add_subcommand("bench-rtf", "Per-step real-time factor");
  AddRunOptions(bench_cmd, bench, bench_opts);
  bench_cmd->add_option("--repeats", bench.repeats, "Runs per step (median)");
  bench_cmd->add_option("--out", bench.out, "CSV path (default stdout)");
  bench_cmd->add_option("--summary", bench_summary, "JSON summary path");

  CountArgs count;
  auto *count_cmd = app.add_subcommand("count-confusion", "Speaker-count confusion matrix");
  count_cmd->add_option("--records", count.records, "CSV of ref,pred counts");
  count_cmd->add_option("--ref", count.ref, "Reference RTTM");
  count_cmd->add_option("--hyp", count.hyp, "Hypothesis RTTM");
  count_cmd->add_option("--out", count.out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*generate) return DoGenerate(gen);
    if (*run_cmd) return DoRun(run, run_opts);
    if (*score_cmd) return DoScore(score);
    if (*bench_cmd) return DoBench(bench, bench_opts, bench_summary);
    if (*count_cmd) return DoCount(count);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
