// eend_gla/harness.cc

#include "eend_gla/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "eend_gla/binary_io.h"
#include "eend_gla/rng.h"
#include "json.hpp"

namespace eend_gla {

// ------------------------------------------------------------ generation

void GenConfig::Validate() const {
  if (num_speakers < 1) throw ConfigError("generate: need at least 1 speaker");
  if (!(duration_s > 0)) throw ConfigError("generate: duration must be > 0");
  if (!(overlap_ratio >= 0 && overlap_ratio < 1)) {
    throw ConfigError("generate: overlap ratio must lie in [0,1)");
  }
  if (!(mean_utterance_s > 0) || !(mean_gap_s > 0)) {
    throw ConfigError("generate: mean utterance and gap must be > 0");
  }
  if (dim < 2) throw ConfigError("generate: prototype dim must be >= 2");
  if (!(max_cosine > -1 && max_cosine <= 1)) {
    throw ConfigError("generate: max cosine must lie in (-1,1]");
  }
}

double OverlapRatio(const ActivityMatrix &activity) {
  long speech = 0, overlap = 0;
  for (Eigen::Index t = 0; t < activity.cols(); ++t) {
    int n = 0;
    for (Eigen::Index s = 0; s < activity.rows(); ++s) n += activity(s, t);
    if (n >= 1) ++speech;
    if (n >= 2) ++overlap;
  }
  return speech ? static_cast<double>(overlap) / speech : 0.0;
}

namespace {

std::vector<Vector> DrawPrototypes(const GenConfig &config) {
  std::mt19937_64 rng(HashSeed(config.seed, 0x70726f74ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> prototypes;
  for (int s = 0; s < config.num_speakers; ++s) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      Vector v(config.dim);
      for (int i = 0; i < config.dim; ++i) v[i] = normal(rng);
      v.normalize();
      placed = std::all_of(prototypes.begin(), prototypes.end(),
                           [&](const Vector &p) {
                             return p.dot(v) <= config.max_cosine;
                           });
      if (placed) prototypes.push_back(std::move(v));
    }
    if (!placed) {
      throw ConfigError("generate: cannot draw " +
                        std::to_string(config.num_speakers) +
                        " prototypes with pairwise cosine <= " +
                        std::to_string(config.max_cosine));
    }
  }
  return prototypes;
}

std::vector<std::vector<FrameRange>> DrawSegments(const GenConfig &config,
                                                  int num_frames,
                                                  double gap_scale,
                                                  std::uint64_t attempt) {
  std::vector<std::vector<FrameRange>> out(config.num_speakers);
  const double utt_frames = config.mean_utterance_s / kFrameSeconds;
  const double gap_frames = config.mean_gap_s * gap_scale / kFrameSeconds;
  for (int s = 0; s < config.num_speakers; ++s) {
    std::mt19937_64 rng(HashSeed(config.seed, attempt, s));
    std::exponential_distribution<double> exp1(1.0);
    auto frames = [&](double mean) {
      return std::max(1, static_cast<int>(std::lround(exp1(rng) * mean)));
    };
    int t = frames(gap_frames);
    while (t < num_frames) {
      int len = frames(utt_frames);
      int end = std::min(t + len, num_frames);
      out[s].push_back({t, end});
      t = end + frames(gap_frames);
    }
    if (out[s].empty()) {
      int len = std::min(num_frames, frames(utt_frames));
      std::uniform_int_distribution<int> start(0, num_frames - len);
      int b = start(rng);
      out[s].push_back({b, b + len});
    }
  }
  return out;
}

ActivityMatrix SegmentActivity(const std::vector<std::vector<FrameRange>> &segs,
                               int num_frames) {
  ActivityMatrix a = ActivityMatrix::Zero(segs.size(), num_frames);
  for (std::size_t s = 0; s < segs.size(); ++s) {
    for (const auto &r : segs[s]) {
      for (int t = r.begin; t < r.end; ++t) a(s, t) = 1;
    }
  }
  return a;
}

}  // namespace

Scenario GenerateScenario(const GenConfig &config) {
  config.Validate();
  const int num_frames =
      static_cast<int>(std::lround(config.duration_s / kFrameSeconds));
  if (num_frames < 1) throw ConfigError("generate: duration below one frame");

  Scenario scenario;
  scenario.duration_frames = num_frames;
  scenario.seed = config.seed;
  auto prototypes = DrawPrototypes(config);

  std::vector<std::vector<FrameRange>> segments;
  if (config.num_speakers == 1) {
    // A single speaker cannot overlap; the target is irrelevant.
    segments = DrawSegments(config, num_frames, 1.0, 0);
  } else {
    bool found = false;
    for (std::uint64_t attempt = 0; attempt < 16 && !found; ++attempt) {
      auto measure = [&](double log_scale) {
        return OverlapRatio(SegmentActivity(
            DrawSegments(config, num_frames, std::exp(log_scale), attempt),
            num_frames));
      };
      // Overlap falls as gaps grow; bisect on the log gap scale.
      double lo = std::log(1e-3), hi = std::log(1e3);
      double best_log = 0.0, best_err = std::abs(measure(0.0) - config.overlap_ratio);
      for (int iter = 0; iter < 48; ++iter) {
        double mid = 0.5 * (lo + hi);
        double ratio = measure(mid);
        double err = std::abs(ratio - config.overlap_ratio);
        if (err < best_err) {
          best_err = err;
          best_log = mid;
        }
        if (ratio > config.overlap_ratio) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      if (best_err <= kOverlapTolerance) {
        segments = DrawSegments(config, num_frames, std::exp(best_log), attempt);
        found = true;
      }
    }
    if (!found) {
      throw ConfigError("generate: overlap ratio " +
                        std::to_string(config.overlap_ratio) +
                        " is not reachable with " +
                        std::to_string(config.num_speakers) + " speakers");
    }
  }

  for (int s = 0; s < config.num_speakers; ++s) {
    char label[16];
    std::snprintf(label, sizeof(label), "S%02d", s + 1);
    scenario.speakers.push_back({label, prototypes[s], std::move(segments[s])});
  }
  ValidateScenario(scenario);
  return scenario;
}

// ------------------------------------------------------------------ rttm

std::string RttmLine(const std::string &recording_id, const Segment &segment) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "SPEAKER %s 1 %.2f %.2f <NA> <NA> %s <NA> <NA>\n",
                recording_id.c_str(), segment.onset,
                segment.offset - segment.onset, segment.speaker.c_str());
  return buf;
}

std::string FormatRttm(const SegmentAnnotation &annotation) {
  std::string out;
  for (const auto &seg : annotation.segments) {
    out += RttmLine(annotation.recording_id, seg);
  }
  return out;
}

void WriteRttm(const std::string &path, const SegmentAnnotation &annotation) {
  WriteFileBytes(path, FormatRttm(annotation));
}

std::vector<SegmentAnnotation> ParseRttm(const std::string &text) {
  std::vector<SegmentAnnotation> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto snap = [](double v) { return std::round(v * 100.0) / 100.0; };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tok{std::istream_iterator<std::string>(fields),
                                 std::istream_iterator<std::string>()};
    if (tok.empty() || tok[0].starts_with(";;")) continue;
    auto fail = [&](const std::string &why) {
      return DataError("rttm line " + std::to_string(line_no) + ": " + why);
    };
    if (tok[0] != "SPEAKER") continue;
    if (tok.size() < 8) throw fail("expected at least 8 fields");
    double onset = 0, duration = 0;
    try {
      std::size_t used = 0;
      onset = std::stod(tok[3], &used);
      if (used != tok[3].size()) throw std::invalid_argument("onset");
      duration = std::stod(tok[4], &used);
      if (used != tok[4].size()) throw std::invalid_argument("duration");
    } catch (const std::exception &) {
      throw fail("onset/duration are not numbers");
    }
    if (!(onset >= 0) || !(duration > 0)) {
      throw fail("onset must be >= 0 and duration > 0");
    }
    auto it = std::find_if(out.begin(), out.end(), [&](const auto &a) {
      return a.recording_id == tok[1];
    });
    if (it == out.end()) {
      out.push_back({tok[1], {}});
      it = out.end() - 1;
    }
    it->segments.push_back({tok[7], snap(onset), snap(onset + duration)});
  }
  return out;
}

std::vector<SegmentAnnotation> ReadRttm(const std::string &path) {
  return ParseRttm(ReadFileBytes(path));
}

// --------------------------------------------------------------- features

namespace {
constexpr char kFeatureMagic[4] = {'G', 'L', 'A', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

std::string EncodeFeatures(const FeatureMatrix &features) {
  if (features.rows() < 1) throw DataError("features: F must be >= 1");
  std::string bytes(kFeatureMagic, 4);
  AppendU32(&bytes, kFeatureVersion);
  AppendU32(&bytes, static_cast<std::uint32_t>(features.rows()));
  AppendU32(&bytes, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index t = 0; t < features.cols(); ++t) {
    for (Eigen::Index f = 0; f < features.rows(); ++f) {
      AppendF32(&bytes, static_cast<float>(features(f, t)));
    }
  }
  return bytes;
}

FeatureMatrix DecodeFeatures(const std::string &bytes, const std::string &what) {
  ByteReader reader(bytes, what);
  reader.ExpectMagic(kFeatureMagic);
  const std::uint32_t version = reader.U32();
  if (version != kFeatureVersion) {
    throw DataError(what + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t dim = reader.U32();
  const std::uint32_t frames = reader.U32();
  if (dim == 0) throw DataError(what + ": F must be >= 1");
  reader.Require(4ULL * dim * frames);
  FeatureMatrix out(dim, frames);
  for (std::uint32_t t = 0; t < frames; ++t) {
    for (std::uint32_t f = 0; f < dim; ++f) out(f, t) = reader.F32();
  }
  reader.ExpectEnd();
  if (!out.allFinite()) throw DataError(what + ": non-finite values");
  return out;
}

void WriteFeatures(const std::string &path, const FeatureMatrix &features) {
  WriteFileBytes(path, EncodeFeatures(features));
}

FeatureMatrix ReadFeatures(const std::string &path) {
  return DecodeFeatures(ReadFileBytes(path), "features '" + path + "'");
}

// ------------------------------------------------------------------- run

std::string RunModeName(RunMode mode) {
  switch (mode) {
    case RunMode::kOffline:
      return "offline";
    case RunMode::kOnlineFw:
      return "online-fw";
    case RunMode::kOnlineBw:
      return "online-bw";
  }
  return "?";
}

RunMode ParseRunMode(const std::string &name) {
  if (name == "offline") return RunMode::kOffline;
  if (name == "online-fw") return RunMode::kOnlineFw;
  if (name == "online-bw") return RunMode::kOnlineBw;
  throw ConfigError("unknown mode '" + name +
                    "' (expected offline, online-fw or online-bw)");
}

std::string BackendName(BackendKind kind) {
  return kind == BackendKind::kOracle ? "oracle" : "toy";
}

BackendKind ParseBackend(const std::string &name) {
  if (name == "oracle") return BackendKind::kOracle;
  if (name == "toy") return BackendKind::kToy;
  throw ConfigError("unknown backend '" + name + "' (expected oracle or toy)");
}

void RunConfig::Validate() const {
  if (chunk_len < 1 || block_len < 1 || buffer_len < 1) {
    throw ConfigError("chunk_len, block_len and buffer_len must be >= 1");
  }
  if (!(threshold > 0 && threshold < 1)) {
    throw ConfigError("threshold must lie in (0,1)");
  }
  if (!(margin >= 0 && margin < 1)) throw ConfigError("margin must lie in [0,1)");
  if (max_trained_speakers < 1) {
    throw ConfigError("max_trained_speakers must be >= 1");
  }
  if (cap < 1) throw ConfigError("cap must be >= 1");
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be >= 0");
  if (mode != RunMode::kOffline && !seed) {
    throw ConfigError("--seed is required for online modes");
  }
  if (mode == RunMode::kOnlineBw &&
      (buffer_len % block_len != 0 || buffer_len <= block_len ||
       block_len % chunk_len != 0)) {
    throw ConfigError(
        "online-bw needs buffer_len divisible by and longer than block_len, "
        "and block_len divisible by chunk_len");
  }
  if (backend == BackendKind::kToy && weights_path.empty()) {
    throw ConfigError("toy backend needs a weights file");
  }
}

RunConfig RunConfigFromJson(const std::string &text, RunConfig base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config json: expected an object");
  try {
    for (auto &[key, value] : j.items()) {
      if (key == "mode") base.mode = ParseRunMode(value.get<std::string>());
      else if (key == "backend") base.backend = ParseBackend(value.get<std::string>());
      else if (key == "chunk_len") base.chunk_len = value.get<int>();
      else if (key == "block_len") base.block_len = value.get<int>();
      else if (key == "buffer_len") base.buffer_len = value.get<int>();
      else if (key == "margin") base.margin = value.get<double>();
      else if (key == "max_trained_speakers") base.max_trained_speakers = value.get<int>();
      else if (key == "threshold") base.threshold = value.get<double>();
      else if (key == "balanced") base.balanced = value.get<bool>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "noise_sigma") base.noise_sigma = value.get<double>();
      else if (key == "cap") base.cap = value.get<int>();
      else if (key == "global_only") base.global_only = value.get<bool>();
      else if (key == "weights") base.weights_path = value.get<std::string>();
      else if (key == "include_timings") base.include_timings = value.get<bool>();
      else throw ConfigError("config json: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("config json: ") + e.what());
  }
  return base;
}

namespace {

nlohmann::ordered_json ConfigJson(const RunConfig &c) {
  nlohmann::ordered_json j;
  j["mode"] = RunModeName(c.mode);
  j["backend"] = BackendName(c.backend);
  j["chunk_len"] = c.chunk_len;
  j["block_len"] = c.block_len;
  j["buffer_len"] = c.buffer_len;
  j["margin"] = c.margin;
  j["max_trained_speakers"] = c.max_trained_speakers;
  j["threshold"] = c.threshold;
  j["balanced"] = c.balanced;
  if (c.seed) j["seed"] = *c.seed;
  j["noise_sigma"] = c.noise_sigma;
  j["cap"] = c.cap;
  j["global_only"] = c.global_only;
  if (!c.weights_path.empty()) j["weights"] = c.weights_path;
  return j;
}

}  // namespace

std::string RunConfigToJson(const RunConfig &config) {
  return ConfigJson(config).dump(2) + "\n";
}

std::shared_ptr<const Backend> MakeBackend(const RunConfig &config,
                                           const Scenario *scenario) {
  if (config.backend == BackendKind::kOracle) {
    if (!scenario) throw ConfigError("oracle backend needs a scenario");
    return std::make_shared<OracleBackend>(
        *scenario, CalibratedOracleOptions(config.noise_sigma, config.cap));
  }
  return std::make_shared<ToyBackend>(ReadToyWeights(config.weights_path));
}

std::shared_ptr<const DiarizationEngine> MakeEngine(const RunConfig &config,
                                                    const Scenario *scenario) {
  GlaOptions options;
  options.block_len = config.block_len;
  options.max_trained_speakers = config.max_trained_speakers;
  options.margin = config.margin;
  options.seed = config.seed.value_or(0);
  options.global_only = config.global_only;
  return std::make_shared<GlaEngine>(MakeBackend(config, scenario), options);
}

std::unique_ptr<StreamingDiarizer> MakeStreaming(
    const RunConfig &config, std::shared_ptr<const DiarizationEngine> engine) {
  StbOptions options;
  options.chunk_len = config.chunk_len;
  options.block_len = config.block_len;
  options.buffer_len = config.buffer_len;
  options.balanced = config.balanced;
  options.threshold = config.threshold;
  options.seed = config.seed.value_or(0);
  if (config.mode == RunMode::kOnlineFw) {
    return std::make_unique<FwStb>(std::move(engine), options);
  }
  if (config.mode == RunMode::kOnlineBw) {
    return std::make_unique<BwStb>(std::move(engine), options);
  }
  throw ConfigError("streaming diarizer requested in offline mode");
}

namespace {

RunResult RunWithEngine(const RunConfig &config,
                        std::shared_ptr<const DiarizationEngine> engine,
                        const FeatureMatrix &features,
                        const std::string &recording_id) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  if (config.mode == RunMode::kOffline) {
    GlaResult gla = engine->Diarize(features);
    ActivityMatrix active = Binarize(gla.posteriors, config.threshold);
    std::vector<std::string> labels;
    for (Eigen::Index s = 0; s < active.rows(); ++s) {
      labels.push_back("spk" + std::to_string(s));
      if (active.row(s).any()) ++result.active_speakers;
    }
    result.annotation =
        ActivityToSegments(active, kFrameSeconds, labels, recording_id);
    result.estimated_speakers = static_cast<int>(gla.posteriors.rows());
    result.global_count = gla.global_count;
    result.used_global = gla.used_global;
  } else {
    auto stream = MakeStreaming(config, std::move(engine));
    const Eigen::Index total = features.cols();
    for (Eigen::Index begin = 0; begin < total; begin += config.chunk_len) {
      const Eigen::Index width =
          std::min<Eigen::Index>(config.chunk_len, total - begin);
      stream->Push(features.middleCols(begin, width));
    }
    result.annotation = stream->Flush(recording_id);
    result.estimated_speakers = stream->num_speakers();
    result.active_speakers = stream->labels().num_allocated();
    result.steps = stream->steps();
    result.global_count = stream->last_result().global_count;
    result.used_global = stream->last_result().used_global;
  }
  result.elapsed_s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();

  nlohmann::ordered_json report;
  report["recording"] = recording_id;
  report["frames"] = features.cols();
  report["duration_s"] = features.cols() * kFrameSeconds;
  report["estimated_speakers"] = result.estimated_speakers;
  report["active_speakers"] = result.active_speakers;
  report["global_count"] = result.global_count;
  report["used_global"] = result.used_global;
  report["steps"] = result.steps;
  report["segments"] = result.annotation.segments.size();
  report["config"] = ConfigJson(config);
  if (config.include_timings) {
    report["elapsed_s"] = result.elapsed_s;
    const double audio = features.cols() * kFrameSeconds;
    report["rtf"] = audio > 0 ? result.elapsed_s / audio : 0.0;
  }
  result.report_json = report.dump(2) + "\n";
  return result;
}

}  // namespace

RunResult RunScenario(const RunConfig &config, const Scenario &scenario,
                      const std::string &recording_id) {
  config.Validate();
  if (config.backend != BackendKind::kOracle) {
    throw ConfigError("scenario runs use the oracle backend");
  }
  return RunWithEngine(config, MakeEngine(config, &scenario),
                       FrameIndexFeatures(0, scenario.duration_frames),
                       recording_id);
}

RunResult RunFeatures(const RunConfig &config, const FeatureMatrix &features,
                      const std::string &recording_id) {
  config.Validate();
  if (config.backend != BackendKind::kToy) {
    throw ConfigError("feature-file runs use the toy backend");
  }
  return RunWithEngine(config, MakeEngine(config, nullptr), features,
                       recording_id);
}

}  // namespace eend_gla
