// eend_gla/backend.cc

#include "eend_gla/backend.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "eend_gla/binary_io.h"
#include "eend_gla/rng.h"
#include "json.hpp"

namespace eend_gla {

std::vector<FrameRange> SplitBlocks(int num_frames, int block_len) {
  if (block_len <= 0) {
    throw std::invalid_argument("split_blocks: block length must be >= 1");
  }
  if (num_frames < 0) {
    throw std::invalid_argument("split_blocks: negative frame count");
  }
  std::vector<FrameRange> blocks;
  for (int begin = 0; begin < num_frames; begin += block_len) {
    blocks.push_back({begin, std::min(begin + block_len, num_frames)});
  }
  return blocks;
}

// ---------------------------------------------------------------- oracle

OracleOptions CalibratedOracleOptions(double noise_sigma, int cap) {
  OracleOptions options;
  options.noise_sigma = noise_sigma;
  options.cap = cap;
  options.logit_scale = 10.0;
  options.logit_offset = 0.5;
  return options;
}

ActivityMatrix ScenarioActivity(const Scenario &scenario) {
  ActivityMatrix activity =
      ActivityMatrix::Zero(scenario.num_speakers(), scenario.duration_frames);
  for (int s = 0; s < scenario.num_speakers(); ++s) {
    for (const auto &seg : scenario.speakers[s].segments) {
      int begin = std::max(seg.begin, 0);
      int end = std::min(seg.end, scenario.duration_frames);
      for (int t = begin; t < end; ++t) activity(s, t) = 1;
    }
  }
  return activity;
}

void ValidateScenario(const Scenario &scenario) {
  if (scenario.duration_frames < 0) {
    throw DataError("scenario: negative duration");
  }
  const int dim = scenario.dim();
  for (const auto &spk : scenario.speakers) {
    if (spk.prototype.size() != dim || dim == 0) {
      throw DataError("scenario: speaker '" + spk.label +
                      "' has prototype dimension " +
                      std::to_string(spk.prototype.size()) + ", expected " +
                      std::to_string(dim));
    }
    if (!spk.prototype.allFinite() ||
        std::abs(spk.prototype.norm() - 1.0) > 1e-6) {
      throw DataError("scenario: prototype of '" + spk.label +
                      "' is not a finite unit vector");
    }
    for (const auto &seg : spk.segments) {
      if (seg.begin < 0 || seg.end <= seg.begin ||
          seg.end > scenario.duration_frames) {
        throw DataError("scenario: segment [" + std::to_string(seg.begin) +
                        ", " + std::to_string(seg.end) + ") of '" +
                        spk.label + "' outside [0, duration)");
      }
    }
  }
}

namespace {

constexpr std::uint64_t kEmbeddingNoiseTag = 1;
constexpr std::uint64_t kRelativeNoiseTag = 2;

Vector NoiseVector(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                   std::uint64_t b, int dim, double sigma) {
  Vector out = Vector::Zero(dim);
  if (sigma == 0.0 || dim == 0) return out;
  std::mt19937_64 gen(HashSeed(seed, tag, a, b));
  std::normal_distribution<double> normal(0.0, sigma / std::sqrt(dim));
  for (int i = 0; i < dim; ++i) out[i] = normal(gen);
  return out;
}

BackendOutput OracleInferImpl(const Scenario &scenario,
                              const ActivityMatrix &activity,
                              std::span<const int> frame_ids, int block_len,
                              const OracleOptions &options) {
  if (options.cap < 1) throw std::invalid_argument("oracle: cap must be >= 1");
  for (int t : frame_ids) {
    if (t < 0 || t >= scenario.duration_frames) {
      throw std::invalid_argument("oracle: frame id " + std::to_string(t) +
                                  " outside scenario of " +
                                  std::to_string(scenario.duration_frames) +
                                  " frames");
    }
  }
  const int dim = scenario.dim();
  const int num_frames = static_cast<int>(frame_ids.size());
  const int num_speakers = scenario.num_speakers();
  const double offset_component = std::sqrt(std::max(options.logit_offset, 0.0));

  BackendOutput out;
  out.embeddings = EmbeddingMatrix::Zero(dim + 1, num_frames);
  for (int j = 0; j < num_frames; ++j) {
    const int t = frame_ids[j];
    Vector sum = Vector::Zero(dim);
    for (int s = 0; s < num_speakers; ++s) {
      if (activity(s, t)) sum += scenario.speakers[s].prototype;
    }
    double norm = sum.norm();
    if (norm > 0) sum /= norm;
    sum += NoiseVector(scenario.seed, kEmbeddingNoiseTag, t, 0, dim,
                       options.noise_sigma);
    out.embeddings.col(j).head(dim) = sum;
    out.embeddings(dim, j) = -offset_component;
  }

  auto attractor = [&](int s) {
    Vector a(dim + 1);
    a.head(dim) = options.logit_scale * scenario.speakers[s].prototype;
    a[dim] = options.logit_scale * offset_component;
    return a;
  };
  auto make_set = [&](const std::vector<int> &speakers) {
    AttractorSet set;
    for (int s : speakers) {
      set.vectors.push_back(attractor(s));
      set.existence.push_back(1.0 - kOracleExistenceEps);
    }
    return set;
  };

  // Global attractors: first `cap` speakers by first appearance.
  std::vector<int> order;
  for (int j = 0; j < num_frames && static_cast<int>(order.size()) < num_speakers; ++j) {
    for (int s = 0; s < num_speakers; ++s) {
      if (activity(s, frame_ids[j]) &&
          std::find(order.begin(), order.end(), s) == order.end()) {
        order.push_back(s);
      }
    }
  }
  if (static_cast<int>(order.size()) > options.cap) order.resize(options.cap);
  out.global = make_set(order);

  const auto ranges = SplitBlocks(num_frames, block_len);
  for (int l = 0; l < static_cast<int>(ranges.size()); ++l) {
    const FrameRange range = ranges[l];
    std::vector<int> frames_active(num_speakers, 0);
    std::vector<int> first_seen(num_speakers, std::numeric_limits<int>::max());
    for (int j = range.begin; j < range.end; ++j) {
      for (int s = 0; s < num_speakers; ++s) {
        if (activity(s, frame_ids[j])) {
          ++frames_active[s];
          first_seen[s] = std::min(first_seen[s], j);
        }
      }
    }
    std::vector<int> present;
    for (int s = 0; s < num_speakers; ++s) {
      if (frames_active[s] > 0) present.push_back(s);
    }
    std::stable_sort(present.begin(), present.end(), [&](int x, int y) {
      if (frames_active[x] != frames_active[y]) {
        return frames_active[x] > frames_active[y];
      }
      return first_seen[x] < first_seen[y];
    });
    if (static_cast<int>(present.size()) > options.cap) {
      present.resize(options.cap);
    }

    BlockResult block;
    block.range = range;
    block.local = make_set(present);
    const int block_start_frame = frame_ids[range.begin];
    for (int i = 0; i < static_cast<int>(present.size()); ++i) {
      const int s = present[i];
      Vector rel = scenario.speakers[s].prototype +
                   NoiseVector(scenario.seed, kRelativeNoiseTag,
                               static_cast<std::uint64_t>(block_start_frame),
                               static_cast<std::uint64_t>(s), dim,
                               options.noise_sigma);
      block.relative.push_back({std::move(rel), l, i});
    }
    out.blocks.push_back(std::move(block));
  }
  return out;
}

std::vector<int> FrameIds(const FeatureMatrix &features) {
  if (features.rows() != 1) {
    throw std::invalid_argument(
        "oracle: features must be a 1 x T row of frame indices, got " +
        std::to_string(features.rows()) + " rows");
  }
  std::vector<int> ids(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    double v = features(0, j);
    double r = std::round(v);
    if (!std::isfinite(v) || r != v) {
      throw std::invalid_argument("oracle: feature value is not a frame index");
    }
    ids[j] = static_cast<int>(r);
  }
  return ids;
}

}  // namespace

BackendOutput OracleInfer(const Scenario &scenario,
                          std::span<const int> frame_ids, int block_len,
                          const OracleOptions &options) {
  return OracleInferImpl(scenario, ScenarioActivity(scenario), frame_ids,
                         block_len, options);
}

OracleBackend::OracleBackend(Scenario scenario, OracleOptions options)
    : scenario_(std::move(scenario)), options_(options) {
  ValidateScenario(scenario_);
  if (options_.cap < 1) throw ConfigError("oracle: cap must be >= 1");
  if (options_.noise_sigma < 0) throw ConfigError("oracle: negative sigma");
  activity_ = ScenarioActivity(scenario_);
}

BackendOutput OracleBackend::Infer(const FeatureMatrix &features,
                                   int block_len) const {
  auto ids = FrameIds(features);
  return OracleInferImpl(scenario_, activity_, ids, block_len, options_);
}

FeatureMatrix FrameIndexFeatures(int begin, int end) {
  FeatureMatrix x(1, std::max(end - begin, 0));
  for (int t = begin; t < end; ++t) x(0, t - begin) = t;
  return x;
}

// ------------------------------------------------------------------- toy

void ToyWeights::Validate() const {
  if (feature_dim < 1 || embed_dim < 1 || cap < 1) {
    throw DataError("toy weights: F, D and cap must be >= 1");
  }
  if (encoder.rows() != embed_dim || encoder.cols() != feature_dim ||
      encoder_bias.size() != embed_dim || head.weight.size() != embed_dim ||
      output_proj.rows() != embed_dim || output_proj.cols() != embed_dim) {
    throw DataError("toy weights: tensor shapes inconsistent with F=" +
                    std::to_string(feature_dim) +
                    ", D=" + std::to_string(embed_dim));
  }
  if (!encoder.allFinite() || !encoder_bias.allFinite() ||
      !head.weight.allFinite() || !std::isfinite(head.bias) ||
      !output_proj.allFinite()) {
    throw DataError("toy weights: non-finite values");
  }
}

ToyWeights IdentityToyWeights(int feature_dim, int embed_dim, int cap) {
  ToyWeights w;
  w.feature_dim = feature_dim;
  w.embed_dim = embed_dim;
  w.cap = cap;
  w.encoder = Matrix::Identity(embed_dim, feature_dim);
  w.encoder_bias = Vector::Zero(embed_dim);
  w.head.weight = Vector::Zero(embed_dim);
  w.head.bias = 0.0;
  w.output_proj = Matrix::Zero(embed_dim, embed_dim);
  return w;
}

namespace {

constexpr char kWeightsMagic[4] = {'G', 'L', 'A', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

void AppendTensor(std::string *out, const Matrix &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      AppendF32(out, static_cast<float>(m(r, c)));
    }
  }
}

Matrix ReadTensor(ByteReader *reader, int rows, int cols) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = reader->F32();
  }
  return m;
}

}  // namespace

void WriteToyWeights(const std::string &path, const ToyWeights &weights) {
  weights.Validate();
  std::string bytes(kWeightsMagic, 4);
  AppendU32(&bytes, kWeightsVersion);
  AppendU32(&bytes, static_cast<std::uint32_t>(weights.feature_dim));
  AppendU32(&bytes, static_cast<std::uint32_t>(weights.embed_dim));
  AppendU32(&bytes, static_cast<std::uint32_t>(weights.cap));
  AppendTensor(&bytes, weights.encoder);
  AppendTensor(&bytes, weights.encoder_bias);
  AppendTensor(&bytes, weights.head.weight);
  AppendF32(&bytes, static_cast<float>(weights.head.bias));
  AppendTensor(&bytes, weights.output_proj);
  WriteFileBytes(path, bytes);
}

ToyWeights ReadToyWeights(const std::string &path) {
  const std::string bytes = ReadFileBytes(path);
  ByteReader reader(bytes, "toy weights '" + path + "'");
  reader.ExpectMagic(kWeightsMagic);
  std::uint32_t version = reader.U32();
  if (version != kWeightsVersion) {
    throw DataError("toy weights '" + path + "': unsupported version " +
                    std::to_string(version));
  }
  ToyWeights w;
  w.feature_dim = static_cast<int>(reader.U32());
  w.embed_dim = static_cast<int>(reader.U32());
  w.cap = static_cast<int>(reader.U32());
  if (w.feature_dim < 1 || w.embed_dim < 1 || w.cap < 1) {
    throw DataError("toy weights '" + path + "': F, D and cap must be >= 1");
  }
  const std::size_t d = w.embed_dim;
  const std::size_t f = w.feature_dim;
  reader.Require(4 * (d * f + d + d + 1 + d * d));
  w.encoder = ReadTensor(&reader, w.embed_dim, w.feature_dim);
  w.encoder_bias = ReadTensor(&reader, w.embed_dim, 1);
  w.head.weight = ReadTensor(&reader, w.embed_dim, 1);
  w.head.bias = reader.F32();
  w.output_proj = ReadTensor(&reader, w.embed_dim, w.embed_dim);
  reader.ExpectEnd();
  w.Validate();
  return w;
}

Vector AttentionWeights(const Vector &query, const EmbeddingMatrix &keys) {
  if (query.size() != keys.rows()) {
    throw std::invalid_argument("attention: query dim " +
                                std::to_string(query.size()) + " != key dim " +
                                std::to_string(keys.rows()));
  }
  if (keys.cols() == 0) return Vector();
  Vector scores = keys.transpose() * query / std::sqrt(double(keys.rows()));
  scores.array() -= scores.maxCoeff();
  Vector w = scores.array().exp();
  return w / w.sum();
}

std::vector<Vector> RelativeEmbed(const AttractorSet &attractors,
                                  const EmbeddingMatrix &embeddings,
                                  const Matrix &output_proj) {
  const Eigen::Index d = embeddings.rows();
  if (output_proj.rows() != d || output_proj.cols() != d) {
    throw std::invalid_argument("relative_embed: output projection must be " +
                                std::to_string(d) + " x " + std::to_string(d));
  }
  std::vector<Vector> out;
  out.reserve(attractors.vectors.size());
  for (const auto &a : attractors.vectors) {
    if (embeddings.cols() == 0) {
      if (a.size() != d) {
        throw std::invalid_argument("relative_embed: dimension mismatch");
      }
      out.push_back(a);
      continue;
    }
    Vector context = embeddings * AttentionWeights(a, embeddings);
    out.push_back(a + output_proj * context);
  }
  return out;
}

namespace {

// Deterministic k-means over the columns of `points` with farthest-point
// initialisation. Clusters are returned largest first; existence
// probabilities come from the linear head on each centroid.
AttractorSet KMeansAttractors(const Matrix &points, int cap,
                              const LinearHead &head) {
  AttractorSet set;
  const Eigen::Index n = points.cols();
  if (n == 0) return set;

  std::vector<Eigen::Index> seeds{0};
  Vector min_dist = (points.colwise() - points.col(0)).colwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < cap) {
    Eigen::Index far = 0;
    double best = min_dist.maxCoeff(&far);
    if (best <= 1e-12) break;  // no further distinct points
    seeds.push_back(far);
    Vector d = (points.colwise() - points.col(far)).colwise().squaredNorm();
    min_dist = min_dist.cwiseMin(d);
  }
  const int k = static_cast<int>(seeds.size());
  Matrix centroids(points.rows(), k);
  for (int c = 0; c < k; ++c) centroids.col(c) = points.col(seeds[c]);

  std::vector<int> label(n, -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      (centroids.colwise() - points.col(j)).colwise().squaredNorm().minCoeff(&best);
      if (label[j] != best) {
        label[j] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(points.rows(), k);
    std::vector<int> counts(k, 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      sums.col(label[j]) += points.col(j);
      ++counts[label[j]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) centroids.col(c) = sums.col(c) / counts[c];
    }
  }

  std::vector<int> counts(k, 0);
  std::vector<Eigen::Index> first(k, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    ++counts[label[j]];
    first[label[j]] = std::min(first[label[j]], j);
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    if (counts[x] != counts[y]) return counts[x] > counts[y];
    return first[x] < first[y];
  });
  for (int c : order) {
    if (counts[c] == 0) continue;
    set.vectors.push_back(centroids.col(c));
  }
  set.existence = ExistenceProbs(set.vectors, head);
  return set;
}

}  // namespace

BackendOutput ToyInfer(const FeatureMatrix &features,
                       const ToyWeights &weights, int block_len) {
  if (features.rows() != weights.feature_dim) {
    throw std::invalid_argument("toy: feature dim " +
                                std::to_string(features.rows()) +
                                " != weight F " +
                                std::to_string(weights.feature_dim));
  }
  BackendOutput out;
  out.embeddings =
      ((weights.encoder * features).colwise() + weights.encoder_bias)
          .array()
          .tanh()
          .matrix();
  out.global = KMeansAttractors(out.embeddings, weights.cap, weights.head);
  const auto ranges = SplitBlocks(static_cast<int>(features.cols()), block_len);
  for (int l = 0; l < static_cast<int>(ranges.size()); ++l) {
    BlockResult block;
    block.range = ranges[l];
    block.local = KMeansAttractors(
        out.embeddings.middleCols(block.range.begin, block.range.length()),
        weights.cap, weights.head);
    auto rel = RelativeEmbed(block.local, out.embeddings, weights.output_proj);
    for (int i = 0; i < static_cast<int>(rel.size()); ++i) {
      block.relative.push_back({std::move(rel[i]), l, i});
    }
    out.blocks.push_back(std::move(block));
  }
  return out;
}

ToyBackend::ToyBackend(ToyWeights weights) : weights_(std::move(weights)) {
  weights_.Validate();
}

BackendOutput ToyBackend::Infer(const FeatureMatrix &features,
                                int block_len) const {
  return ToyInfer(features, weights_, block_len);
}

// ------------------------------------------------------------- scenario io

std::string ScenarioToJson(const Scenario &scenario) {
  nlohmann::ordered_json j;
  j["duration_frames"] = scenario.duration_frames;
  j["seed"] = scenario.seed;
  j["speakers"] = nlohmann::ordered_json::array();
  for (const auto &spk : scenario.speakers) {
    nlohmann::ordered_json s;
    s["label"] = spk.label;
    s["prototype"] = std::vector<double>(spk.prototype.data(),
                                         spk.prototype.data() + spk.prototype.size());
    auto segs = nlohmann::ordered_json::array();
    for (const auto &seg : spk.segments) segs.push_back({seg.begin, seg.end});
    s["segments"] = std::move(segs);
    j["speakers"].push_back(std::move(s));
  }
  return j.dump(1) + "\n";
}

Scenario ScenarioFromJson(const std::string &text) {
  Scenario scenario;
  try {
    auto j = nlohmann::json::parse(text);
    scenario.duration_frames = j.at("duration_frames").get<int>();
    scenario.seed = j.at("seed").get<std::uint64_t>();
    for (const auto &s : j.at("speakers")) {
      ScenarioSpeaker spk;
      spk.label = s.at("label").get<std::string>();
      auto proto = s.at("prototype").get<std::vector<double>>();
      spk.prototype = Eigen::Map<Vector>(proto.data(), proto.size());
      for (const auto &seg : s.at("segments")) {
        if (seg.size() != 2) throw DataError("segment must be [start, end]");
        spk.segments.push_back({seg[0].get<int>(), seg[1].get<int>()});
      }
      scenario.speakers.push_back(std::move(spk));
    }
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("scenario json: ") + e.what());
  }
  ValidateScenario(scenario);
  return scenario;
}

Scenario ReadScenario(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scenario file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return ScenarioFromJson(text);
}

void WriteScenario(const std::string &path, const Scenario &scenario) {
  WriteFileBytes(path, ScenarioToJson(scenario));
}

SegmentAnnotation ScenarioAnnotation(const Scenario &scenario,
                                     const std::string &recording_id) {
  std::vector<std::string> labels;
  for (const auto &spk : scenario.speakers) labels.push_back(spk.label);
  return ActivityToSegments(ScenarioActivity(scenario), kFrameSeconds, labels,
                            recording_id);
}

}  // namespace eend_gla
