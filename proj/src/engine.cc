// eend_gla/engine.cc

#include "eend_gla/engine.h"

#include <algorithm>
#include <stdexcept>

namespace eend_gla {

LocalPathResult RunLocalPath(const BackendOutput &output, double margin,
                             std::uint64_t seed) {
  LocalPathResult result;
  const int num_frames = static_cast<int>(output.embeddings.cols());
  for (const auto &block : output.blocks) {
    int count = CountSpeakers(block.local.existence).count;
    count = std::min({count, block.local.size(),
                      static_cast<int>(block.relative.size())});
    result.block_counts.push_back(count);
    result.block_posteriors.push_back(
        {block.range,
         Posteriors(output.embeddings.middleCols(block.range.begin,
                                                 block.range.length()),
                    block.local, count)});
    for (int i = 0; i < count; ++i) result.embeddings.push_back(block.relative[i]);
  }
  if (result.embeddings.empty()) {
    result.posteriors = PosteriorMatrix(0, num_frames);
    result.assignment.k = 0;
    return result;
  }
  const AffinityMatrix affinity = BuildAffinity(result.embeddings, margin);
  result.eigenvalues = EigenvaluesDesc(affinity.values);
  result.eigenratio_count = CountByEigenratio(result.eigenvalues);
  result.count = std::min(ClampCount(result.eigenratio_count, result.block_counts),
                          static_cast<int>(result.embeddings.size()));
  result.assignment =
      ClcKmeans(result.embeddings, result.count,
                SameBlockCannotLinks(result.embeddings), seed);
  result.posteriors = Stitch(result.block_posteriors, result.embeddings,
                             result.assignment, num_frames);
  return result;
}

GlaResult DiarizeBackendOutput(const BackendOutput &output,
                               const GlaOptions &options) {
  GlaResult result;
  const SpeakerCount global = CountSpeakers(output.global.existence);
  result.global_count = global.count;
  result.global_saturated = global.saturated;
  if (options.global_only ||
      UseGlobalResult(global.count, options.max_trained_speakers)) {
    result.posteriors = Posteriors(output.embeddings, output.global, global.count);
    result.used_global = true;
    return result;
  }
  LocalPathResult local = RunLocalPath(output, options.margin, options.seed);
  result.used_global = false;
  result.posteriors = std::move(local.posteriors);
  result.block_counts = std::move(local.block_counts);
  result.eigenratio_count = local.eigenratio_count;
  result.local_count = local.count;
  return result;
}

GlaEngine::GlaEngine(std::shared_ptr<const Backend> backend, GlaOptions options)
    : backend_(std::move(backend)), options_(options) {
  if (!backend_) throw std::invalid_argument("GlaEngine: null backend");
  if (options_.block_len < 1) throw ConfigError("block length must be >= 1");
  if (options_.max_trained_speakers < 1) {
    throw ConfigError("max trained speakers must be >= 1");
  }
  if (!(options_.margin >= 0 && options_.margin < 1)) {
    throw ConfigError("margin must lie in [0,1)");
  }
}

GlaResult GlaEngine::Diarize(const FeatureMatrix &features) const {
  return DiarizeBackendOutput(backend_->Infer(features, options_.block_len),
                              options_);
}

}  // namespace eend_gla
