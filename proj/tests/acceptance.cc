// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eend_gla/binary_io.h"
#include "eend_gla/eval.h"
#include "eend_gla/harness.h"
#include "eend_gla/losses.h"
#include "eend_gla/stb.h"
#include "eend_gla/stitch.h"

#ifndef EEND_GLA_CLI_PATH
#define EEND_GLA_CLI_PATH "eend-gla"
#endif

using namespace eend_gla;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Fmt(const char *fmt, double a = 0, double b = 0, double c = 0,
                double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

// ----------------------------------------------------------------- 1

Outcome SamplingWeightsExample() {
  PosteriorMatrix y(2, 8);
  y << 0.999, 0.999, 0.999, 0.999, 0.999, 0.001, 0.001, 0.001,
       0.001, 0.001, 0.001, 0.001, 0.001, 0.001, 0.001, 0.999;
  const double conv_expect[] = {0.167, 0.167, 0.167, 0.167, 0.167, 0.0, 0.0, 0.167};
  const double bal_expect[] = {0.101, 0.101, 0.101, 0.101, 0.101, 0.0, 0.0, 0.497};

  auto start = Clock::now();
  Vector conv = SamplingWeights(y, false);
  Vector bal = SamplingWeights(y, true);
  const double elapsed = Seconds(start);

  double worst = 0.0;
  for (int t = 0; t < 8; ++t) {
    worst = std::max(worst, std::abs(conv[t] - conv_expect[t]));
    worst = std::max(worst, std::abs(bal[t] - bal_expect[t]));
  }
  Outcome o;
  o.pass = worst <= 1e-3 && elapsed < 1e-3;
  o.detail = Fmt("max abs error %.5f, balanced t=8 weight %.4f, runtime %.1f us",
                 worst, bal[7], elapsed * 1e6);
  return o;
}

// ----------------------------------------------------------------- 2

Outcome VctArithmetic() {
  const int batch = 64, length = 2000;
  Minibatch b;
  for (int i = 0; i < batch; ++i) {
    Matrix x(length, 1), lab(length, 1);
    for (int t = 0; t < length; ++t) {
      x(t, 0) = i * length + t;
      lab(t, 0) = (t + i) % 3 == 0;
    }
    b.features.push_back(std::move(x));
    b.labels.push_back(std::move(lab));
  }
  Outcome o;
  Minibatch r = VctReshape(b, 500);
  bool conserved = r.size() == 256 && r.length() == 500;
  // Concatenating the pieces in order must reproduce every sequence.
  for (int i = 0; i < batch && conserved; ++i) {
    for (int k = 0; k < 4; ++k) {
      conserved &= r.features[4 * i + k] == b.features[i].middleRows(500 * k, 500);
      conserved &= r.labels[4 * i + k] == b.labels[i].middleRows(500 * k, 500);
    }
  }
  bool schedule = true;
  for (int len : kVctLengths) {
    Minibatch s = VctReshape(b, len);
    schedule &= static_cast<long>(s.size()) * s.length() ==
                static_cast<long>(batch) * length;
  }
  // Every length the schedule can emit keeps B' * T' = B * T.
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto t = VctSchedule(rng);
    int len = t.value_or(length);
    schedule &= length % len == 0 && (batch * length / len) * len == batch * length;
  }
  o.pass = conserved && schedule;
  o.detail = Fmt("B'=%.0f for T'=500, frames conserved: ", r.size()) +
             (conserved ? "yes" : "no") + ", schedule consistent: " +
             (schedule ? "yes" : "no");
  return o;
}

// ----------------------------------------------------------------- 3

double OracleBce(const ActivityMatrix &y, const PosteriorMatrix &p,
                 const std::vector<int> &perm) {
  double total = 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    for (int t = 0; t < p.cols(); ++t) {
      total += y(perm[i], t) ? -std::log(p(i, t)) : -std::log(1.0 - p(i, t));
    }
  }
  return total;
}

Outcome PermutationOracles() {
  auto start = Clock::now();
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  std::bernoulli_distribution coin(0.35);
  int loss_mismatch = 0, loss_cases = 0;
  double worst_rel = 0.0;
  for (int s = 2; s <= 6; ++s) {
    for (int n = 0; n < 1000; ++n) {
      const int t = 10 + n % 21;
      ActivityMatrix y(s, t);
      PosteriorMatrix p(s, t);
      for (int i = 0; i < y.size(); ++i) {
        y.data()[i] = coin(rng);
        p.data()[i] = u(rng);
      }
      PermutationResult r = DiarizationLoss(y, p);
      std::vector<int> perm(s);
      std::iota(perm.begin(), perm.end(), 0);
      double best = INFINITY;
      do {
        best = std::min(best, OracleBce(y, p, perm));
      } while (std::next_permutation(perm.begin(), perm.end()));
      const double chosen = OracleBce(y, p, r.permutation);
      const double best_loss = best / (static_cast<double>(s) * t);
      worst_rel = std::max(worst_rel, std::abs(r.loss - best_loss) / best_loss);
      if (chosen != best || std::abs(r.loss - best_loss) > 1e-12 * best_loss) {
        ++loss_mismatch;
      }
      ++loss_cases;
    }
  }

  int perm_mismatch = 0, perm_cases = 0;
  for (int s = 2; s <= 7; ++s) {
    for (int n = 0; n < 1000; ++n) {
      Matrix ref(s, 20), est(s, 20);
      for (int i = 0; i < ref.size(); ++i) {
        ref.data()[i] = u(rng);
        est.data()[i] = u(rng);
      }
      std::vector<int> perm(s);
      std::iota(perm.begin(), perm.end(), 0);
      std::vector<int> best_perm;
      double best = -INFINITY;
      do {
        double c = MatrixCorrelation(ref, PermuteRows(est, perm));
        if (c > best) {
          best = c;
          best_perm = perm;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
      if (SolvePermutation(ref, est) != best_perm) ++perm_mismatch;
      ++perm_cases;
    }
  }
  const double elapsed = Seconds(start);
  Outcome o;
  o.pass = loss_mismatch == 0 && perm_mismatch == 0 && elapsed < 30.0;
  o.detail = Fmt("loss mismatches %.0f/%.0f (max rel diff %.1e), ", loss_mismatch,
                 loss_cases, worst_rel) +
             Fmt("alignment mismatches %.0f/%.0f, runtime %.2f s", perm_mismatch,
                 perm_cases, elapsed);
  return o;
}

// ----------------------------------------------------------------- 4

Outcome EigenratioCounting() {
  std::mt19937_64 rng(314);
  int wrong = 0, cases = 0, max_size = 0;
  for (int k = 2; k <= 8; ++k) {
    // Prototypes with pairwise cosine <= 0.25, below the 0.5 margin.
    GenConfig g;
    g.num_speakers = k;
    g.duration_s = 10;
    g.dim = 64;
    g.seed = 1000 + k;
    Scenario protos = GenerateScenario(g);
    for (int trial = 0; trial < 200; ++trial) {
      const int cap = std::max(2, 32 / k);
      std::uniform_int_distribution<int> size(2, cap);
      std::vector<int> sizes(k);
      for (int &x : sizes) x = size(rng);
      const int blocks = *std::max_element(sizes.begin(), sizes.end()) +
                         std::uniform_int_distribution<int>(0, 3)(rng);
      std::vector<RelativeEmbedding> emb;
      std::vector<int> per_block(blocks, 0);
      for (int s = 0; s < k; ++s) {
        std::vector<int> bs(blocks);
        std::iota(bs.begin(), bs.end(), 0);
        std::shuffle(bs.begin(), bs.end(), rng);
        for (int i = 0; i < sizes[s]; ++i) {
          emb.push_back({protos.speakers[s].prototype, bs[i], per_block[bs[i]]++});
        }
      }
      max_size = std::max<int>(max_size, emb.size());
      AffinityMatrix a = BuildAffinity(emb, 0.5);
      if (CountByEigenratio(EigenvaluesDesc(a.values)) != k) ++wrong;
      ++cases;
    }
  }
  Matrix m = Matrix::Zero(5, 5);
  m.topLeftCorner(3, 3).setOnes();
  m.bottomRightCorner(2, 2).setOnes();
  auto ev = EigenvaluesDesc(m);
  const int example = CountByEigenratio(ev);
  const bool spectrum = std::abs(ev[0] - 3) < 1e-12 && std::abs(ev[1] - 2) < 1e-12 &&
                        std::abs(ev[2]) < 1e-12 && std::abs(ev[4]) < 1e-12;
  Outcome o;
  o.pass = wrong == 0 && example == 2 && spectrum && max_size <= 32;
  o.detail = Fmt("wrong counts %.0f/%.0f (largest S* %.0f), block example count %.0f",
                 wrong, cases, max_size, example);
  return o;
}

// ----------------------------------------------------------------- 5

Outcome UnlimitedSpeakers() {
  GenConfig g;
  g.num_speakers = 6;
  g.duration_s = 300;
  g.seed = 606;
  Scenario s = GenerateScenario(g);
  SegmentAnnotation ref = ScenarioAnnotation(s);
  Outcome o;
  std::ostringstream detail;
  for (double sigma : {0.0, 0.05}) {
    RunConfig c;
    c.noise_sigma = sigma;
    c.cap = 4;
    RunResult local = RunScenario(c, s);
    const double der = ComputeDer(ref, local.annotation, 0.0).der;
    c.global_only = true;
    RunResult global = RunScenario(c, s);
    const bool ok = local.estimated_speakers == 6 && local.active_speakers == 6 &&
                    der < 0.02 && global.estimated_speakers == 4;
    o.pass &= ok;
    detail << Fmt("sigma=%.2f: count %.0f, DER %.2f%%, global-only count %.0f; ",
                  sigma, local.estimated_speakers, der * 100,
                  global.estimated_speakers);
  }
  o.detail = detail.str();
  o.detail.resize(o.detail.size() - 2);
  return o;
}

// ----------------------------------------------------------------- 6

Outcome OnlineOfflineGap() {
  struct Row {
    int speakers;
    double offline, online;
  };
  std::vector<std::future<Row>> jobs;
  for (int i = 0; i < 20; ++i) {
    jobs.push_back(std::async(std::launch::async, [i] {
      GenConfig g;
      g.num_speakers = 2 + i % 5;
      g.duration_s = 300;
      g.seed = 5000 + i;
      Scenario s = GenerateScenario(g);
      SegmentAnnotation ref = ScenarioAnnotation(s);
      RunConfig c;
      c.noise_sigma = 0.05;
      c.seed = i;
      const double off = ComputeDer(ref, RunScenario(c, s).annotation, 0.0).der;
      c.mode = RunMode::kOnlineBw;
      const double on = ComputeDer(ref, RunScenario(c, s).annotation, 0.0).der;
      return Row{g.num_speakers, off, on};
    }));
  }
  double worst = -INFINITY, mean_off = 0, mean_on = 0;
  for (auto &j : jobs) {
    Row r = j.get();
    worst = std::max(worst, r.online - r.offline);
    mean_off += r.offline / 20;
    mean_on += r.online / 20;
  }
  Outcome o;
  o.pass = worst <= 0.03;
  o.detail = Fmt("worst gap %.2f points, mean DER offline %.2f%% online %.2f%%",
                 worst * 100, mean_off * 100, mean_on * 100);
  return o;
}

// ----------------------------------------------------------------- 7

Outcome ColdStart() {
  int checked = 0, failures = 0;
  for (std::uint64_t seed = 0; seed < 40 && checked < 10; ++seed) {
    GenConfig g;
    g.num_speakers = 2 + seed % 4;
    g.duration_s = 60;
    g.seed = 700 + seed;
    Scenario s = GenerateScenario(g);
    ActivityMatrix truth = ScenarioActivity(s);
    if (!truth.leftCols(10).any()) continue;
    ++checked;
    for (RunMode mode : {RunMode::kOnlineFw, RunMode::kOnlineBw}) {
      RunConfig c;
      c.mode = mode;
      c.seed = seed;
      auto stream = MakeStreaming(c, MakeEngine(c, &s));
      ChunkOutput out = stream->Push(FrameIndexFeatures(0, 10));
      const bool detected =
          out.posteriors.rows() > 0 && out.posteriors.maxCoeff() >= c.threshold;
      if (out.posteriors.cols() != 10 || !detected) ++failures;
    }
  }
  Outcome o;
  o.pass = checked >= 5 && failures == 0;
  o.detail = Fmt("%.0f scenarios with speech in the first second, %.0f failing first chunks",
                 checked, failures);
  return o;
}

// ----------------------------------------------------------------- 8

Outcome RtfPlateau() {
  GenConfig g;
  g.duration_s = 300;
  g.seed = 808;
  Scenario s = GenerateScenario(g);
  RunConfig c;
  c.mode = RunMode::kOnlineBw;
  c.seed = 8;
  auto engine = MakeEngine(c, &s);
  RtfSeries series = RtfBenchmark([&] { return MakeStreaming(c, engine); },
                                  FrameIndexFeatures(0, s.duration_frames),
                                  c.chunk_len, c.buffer_len, 1.0 / kFrameSeconds, 5);
  auto steady = series.SteadyRtf();
  auto filling = series.FillingRtf();
  const double median = steady.empty() ? 0.0 : Median(steady);
  const double peak = steady.empty() ? 0.0 : *std::max_element(steady.begin(), steady.end());
  const double slope = TrendSlope(filling);
  Outcome o;
  o.pass = !steady.empty() && peak <= 1.5 * median && slope >= 0.0;
  o.detail = Fmt("fill at step %.0f, steady median RTF %.5f max %.5f (ratio %.2f)",
                 series.fill_step, median, peak, median > 0 ? peak / median : 0) +
             Fmt(", pre-fill slope %.2e per step", slope);
  return o;
}

// ----------------------------------------------------------------- 9

Outcome ScorerCorrectness() {
  SegmentAnnotation ref{"rec", {{"A", 0.0, 10.0}}};
  SegmentAnnotation hyp{"rec", {{"A", 0.0, 8.0}, {"B", 8.0, 10.0}}};
  DerReport hand = ComputeDer(ref, hyp, 0.0);
  bool hand_ok = hand.miss == 0.0 && hand.false_alarm == 0.0 &&
                 std::abs(hand.confusion - 0.2) < 1e-12 &&
                 std::abs(hand.der - 0.2) < 1e-12;
  bool identity = hand.der == hand.miss + hand.false_alarm + hand.confusion;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> start(0.0, 30.0), len(0.1, 5.0);
  int monotone_fail = 0;
  for (int n = 0; n < 100; ++n) {
    SegmentAnnotation r{"rec", {}}, h{"rec", {}};
    for (int s = 0; s < 1 + n % 4; ++s) {
      for (int k = 0; k < 4; ++k) {
        double b = start(rng);
        r.segments.push_back({"r" + std::to_string(s), b, b + len(rng)});
        b = start(rng);
        h.segments.push_back({"h" + std::to_string(s), b, b + len(rng)});
      }
    }
    double prev_scored = INFINITY, prev_err = INFINITY;
    for (double collar : {0.0, 0.1, 0.25, 0.5, 1.0}) {
      DerReport d = ComputeDer(r, h, collar);
      identity &= d.der == d.miss + d.false_alarm + d.confusion;
      const double err = d.miss_seconds + d.false_alarm_seconds + d.confusion_seconds;
      if (d.scored_time > prev_scored + 1e-9 || err > prev_err + 1e-9) ++monotone_fail;
      prev_scored = d.scored_time;
      prev_err = err;
    }
  }
  Outcome o;
  o.pass = hand_ok && identity && monotone_fail == 0;
  o.detail = Fmt("hand case DER %.6f, decomposition identity ", hand.der) +
             (identity ? "exact" : "violated") +
             Fmt(", collar monotonicity failures %.0f/100", monotone_fail);
  return o;
}

// ---------------------------------------------------------------- 10

Outcome Determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "eend_gla_acceptance";
  fs::create_directories(dir);
  const std::string cli = EEND_GLA_CLI_PATH;
  const std::string scenario = (dir / "scenario.json").string();
  auto sh = [](const std::string &cmd) { return std::system(cmd.c_str()); };
  Outcome o;
  if (sh("\"" + cli + "\" generate --speakers 5 --duration 120 --seed 7 --out \"" +
         scenario + "\"") != 0) {
    o.pass = false;
    o.detail = "scenario generation failed";
    return o;
  }
  int identical = 0, runs = 0;
  for (const char *mode : {"offline", "online-fw", "online-bw"}) {
    std::vector<std::string> rttm, report;
    for (int rep = 0; rep < 2; ++rep) {
      const std::string base = (dir / (std::string(mode) + std::to_string(rep))).string();
      const int rc = sh("\"" + cli + "\" run --scenario \"" + scenario + "\" --mode " +
                        mode + " --sigma 0.05 --seed 7 --out \"" + base +
                        ".rttm\" --report \"" + base + ".json\"");
      if (rc != 0) {
        o.pass = false;
        o.detail = std::string("run failed in mode ") + mode;
        return o;
      }
      rttm.push_back(ReadFileBytes(base + ".rttm"));
      report.push_back(ReadFileBytes(base + ".json"));
    }
    ++runs;
    if (rttm[0] == rttm[1] && report[0] == report[1] && !rttm[0].empty()) ++identical;
  }
  fs::remove_all(dir);
  o.pass = identical == runs;
  o.detail = Fmt("%.0f/%.0f modes byte-identical across two runs", identical, runs);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char *name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"sampling weights worked example", SamplingWeightsExample},
      {"variable chunk reshaping arithmetic", VctArithmetic},
      {"assignment equals exhaustive permutation search", PermutationOracles},
      {"eigenratio speaker counting", EigenratioCounting},
      {"more speakers than the per-block cap", UnlimitedSpeakers},
      {"online vs offline DER gap", OnlineOfflineGap},
      {"cold start first chunk", ColdStart},
      {"real-time factor plateau", RtfPlateau},
      {"scorer correctness", ScorerCorrectness},
      {"full-run determinism", Determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].check();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1,
                criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
