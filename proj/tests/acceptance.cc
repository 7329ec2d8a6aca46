// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   tasksim_acceptance [--trials N] [--work-dir DIR] [--jobs J]
//                      [--only 1,2,...] [--config FILE]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tasksim/ansat.h"
#include "tasksim/attribution.h"
#include "tasksim/classifier.h"
#include "tasksim/corpus.h"
#include "tasksim/gbt.h"
#include "tasksim/parallel.h"
#include "tasksim/pipeline.h"
#include "tasksim/text_io.h"

namespace fs = std::filesystem;
using namespace tasksim;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness against central finite differences.

std::vector<std::int32_t> RandomDoc(std::mt19937_64& rng, std::size_t vocab,
                                    int max_len) {
  std::uniform_int_distribution<int> len(1, max_len);
  std::uniform_int_distribution<std::int32_t> term(
      0, static_cast<std::int32_t>(vocab) - 1);
  std::vector<std::int32_t> doc(static_cast<std::size_t>(len(rng)));
  for (auto& t : doc) t = term(rng);
  return doc;
}

ModelDims RandomDims(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> v(4, 24), e(2, 6), h(2, 8);
  ModelDims d;
  d.vocab = v(rng);
  d.embed = e(rng);
  d.hidden = h(rng);
  return d;
}

double Loss(const ClassifierParams& p, std::span<const std::int32_t> doc,
            int label) {
  return BinaryCrossEntropy(Forward(p, doc).probability, label);
}

Verdict Criterion1() {
  std::mt19937_64 rng(101);
  const double h = 1e-6;
  double worst = 0.0;
  int failures = 0;
  for (int c = 0; c < 100; ++c) {
    const auto dims = RandomDims(rng);
    auto params = ClassifierParams::Random(dims, rng(), 0.5);
    const auto doc = RandomDoc(rng, dims.vocab, 12);
    const int label = static_cast<int>(rng() % 2);
    const auto grad = Backward(params, doc, label);
    for (std::size_t i = 0; i < params.ParameterCount(); ++i) {
      const double saved = params.FlatAt(i);
      params.FlatAt(i) = saved + h;
      const double up = Loss(params, doc, label);
      params.FlatAt(i) = saved - h;
      const double down = Loss(params, doc, label);
      params.FlatAt(i) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad.FlatAt(i);
      const double abs_err = std::abs(numeric - analytic);
      if (abs_err <= 1e-8) continue;
      const double rel = abs_err / std::max(std::abs(numeric), std::abs(analytic));
      worst = std::max(worst, rel);
      if (rel > 1e-5) ++failures;
    }
  }
  return {failures == 0,
          fmt::format("100 cases, worst relative error {:.2e}, {} failures",
                      worst, failures)};
}

// ---------------------------------------------------------------------------
// 2. IG and conductance completeness at 256 steps.

Verdict Criterion2() {
  std::mt19937_64 rng(202);
  double worst_ig = 0.0;
  double worst_cond = 0.0;
  for (int c = 0; c < 50; ++c) {
    const auto dims = RandomDims(rng);
    const auto params = ClassifierParams::Random(dims, rng(), 0.5);
    const auto doc = RandomDoc(rng, dims.vocab, 12);
    IGConfig cfg;
    cfg.steps = 256;
    cfg.baseline = c % 2 == 0 ? Baseline::kZeroEmbedding
                              : Baseline::kMeanEmbedding;
    // Output difference computed directly from the forward pass.
    const double at_input = Forward(params, doc).probability;
    std::vector<double> baseline(dims.embed, 0.0);
    if (cfg.baseline == Baseline::kMeanEmbedding) {
      for (std::size_t w = 0; w < dims.vocab; ++w) {
        for (std::size_t d = 0; d < dims.embed; ++d) {
          baseline[d] += params.embed_at(w, d) / static_cast<double>(dims.vocab);
        }
      }
    }
    const double delta = at_input - ForwardPooled(params, baseline).probability;

    const auto ig = IntegratedGradients(params, doc, cfg);
    double ig_sum = 0.0;
    for (double s : ig.scores) ig_sum += s;
    worst_ig = std::max(worst_ig, std::abs(ig_sum - delta));

    for (auto layer : kAllLayers) {
      const auto cond = ComputeLayerConductance(params, doc, layer, cfg);
      double sum = 0.0;
      for (double v : cond.values) sum += v;
      worst_cond = std::max(worst_cond, std::abs(sum - delta));
    }
  }
  return {worst_ig <= 1e-4 && worst_cond <= 1e-3,
          fmt::format("50 cases, worst IG gap {:.2e} (<= 1e-4), worst layer "
                      "conductance gap {:.2e} (<= 1e-3)",
                      worst_ig, worst_cond)};
}

// ---------------------------------------------------------------------------
// 3. ANSAT against a brute-force count.

double BruteForceAnsat(const std::map<std::string, std::map<std::string, double>>& a,
                       const std::map<std::string, std::map<std::string, double>>& b,
                       const std::vector<Document>& docs, double tat) {
  if (docs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& doc : docs) {
    std::set<std::string> seen;
    for (const auto& token : doc.tokens) {
      if (!seen.insert(token).second) continue;
      const auto& sa = a.at(doc.id);
      const auto& sb = b.at(doc.id);
      const double va = sa.count(token) ? sa.at(token) : 0.0;
      const double vb = sb.count(token) ? sb.at(token) : 0.0;
      if (va >= tat && vb >= tat) total += 1.0;
    }
  }
  return total / static_cast<double>(docs.size());
}

Verdict Criterion3() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> score(-1.0, 1.0);
  const auto grid = TatGrid::Default().thresholds;
  int mismatches = 0;
  int monotone_violations = 0;
  int symmetry_violations = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const int vocab = 3 + static_cast<int>(rng() % 12);
    const int n_docs = static_cast<int>(rng() % 6);  // includes empty D
    std::vector<Document> docs;
    std::map<std::string, std::map<std::string, double>> raw_a, raw_b;
    AttributionSet set_a, set_b;
    for (int d = 0; d < n_docs; ++d) {
      Document doc;
      doc.id = fmt::format("d{}", d);
      const int len = 1 + static_cast<int>(rng() % 10);
      for (int i = 0; i < len; ++i) {
        doc.tokens.push_back(fmt::format("w{}", rng() % vocab));
      }
      for (auto* side : {&raw_a, &raw_b}) {
        auto& scores = (*side)[doc.id];
        for (const auto& t : doc.tokens) {
          // Round scores onto the TAT lattice now and then to exercise ties.
          double s = score(rng);
          if (rng() % 4 == 0) s = grid[rng() % grid.size()];
          scores[t] = s;
        }
      }
      AttributionRecord ra, rb;
      ra.doc_id = rb.doc_id = doc.id;
      ra.term_scores = raw_a[doc.id];
      rb.term_scores = raw_b[doc.id];
      set_a[doc.id] = ra;
      set_b[doc.id] = rb;
      docs.push_back(doc);
    }
    std::vector<const Document*> ptrs;
    for (const auto& d : docs) ptrs.push_back(&d);

    double previous = INFINITY;
    for (double tat : grid) {
      const auto ab = Ansat(set_a, set_b, ptrs, tat);
      const auto ba = Ansat(set_b, set_a, ptrs, tat);
      const double oracle = BruteForceAnsat(raw_a, raw_b, docs, tat);
      if (ab.value != oracle || ab.empty_docset != docs.empty()) ++mismatches;
      if (ab.value != ba.value) ++symmetry_violations;
      if (ab.value > previous) ++monotone_violations;
      previous = ab.value;
    }
  }
  return {mismatches == 0 && monotone_violations == 0 &&
              symmetry_violations == 0,
          fmt::format("1000 instances x {} thresholds: {} oracle mismatches, "
                      "{} monotonicity and {} symmetry violations",
                      grid.size(), mismatches, monotone_violations,
                      symmetry_violations)};
}

// ---------------------------------------------------------------------------
// 4. Boosting.

struct OracleStump {
  double threshold = 0.0;
  double left = 0.0;   // prediction for x < threshold
  double right = 0.0;
};

// Exhaustive search minimising the regularised second-order objective of one
// round of squared-error boosting from a constant base score.
std::optional<OracleStump> StumpOracle(const std::vector<double>& x,
                                       const std::vector<double>& y,
                                       double base, const GbtConfig& cfg) {
  std::vector<double> values = x;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  auto leaf_objective = [&](double g, double h) {
    const double w = -g / (h + cfg.lambda);
    return g * w + 0.5 * (h + cfg.lambda) * w * w;
  };
  double g_all = 0.0, h_all = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    g_all += base - y[i];
    h_all += 1.0;
  }
  const double no_split = leaf_objective(g_all, h_all);
  std::optional<OracleStump> best;
  double best_obj = no_split;
  for (std::size_t k = 0; k + 1 < values.size(); ++k) {
    const double thr = values[k] + (values[k + 1] - values[k]) / 2.0;
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (x[i] < thr) {
        gl += base - y[i];
        hl += 1.0;
      } else {
        gr += base - y[i];
        hr += 1.0;
      }
    }
    if (hl < cfg.min_child_weight || hr < cfg.min_child_weight) continue;
    const double obj = leaf_objective(gl, hl) + leaf_objective(gr, hr);
    if (obj < best_obj) {
      best_obj = obj;
      best = OracleStump{thr, base + cfg.eta * (-gl / (hl + cfg.lambda)),
                         base + cfg.eta * (-gr / (hr + cfg.lambda))};
    }
  }
  return best;
}

Verdict Criterion4() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> normal;
  int stump_mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    Dataset data;
    data.n_features = 1;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so that repeated feature values occur.
      const double xi = std::round(normal(rng) * 4.0) / 4.0;
      const double yi = normal(rng);
      x.push_back(xi);
      y.push_back(yi);
      data.AddRow(std::vector<double>{xi}, yi);
    }
    GbtConfig cfg;
    cfg.rounds = 1;
    cfg.max_depth = 1;
    cfg.eta = 0.3;
    cfg.lambda = trial % 3 == 0 ? 0.0 : 1.0;
    cfg.min_child_weight = 0.0;
    double base = 0.0;
    for (double v : y) base += v;
    base /= static_cast<double>(n);
    cfg.base_score = base;
    const auto model = FitGbt(data, cfg);
    const auto oracle = StumpOracle(x, y, base, cfg);
    const auto& root = model.trees.at(0).nodes.at(0);
    if (!oracle) {
      if (root.feature != -1) ++stump_mismatches;
      continue;
    }
    if (root.feature != 0 || root.threshold != oracle->threshold) {
      ++stump_mismatches;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double expect = x[i] < oracle->threshold ? oracle->left : oracle->right;
      if (model.PredictRaw(std::vector<double>{x[i]}) != expect) {
        ++stump_mismatches;
        break;
      }
    }
  }

  int rmse_violations = 0;
  for (int d = 0; d < 20; ++d) {
    Dataset data;
    data.n_features = 1 + rng() % 5;
    const std::size_t n = 10 + rng() % 60;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(data.n_features);
      for (auto& v : row) v = normal(rng);
      data.AddRow(row, row[0] * row[0] - row.back() + 0.3 * normal(rng));
    }
    GbtConfig cfg;
    cfg.rounds = 50;
    cfg.max_depth = 1 + d % 4;
    cfg.gamma = 0.0;
    FitTrace trace;
    FitGbt(data, cfg, {}, &trace);
    for (std::size_t r = 1; r < trace.train_rmse.size(); ++r) {
      if (trace.train_rmse[r] > trace.train_rmse[r - 1]) ++rmse_violations;
    }
  }

  Dataset four;
  four.n_features = 1;
  const double xs[] = {0.0, 1.0, 2.0, 3.0};
  const double ys[] = {0.0, 0.0, 1.0, 1.0};
  for (int i = 0; i < 4; ++i) four.AddRow(std::vector<double>{xs[i]}, ys[i]);
  GbtConfig cfg;
  cfg.rounds = 100;
  cfg.eta = 0.3;
  cfg.min_child_weight = 0.0;
  const auto model = FitGbt(four, cfg);
  double max_err = 0.0;
  for (int i = 0; i < 4; ++i) {
    max_err = std::max(
        max_err, std::abs(model.PredictRaw(std::vector<double>{xs[i]}) - ys[i]));
  }
  return {stump_mismatches == 0 && rmse_violations == 0 && max_err <= 1e-3,
          fmt::format("200 stumps: {} oracle mismatches; 20 datasets: {} RMSE "
                      "increases; separable 4-point max error {:.1e}",
                      stump_mismatches, rmse_violations, max_err)};
}

// ---------------------------------------------------------------------------
// 5-8. Pipeline trials on the reference configuration.

struct Trial {
  std::uint64_t seed = 0;
  PipelineResult result;
  fs::path dir;
};

const BudgetCurve& CurveOf(const PipelineResult& r, FeatureMode mode) {
  for (const auto& c : r.budget_curves) {
    if (c.mode == mode) return c;
  }
  throw std::runtime_error("missing budget curve");
}

Verdict Criterion5(const std::vector<Trial>& trials) {
  int passing = 0;
  std::string detail;
  for (const auto& t : trials) {
    const std::size_t pool =
        t.result.predictions.at(FeatureMode::kF1Ansat).size();
    std::map<std::size_t, std::map<FeatureMode, double>> by_k;
    for (const auto& row : t.result.rmse_curve) by_k[row.k][row.mode] = row.rmse;
    bool ok = true;
    int checked = 0;
    double worst_margin = INFINITY;
    for (const auto& [k, modes] : by_k) {
      if (static_cast<double>(k) < 0.6 * static_cast<double>(pool)) continue;
      ++checked;
      const double margin =
          modes.at(FeatureMode::kF1) - modes.at(FeatureMode::kF1Ansat);
      worst_margin = std::min(worst_margin, margin);
      if (!(margin > 0.0)) ok = false;
    }
    if (checked == 0) ok = false;
    passing += ok;
    detail += fmt::format(" {}{:+.3f}", ok ? "" : "!", worst_margin);
  }
  return {passing >= 7,
          fmt::format("{}/{} trials with RMSE(F1+ANSAT) < RMSE(F1) at every "
                      "k >= 60% of pool; min margins:{}",
                      passing, trials.size(), detail)};
}

Verdict Criterion6(const std::vector<Trial>& trials) {
  int passing = 0;
  bool summary_ok = true;
  std::string detail;
  for (const auto& t : trials) {
    const auto& curve = CurveOf(t.result, FeatureMode::kF1Ansat);
    const double tol[] = {0.05};
    const auto r = RuntimeReductions(curve, tol).front();
    const bool ok = r.k > 0 && r.runtime_reduction_pct >= 50.0;
    passing += ok;
    detail += fmt::format(" {}{:.0f}%", ok ? "" : "!", r.runtime_reduction_pct);

    const auto summary =
        nlohmann::json::parse(ReadFile(t.dir / artifacts::kSummary));
    std::set<double> reported;
    for (const auto& entry : summary.at("budget").at("F1+ANSAT").at("tolerances")) {
      if (entry.contains("runtime_reduction_pct")) {
        reported.insert(entry.at("f1_loss_tolerance").get<double>());
      }
    }
    if (reported != std::set<double>{0.0, 0.05, 0.10}) summary_ok = false;
  }
  return {passing >= 7 && summary_ok,
          fmt::format("{}/{} trials reach 95% of the oracle within 50% of "
                      "full-grid runtime; summary reports 0/5/10% tolerances: "
                      "{}; reductions:{}",
                      passing, trials.size(), summary_ok ? "yes" : "no",
                      detail)};
}

Verdict Criterion7(const std::vector<Trial>& trials) {
  int passing = 0;
  std::string detail;
  for (const auto& t : trials) {
    const bool ok = t.result.transfer_spearman >= 0.3;
    passing += ok;
    detail += fmt::format(" {}{:.2f}", ok ? "" : "!", t.result.transfer_spearman);
  }
  return {passing >= 7,
          fmt::format("{}/{} seeds with Spearman(ANSAT(D_AB, 0.05), transfer "
                      "gain) >= 0.3:{}",
                      passing, trials.size(), detail)};
}

Verdict Criterion8(const PipelineConfig& base, const fs::path& work,
                   int jobs) {
  const fs::path a = work / "determinism_a";
  const fs::path b = work / "determinism_b";
  fs::remove_all(a);
  fs::remove_all(b);
  auto config = base;
  config.jobs = 1;
  const auto ra = RunPipeline(config, a);
  config.jobs = std::max(2, jobs);
  const auto rb = RunPipeline(config, b);
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < ra.report_files.size(); ++i) {
    if (ReadFile(ra.report_files[i]) != ReadFile(rb.report_files[i])) {
      differing.push_back(ra.report_files[i].filename().string());
    }
  }
  std::string files;
  for (const auto& p : ra.report_files) files += " " + p.filename().string();
  return {differing.empty(),
          differing.empty()
              ? fmt::format("byte-identical across two fresh runs (jobs 1 vs "
                            "{}):{}",
                            std::max(2, jobs), files)
              : fmt::format("differing files: {}", fmt::join(differing, " "))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tasksim acceptance suite"};
  int trials = 10;
  std::string work_dir = "acceptance_work";
  int jobs = 0;
  std::vector<int> only;
  std::string config_path;
  app.add_option("--trials", trials)->check(CLI::PositiveNumber);
  app.add_option("--work-dir", work_dir);
  app.add_option("--jobs", jobs, "0: all cores");
  app.add_option("--only", only)->delimiter(',');
  app.add_option("--config", config_path)->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);
  if (jobs <= 0) jobs = HardwareJobs();
  auto wanted = [&](int c) {
    return only.empty() || std::find(only.begin(), only.end(), c) != only.end();
  };
  const PipelineConfig base =
      config_path.empty() ? ReferenceConfig() : LoadPipelineConfig(config_path);

  int failures = 0;
  auto report = [&](int id, const Verdict& v, double seconds) {
    fmt::print("{} criterion {}: {} [{:.1f}s]\n", v.pass ? "PASS" : "FAIL", id,
               v.detail, seconds);
    std::fflush(stdout);
    if (!v.pass) ++failures;
  };
  auto run = [&](int id, const std::function<Verdict()>& fn) {
    if (!wanted(id)) return;
    const auto start = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    report(id, v, Seconds(start));
  };

  run(1, Criterion1);
  run(2, Criterion2);
  run(3, Criterion3);
  run(4, Criterion4);

  if (wanted(5) || wanted(6) || wanted(7)) {
    const auto start = Clock::now();
    std::vector<Trial> results;
    std::string error;
    try {
      for (int i = 0; i < trials; ++i) {
        auto config = base;
        config.seed = base.seed + static_cast<std::uint64_t>(i);
        config.gbt.seed = config.seed;
        config.jobs = jobs;
        if (config.tat.thresholds.front() != 0.05) {
          throw std::runtime_error("first TAT must be 0.05");
        }
        const fs::path dir = fs::path(work_dir) / fmt::format("seed_{}", config.seed);
        results.push_back({config.seed, RunPipeline(config, dir), dir});
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double seconds = Seconds(start);
    fmt::print("pipeline trials: {} in {:.1f}s\n", results.size(), seconds);
    auto judge = [&](int id, const std::function<Verdict()>& fn) {
      if (!wanted(id)) return;
      if (!error.empty()) {
        report(id, {false, "pipeline failed: " + error}, 0.0);
        return;
      }
      const auto t0 = Clock::now();
      report(id, fn(), Seconds(t0));
    };
    judge(5, [&] { return Criterion5(results); });
    judge(6, [&] { return Criterion6(results); });
    judge(7, [&] { return Criterion7(results); });
  }

  run(8, [&] { return Criterion8(base, work_dir, jobs); });
  return failures == 0 ? 0 : 1;
}
