// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/attribution.h"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "json.hpp"
#include "tasksim/common.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

using nlohmann::json;

std::string_view BaselineName(Baseline baseline) {
  return baseline == Baseline::kZeroEmbedding ? "zero-embedding"
                                              : "mean-embedding";
}

Baseline ParseBaseline(std::string_view name) {
  if (name == "zero-embedding") return Baseline::kZeroEmbedding;
  if (name == "mean-embedding") return Baseline::kMeanEmbedding;
  throw ValidationError(fmt::format("unknown baseline '{}'", name));
}

void IGConfig::Validate() const {
  if (steps < 8) {
    throw ValidationError(fmt::format("IG steps must be >= 8, got {}", steps));
  }
}

TermCounts CountTerms(std::span<const std::int32_t> term_ids) {
  std::vector<std::int32_t> sorted(term_ids.begin(), term_ids.end());
  std::sort(sorted.begin(), sorted.end());
  TermCounts out;
  out.length = static_cast<int>(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    out.terms.push_back(sorted[i]);
    out.counts.push_back(static_cast<int>(j - i));
    i = j;
  }
  return out;
}

double TermScores::ScoreOf(std::int32_t term) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), term);
  if (it == terms.end() || *it != term) return 0.0;
  return scores[static_cast<std::size_t>(it - terms.begin())];
}

double LayerConductance::Conduct(std::size_t term_index) const {
  double sum = 0.0;
  for (std::size_t u = 0; u < units; ++u) sum += At(term_index, u);
  return sum;
}

double LayerConductance::ConductOf(std::int32_t term) const {
  auto it = std::lower_bound(terms.begin(), terms.end(), term);
  if (it == terms.end() || *it != term) return 0.0;
  return Conduct(static_cast<std::size_t>(it - terms.begin()));
}

namespace {

// The straight-line path from the baseline to the input lives entirely in
// the pooled space: every position of term w moves from b to e_w, so the
// pooled vector moves by sum_w delta_w with delta_w = (c_w / n)(e_w - b).
struct PathSetup {
  TermCounts counts;
  std::vector<double> baseline;  // pooled baseline, size embed
  std::vector<double> input;     // pooled input, size embed
  std::vector<double> deltas;    // terms x embed
};

PathSetup SetupPath(const ClassifierParams& params,
                    std::span<const std::int32_t> term_ids,
                    const IGConfig& cfg) {
  cfg.Validate();
  const auto& dims = params.dims;
  if (term_ids.empty()) throw ValidationError("empty document");
  for (auto id : term_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= dims.vocab) {
      throw ValidationError(fmt::format(
          "term id {} outside vocabulary of size {}", id, dims.vocab));
    }
  }
  PathSetup s;
  s.counts = CountTerms(term_ids);
  s.baseline.assign(dims.embed, 0.0);
  if (cfg.baseline == Baseline::kMeanEmbedding && dims.vocab > 0) {
    for (std::size_t t = 0; t < dims.vocab; ++t) {
      for (std::size_t d = 0; d < dims.embed; ++d) {
        s.baseline[d] += params.embed_at(t, d);
      }
    }
    for (auto& b : s.baseline) b /= static_cast<double>(dims.vocab);
  }
  const std::size_t n_terms = s.counts.terms.size();
  s.deltas.assign(n_terms * dims.embed, 0.0);
  s.input = s.baseline;
  for (std::size_t w = 0; w < n_terms; ++w) {
    const double share = static_cast<double>(s.counts.counts[w]) /
                         static_cast<double>(s.counts.length);
    const auto term = static_cast<std::size_t>(s.counts.terms[w]);
    for (std::size_t d = 0; d < dims.embed; ++d) {
      const double delta = share * (params.embed_at(term, d) - s.baseline[d]);
      s.deltas[w * dims.embed + d] = delta;
      s.input[d] += delta;
    }
  }
  return s;
}

double AttributedOutput(const ForwardResult& f, AttributionTarget target) {
  return target == AttributionTarget::kProbability ? f.probability : f.logit;
}

double OutputSlope(const ForwardResult& f, AttributionTarget target) {
  return target == AttributionTarget::kProbability
             ? f.probability * (1.0 - f.probability)
             : 1.0;
}

std::vector<double> PathPoint(const PathSetup& s, double alpha) {
  std::vector<double> p(s.baseline.size());
  for (std::size_t d = 0; d < p.size(); ++d) {
    p[d] = s.baseline[d] + alpha * (s.input[d] - s.baseline[d]);
  }
  return p;
}

// One integration cell [lo, hi] of the path parameter, evaluated at `at`.
struct Cell {
  double lo = 0.0;
  double hi = 0.0;
  double at = 0.0;
};

// kRight: the uniform cells k/steps. kMidpoint: [0, 1] is first cut where a
// hidden pre-activation crosses zero, since the gradient jumps there, and
// each smooth piece gets a share of `steps` proportional to its length.
std::vector<Cell> PathCells(const ClassifierParams& params,
                            const PathSetup& s, const IGConfig& cfg) {
  const int m = cfg.steps;
  std::vector<Cell> cells;
  if (cfg.rule == PathRule::kRight) {
    for (int k = 1; k <= m; ++k) {
      const double lo = static_cast<double>(k - 1) / m;
      const double hi = static_cast<double>(k) / m;
      cells.push_back({lo, hi, hi});
    }
    return cells;
  }
  std::vector<double> cuts = {0.0, 1.0};
  if (params.activation == Activation::kRelu) {
    const auto z0 = ForwardPooled(params, s.baseline).pre_activation;
    const auto z1 = ForwardPooled(params, s.input).pre_activation;
    for (std::size_t j = 0; j < z0.size(); ++j) {
      const double dz = z1[j] - z0[j];
      if (dz == 0.0) continue;
      const double a = -z0[j] / dz;
      if (a > 0.0 && a < 1.0) cuts.push_back(a);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  }
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i];
    const double len = cuts[i + 1] - lo;
    const int n = std::max(1, static_cast<int>(std::lround(len * m)));
    for (int k = 0; k < n; ++k) {
      const double a = lo + len * k / n;
      const double b = k + 1 == n ? cuts[i + 1] : lo + len * (k + 1) / n;
      cells.push_back({a, b, a + (b - a) / 2.0});
    }
  }
  return cells;
}

}  // namespace

OutputGap ComputeOutputGap(const ClassifierParams& params,
                           std::span<const std::int32_t> term_ids,
                           const IGConfig& cfg) {
  auto s = SetupPath(params, term_ids, cfg);
  OutputGap gap;
  gap.at_input = AttributedOutput(ForwardPooled(params, s.input), cfg.target);
  gap.at_baseline =
      AttributedOutput(ForwardPooled(params, s.baseline), cfg.target);
  return gap;
}

LayerConductance ComputeLayerConductance(const ClassifierParams& params,
                                         std::span<const std::int32_t> term_ids,
                                         Layer layer, const IGConfig& cfg) {
  const auto s = SetupPath(params, term_ids, cfg);
  const auto& dims = params.dims;
  const std::size_t n_terms = s.counts.terms.size();

  LayerConductance out;
  out.layer = layer;
  out.terms = s.counts.terms;

  if (layer == Layer::kEmbeddingPool) {
    // Pooled units are linear in the path parameter, so the per-segment
    // change attributable to w on unit d is exactly delta_wd / m.
    out.units = dims.embed;
    std::vector<double> mean_grad(dims.embed, 0.0);
    for (const auto& cell : PathCells(params, s, cfg)) {
      auto f = ForwardPooled(params, PathPoint(s, cell.at));
      const double slope = OutputSlope(f, cfg.target) * (cell.hi - cell.lo);
      for (std::size_t j = 0; j < dims.hidden; ++j) {
        const double back = slope * params.out_weights[j] *
                            ActivationSlope(params.activation,
                                            f.pre_activation[j]);
        if (back == 0.0) continue;
        for (std::size_t d = 0; d < dims.embed; ++d) {
          mean_grad[d] += back * params.weight_at(d, j);
        }
      }
    }
    out.values.assign(n_terms * dims.embed, 0.0);
    for (std::size_t w = 0; w < n_terms; ++w) {
      for (std::size_t d = 0; d < dims.embed; ++d) {
        out.values[w * dims.embed + d] =
            s.deltas[w * dims.embed + d] * mean_grad[d];
      }
    }
    return out;
  }

  // Hidden layer. a_wj is term w's share of the change of pre-activation z_j
  // over the whole path; it is constant per segment because the path is
  // straight and z is affine in the pooled vector.
  out.units = dims.hidden;
  std::vector<double> share(n_terms * dims.hidden, 0.0);
  std::vector<double> total_change(dims.hidden, 0.0);
  for (std::size_t w = 0; w < n_terms; ++w) {
    for (std::size_t d = 0; d < dims.embed; ++d) {
      const double delta = s.deltas[w * dims.embed + d];
      if (delta == 0.0) continue;
      for (std::size_t j = 0; j < dims.hidden; ++j) {
        share[w * dims.hidden + j] += params.weight_at(d, j) * delta;
      }
    }
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      total_change[j] += share[w * dims.hidden + j];
    }
  }

  // weight_j = sum over cells of dF/dh_j * (secant slope of h_j) * width.
  std::vector<double> unit_weight(dims.hidden, 0.0);
  for (const auto& cell : PathCells(params, s, cfg)) {
    const auto start = ForwardPooled(params, PathPoint(s, cell.lo));
    const auto end = ForwardPooled(params, PathPoint(s, cell.hi));
    const auto at = ForwardPooled(params, PathPoint(s, cell.at));
    const double slope = OutputSlope(at, cfg.target) * (cell.hi - cell.lo);
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      const double dz = end.pre_activation[j] - start.pre_activation[j];
      double secant;
      if (params.activation == Activation::kIdentity) {
        secant = 1.0;
      } else if (dz != 0.0) {
        secant = (end.hidden[j] - start.hidden[j]) / dz;
      } else {
        secant = ActivationSlope(params.activation, at.pre_activation[j]);
      }
      unit_weight[j] += slope * params.out_weights[j] * secant;
    }
  }

  out.values.assign(n_terms * dims.hidden, 0.0);
  for (std::size_t w = 0; w < n_terms; ++w) {
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      out.values[w * dims.hidden + j] =
          unit_weight[j] * share[w * dims.hidden + j];
    }
  }
  return out;
}

TermScores IntegratedGradients(const ClassifierParams& params,
                               std::span<const std::int32_t> term_ids,
                               const IGConfig& cfg) {
  // Summing the pooled-unit contributions over dimensions is exactly
  // (x_i - x'_i) . mean gradient for each position, aggregated per term.
  auto pooled = ComputeLayerConductance(params, term_ids,
                                        Layer::kEmbeddingPool, cfg);
  TermScores out;
  out.terms = pooled.terms;
  out.scores.resize(out.terms.size());
  for (std::size_t w = 0; w < out.terms.size(); ++w) {
    out.scores[w] = pooled.Conduct(w);
  }
  return out;
}

TermScores TermConductance(const ClassifierParams& params,
                           std::span<const std::int32_t> term_ids,
                           const IGConfig& cfg, std::span<const Layer> layers) {
  if (layers.empty()) throw ValidationError("empty layer set");
  TermScores out;
  for (auto layer : layers) {
    auto lc = ComputeLayerConductance(params, term_ids, layer, cfg);
    if (out.terms.empty()) {
      out.terms = lc.terms;
      out.scores.assign(out.terms.size(), 0.0);
    }
    for (std::size_t w = 0; w < out.terms.size(); ++w) {
      out.scores[w] += lc.Conduct(w);
    }
  }
  for (auto& score : out.scores) score /= static_cast<double>(layers.size());
  return out;
}

std::map<std::string, double> NormalizeMaxAbs(
    const std::map<std::string, double>& raw) {
  double max_abs = 0.0;
  for (const auto& [term, value] : raw) {
    max_abs = std::max(max_abs, std::fabs(value));
  }
  std::map<std::string, double> out;
  for (const auto& [term, value] : raw) {
    out[term] = max_abs > 0.0 ? value / max_abs : 0.0;
  }
  return out;
}

AttributionRecord AttributeDocument(const ClassifierParams& params,
                                    const std::vector<std::string>& vocabulary,
                                    const Document& doc,
                                    const std::string& task,
                                    const std::string& model_ref,
                                    const IGConfig& cfg) {
  if (vocabulary.size() != params.dims.vocab) {
    throw ValidationError(fmt::format(
        "model vocabulary size {} does not match corpus vocabulary size {}",
        params.dims.vocab, vocabulary.size()));
  }
  auto scores = TermConductance(params, doc.term_ids, cfg);
  auto gap = ComputeOutputGap(params, doc.term_ids, cfg);

  AttributionRecord record;
  record.doc_id = doc.id;
  record.task = task;
  record.model_ref = model_ref;
  record.steps = cfg.steps;
  record.baseline = std::string(BaselineName(cfg.baseline));
  double total = 0.0;
  for (std::size_t w = 0; w < scores.terms.size(); ++w) {
    const double value = scores.scores[w];
    if (!std::isfinite(value)) {
      throw RuntimeFailure(fmt::format("non-finite attribution for term '{}'",
                                       vocabulary[scores.terms[w]]));
    }
    record.raw_term_scores[vocabulary[scores.terms[w]]] = value;
    total += value;
  }
  record.term_scores = NormalizeMaxAbs(record.raw_term_scores);
  record.completeness_gap = std::fabs(total - gap.difference());
  return record;
}

std::vector<AttributionRecord> AttributeCorpus(
    const ClassifierParams& params, const std::vector<std::string>& vocabulary,
    std::span<const Document* const> docs, const std::string& task,
    const std::string& model_ref, const IGConfig& cfg, int jobs) {
  if (docs.empty()) throw ValidationError("no documents to attribute");
  std::vector<AttributionRecord> records(docs.size());
  ParallelFor(docs.size(), jobs, [&](std::size_t i) {
    try {
      records[i] =
          AttributeDocument(params, vocabulary, *docs[i], task, model_ref, cfg);
    } catch (const ValidationError& e) {
      throw ValidationError(
          fmt::format("document '{}': {}", docs[i]->id, e.what()));
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure(
          fmt::format("document '{}': {}", docs[i]->id, e.what()));
    }
  });
  return records;
}

std::string SerializeAttributionCache(
    std::span<const AttributionRecord> records) {
  std::string out;
  for (const auto& r : records) {
    json row;
    row["doc"] = r.doc_id;
    row["task"] = r.task;
    row["model"] = r.model_ref;
    row["scores"] = r.term_scores;
    row["raw"] = r.raw_term_scores;
    row["completeness_gap"] = r.completeness_gap;
    row["steps"] = r.steps;
    row["baseline"] = r.baseline;
    out += row.dump();
    out += '\n';
  }
  return out;
}

void WriteAttributionCache(std::span<const AttributionRecord> records,
                           const std::filesystem::path& path) {
  WriteFileAtomic(path, SerializeAttributionCache(records));
}

std::vector<AttributionRecord> ReadAttributionCache(
    const std::filesystem::path& path) {
  std::vector<AttributionRecord> records;
  auto lines = SplitLines(ReadFile(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      auto row = json::parse(lines[i]);
      AttributionRecord r;
      r.doc_id = row.at("doc").get<std::string>();
      r.task = row.at("task").get<std::string>();
      r.model_ref = row.at("model").get<std::string>();
      r.term_scores = row.at("scores").get<std::map<std::string, double>>();
      r.raw_term_scores = row.at("raw").get<std::map<std::string, double>>();
      r.completeness_gap = row.at("completeness_gap").get<double>();
      r.steps = row.at("steps").get<int>();
      r.baseline = row.at("baseline").get<std::string>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("{}:{}: bad attribution record: {}",
                                        path.string(), i + 1, e.what()));
    }
  }
  return records;
}

}  // namespace tasksim
