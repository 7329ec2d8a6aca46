// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_ATTRIBUTION_H_
#define TASKSIM_ATTRIBUTION_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tasksim/classifier.h"
#include "tasksim/corpus.h"

namespace tasksim {

enum class Baseline { kZeroEmbedding, kMeanEmbedding };
std::string_view BaselineName(Baseline baseline);
Baseline ParseBaseline(std::string_view name);

// Output being attributed. kProbability is the pipeline setting; kLogit makes
// the attributed function affine for identity-activation models.
enum class AttributionTarget { kProbability, kLogit };

// Path quadrature. kRight evaluates the gradient at alpha = k/steps.
// kMidpoint first cuts the path where a ReLU pre-activation changes sign,
// splits each piece into cells (about `steps` in total) and evaluates at
// cell midpoints.
enum class PathRule { kRight, kMidpoint };

struct IGConfig {
  int steps = 128;
  Baseline baseline = Baseline::kZeroEmbedding;
  AttributionTarget target = AttributionTarget::kProbability;
  PathRule rule = PathRule::kMidpoint;

  void Validate() const;
};

// The two internal layers attribution flows through.
enum class Layer { kEmbeddingPool = 0, kHidden = 1 };
inline constexpr std::array<Layer, 2> kAllLayers = {Layer::kEmbeddingPool,
                                                    Layer::kHidden};

// Unique terms of a document (ascending term id) with their multiplicity.
struct TermCounts {
  std::vector<std::int32_t> terms;
  std::vector<int> counts;
  int length = 0;
};
TermCounts CountTerms(std::span<const std::int32_t> term_ids);

// Per-term scores aligned with a TermCounts::terms list.
struct TermScores {
  std::vector<std::int32_t> terms;
  std::vector<double> scores;

  // 0 for terms not present in the document.
  double ScoreOf(std::int32_t term) const;
};

// Conductance contributions, terms x units, row-major.
struct LayerConductance {
  Layer layer = Layer::kEmbeddingPool;
  std::vector<std::int32_t> terms;
  std::size_t units = 0;
  std::vector<double> values;

  double At(std::size_t term_index, std::size_t unit) const {
    return values[term_index * units + unit];
  }
  // conduct(w, l): sum over the layer's units.
  double Conduct(std::size_t term_index) const;
  // 0 for terms not present in the document.
  double ConductOf(std::int32_t term) const;
};

// Attributed output at the document input and at the baseline.
struct OutputGap {
  double at_input = 0.0;
  double at_baseline = 0.0;
  double difference() const { return at_input - at_baseline; }
};
OutputGap ComputeOutputGap(const ClassifierParams& params,
                           std::span<const std::int32_t> term_ids,
                           const IGConfig& cfg);

// Integrated gradients per token position, summed over embedding dimensions
// and then over repeated positions of the same term.
TermScores IntegratedGradients(const ClassifierParams& params,
                               std::span<const std::int32_t> term_ids,
                               const IGConfig& cfg);

// Conductance of every unit of `layer` split across input terms. For each
// path segment the gradient of the output w.r.t. a unit is multiplied by that
// unit's change over the segment; the change is divided among terms by their
// share of the (path-constant) change of the unit's input.
LayerConductance ComputeLayerConductance(const ClassifierParams& params,
                                         std::span<const std::int32_t> term_ids,
                                         Layer layer, const IGConfig& cfg);

// Mean over `layers` of conduct(w, l) for every term of the document.
TermScores TermConductance(const ClassifierParams& params,
                           std::span<const std::int32_t> term_ids,
                           const IGConfig& cfg,
                           std::span<const Layer> layers = kAllLayers);

struct AttributionRecord {
  std::string doc_id;
  std::string task;
  std::string model_ref;
  // Normalized into [-1, 1] by the document's max |raw|.
  std::map<std::string, double> term_scores;
  std::map<std::string, double> raw_term_scores;
  // |sum of raw scores - (F(x) - F(baseline))|.
  double completeness_gap = 0.0;
  int steps = 0;
  std::string baseline;

  friend bool operator==(const AttributionRecord&,
                         const AttributionRecord&) = default;
};

// Divides every score by the largest magnitude; all-zero input stays zero.
std::map<std::string, double> NormalizeMaxAbs(
    const std::map<std::string, double>& raw);

AttributionRecord AttributeDocument(const ClassifierParams& params,
                                    const std::vector<std::string>& vocabulary,
                                    const Document& doc,
                                    const std::string& task,
                                    const std::string& model_ref,
                                    const IGConfig& cfg);

// Records in `docs` order. Documents are independent and spread over up to
// `jobs` OpenMP threads; the output is identical for every `jobs`.
std::vector<AttributionRecord> AttributeCorpus(
    const ClassifierParams& params, const std::vector<std::string>& vocabulary,
    std::span<const Document* const> docs, const std::string& task,
    const std::string& model_ref, const IGConfig& cfg, int jobs = 1);

// JSONL cache, one record per line:
// {"doc","task","model","scores","raw","completeness_gap","steps","baseline"}
std::string SerializeAttributionCache(
    std::span<const AttributionRecord> records);
void WriteAttributionCache(std::span<const AttributionRecord> records,
                           const std::filesystem::path& path);
std::vector<AttributionRecord> ReadAttributionCache(
    const std::filesystem::path& path);

}  // namespace tasksim

#endif  // TASKSIM_ATTRIBUTION_H_
