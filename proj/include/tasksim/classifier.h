// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef TASKSIM_CLASSIFIER_H_
#define TASKSIM_CLASSIFIER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tasksim/corpus.h"

namespace tasksim {

struct Hyperparams {
  double learning_rate = 0.1;
  int epochs = 1;
  int batch_size = 16;
  std::uint64_t seed = 0;

  void Validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

// kIdentity exists for attribution tests that need a model whose logit is
// affine in the pooled input.
enum class Activation : std::uint32_t { kRelu = 0, kIdentity = 1 };

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 16;
  std::size_t hidden = 32;
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Mean-pooled embeddings -> affine + activation -> affine -> sigmoid.
//
// `embedding` is vocab x embed and `hidden_weights` is embed x hidden, both
// row-major. The same struct carries gradients.
struct ClassifierParams {
  ModelDims dims;
  Activation activation = Activation::kRelu;
  std::vector<double> embedding;
  std::vector<double> hidden_weights;
  std::vector<double> hidden_bias;
  std::vector<double> out_weights;
  double out_bias = 0.0;

  static ClassifierParams Zeros(ModelDims dims,
                                Activation activation = Activation::kRelu);
  // Every weight and bias drawn as scale * N(0, 1).
  static ClassifierParams Random(ModelDims dims, std::uint64_t seed,
                                 double scale = 0.1,
                                 Activation activation = Activation::kRelu);

  double& embed_at(std::size_t term, std::size_t d) {
    return embedding[term * dims.embed + d];
  }
  double embed_at(std::size_t term, std::size_t d) const {
    return embedding[term * dims.embed + d];
  }
  double& weight_at(std::size_t d, std::size_t j) {
    return hidden_weights[d * dims.hidden + j];
  }
  double weight_at(std::size_t d, std::size_t j) const {
    return hidden_weights[d * dims.hidden + j];
  }

  std::size_t ParameterCount() const;
  // Flat view order: embedding, hidden_weights, hidden_bias, out_weights,
  // out_bias. Used by finite-difference checks.
  double& FlatAt(std::size_t i);
  double FlatAt(std::size_t i) const;

  bool AllFinite() const;
  friend bool operator==(const ClassifierParams&,
                         const ClassifierParams&) = default;
};

struct ForwardResult {
  double probability = 0.5;
  double logit = 0.0;
  std::vector<double> pooled;  // embedding-pool layer, size embed
  std::vector<double> pre_activation;  // size hidden
  std::vector<double> hidden;  // hidden layer, size hidden
};

double Sigmoid(double x);
double ActivationValue(Activation activation, double z);
double ActivationSlope(Activation activation, double z);

// Throws ValidationError on a term id outside the vocabulary.
ForwardResult Forward(const ClassifierParams& params,
                      std::span<const std::int32_t> term_ids);

// Forward pass starting from an already pooled input vector.
ForwardResult ForwardPooled(const ClassifierParams& params,
                            std::span<const double> pooled);

// Exact gradient of binary cross-entropy at (doc, label), dense layout.
ClassifierParams Backward(const ClassifierParams& params,
                          std::span<const std::int32_t> term_ids, int label);

double BinaryCrossEntropy(double probability, int label);

struct TrainRun {
  std::string target_task;
  std::optional<std::string> source_task;
  Hyperparams hyperparams;
  std::optional<Hyperparams> source_hyperparams;
  // Modelled training cost (see NominalRuntimeSeconds); deterministic.
  double runtime_seconds = 0.0;
  // Measured wall clock, kept out of every deterministic artifact.
  double wall_seconds = 0.0;
  double positive_f1 = 0.0;
  double accuracy = 0.0;
  std::string params_ref;
};

struct TrainOutcome {
  TrainRun run;
  ClassifierParams params;
  // Mean training-set loss after each epoch.
  std::vector<double> epoch_losses;
};

struct TrainOptions {
  ModelDims dims;  // vocab is taken from the corpus
  double init_scale = 0.1;
};

// Mini-batch SGD on binary cross-entropy over the train split, with label 1
// for documents positive for `task`. Starts from `init` when given (transfer),
// otherwise from a seeded random init. Evaluates on the test split.
TrainOutcome Train(const Corpus& corpus, const std::string& task,
                   const Hyperparams& hp,
                   const ClassifierParams* init = nullptr,
                   const TrainOptions& options = {});

// Test-split evaluation of `params` on `task` at threshold 0.5.
struct Evaluation {
  double positive_f1 = 0.0;
  double accuracy = 0.0;
};
Evaluation EvaluateOnSplit(const Corpus& corpus, const std::string& task,
                           const ClassifierParams& params, Split split);

// Deterministic cost model for one training run, in seconds: counted
// multiply-adds of the forward, backward and update passes at a fixed
// nanosecond each, plus a fixed per-run overhead.
double NominalRuntimeSeconds(const Corpus& corpus, const Hyperparams& hp,
                             const ModelDims& dims);

// One run per grid point in grid order. Runs execute on up to `jobs` OpenMP
// threads; results do not depend on `jobs`. Errors carry the grid index.
std::vector<TrainOutcome> GridSearch(const Corpus& corpus,
                                     const std::string& task,
                                     const std::vector<Hyperparams>& grid,
                                     const ClassifierParams* init = nullptr,
                                     const TrainOptions& options = {},
                                     int jobs = 1);

// Cartesian product in (lr, epochs, batch) nesting order, every point with
// the same seed.
std::vector<Hyperparams> MakeGrid(const std::vector<double>& learning_rates,
                                  const std::vector<int>& epochs,
                                  const std::vector<int>& batch_sizes,
                                  std::uint64_t seed);

// The value sets of the fine-tuning grid reported for the BERT runs:
// LR {1e-5, 2e-5, 3e-5, 5e-5} x epochs {1..4} x batch {16, 32}.
std::vector<Hyperparams> PaperGrid(std::uint64_t seed);

// Checkpoint format v1 (little endian):
//   char[8] "TSIMCKPT", u32 version = 1, u32 activation,
//   u64 vocab, u64 embed, u64 hidden,
//   f64 embedding[vocab*embed], f64 hidden_weights[embed*hidden],
//   f64 hidden_bias[hidden], f64 out_weights[hidden], f64 out_bias.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void WriteCheckpoint(const ClassifierParams& params,
                     const std::filesystem::path& path);
ClassifierParams ReadCheckpoint(const std::filesystem::path& path);

}  // namespace tasksim

#endif  // TASKSIM_CLASSIFIER_H_
