// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

#include "tasksim/classifier.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <fmt/core.h>

#include "tasksim/common.h"
#include "tasksim/metrics.h"
#include "tasksim/parallel.h"
#include "tasksim/text_io.h"

namespace tasksim {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void Hyperparams::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError(
        fmt::format("learning_rate must be finite and >= 0, got {}",
                    learning_rate));
  }
  if (epochs < 1) {
    throw ValidationError(fmt::format("epochs must be >= 1, got {}", epochs));
  }
  if (batch_size < 1) {
    throw ValidationError(
        fmt::format("batch_size must be >= 1, got {}", batch_size));
  }
}

ClassifierParams ClassifierParams::Zeros(ModelDims dims,
                                         Activation activation) {
  ClassifierParams p;
  p.dims = dims;
  p.activation = activation;
  p.embedding.assign(dims.vocab * dims.embed, 0.0);
  p.hidden_weights.assign(dims.embed * dims.hidden, 0.0);
  p.hidden_bias.assign(dims.hidden, 0.0);
  p.out_weights.assign(dims.hidden, 0.0);
  return p;
}

ClassifierParams ClassifierParams::Random(ModelDims dims, std::uint64_t seed,
                                          double scale,
                                          Activation activation) {
  auto p = Zeros(dims, activation);
  Rng rng(MixSeed(seed, "init"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < p.ParameterCount(); ++i) {
    p.FlatAt(i) = scale * normal(rng);
  }
  return p;
}

std::size_t ClassifierParams::ParameterCount() const {
  return embedding.size() + hidden_weights.size() + hidden_bias.size() +
         out_weights.size() + 1;
}

double& ClassifierParams::FlatAt(std::size_t i) {
  if (i < embedding.size()) return embedding[i];
  i -= embedding.size();
  if (i < hidden_weights.size()) return hidden_weights[i];
  i -= hidden_weights.size();
  if (i < hidden_bias.size()) return hidden_bias[i];
  i -= hidden_bias.size();
  if (i < out_weights.size()) return out_weights[i];
  i -= out_weights.size();
  if (i == 0) return out_bias;
  throw std::out_of_range("parameter index");
}

double ClassifierParams::FlatAt(std::size_t i) const {
  return const_cast<ClassifierParams*>(this)->FlatAt(i);
}

bool ClassifierParams::AllFinite() const {
  for (std::size_t i = 0; i < ParameterCount(); ++i) {
    if (!std::isfinite(FlatAt(i))) return false;
  }
  return true;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double ActivationValue(Activation activation, double z) {
  return activation == Activation::kRelu ? std::max(z, 0.0) : z;
}

double ActivationSlope(Activation activation, double z) {
  if (activation == Activation::kIdentity) return 1.0;
  return z > 0.0 ? 1.0 : 0.0;
}

ForwardResult ForwardPooled(const ClassifierParams& params,
                            std::span<const double> pooled) {
  const auto& dims = params.dims;
  ForwardResult r;
  r.pooled.assign(pooled.begin(), pooled.end());
  r.pre_activation = params.hidden_bias;
  for (std::size_t d = 0; d < dims.embed; ++d) {
    const double x = pooled[d];
    if (x == 0.0) continue;
    const double* row = &params.hidden_weights[d * dims.hidden];
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      r.pre_activation[j] += x * row[j];
    }
  }
  r.hidden.resize(dims.hidden);
  r.logit = params.out_bias;
  for (std::size_t j = 0; j < dims.hidden; ++j) {
    r.hidden[j] = ActivationValue(params.activation, r.pre_activation[j]);
    r.logit += params.out_weights[j] * r.hidden[j];
  }
  r.probability = Sigmoid(r.logit);
  return r;
}

namespace {

std::vector<double> MeanPool(const ClassifierParams& params,
                             std::span<const std::int32_t> term_ids) {
  const auto& dims = params.dims;
  if (term_ids.empty()) throw ValidationError("empty document");
  std::vector<double> pooled(dims.embed, 0.0);
  for (auto id : term_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= dims.vocab) {
      throw ValidationError(fmt::format(
          "term id {} outside vocabulary of size {}", id, dims.vocab));
    }
    const double* row = &params.embedding[static_cast<std::size_t>(id) *
                                          dims.embed];
    for (std::size_t d = 0; d < dims.embed; ++d) pooled[d] += row[d];
  }
  const double inv = 1.0 / static_cast<double>(term_ids.size());
  for (auto& x : pooled) x *= inv;
  return pooled;
}

// BCE from the logit, stable for large |logit|.
double LossFromLogit(double logit, int label) {
  const double softplus =
      logit > 0 ? logit + std::log1p(std::exp(-logit))
                : std::log1p(std::exp(logit));
  return softplus - (label ? logit : 0.0);
}

// Gradient w.r.t. the pooled input and the dense layers. The embedding
// gradient follows as d_pooled / n for every token position.
struct DenseGrad {
  std::vector<double> d_pooled;
  std::vector<double> d_pre;  // dL/dz
  double d_logit = 0.0;
};

DenseGrad BackwardDense(const ClassifierParams& params, const ForwardResult& f,
                        int label) {
  const auto& dims = params.dims;
  DenseGrad g;
  g.d_logit = f.probability - static_cast<double>(label);
  g.d_pre.resize(dims.hidden);
  for (std::size_t j = 0; j < dims.hidden; ++j) {
    g.d_pre[j] = g.d_logit * params.out_weights[j] *
                 ActivationSlope(params.activation, f.pre_activation[j]);
  }
  g.d_pooled.assign(dims.embed, 0.0);
  for (std::size_t d = 0; d < dims.embed; ++d) {
    const double* row = &params.hidden_weights[d * dims.hidden];
    double sum = 0.0;
    for (std::size_t j = 0; j < dims.hidden; ++j) sum += row[j] * g.d_pre[j];
    g.d_pooled[d] = sum;
  }
  return g;
}

}  // namespace

ForwardResult Forward(const ClassifierParams& params,
                      std::span<const std::int32_t> term_ids) {
  auto pooled = MeanPool(params, term_ids);
  return ForwardPooled(params, pooled);
}

double BinaryCrossEntropy(double probability, int label) {
  constexpr double kEps = 1e-300;
  return label ? -std::log(std::max(probability, kEps))
               : -std::log(std::max(1.0 - probability, kEps));
}

ClassifierParams Backward(const ClassifierParams& params,
                          std::span<const std::int32_t> term_ids, int label) {
  const auto& dims = params.dims;
  auto f = Forward(params, term_ids);
  auto g = BackwardDense(params, f, label);
  auto grad = ClassifierParams::Zeros(dims, params.activation);
  grad.out_bias = g.d_logit;
  for (std::size_t j = 0; j < dims.hidden; ++j) {
    grad.out_weights[j] = g.d_logit * f.hidden[j];
    grad.hidden_bias[j] = g.d_pre[j];
  }
  for (std::size_t d = 0; d < dims.embed; ++d) {
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      grad.weight_at(d, j) = f.pooled[d] * g.d_pre[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(term_ids.size());
  for (auto id : term_ids) {
    for (std::size_t d = 0; d < dims.embed; ++d) {
      grad.embed_at(static_cast<std::size_t>(id), d) += g.d_pooled[d] * inv;
    }
  }
  return grad;
}

Evaluation EvaluateOnSplit(const Corpus& corpus, const std::string& task,
                           const ClassifierParams& params, Split split) {
  EventConfusion by_event;
  for (auto i : corpus.IndicesIn(split)) {
    const auto& doc = corpus.documents()[i];
    const bool predicted = Forward(params, doc.term_ids).probability > 0.5;
    by_event[doc.event_id].Add(predicted, doc.IsPositive(task));
  }
  return {PositiveF1(by_event), Accuracy(by_event)};
}

double NominalRuntimeSeconds(const Corpus& corpus, const Hyperparams& hp,
                             const ModelDims& dims) {
  constexpr double kSecondsPerOp = 1e-9;
  constexpr double kOverheadSeconds = 0.05;
  const double e = static_cast<double>(dims.embed);
  const double h = static_cast<double>(dims.hidden);
  double train_ops = 0.0;
  double eval_ops = 0.0;
  std::size_t n_train = 0;
  for (std::size_t i = 0; i < corpus.documents().size(); ++i) {
    const double len =
        static_cast<double>(corpus.documents()[i].tokens.size());
    if (corpus.split_of(i) == Split::kTrain) {
      train_ops += 2 * len * e + 3 * e * h + 4 * h;
      ++n_train;
    } else {
      eval_ops += len * e + e * h + 2 * h;
    }
  }
  const double batches = std::ceil(static_cast<double>(n_train) /
                                   static_cast<double>(hp.batch_size));
  const double ops = hp.epochs * (train_ops + batches * (e * h + 2 * h + 1)) +
                     eval_ops;
  return ops * kSecondsPerOp + kOverheadSeconds;
}

TrainOutcome Train(const Corpus& corpus, const std::string& task,
                   const Hyperparams& hp, const ClassifierParams* init,
                   const TrainOptions& options) {
  hp.Validate();
  if (!corpus.HasTask(task)) {
    throw ValidationError(fmt::format("unknown task '{}'", task));
  }
  ModelDims dims = options.dims;
  dims.vocab = corpus.vocabulary().size();

  const auto start = std::chrono::steady_clock::now();
  TrainOutcome out;
  if (init) {
    if (!(init->dims == dims)) {
      throw ValidationError(fmt::format(
          "init checkpoint dims ({}, {}, {}) do not match ({}, {}, {})",
          init->dims.vocab, init->dims.embed, init->dims.hidden, dims.vocab,
          dims.embed, dims.hidden));
    }
    out.params = *init;
  } else {
    out.params = ClassifierParams::Random(dims, hp.seed, options.init_scale);
  }
  auto& params = out.params;

  const auto train_idx = corpus.IndicesIn(Split::kTrain);
  std::vector<int> labels(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    labels[i] = corpus.documents()[train_idx[i]].IsPositive(task) ? 1 : 0;
  }

  std::vector<std::size_t> order(train_idx.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(MixSeed(hp.seed, "shuffle"));

  // Batch accumulators. The embedding gradient is sparse; touched rows are
  // tracked so that resetting costs O(batch tokens).
  std::vector<double> g_embed(dims.vocab * dims.embed, 0.0);
  std::vector<char> touched(dims.vocab, 0);
  std::vector<std::int32_t> touched_rows;
  std::vector<double> g_weights(dims.embed * dims.hidden, 0.0);
  std::vector<double> g_bias(dims.hidden, 0.0);
  std::vector<double> g_out(dims.hidden, 0.0);
  double g_out_bias = 0.0;

  const std::size_t batch = static_cast<std::size_t>(hp.batch_size);
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += batch, ++batch_no) {
      const std::size_t end = std::min(begin + batch, order.size());
      double batch_loss = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const auto& doc = corpus.documents()[train_idx[order[b]]];
        const int label = labels[order[b]];
        auto f = Forward(params, doc.term_ids);
        batch_loss += LossFromLogit(f.logit, label);
        auto g = BackwardDense(params, f, label);
        g_out_bias += g.d_logit;
        for (std::size_t j = 0; j < dims.hidden; ++j) {
          g_out[j] += g.d_logit * f.hidden[j];
          g_bias[j] += g.d_pre[j];
        }
        for (std::size_t d = 0; d < dims.embed; ++d) {
          const double x = f.pooled[d];
          double* row = &g_weights[d * dims.hidden];
          for (std::size_t j = 0; j < dims.hidden; ++j) row[j] += x * g.d_pre[j];
        }
        const double inv = 1.0 / static_cast<double>(doc.term_ids.size());
        for (auto id : doc.term_ids) {
          if (!touched[id]) {
            touched[id] = 1;
            touched_rows.push_back(id);
          }
          double* row = &g_embed[static_cast<std::size_t>(id) * dims.embed];
          for (std::size_t d = 0; d < dims.embed; ++d) {
            row[d] += g.d_pooled[d] * inv;
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw RuntimeFailure(fmt::format(
            "training '{}' diverged at epoch {} batch {} (lr={})", task,
            epoch + 1, batch_no + 1, hp.learning_rate));
      }

      const double step =
          hp.learning_rate / static_cast<double>(end - begin);
      params.out_bias -= step * g_out_bias;
      g_out_bias = 0.0;
      for (std::size_t j = 0; j < dims.hidden; ++j) {
        params.out_weights[j] -= step * g_out[j];
        params.hidden_bias[j] -= step * g_bias[j];
        g_out[j] = 0.0;
        g_bias[j] = 0.0;
      }
      for (std::size_t k = 0; k < g_weights.size(); ++k) {
        params.hidden_weights[k] -= step * g_weights[k];
        g_weights[k] = 0.0;
      }
      for (auto id : touched_rows) {
        double* grad_row = &g_embed[static_cast<std::size_t>(id) * dims.embed];
        double* row = &params.embedding[static_cast<std::size_t>(id) *
                                        dims.embed];
        for (std::size_t d = 0; d < dims.embed; ++d) {
          row[d] -= step * grad_row[d];
          grad_row[d] = 0.0;
        }
        touched[id] = 0;
      }
      touched_rows.clear();
    }

    double epoch_loss = 0.0;
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      const auto& doc = corpus.documents()[train_idx[i]];
      epoch_loss += LossFromLogit(Forward(params, doc.term_ids).logit,
                                  labels[i]);
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(1, train_idx.size()));
    if (!std::isfinite(epoch_loss)) {
      throw RuntimeFailure(fmt::format(
          "training '{}' diverged at end of epoch {} (lr={})", task, epoch + 1,
          hp.learning_rate));
    }
    out.epoch_losses.push_back(epoch_loss);
  }

  auto eval = EvaluateOnSplit(corpus, task, params, Split::kTest);
  out.run.target_task = task;
  out.run.hyperparams = hp;
  out.run.positive_f1 = eval.positive_f1;
  out.run.accuracy = eval.accuracy;
  out.run.runtime_seconds = NominalRuntimeSeconds(corpus, hp, dims);
  out.run.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
  return out;
}

std::vector<TrainOutcome> GridSearch(const Corpus& corpus,
                                     const std::string& task,
                                     const std::vector<Hyperparams>& grid,
                                     const ClassifierParams* init,
                                     const TrainOptions& options, int jobs) {
  if (grid.empty()) throw ValidationError("empty hyperparameter grid");
  std::vector<TrainOutcome> outcomes(grid.size());
  ParallelFor(grid.size(), jobs, [&](std::size_t i) {
    try {
      outcomes[i] = Train(corpus, task, grid[i], init, options);
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("grid point {}: {}", i, e.what()));
    } catch (const RuntimeFailure& e) {
      throw RuntimeFailure(fmt::format("grid point {}: {}", i, e.what()));
    }
  });
  return outcomes;
}

std::vector<Hyperparams> MakeGrid(const std::vector<double>& learning_rates,
                                  const std::vector<int>& epochs,
                                  const std::vector<int>& batch_sizes,
                                  std::uint64_t seed) {
  std::vector<Hyperparams> grid;
  for (double lr : learning_rates) {
    for (int e : epochs) {
      for (int b : batch_sizes) grid.push_back({lr, e, b, seed});
    }
  }
  return grid;
}

std::vector<Hyperparams> PaperGrid(std::uint64_t seed) {
  return MakeGrid({1e-05, 2e-05, 3e-05, 5e-05}, {1, 2, 3, 4}, {16, 32}, seed);
}

namespace {

constexpr char kCheckpointMagic[8] = {'T', 'S', 'I', 'M', 'C', 'K', 'P', 'T'};

template <typename T>
void Put(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

void PutDoubles(std::string& out, const std::vector<double>& values) {
  out.append(reinterpret_cast<const char*>(values.data()),
             values.size() * sizeof(double));
}

class Reader {
 public:
  Reader(std::string bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  template <typename T>
  T Get() {
    T value;
    Take(&value, sizeof(T));
    return value;
  }

  void GetDoubles(std::vector<double>& values, std::size_t n) {
    values.resize(n);
    Take(values.data(), n * sizeof(double));
  }

  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw ValidationError(fmt::format("checkpoint {} is truncated", name_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::string bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void WriteCheckpoint(const ClassifierParams& params,
                     const std::filesystem::path& path) {
  std::string out;
  out.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  Put(out, kCheckpointVersion);
  Put(out, static_cast<std::uint32_t>(params.activation));
  Put(out, static_cast<std::uint64_t>(params.dims.vocab));
  Put(out, static_cast<std::uint64_t>(params.dims.embed));
  Put(out, static_cast<std::uint64_t>(params.dims.hidden));
  PutDoubles(out, params.embedding);
  PutDoubles(out, params.hidden_weights);
  PutDoubles(out, params.hidden_bias);
  PutDoubles(out, params.out_weights);
  Put(out, params.out_bias);
  WriteFileAtomic(path, out);
}

ClassifierParams ReadCheckpoint(const std::filesystem::path& path) {
  Reader in(ReadFile(path), path.string());
  char magic[8];
  for (auto& c : magic) c = in.Get<char>();
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ValidationError(fmt::format("{} is not a checkpoint", path.string()));
  }
  const auto version = in.Get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError(fmt::format("{}: unsupported checkpoint version {}",
                                      path.string(), version));
  }
  const auto activation = in.Get<std::uint32_t>();
  if (activation > 1) {
    throw ValidationError(fmt::format("{}: bad activation", path.string()));
  }
  ModelDims dims;
  dims.vocab = in.Get<std::uint64_t>();
  dims.embed = in.Get<std::uint64_t>();
  dims.hidden = in.Get<std::uint64_t>();
  ClassifierParams p;
  p.dims = dims;
  p.activation = static_cast<Activation>(activation);
  in.GetDoubles(p.embedding, dims.vocab * dims.embed);
  in.GetDoubles(p.hidden_weights, dims.embed * dims.hidden);
  in.GetDoubles(p.hidden_bias, dims.hidden);
  in.GetDoubles(p.out_weights, dims.hidden);
  p.out_bias = in.Get<double>();
  if (!in.AtEnd()) {
    throw ValidationError(
        fmt::format("{}: trailing bytes after checkpoint", path.string()));
  }
  return p;
}

}  // namespace tasksim
