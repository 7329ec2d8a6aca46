// Copyright 2026 The tasksim Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized invariant checks across modules.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "tasksim/ansat.h"
#include "tasksim/attribution.h"
#include "tasksim/classifier.h"
#include "tasksim/corpus.h"
#include "tasksim/evaluation.h"
#include "tasksim/metrics.h"
#include "tasksim/regressor.h"
#include "tasksim/synthetic.h"
#include "test_util.h"

namespace tasksim {
namespace {

using testing::Doc;

TEST_CASE("positive documents of a task set are the intersection") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Document> docs;
    std::vector<Split> split;
    for (int i = 0; i < 12; ++i) {
      std::vector<std::string> labels;
      for (const std::string t : {"A", "B", "C"}) {
        if (i < 2 || rng() % 2) labels.push_back(t);
      }
      docs.push_back(Doc("d" + std::to_string(i), {"w"}, labels));
      split.push_back(i == 0 || rng() % 3 == 0 ? Split::kTrain : Split::kTest);
    }
    split[1] = Split::kTest;
    const auto corpus = Corpus::Create({{"A", "A"}, {"B", "B"}, {"C", "C"}},
                                       std::move(docs), std::move(split));
    auto ids = [](const std::vector<const Document*>& v) {
      std::set<std::string> s;
      for (const auto* d : v) s.insert(d->id);
      return s;
    };
    for (Split s : {Split::kTrain, Split::kTest}) {
      const auto a = ids(PositiveDocuments(corpus, {"A"}, s));
      const auto b = ids(PositiveDocuments(corpus, {"B"}, s));
      std::set<std::string> both;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::inserter(both, both.begin()));
      CHECK(ids(PositiveDocuments(corpus, {"A", "B"}, s)) == both);
    }
  }
}

TEST_CASE("planted vocabulary overlap has floor(overlap * size) terms") {
  SyntheticConfig cfg;
  cfg.n_tasks = 8;
  cfg.vocab_task_size = 24;
  cfg.overlap_matrix = RingOverlap(8, {0.30, 0.15, 0.05});
  const auto vocab = SignalVocabularies(cfg);
  for (int s = 0; s < 8; ++s) {
    CHECK(vocab[s].size() == 24);
    for (int t = 0; t < 8; ++t) {
      if (s == t) continue;
      std::set<std::string> a(vocab[s].begin(), vocab[s].end());
      int shared = 0;
      for (const auto& w : vocab[t]) shared += a.count(w);
      CHECK(shared ==
            static_cast<int>(std::floor(cfg.overlap_matrix[s][t] * 24)));
    }
  }
}

Corpus SeparableCorpus() {
  std::vector<Document> docs;
  std::vector<Split> split;
  for (int i = 0; i < 20; ++i) {
    const bool pos = i % 2 == 0;
    docs.push_back(Doc("d" + std::to_string(i),
                       {pos ? "good" : "bad", "filler"},
                       pos ? std::vector<std::string>{"A"}
                           : std::vector<std::string>{"B"}));
    split.push_back(i < 16 ? Split::kTrain : Split::kTest);
  }
  return Corpus::Create({{"A", "A"}, {"B", "B"}}, std::move(docs),
                        std::move(split));
}

TEST_CASE("training loss decreases on a separable corpus") {
  const auto corpus = SeparableCorpus();
  Hyperparams hp{0.1, 6, 4, 1};
  const auto outcome = Train(corpus, "A", hp, nullptr, {{0, 8, 8}, 0.5});
  REQUIRE(outcome.epoch_losses.size() == 6);
  for (std::size_t e = 1; e < outcome.epoch_losses.size(); ++e) {
    CHECK(outcome.epoch_losses[e] < outcome.epoch_losses[e - 1]);
  }
}

TEST_CASE("zero learning rate returns the init weights") {
  const auto corpus = SeparableCorpus();
  ModelDims dims{corpus.vocabulary().size(), 8, 8};
  const auto init = ClassifierParams::Random(dims, 4, 0.5);
  Hyperparams hp{0.0, 3, 4, 1};
  CHECK(Train(corpus, "A", hp, &init, {dims, 0.5}).params == init);
}

TEST_CASE("normalization preserves sign, order and the top term") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> raw;
    for (int i = 0; i < 8; ++i) raw["w" + std::to_string(i)] = n(rng);
    const auto c = NormalizeMaxAbs(raw);
    for (const auto& [u, ru] : raw) {
      CHECK((c.at(u) > 0) == (ru > 0));
      CHECK((c.at(u) < 0) == (ru < 0));
      for (const auto& [v, rv] : raw) {
        CHECK((ru < rv) == (c.at(u) < c.at(v)));
      }
    }
    auto top = [](const std::map<std::string, double>& m) {
      return std::max_element(m.begin(), m.end(), [](auto& a, auto& b) {
               return a.second < b.second;
             })->first;
    };
    CHECK(top(raw) == top(c));
  }
}

TEST_CASE("token order does not change attributions") {
  std::mt19937_64 rng(3);
  ModelDims dims{10, 4, 6};
  IGConfig cfg;
  cfg.steps = 32;
  for (int trial = 0; trial < 20; ++trial) {
    const auto params = ClassifierParams::Random(dims, 60 + trial, 0.9);
    auto ids = testing::RandomDoc(rng, dims.vocab, 7);
    const auto before = TermConductance(params, ids, cfg);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto after = TermConductance(params, ids, cfg);
    REQUIRE(before.terms == after.terms);
    for (std::size_t i = 0; i < before.terms.size(); ++i) {
      CHECK(after.scores[i] == doctest::Approx(before.scores[i]).epsilon(1e-12));
    }
  }
}

AttributionRecord RandomRecord(std::mt19937_64& rng, const std::string& doc,
                               const std::vector<std::string>& terms) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AttributionRecord r;
  r.doc_id = doc;
  for (const auto& t : terms) r.term_scores[t] = u(rng);
  return r;
}

TEST_CASE("ansat respects dominance and bounds") {
  std::mt19937_64 rng(4);
  const auto grid = TatGrid::Default();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Document> docs;
    AttributionSet a, b;
    std::size_t max_terms = 0;
    for (int i = 0; i < 6; ++i) {
      std::vector<std::string> terms;
      const int len = 1 + static_cast<int>(rng() % 6);
      for (int k = 0; k < len; ++k) terms.push_back("w" + std::to_string(rng() % 9));
      const auto id = "d" + std::to_string(i);
      docs.push_back(Doc(id, terms, {"A"}));
      std::set<std::string> unique(terms.begin(), terms.end());
      max_terms = std::max(max_terms, unique.size());
      std::vector<std::string> u(unique.begin(), unique.end());
      a[id] = RandomRecord(rng, id, u);
      b[id] = RandomRecord(rng, id, u);
    }
    std::vector<const Document*> ptrs;
    for (const auto& d : docs) ptrs.push_back(&d);
    for (double tat : grid.thresholds) {
      const double v = Ansat(a, b, ptrs, tat).value;
      double active_a = 0, active_b = 0;
      for (const auto& d : docs) {
        active_a += ActiveTerms(a.at(d.id), tat).size();
        active_b += ActiveTerms(b.at(d.id), tat).size();
      }
      active_a /= docs.size();
      active_b /= docs.size();
      CHECK(v <= std::min(active_a, active_b) + 1e-12);
      CHECK(v >= 0.0);
      CHECK(v <= static_cast<double>(max_terms));
    }
  }
}

TEST_CASE("F1 is invariant to how counts are split into events") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<bool, bool>> outcomes;
    for (int i = 0; i < 40; ++i) outcomes.push_back({rng() % 2 == 0, rng() % 3 == 0});
    EventConfusion one, many;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      one["all"].Add(outcomes[i].first, outcomes[i].second);
      many["e" + std::to_string(rng() % 5)].Add(outcomes[i].first,
                                                outcomes[i].second);
    }
    CHECK(PositiveF1(one) == PositiveF1(many));
    CHECK(Accuracy(one) == Accuracy(many));
    CHECK(PositiveF1(many) >= 0.0);
    CHECK(PositiveF1(many) <= 1.0);
  }
}

TEST_CASE("F1-only regression tracks a label driven by target F1") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<PairSample> samples;
  for (int t = 0; t < 20; ++t) {
    const double f1_target = u(rng);
    for (int s = 0; s < 5; ++s) {
      PairSample p;
      p.source = "s" + std::to_string(s);
      p.target = "t" + std::to_string(t);
      p.id = p.source + ">" + p.target;
      p.f1_source = u(rng);
      p.f1_target = f1_target;
      p.ansat_features.assign(42, 0.0);
      p.label_f1 = std::clamp(f1_target + noise(rng), 0.0, 1.0);
      samples.push_back(p);
    }
  }
  const auto preds = CrossValidate(samples, FeatureMode::kF1, GbtConfig{});
  std::vector<ScoredPrediction> scored;
  for (const auto& p : preds) scored.push_back({p.predicted, p.actual});
  CHECK(Rmse(scored) <= 2 * 0.05);
}

std::vector<CvPrediction> RandomPool(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CvPrediction> preds;
  for (int t = 0; t < 4; ++t) {
    for (int s = 0; s < 5; ++s) {
      if (s == t) continue;
      CvPrediction p;
      p.source = "s" + std::to_string(s);
      p.target = "s" + std::to_string(t);
      p.sample_id = p.source + ">" + p.target;
      p.fold = p.target;
      p.actual = u(rng);
      p.predicted = std::round(u(rng) * 4) / 4;  // ties exercise the order
      p.predicted_raw = p.predicted;
      preds.push_back(p);
    }
  }
  return preds;
}

TEST_CASE("budget curves: prefix max, perfect dominance, runtime sums") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const auto preds = RandomPool(rng);
    PairRuntimes runtimes;
    for (const auto& p : preds) runtimes[{p.source, p.target}] = {u(rng), u(rng)};

    const auto curve = BudgetSearch(preds, runtimes);
    auto perfect_preds = preds;
    for (auto& p : perfect_preds) p.predicted = p.actual;
    const auto perfect = BudgetSearch(perfect_preds, runtimes);
    REQUIRE(curve.points.size() == perfect.points.size());

    // Independent runtime sum: per target, rank by (predicted desc, source).
    std::map<std::string, std::vector<const CvPrediction*>> by_target;
    for (const auto& p : preds) by_target[p.target].push_back(&p);
    for (auto& [target, list] : by_target) {
      std::sort(list.begin(), list.end(), [](auto* a, auto* b) {
        if (a->predicted != b->predicted) return a->predicted > b->predicted;
        return a->source < b->source;
      });
    }
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      const auto k = curve.points[i].k;
      if (i > 0) {
        CHECK(curve.points[i].mean_best_f1 >= curve.points[i - 1].mean_best_f1);
      }
      CHECK(perfect.points[i].mean_best_f1 >= curve.points[i].mean_best_f1);
      double total = 0.0;
      for (const auto& [target, list] : by_target) {
        for (std::size_t j = 0; j < std::min(k, list.size()); ++j) {
          for (double r : runtimes.at({list[j]->source, target})) total += r;
        }
      }
      CHECK(curve.points[i].cumulative_runtime_seconds ==
            doctest::Approx(total).epsilon(1e-12));
    }
  }
}

}  // namespace
}  // namespace tasksim
