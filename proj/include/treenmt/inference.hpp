// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "treenmt/beam.hpp"
#include "treenmt/decoder.hpp"
#include "treenmt/model.hpp"
#include "treenmt/training.hpp"

namespace treenmt {

/// Decoder over one encoded source. All steps are recorded on one tape
/// that lives as long as the scorer.
class NmtScorer {
 public:
  struct State {
    Var s, c;
  };
  struct StepResult {
    State next;
    std::vector<double> log_probs;
  };

  /// Throws EmptySource.
  NmtScorer(const Model& model, std::span<const int> source, const SyntaxTree& tree);

  State initial();
  StepResult step(const State& state, int prev);
  int bos() const noexcept;
  int eos() const noexcept;
  /// Every id except <pad>, <bos> and <unk>.
  bool emittable(int id) const noexcept;

 private:
  const Model& model_;
  Tape tape_;
  SourceGraph graph_;
};

Hypothesis translate_beam(const Model& model, std::span<const int> source, const SyntaxTree& tree, std::size_t beam,
                          std::size_t max_len);
Hypothesis translate_greedy(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                            std::size_t max_len);

struct TraceStep {
  int token = 0;
  double beta = 0;  // NaN in unweighted mode
  std::vector<double> alpha;
};

/// Teacher-forced replay of `output` recording beta and alpha per step.
std::vector<TraceStep> trace_output(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                                    std::span<const int> output);

/// Corpus BLEU with clipped precisions up to `max_n`, brevity penalty, and
/// zero precisions at n >= 2 replaced by 1 / (2 * candidate n-gram count);
/// an order with no candidate n-grams at all contributes 1.
/// Throws CountMismatch, EmptyCorpus.
double bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, int max_n = 4);

/// exp of the token-weighted mean NLL under teacher forcing. Throws EmptyCorpus.
double perplexity(const Model& model, std::span<const Example> data);

/// Mean token count per hypothesis, <eos> excluded.
double avg_hypothesis_length(std::span<const std::vector<int>> hypotheses, int eos);

}  // namespace treenmt
