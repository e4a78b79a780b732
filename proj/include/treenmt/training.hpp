// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "treenmt/adadelta.hpp"
#include "treenmt/model.hpp"
#include "treenmt/params.hpp"
#include "treenmt/subword.hpp"
#include "treenmt/tree.hpp"

namespace treenmt {

struct Example {
  std::vector<int> source;  // aligned with tree leaves
  SyntaxTree tree;
  std::vector<int> target;  // ends with <eos>
};

struct ParallelDataset {
  std::vector<Example> items;
  std::size_t dropped = 0;  // lines removed by the length filter
};

/// Vocabulary and merges for one language side.
struct SideResources {
  Vocab vocab;
  MergeTable merges;
};

/// Source tokens and tree after generalization and rare-word grafting.
EncodedSentence preprocess_source(std::span<const std::string> tokens, const SyntaxTree& tree,
                                  const SideResources& side);
Sentence preprocess_target(std::span<const std::string> tokens, const SideResources& side);

/// Binarized tree for one line, checked against the token count. Throws TreeLeafMismatch.
SyntaxTree read_tree_line(std::string_view line, std::size_t expected_leaves, std::size_t line_no);

Sentence split_tokens(std::string_view line);
std::vector<std::string> read_lines(const std::string& path);

/// Reads three aligned files and runs the preprocessing pipeline per line.
/// Lines with more than `max_len` raw words on either side are dropped.
/// Throws LineCountMismatch, TreeLeafMismatch, IoError.
ParallelDataset load_parallel_corpus(const std::string& src_path, const std::string& tree_path,
                                     const std::string& tgt_path, const SideResources& src,
                                     const SideResources& tgt, std::size_t max_len);

/// Seeded permutation of [0, n) (seed = shuffle_seed ^ epoch) cut into batches.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                   std::uint64_t epoch);

struct BatchGradient {
  GradStore grad;       // summed over sentences, not yet normalized
  double loss_sum = 0;  // summed token NLL
  std::size_t tokens = 0;
};

/// Adds one sentence's loss gradient into `grad` and returns its summed NLL.
double sentence_gradient(const Model& model, const Example& ex, GradStore& grad);

/// Reference path: one GradStore per sentence, merged in batch order.
BatchGradient batch_gradient_serial(const Model& model, std::span<const Example> data,
                                    std::span<const std::size_t> batch);
/// Same merge order with sentences run on OpenMP threads; bit-identical to
/// the serial path for any thread count.
BatchGradient batch_gradient_parallel(const Model& model, std::span<const Example> data,
                                      std::span<const std::size_t> batch, int threads);

struct EpochStats {
  double mean_loss = 0;
  std::size_t tokens = 0;
  double seconds = 0;
};

/// Per batch: summed gradient / batch target tokens, one AdaDelta step.
EpochStats train_epoch(Model& model, OptState& opt, std::span<const Example> data,
                       const std::vector<std::vector<std::size_t>>& batches, int threads);

struct TrainConfig {
  std::size_t batch_size = 4;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;
  std::uint64_t shuffle_seed = 1;
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t attn_dim = 0;
  std::size_t comp_dim = 0;
  BetaMode beta = BetaMode::gating();
  bool backward_leaf = true;
  bool top_down = true;
  bool attend_eos = true;
  std::size_t max_sentence_length = 40;
  std::size_t checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
  int threads = 1;
  double rho = 0.95;
  double eps = 1e-6;

  /// Lists every problem at once. Throws ConfigError.
  void validate() const;
  ModelConfig model_config(std::size_t src_vocab, std::size_t tgt_vocab) const;
  std::string to_text() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys and bad values are
/// collected and reported together. Throws ConfigError.
TrainConfig parse_train_config(std::string_view text, TrainConfig base = {});

}  // namespace treenmt
