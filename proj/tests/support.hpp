// SPDX-License-Identifier: Apache-2.0
// Shared fixtures: random trees, random models and synthetic corpora.
#pragma once

#include <string>
#include <vector>

#include "oracle.hpp"
#include "treenmt/model.hpp"
#include "treenmt/params.hpp"
#include "treenmt/subword.hpp"
#include "treenmt/training.hpp"
#include "treenmt/tree.hpp"

namespace support {

using treenmt::Matrix;
using treenmt::Rng;
using treenmt::SyntaxTree;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-scale, scale);
  return m;
}

inline oracle::Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  oracle::Vec v(n);
  for (double& x : v) x = rng.uniform(-scale, scale);
  return v;
}

inline Matrix column(const oracle::Vec& v) { return Matrix::column(v); }

/// Random binary tree over `n` leaves named t1..tn (or `tokens` when given).
inline SyntaxTree random_binary_tree(Rng& rng, std::size_t n, const std::vector<std::string>& tokens = {}) {
  SyntaxTree t;
  std::vector<int> leaves;
  for (std::size_t i = 0; i < n; ++i)
    leaves.push_back(t.add_leaf(tokens.empty() ? "t" + std::to_string(i + 1) : tokens[i], "X"));
  auto build = [&](auto&& self, std::size_t lo, std::size_t hi) -> int {
    if (lo == hi) return leaves[lo];
    const std::size_t k = lo + rng.below(hi - lo);
    const int l = self(self, lo, k);
    const int r = self(self, k + 1, hi);
    return t.add_internal({l, r}, "P");
  };
  t.finish(build(build, 0, n - 1));
  return t;
}

/// (((t1 t2) t3) ... tn)
inline SyntaxTree left_branching_tree(const std::vector<std::string>& tokens) {
  SyntaxTree t;
  int acc = t.add_leaf(tokens[0], "X");
  for (std::size_t i = 1; i < tokens.size(); ++i) acc = t.add_internal({acc, t.add_leaf(tokens[i], "X")}, "P");
  t.finish(acc);
  return t;
}

inline std::string random_word(Rng& rng) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789.,-_'";
  const std::size_t len = 1 + rng.below(6);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += alphabet[rng.below(alphabet.size())];
  return w;
}

/// Random n-ary tree with optional labels; arity 1..4 so that parsing sees
/// unary and n-ary groups.
inline SyntaxTree random_nary_tree(Rng& rng, std::size_t max_leaves) {
  SyntaxTree t;
  std::size_t leaves = 0;
  auto label = [&](double p) -> std::optional<std::string> {
    if (rng.uniform() >= p) return std::nullopt;
    static const char* labels[] = {"S", "NP", "VP", "PP", "<BIN>", "ADJP", "X-1", "NP=2"};
    return std::string(labels[rng.below(8)]);
  };
  // "(L w)" always reads back as a labelled leaf, so an only child that is a
  // leaf must carry its own label.
  auto build = [&](auto&& self, std::size_t depth, bool only_child) -> int {
    if (depth == 0 || leaves + 1 >= max_leaves || rng.uniform() < 0.3) {
      ++leaves;
      return t.add_leaf(random_word(rng), only_child ? label(1.0) : label(0.7));
    }
    const std::size_t arity = 1 + rng.below(4);
    std::vector<int> kids;
    for (std::size_t i = 0; i < arity; ++i) kids.push_back(self(self, depth - 1, arity == 1));
    return t.add_internal(std::move(kids), label(0.8));
  };
  t.finish(build(build, 5, false));
  return t;
}

/// Model with every parameter drawn uniformly in +-scale (biases too), so
/// tests exercise nonzero biases.
inline treenmt::Model random_model(const treenmt::ModelConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  treenmt::Model m = treenmt::Model::zeros(cfg);
  Rng rng(seed);
  for (treenmt::ParamId id = 0; id < m.params().size(); ++id)
    for (double& v : m.params().value(id).values()) v = rng.uniform(-scale, scale);
  return m;
}

inline treenmt::ModelConfig small_config(std::size_t d = 8, treenmt::BetaMode beta = treenmt::BetaMode::gating()) {
  treenmt::ModelConfig c;
  c.src_vocab = 11;
  c.tgt_vocab = 9;
  c.emb_dim = 5;
  c.hidden_dim = d;
  c.beta = beta;
  return c;
}

inline oracle::TreeGru oracle_tree(const treenmt::ParamStore& p, const treenmt::TreeGruParams& t) {
  return {p.value(t.ul_z),  p.value(t.ur_z),  p.value(t.b_z),  p.value(t.ul_rl), p.value(t.ur_rl), p.value(t.b_rl),
          p.value(t.ul_rr), p.value(t.ur_rr), p.value(t.b_rr), p.value(t.ul_h),  p.value(t.ur_h),  p.value(t.b_h)};
}

inline oracle::Gru oracle_gru(const treenmt::ParamStore& p, const treenmt::GruParams& g) {
  return {p.value(g.w_z), p.value(g.u_z), p.value(g.b_z), p.value(g.w_r), p.value(g.u_r),
          p.value(g.b_r), p.value(g.w_h), p.value(g.u_h), p.value(g.b_h)};
}

/// Synthetic parallel data over word types w0..w{types-1}; the target is a
/// function of the source tokens.
struct SyntheticTask {
  std::vector<treenmt::Sentence> sources, targets;
  std::vector<SyntaxTree> trees;
};

}  // namespace support
