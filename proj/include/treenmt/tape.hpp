// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "treenmt/matrix.hpp"
#include "treenmt/params.hpp"

namespace treenmt {

/// Handle to a value recorded on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const noexcept { return id >= 0; }
  friend bool operator==(Var, Var) = default;
};

/// Reverse-mode gradient record. Every primitive evaluates eagerly when it
/// is recorded; backward() walks the record in reverse. A tape is built per
/// sentence and is not safe for concurrent use.
///
/// Parameters enter through param()/lookup() by reference, so the tape never
/// copies weight matrices; their adjoints are flushed into a GradStore.
class Tape {
 public:
  enum class Op : std::uint8_t {
    Input, Param, Lookup, Affine, Add, Sub, Mul, OneMinus, Sigmoid, Tanh,
    Concat, Slice, Softmax, Scale, Dot, Sum, AddN, WeightedSum, AttnScores,
    GruMix, Nll,
  };

  Var input(Matrix value);
  Var scalar(double value);
  Var param(const ParamStore& store, ParamId id);
  /// Row `row` of an embedding table, as a column vector. Throws UnknownTokenId.
  Var lookup(const ParamStore& store, ParamId table, std::size_t row);

  /// W0 x0 + W1 x1 + ... + b, with `terms` laid out as W0, x0, W1, x1, ...
  /// An invalid `bias` means no bias term.
  Var affine(std::initializer_list<Var> terms, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var one_minus(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var softmax(Var a);
  /// s * v with s a 1x1 value.
  Var scale(Var v, Var s);
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var add_n(std::span<const Var> terms);
  /// sum_k w[offset + k] * vectors[k]; the zero vector of length `dim` when empty.
  Var weighted_sum(Var weights, std::size_t offset, std::span<const Var> vectors, std::size_t dim);
  /// sum_k w[indices[k]] * vectors[k].
  Var weighted_sum(Var weights, std::span<const std::size_t> indices, std::span<const Var> vectors, std::size_t dim);
  /// e_k = v . tanh(query + keys[k]), stacked into a column.
  Var attention_scores(Var v, Var query, std::span<const Var> keys);
  /// (1 - z) * keep + z * candidate, elementwise.
  Var gru_mix(Var z, Var keep, Var candidate);
  /// -log softmax(logits)[target].
  Var nll(Var logits, std::size_t target);

  const Matrix& value(Var v) const;
  double scalar_value(Var v) const { return value(v)[0]; }

  /// Reverse accumulation from a 1x1 node. Parameter and lookup adjoints are
  /// added into `sink` when given. Throws NotScalarLoss.
  void backward(Var loss, GradStore* sink = nullptr);
  /// Adjoint of any node after backward(); an empty matrix if unreached.
  const Matrix& grad(Var v) const { return nodes_[v.id].adj; }

  /// Recompute every non-leaf value in recorded order.
  void replay();
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op{};
    std::vector<std::int32_t> in{};
    std::size_t aux = 0;
    std::vector<std::size_t> index{};
    const Matrix* ref = nullptr;
    ParamId pid = 0;
    Matrix value{};
    Matrix adj{};
    std::vector<double> cache{};
  };

  Var push(Node node);
  void compute(Node& node);
  Matrix& adj_of(std::int32_t id);
  const Matrix& val(std::int32_t id) const;
  void require_vector(Var v, const char* what) const;
  void require_same(Var a, Var b, const char* what) const;

  std::vector<Node> nodes_;
};

}  // namespace treenmt
