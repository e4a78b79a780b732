// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treenmt/matrix.hpp"

namespace treenmt {

using ParamId = std::size_t;

/// Named, shaped parameter storage. Insertion order is the canonical order
/// used for checkpoints and optimizer state.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix value);

  std::optional<ParamId> find(std::string_view name) const;
  /// Throws MissingParameter.
  ParamId id(std::string_view name) const;

  const Matrix& value(ParamId id) const { return values_[id]; }
  Matrix& value(ParamId id) { return values_[id]; }
  const std::string& name(ParamId id) const { return names_[id]; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const noexcept;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, ParamId, std::less<>> index_;
};

/// Gradient buffers shaped like a ParamStore.
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& params);

  Matrix& operator[](ParamId id) { return grads_[id]; }
  const Matrix& operator[](ParamId id) const { return grads_[id]; }
  std::size_t size() const noexcept { return grads_.size(); }

  void zero();
  void add(const GradStore& other);
  void scale(double factor);

 private:
  std::vector<Matrix> grads_;
};

/// splitmix64 finalizer over seed and an FNV-1a hash of the stream name, so
/// each parameter (and the shuffle stream) draws from its own substream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

/// Deterministic 64-bit generator (splitmix64). Used instead of <random>
/// distributions, whose output is not pinned across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

/// Uniform samples in +-sqrt(6/(rows+cols)).
Matrix init_params(std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace treenmt
