// SPDX-License-Identifier: Apache-2.0
#include "treenmt/params.hpp"

#include <cmath>

#include "treenmt/error.hpp"

namespace treenmt {

ParamId ParamStore::add(std::string name, Matrix value) {
  if (index_.contains(name)) throw Error(ErrorKind::ConfigError, "duplicate parameter " + name);
  const ParamId id = values_.size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return id;
}

std::optional<ParamId> ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamId ParamStore::id(std::string_view name) const {
  auto found = find(name);
  if (!found) throw Error(ErrorKind::MissingParameter, std::string(name));
  return *found;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

GradStore::GradStore(const ParamStore& params) {
  grads_.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    grads_.emplace_back(v.rows(), v.cols());
  }
}

void GradStore::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradStore::add(const GradStore& other) {
  if (other.grads_.size() != grads_.size()) throw Error(ErrorKind::ShapeMismatch, "GradStore::add");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    auto dst = grads_[i].values();
    auto src = other.grads_[i].values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

void GradStore::scale(double factor) {
  for (auto& g : grads_)
    for (double& v : g.values()) v *= factor;
}

namespace {
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix64(seed + 0x9e3779b97f4a7c15ULL * (h | 1));
}

std::uint64_t Rng::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

Matrix init_params(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Rng rng(seed);
  for (double& v : m.values()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace treenmt
