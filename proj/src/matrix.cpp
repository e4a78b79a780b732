// SPDX-License-Identifier: Apache-2.0
#include "treenmt/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "treenmt/error.hpp"
#include "treenmt/kernels.hpp"

namespace treenmt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnbalancedBrackets: return "UnbalancedBrackets";
    case ErrorKind::EmptyNode: return "EmptyNode";
    case ErrorKind::MultipleRoots: return "MultipleRoots";
    case ErrorKind::NonBinaryTree: return "NonBinaryTree";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::InvalidLeafIndex: return "InvalidLeafIndex";
    case ErrorKind::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotScalarLoss: return "NotScalarLoss";
    case ErrorKind::UnknownTokenId: return "UnknownTokenId";
    case ErrorKind::EmptyTarget: return "EmptyTarget";
    case ErrorKind::EmptySource: return "EmptySource";
    case ErrorKind::LineCountMismatch: return "LineCountMismatch";
    case ErrorKind::TreeLeafMismatch: return "TreeLeafMismatch";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::MissingParameter: return "MissingParameter";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::NumericError: return "NumericError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::ShapeMismatch, "ragged initializer");
    for (double v : row) m.data_[i++] = v;
  }
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace kernels {

void matvec_acc(const Matrix& w, std::span<const double> x, std::span<double> out) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* wp = w.data();
  const double* xp = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = wp + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * xp[c];
    out[r] += acc;
  }
}

void matvec_t_acc(const Matrix& w, std::span<const double> g, std::span<double> out) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  const double* wp = w.data();
  double* op = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = wp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) op[c] += gr * row[c];
  }
}

void outer_acc(std::span<const double> g, std::span<const double> x, Matrix& dw) {
  const std::size_t cols = dw.cols();
  double* dp = dw.data();
  const double* xp = x.data();
  for (std::size_t r = 0; r < dw.rows(); ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = dp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += gr * xp[c];
  }
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void softmax(std::span<const double> x, std::span<double> out) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= total;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  softmax(x, out);
  return out;
}

std::vector<double> log_softmax(std::span<const double> x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double total = 0.0;
  for (double v : x) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

}  // namespace kernels
}  // namespace treenmt
