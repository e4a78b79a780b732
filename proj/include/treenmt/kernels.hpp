// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "treenmt/matrix.hpp"

// Straight loops over contiguous row-major storage. These are the inner
// kernels of every gate equation; sizes are small enough that per-call
// threading would only add overhead, so parallelism lives one level up
// (sentences within a batch, see training.hpp).
namespace treenmt::kernels {

/// out += W x, W is out.size() x x.size().
void matvec_acc(const Matrix& w, std::span<const double> x, std::span<double> out);

/// out += W^T g.
void matvec_t_acc(const Matrix& w, std::span<const double> g, std::span<double> out);

/// dW += g x^T.
void outer_acc(std::span<const double> g, std::span<const double> x, Matrix& dw);

void axpy(double a, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);

double sigmoid(double x);
void softmax(std::span<const double> x, std::span<double> out);
std::vector<double> softmax(std::span<const double> x);
std::vector<double> log_softmax(std::span<const double> x);

}  // namespace treenmt::kernels
