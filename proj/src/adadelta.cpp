// SPDX-License-Identifier: Apache-2.0
#include "treenmt/adadelta.hpp"

#include <cmath>

#include "treenmt/error.hpp"

namespace treenmt {

OptState::OptState(const ParamStore& params, AdaDeltaConfig cfg) : config(cfg) {
  mean_sq_grad.reserve(params.size());
  mean_sq_delta.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    const auto& v = params.value(i);
    mean_sq_grad.emplace_back(v.rows(), v.cols());
    mean_sq_delta.emplace_back(v.rows(), v.cols());
  }
}

void adadelta_step(ParamStore& params, const GradStore& grads, OptState& state) {
  if (grads.size() != params.size() || state.mean_sq_grad.size() != params.size())
    throw Error(ErrorKind::ShapeMismatch, "adadelta_step: parameter count");
  const double rho = state.config.rho;
  const double eps = state.config.eps;
  for (ParamId p = 0; p < params.size(); ++p) {
    Matrix& x = params.value(p);
    const Matrix& g = grads[p];
    Matrix& eg2 = state.mean_sq_grad[p];
    Matrix& edx2 = state.mean_sq_delta[p];
    if (!x.same_shape(g) || !x.same_shape(eg2) || !x.same_shape(edx2))
      throw Error(ErrorKind::ShapeMismatch, "adadelta_step: " + params.name(p));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = g[i];
      eg2[i] = rho * eg2[i] + (1.0 - rho) * gi * gi;
      const double dx = -std::sqrt((edx2[i] + eps) / (eg2[i] + eps)) * gi;
      edx2[i] = rho * edx2[i] + (1.0 - rho) * dx * dx;
      x[i] += dx;
    }
  }
  ++state.steps;
}

}  // namespace treenmt
