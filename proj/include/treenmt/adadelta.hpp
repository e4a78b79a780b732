// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "treenmt/matrix.hpp"
#include "treenmt/params.hpp"

namespace treenmt {

struct AdaDeltaConfig {
  double rho = 0.95;
  double eps = 1e-6;

  friend bool operator==(const AdaDeltaConfig&, const AdaDeltaConfig&) = default;
};

/// Running averages E[g^2] and E[dx^2], one pair per parameter.
class OptState {
 public:
  OptState() = default;
  OptState(const ParamStore& params, AdaDeltaConfig config = {});

  AdaDeltaConfig config;
  std::vector<Matrix> mean_sq_grad;
  std::vector<Matrix> mean_sq_delta;
  std::size_t steps = 0;

  friend bool operator==(const OptState&, const OptState&) = default;
};

/// One AdaDelta update of every parameter in place. Throws ShapeMismatch.
void adadelta_step(ParamStore& params, const GradStore& grads, OptState& state);

}  // namespace treenmt
