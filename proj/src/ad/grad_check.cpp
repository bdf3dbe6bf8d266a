/* Copyright 2026 The cldet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "cldet/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cldet::ad {

GradCheckResult check_gradients(const ScalarFn& fn,
                                const std::vector<std::vector<double>>& inputs,
                                const std::vector<std::vector<double>>& analytic,
                                double eps, double floor) {
  if (inputs.size() != analytic.size()) {
    throw std::invalid_argument("check_gradients: " + std::to_string(inputs.size()) +
                                " inputs but " + std::to_string(analytic.size()) +
                                " gradient vectors");
  }
  GradCheckResult result;
  std::vector<std::vector<double>> work = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != analytic[i].size()) {
      throw std::invalid_argument("check_gradients: input " + std::to_string(i) +
                                  " has " + std::to_string(inputs[i].size()) +
                                  " elements but gradient has " +
                                  std::to_string(analytic[i].size()));
    }
    for (size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = work[i][j];
      work[i][j] = saved + eps;
      const double up = fn(work);
      work[i][j] = saved - eps;
      const double down = fn(work);
      work[i][j] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic[i][j];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(ad)) {
        throw std::runtime_error("check_gradients: non-finite value at input " +
                                 std::to_string(i) + " element " + std::to_string(j));
      }
      const double rel =
          std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), floor});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = static_cast<int64_t>(i);
        result.worst_elem = static_cast<int64_t>(j);
        result.analytic = ad;
        result.numeric = fd;
      }
    }
  }
  return result;
}

}  // namespace cldet::ad
