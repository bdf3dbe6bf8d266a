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
#ifndef CLDET_AD_GRAD_CHECK_HPP_
#define CLDET_AD_GRAD_CHECK_HPP_

#include <functional>
#include <vector>

#include "cldet/ad/tensor.hpp"

namespace cldet::ad {

// Scalar-valued function of a flat parameter vector. Called repeatedly with
// perturbed copies of the same inputs, so it must be deterministic.
using ScalarFn = std::function<double(const std::vector<std::vector<double>>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Flat coordinate (input index, element index) where the max occurred.
  int64_t worst_input = -1;
  int64_t worst_elem = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central-difference check of analytic gradients against `fn`.
// Relative error per coordinate is |ad - fd| / max(|ad|, |fd|, floor).
// Throws std::runtime_error if fn or a gradient produces a non-finite value.
GradCheckResult check_gradients(const ScalarFn& fn,
                                const std::vector<std::vector<double>>& inputs,
                                const std::vector<std::vector<double>>& analytic,
                                double eps = 1e-5, double floor = 1e-8);

}  // namespace cldet::ad

#endif  // CLDET_AD_GRAD_CHECK_HPP_
