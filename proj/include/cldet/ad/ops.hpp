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
#ifndef CLDET_AD_OPS_HPP_
#define CLDET_AD_OPS_HPP_

#include <vector>

#include "cldet/ad/tape.hpp"
#include "cldet/ad/tensor.hpp"

namespace cldet::ad {

// Differentiable tensor operations. Each op computes its forward value
// through the active kernel backend and, when any input lives on a tape,
// records a node whose backward produces gradients for the differentiable
// inputs. Forward values are deterministic: fixed summation order, no
// reassociation.

// ---- element-wise ----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);   // subgradient at 0 is 0
Tensor sigmoid(const Tensor& a);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n] -> [m,n]

// Zero-padded cross-correlation, NCHW input and OIHW kernel.
// H' = floor((H + 2*pad - kh)/stride) + 1, same for W'.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride,
              int64_t pad);

// x[B,C,H,W] + bias[C], the one sanctioned broadcast beyond scalars.
Tensor channel_bias_add(const Tensor& x, const Tensor& bias);

// ---- reductions ------------------------------------------------------------
// Reduced axes are dropped from the shape; reducing every axis yields a
// rank-0 scalar. Summation runs in row-major input order.
Tensor reduce_sum(const Tensor& a, std::vector<int64_t> axes);
Tensor reduce_mean(const Tensor& a, std::vector<int64_t> axes);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- shape surgery ---------------------------------------------------------
// Contiguous sub-range along one axis; backward scatters into zeros, so
// gradients outside the window are exactly zero.
Tensor narrow(const Tensor& a, int64_t axis, int64_t start, int64_t len);

// ---- fused detection losses ------------------------------------------------
// Both reduce to a scalar sum over elements with mask == 1; targets and mask
// are plain value tensors, gradients flow to the first argument only.
// Masked-out elements contribute exactly zero loss and zero gradient.

// Sigmoid focal loss on raw logits, binary targets.
Tensor focal_loss_sum(const Tensor& logits, const Tensor& targets,
                      const Tensor& mask, double gamma, double alpha);

// Huber-style loss: 0.5*d^2/beta for |d| < beta, |d| - 0.5*beta otherwise.
Tensor smooth_l1_sum(const Tensor& pred, const Tensor& target,
                     const Tensor& mask, double beta);

// mean((a-b)^2), composed from sub/mul/mean.
Tensor mse(const Tensor& a, const Tensor& b);

// ---- enum-dispatched surface ----------------------------------------------
enum class EwKind { kRelu, kSigmoid, kAdd, kSub, kMul, kScale };
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b, double scalar);
enum class ReduceKind { kSum, kMean };
Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int64_t> axes);

}  // namespace cldet::ad

#endif  // CLDET_AD_OPS_HPP_
