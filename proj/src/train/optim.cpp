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
#include "cldet/train/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cldet::train {

void Hyperparams::validate() const {
  if (!(base_lr > 0) || !(weight_decay >= 0) || !(eps > 0)) {
    throw std::invalid_argument("hyperparams: base_lr/eps must be positive, weight_decay >= 0");
  }
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) {
    throw std::invalid_argument("hyperparams: betas must lie in (0, 1)");
  }
  if (warmup_steps <= 0 || epochs_per_task < 0 || t_max <= 0 || batch_size <= 0) {
    throw std::invalid_argument("hyperparams: counts must be positive");
  }
}

double lr_at(int64_t step, int64_t epoch, const Hyperparams& hp) {
  if (step < 0 || epoch < 0) throw std::invalid_argument("lr_at: negative step or epoch");
  if (step < hp.warmup_steps) {
    return hp.base_lr * static_cast<double>(step + 1) / static_cast<double>(hp.warmup_steps);
  }
  const double phase = M_PI * static_cast<double>(epoch) / static_cast<double>(hp.t_max);
  return hp.base_lr * 0.5 * (1.0 + std::cos(phase));
}

AdamWState make_optimizer_state(const det::Detector& model) {
  AdamWState state;
  for (const auto& [name, p] : model.params) {
    if (!p.requires_grad()) continue;
    state.m.emplace(name, std::vector<double>(static_cast<size_t>(p.numel()), 0.0));
    state.v.emplace(name, std::vector<double>(static_cast<size_t>(p.numel()), 0.0));
  }
  return state;
}

void adamw_step(det::Detector& model, const std::map<std::string, ad::Tensor>& bound,
                const ad::GradMap& grads, AdamWState& state, double lr,
                const Hyperparams& hp) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hp.beta1, t);
  const double bias2 = 1.0 - std::pow(hp.beta2, t);

  for (auto& [name, p] : model.params) {
    if (!p.requires_grad()) continue;
    auto m_it = state.m.find(name);
    auto v_it = state.v.find(name);
    if (m_it == state.m.end() || v_it == state.v.end()) {
      throw std::runtime_error("adamw_step: no moment state for parameter '" + name + "'");
    }
    const double* g = nullptr;
    auto b_it = bound.find(name);
    if (b_it != bound.end() && b_it->second.on_tape()) {
      auto g_it = grads.find(b_it->second.node());
      if (g_it != grads.end()) {
        if (!g_it->second.same_shape(p)) {
          throw std::runtime_error("adamw_step: gradient shape mismatch for '" + name + "'");
        }
        g = g_it->second.raw();
      }
    }

    std::vector<double>& m = m_it->second;
    std::vector<double>& v = v_it->second;
    const size_t n = static_cast<size_t>(p.numel());
    std::vector<double> next(p.raw(), p.raw() + n);
    for (size_t i = 0; i < n; ++i) {
      const double gi = g ? g[i] : 0.0;
      if (!std::isfinite(gi)) {
        throw std::runtime_error("adamw_step: non-finite gradient in parameter '" + name + "'");
      }
      m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      next[i] = next[i] - lr * (mhat / (std::sqrt(vhat) + hp.eps)) -
                lr * hp.weight_decay * next[i];
    }
    p = ad::Tensor(p.shape(), std::move(next)).with_requires_grad(true);
  }
}

}  // namespace cldet::train
