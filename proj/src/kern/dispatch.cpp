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
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "cldet/kern/kernels.hpp"

namespace cldet::kern {
namespace {

Backend detect_default() {
  if (const char* env = std::getenv("CLDET_BACKEND")) {
    const std::string v(env);
    if (v == "scalar") return Backend::kScalar;
    if (v == "avx2") {
      if (!avx2_available()) {
        throw std::runtime_error("CLDET_BACKEND=avx2 but AVX2/FMA unavailable");
      }
      return Backend::kAvx2;
    }
    throw std::runtime_error("unknown CLDET_BACKEND value: " + v);
  }
  return avx2_available() ? Backend::kAvx2 : Backend::kScalar;
}

Backend& backend_slot() {
  static Backend b = detect_default();
  return b;
}

}  // namespace

bool avx2_available() {
#if defined(CLDET_HAVE_AVX2_BUILD)
  static const bool ok =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

#if !defined(CLDET_HAVE_AVX2_BUILD)
const Kernels& avx2_kernels() {
  throw std::runtime_error("AVX2 kernels not compiled into this build");
}
#endif

const Kernels& active() {
  return backend_slot() == Backend::kAvx2 ? avx2_kernels() : scalar_kernels();
}

void set_backend(Backend b) {
  if (b == Backend::kAvx2 && !avx2_available()) {
    throw std::runtime_error("AVX2/FMA backend unavailable on this machine");
  }
  backend_slot() = b;
}

Backend current_backend() { return backend_slot(); }

std::string backend_name() { return active().name; }

}  // namespace cldet::kern
