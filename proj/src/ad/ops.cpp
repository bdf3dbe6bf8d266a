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
#include "cldet/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cldet/kern/kernels.hpp"

namespace cldet::ad {
namespace {

Tape* tape_of(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    if (tape && tape != t->tape()) {
      throw std::invalid_argument("operands are recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

std::vector<double> buffer(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

// numerically stable log(1 + exp(z))
double softplus(double z) {
  const double a = std::abs(z);
  return std::max(z, 0.0) + std::log1p(std::exp(-a));
}

void transpose(const double* src, double* dst, int64_t rows, int64_t cols) {
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

struct ConvDims {
  int64_t batch, cin, h, w;
  int64_t cout, kh, kw;
  int64_t oh, ow;
  int64_t ckk() const { return cin * kh * kw; }
  int64_t ohw() const { return oh * ow; }
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int64_t stride,
                   int64_t pad) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " +
                                shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
  ConvDims d{};
  d.batch = input.dim(0);
  d.cin = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.cout = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  if (kernel.dim(1) != d.cin) {
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(input.shape()) +
                                " vs kernel " + shape_str(kernel.shape()));
  }
  if (d.kh > d.h + 2 * pad || d.kw > d.w + 2 * pad) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) +
                                " larger than padded input " + shape_str(input.shape()));
  }
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

// col[(ci*kh+r)*kw+c][oh*OW+ow] = x[ci][oh*s - p + r][ow*s - p + c], 0 outside.
void im2col(const double* x, const ConvDims& d, int64_t stride, int64_t pad,
            double* col) {
  const int64_t ohw = d.ohw();
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    for (int64_t r = 0; r < d.kh; ++r) {
      for (int64_t c = 0; c < d.kw; ++c) {
        double* row = col + ((ci * d.kh + r) * d.kw + c) * ohw;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * stride - pad + r;
          const bool y_in = iy >= 0 && iy < d.h;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * stride - pad + c;
            row[oy * d.ow + ox] =
                (y_in && ix >= 0 && ix < d.w) ? x[(ci * d.h + iy) * d.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, int64_t stride, int64_t pad,
                double* x) {
  const int64_t ohw = d.ohw();
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    for (int64_t r = 0; r < d.kh; ++r) {
      for (int64_t c = 0; c < d.kw; ++c) {
        const double* row = col + ((ci * d.kh + r) * d.kw + c) * ohw;
        for (int64_t oy = 0; oy < d.oh; ++oy) {
          const int64_t iy = oy * stride - pad + r;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t ox = 0; ox < d.ow; ++ox) {
            const int64_t ix = ox * stride - pad + c;
            if (ix < 0 || ix >= d.w) continue;
            x[(ci * d.h + iy) * d.w + ix] += row[oy * d.ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---- element-wise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kern::active().add(a.raw(), b.raw(), out.data(), a.numel());
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a, &b});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool ga = a.on_tape(), gb = b.on_tape();
  if (ga) in.push_back(a.node());
  if (gb) in.push_back(b.node());
  return tape->attach(std::move(res), "add", std::move(in),
                      [ga, gb](const Tensor& g) {
                        std::vector<Tensor> out;
                        if (ga) out.push_back(g);
                        if (gb) out.push_back(g);
                        return out;
                      });
}

Tensor add(const Tensor& a, double b) {
  std::vector<double> out = buffer(a);
  for (double& v : out) v += b;
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  return tape->attach(std::move(res), "add_scalar", {a.node()},
                      [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kern::active().sub(a.raw(), b.raw(), out.data(), a.numel());
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a, &b});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool ga = a.on_tape(), gb = b.on_tape();
  if (ga) in.push_back(a.node());
  if (gb) in.push_back(b.node());
  return tape->attach(std::move(res), "sub", std::move(in),
                      [ga, gb](const Tensor& g) {
                        std::vector<Tensor> out;
                        if (ga) out.push_back(g);
                        if (gb) {
                          std::vector<double> neg(static_cast<size_t>(g.numel()));
                          kern::active().scale(g.raw(), -1.0, neg.data(), g.numel());
                          out.emplace_back(g.shape(), std::move(neg));
                        }
                        return out;
                      });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kern::active().mul(a.raw(), b.raw(), out.data(), a.numel());
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a, &b});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool ga = a.on_tape(), gb = b.on_tape();
  if (ga) in.push_back(a.node());
  if (gb) in.push_back(b.node());
  const Tensor av = a.detached(), bv = b.detached();
  return tape->attach(std::move(res), "mul", std::move(in),
                      [ga, gb, av, bv](const Tensor& g) {
                        std::vector<Tensor> out;
                        if (ga) {
                          std::vector<double> d(static_cast<size_t>(g.numel()));
                          kern::active().mul(g.raw(), bv.raw(), d.data(), g.numel());
                          out.emplace_back(g.shape(), std::move(d));
                        }
                        if (gb) {
                          std::vector<double> d(static_cast<size_t>(g.numel()));
                          kern::active().mul(g.raw(), av.raw(), d.data(), g.numel());
                          out.emplace_back(g.shape(), std::move(d));
                        }
                        return out;
                      });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kern::active().scale(a.raw(), s, out.data(), a.numel());
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  return tape->attach(std::move(res), "scale", {a.node()}, [s](const Tensor& g) {
    std::vector<double> d(static_cast<size_t>(g.numel()));
    kern::active().scale(g.raw(), s, d.data(), g.numel());
    return std::vector<Tensor>{Tensor(g.shape(), std::move(d))};
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.numel()));
  kern::active().relu(a.raw(), out.data(), a.numel());
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  const Tensor av = a.detached();
  return tape->attach(std::move(res), "relu", {a.node()}, [av](const Tensor& g) {
    std::vector<double> d(static_cast<size_t>(g.numel()));
    const double* x = av.raw();
    const double* gg = g.raw();
    for (int64_t i = 0; i < g.numel(); ++i) d[static_cast<size_t>(i)] = x[i] > 0.0 ? gg[i] : 0.0;
    return std::vector<Tensor>{Tensor(g.shape(), std::move(d))};
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(static_cast<size_t>(a.numel()));
  const double* x = a.raw();
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double v = x[i];
    out[static_cast<size_t>(i)] =
        v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor res(a.shape(), std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  const Tensor sv = res.detached();
  return tape->attach(std::move(res), "sigmoid", {a.node()}, [sv](const Tensor& g) {
    std::vector<double> d(static_cast<size_t>(g.numel()));
    const double* s = sv.raw();
    const double* gg = g.raw();
    for (int64_t i = 0; i < g.numel(); ++i) {
      d[static_cast<size_t>(i)] = gg[i] * s[i] * (1.0 - s[i]);
    }
    return std::vector<Tensor>{Tensor(g.shape(), std::move(d))};
  });
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                " x " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m * n));
  kern::active().gemm(a.raw(), b.raw(), out.data(), m, n, k, false);
  Tensor res(Shape{m, n}, std::move(out));
  Tape* tape = tape_of({&a, &b});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool ga = a.on_tape(), gb = b.on_tape();
  if (ga) in.push_back(a.node());
  if (gb) in.push_back(b.node());
  const Tensor av = a.detached(), bv = b.detached();
  return tape->attach(
      std::move(res), "matmul", std::move(in),
      [ga, gb, av, bv, m, k, n](const Tensor& g) {
        std::vector<Tensor> out;
        if (ga) {  // dA = g x B^T
          std::vector<double> bt(static_cast<size_t>(k * n));
          transpose(bv.raw(), bt.data(), k, n);
          std::vector<double> da(static_cast<size_t>(m * k));
          kern::active().gemm(g.raw(), bt.data(), da.data(), m, k, n, false);
          out.emplace_back(Shape{m, k}, std::move(da));
        }
        if (gb) {  // dB = A^T x g
          std::vector<double> at(static_cast<size_t>(m * k));
          transpose(av.raw(), at.data(), m, k);
          std::vector<double> db(static_cast<size_t>(k * n));
          kern::active().gemm(at.data(), g.raw(), db.data(), k, n, m, false);
          out.emplace_back(Shape{k, n}, std::move(db));
        }
        return out;
      });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t stride, int64_t pad) {
  const ConvDims d = conv_dims(input, kernel, stride, pad);
  const int64_t ckk = d.ckk(), ohw = d.ohw();
  std::vector<double> col(static_cast<size_t>(ckk * ohw));
  std::vector<double> out(static_cast<size_t>(d.batch * d.cout * ohw));
  for (int64_t b = 0; b < d.batch; ++b) {
    im2col(input.raw() + b * d.cin * d.h * d.w, d, stride, pad, col.data());
    kern::active().gemm(kernel.raw(), col.data(), out.data() + b * d.cout * ohw,
                        d.cout, ohw, ckk, false);
  }
  Tensor res(Shape{d.batch, d.cout, d.oh, d.ow}, std::move(out));
  Tape* tape = tape_of({&input, &kernel});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool gx = input.on_tape(), gw = kernel.on_tape();
  if (gx) in.push_back(input.node());
  if (gw) in.push_back(kernel.node());
  const Tensor xv = input.detached(), wv = kernel.detached();
  return tape->attach(
      std::move(res), "conv2d", std::move(in),
      [gx, gw, xv, wv, d, stride, pad](const Tensor& g) {
        const int64_t ckk = d.ckk(), ohw = d.ohw();
        std::vector<Tensor> out;
        std::vector<double> col(static_cast<size_t>(ckk * ohw));
        if (gx) {  // dX[b] = col2im(W^T x dY[b])
          std::vector<double> wt(static_cast<size_t>(ckk * d.cout));
          transpose(wv.raw(), wt.data(), d.cout, ckk);
          std::vector<double> dx(static_cast<size_t>(d.batch * d.cin * d.h * d.w), 0.0);
          for (int64_t b = 0; b < d.batch; ++b) {
            kern::active().gemm(wt.data(), g.raw() + b * d.cout * ohw, col.data(),
                                ckk, ohw, d.cout, false);
            col2im_add(col.data(), d, stride, pad, dx.data() + b * d.cin * d.h * d.w);
          }
          out.emplace_back(xv.shape(), std::move(dx));
        }
        if (gw) {  // dW += dY[b] x col[b]^T, batch-ascending fma chains
          std::vector<double> colt(static_cast<size_t>(ohw * ckk));
          std::vector<double> dw(static_cast<size_t>(d.cout * ckk), 0.0);
          for (int64_t b = 0; b < d.batch; ++b) {
            im2col(xv.raw() + b * d.cin * d.h * d.w, d, stride, pad, col.data());
            transpose(col.data(), colt.data(), ckk, ohw);
            kern::active().gemm(g.raw() + b * d.cout * ohw, colt.data(), dw.data(),
                                d.cout, ckk, ohw, true);
          }
          out.emplace_back(wv.shape(), std::move(dw));
        }
        return out;
      });
}

Tensor channel_bias_add(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 4 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw std::invalid_argument("channel_bias_add: shapes " + shape_str(x.shape()) +
                                " and " + shape_str(bias.shape()) + " are incompatible");
  }
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out = buffer(x);
  const double* bp = bias.raw();
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double* row = out.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) row[j] += bp[ch];
    }
  }
  Tensor res(x.shape(), std::move(out));
  Tape* tape = tape_of({&x, &bias});
  if (!tape) return res;
  std::vector<int64_t> in;
  const bool gx = x.on_tape(), gb = bias.on_tape();
  if (gx) in.push_back(x.node());
  if (gb) in.push_back(bias.node());
  return tape->attach(std::move(res), "channel_bias_add", std::move(in),
                      [gx, gb, b, c, hw](const Tensor& g) {
                        std::vector<Tensor> out;
                        if (gx) out.push_back(g);
                        if (gb) {
                          std::vector<double> db(static_cast<size_t>(c), 0.0);
                          const double* gp = g.raw();
                          for (int64_t i = 0; i < b; ++i) {
                            for (int64_t ch = 0; ch < c; ++ch) {
                              const double* row = gp + (i * c + ch) * hw;
                              for (int64_t j = 0; j < hw; ++j) db[static_cast<size_t>(ch)] += row[j];
                            }
                          }
                          out.emplace_back(Shape{c}, std::move(db));
                        }
                        return out;
                      });
}

// ---- reductions ------------------------------------------------------------

namespace {

struct ReducePlan {
  Shape out_shape;
  double divisor;                  // 1 for sum, reduced-extent product for mean
  std::vector<int64_t> out_index;  // input flat index -> output flat index
};

ReducePlan make_reduce_plan(const Tensor& a, const std::vector<int64_t>& axes) {
  const int64_t rank = a.rank();
  std::vector<bool> reduced(static_cast<size_t>(rank), false);
  for (int64_t ax : axes) {
    if (ax < 0 || ax >= rank) {
      throw std::invalid_argument("reduce: axis " + std::to_string(ax) +
                                  " out of range for shape " + shape_str(a.shape()));
    }
    if (reduced[static_cast<size_t>(ax)]) {
      throw std::invalid_argument("reduce: repeated axis " + std::to_string(ax));
    }
    reduced[static_cast<size_t>(ax)] = true;
  }
  ReducePlan plan;
  plan.divisor = 1.0;
  for (int64_t i = 0; i < rank; ++i) {
    if (reduced[static_cast<size_t>(i)]) {
      plan.divisor *= static_cast<double>(a.dim(i));
    } else {
      plan.out_shape.push_back(a.dim(i));
    }
  }
  const int64_t n = a.numel();
  plan.out_index.resize(static_cast<size_t>(n));
  std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t oflat = 0;
    for (int64_t i = 0; i < rank; ++i) {
      if (!reduced[static_cast<size_t>(i)]) oflat = oflat * a.dim(i) + idx[static_cast<size_t>(i)];
    }
    plan.out_index[static_cast<size_t>(flat)] = oflat;
    for (int64_t i = rank - 1; i >= 0; --i) {
      if (++idx[static_cast<size_t>(i)] < a.dim(i)) break;
      idx[static_cast<size_t>(i)] = 0;
    }
  }
  return plan;
}

Tensor reduce_impl(const Tensor& a, std::vector<int64_t> axes, bool mean) {
  ReducePlan plan = make_reduce_plan(a, axes);
  std::vector<double> out(static_cast<size_t>(shape_numel(plan.out_shape)), 0.0);
  const double* x = a.raw();
  for (int64_t flat = 0; flat < a.numel(); ++flat) {
    out[static_cast<size_t>(plan.out_index[static_cast<size_t>(flat)])] += x[flat];
  }
  if (mean) {
    for (double& v : out) v /= plan.divisor;
  }
  Tensor res(plan.out_shape, std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  const Shape in_shape = a.shape();
  const double div = mean ? plan.divisor : 1.0;
  auto out_index = std::make_shared<std::vector<int64_t>>(std::move(plan.out_index));
  return tape->attach(std::move(res), mean ? "mean" : "sum", {a.node()},
                      [in_shape, div, out_index](const Tensor& g) {
                        std::vector<double> d(static_cast<size_t>(shape_numel(in_shape)));
                        const double* gp = g.raw();
                        for (size_t flat = 0; flat < d.size(); ++flat) {
                          d[flat] = gp[(*out_index)[flat]] / div;
                        }
                        return std::vector<Tensor>{Tensor(in_shape, std::move(d))};
                      });
}

std::vector<int64_t> all_axes(const Tensor& a) {
  std::vector<int64_t> axes(static_cast<size_t>(a.rank()));
  for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int64_t>(i);
  return axes;
}

}  // namespace

Tensor reduce_sum(const Tensor& a, std::vector<int64_t> axes) {
  return reduce_impl(a, std::move(axes), false);
}

Tensor reduce_mean(const Tensor& a, std::vector<int64_t> axes) {
  return reduce_impl(a, std::move(axes), true);
}

Tensor sum_all(const Tensor& a) { return reduce_sum(a, all_axes(a)); }
Tensor mean_all(const Tensor& a) { return reduce_mean(a, all_axes(a)); }

// ---- shape surgery ---------------------------------------------------------

Tensor narrow(const Tensor& a, int64_t axis, int64_t start, int64_t len) {
  if (axis < 0 || axis >= a.rank()) {
    throw std::invalid_argument("narrow: axis " + std::to_string(axis) +
                                " out of range for shape " + shape_str(a.shape()));
  }
  if (len <= 0 || start < 0 || start + len > a.dim(axis)) {
    throw std::invalid_argument("narrow: window [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") invalid for shape " +
                                shape_str(a.shape()));
  }
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int64_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
  const int64_t extent = a.dim(axis);
  Shape out_shape = a.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  std::vector<double> out(static_cast<size_t>(outer * len * inner));
  const double* x = a.raw();
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(x + (o * extent + start) * inner, len * inner,
                out.data() + o * len * inner);
  }
  Tensor res(out_shape, std::move(out));
  Tape* tape = tape_of({&a});
  if (!tape) return res;
  const Shape in_shape = a.shape();
  return tape->attach(std::move(res), "narrow", {a.node()},
                      [in_shape, outer, inner, extent, start, len](const Tensor& g) {
                        std::vector<double> d(static_cast<size_t>(shape_numel(in_shape)), 0.0);
                        const double* gp = g.raw();
                        for (int64_t o = 0; o < outer; ++o) {
                          std::copy_n(gp + o * len * inner, len * inner,
                                      d.data() + (o * extent + start) * inner);
                        }
                        return std::vector<Tensor>{Tensor(in_shape, std::move(d))};
                      });
}

// ---- fused detection losses ------------------------------------------------

Tensor focal_loss_sum(const Tensor& logits, const Tensor& targets,
                      const Tensor& mask, double gamma, double alpha) {
  require_same_shape(logits, targets, "focal_loss_sum");
  require_same_shape(logits, mask, "focal_loss_sum");
  const double* x = logits.raw();
  const double* t = targets.raw();
  const double* m = mask.raw();
  double loss = 0.0;
  for (int64_t i = 0; i < logits.numel(); ++i) {
    if (m[i] == 0.0) continue;
    const double log_p = -softplus(-x[i]);
    const double log_1mp = -softplus(x[i]);
    const double p = std::exp(log_p);
    if (t[i] > 0.5) {
      loss += -alpha * std::pow(1.0 - p, gamma) * log_p;
    } else {
      loss += -(1.0 - alpha) * std::pow(p, gamma) * log_1mp;
    }
  }
  Tensor res(Shape{}, {loss});
  Tape* tape = tape_of({&logits});
  if (!tape) return res;
  const Tensor xv = logits.detached(), tv = targets.detached(), mv = mask.detached();
  return tape->attach(
      std::move(res), "focal_loss_sum", {logits.node()},
      [xv, tv, mv, gamma, alpha](const Tensor& g) {
        const double g0 = g.value();
        const double* x = xv.raw();
        const double* t = tv.raw();
        const double* m = mv.raw();
        std::vector<double> d(static_cast<size_t>(xv.numel()), 0.0);
        for (int64_t i = 0; i < xv.numel(); ++i) {
          if (m[i] == 0.0) continue;
          const double log_p = -softplus(-x[i]);
          const double log_1mp = -softplus(x[i]);
          const double p = std::exp(log_p);
          double dx;
          if (t[i] > 0.5) {
            dx = alpha * gamma * std::pow(1.0 - p, gamma) * p * log_p -
                 alpha * std::pow(1.0 - p, gamma + 1.0);
          } else {
            dx = -(1.0 - alpha) * gamma * std::pow(p, gamma) * (1.0 - p) * log_1mp +
                 (1.0 - alpha) * std::pow(p, gamma + 1.0);
          }
          d[static_cast<size_t>(i)] = g0 * dx;
        }
        return std::vector<Tensor>{Tensor(xv.shape(), std::move(d))};
      });
}

Tensor smooth_l1_sum(const Tensor& pred, const Tensor& target, const Tensor& mask,
                     double beta) {
  require_same_shape(pred, target, "smooth_l1_sum");
  require_same_shape(pred, mask, "smooth_l1_sum");
  if (beta <= 0.0) throw std::invalid_argument("smooth_l1_sum: beta must be > 0");
  const double* p = pred.raw();
  const double* t = target.raw();
  const double* m = mask.raw();
  double loss = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    if (m[i] == 0.0) continue;
    const double d = p[i] - t[i];
    const double ad = std::abs(d);
    loss += ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
  }
  Tensor res(Shape{}, {loss});
  Tape* tape = tape_of({&pred});
  if (!tape) return res;
  const Tensor pv = pred.detached(), tv = target.detached(), mv = mask.detached();
  return tape->attach(
      std::move(res), "smooth_l1_sum", {pred.node()},
      [pv, tv, mv, beta](const Tensor& g) {
        const double g0 = g.value();
        const double* p = pv.raw();
        const double* t = tv.raw();
        const double* m = mv.raw();
        std::vector<double> d(static_cast<size_t>(pv.numel()), 0.0);
        for (int64_t i = 0; i < pv.numel(); ++i) {
          if (m[i] == 0.0) continue;
          const double diff = p[i] - t[i];
          d[static_cast<size_t>(i)] =
              g0 * (std::abs(diff) < beta ? diff / beta : (diff > 0.0 ? 1.0 : -1.0));
        }
        return std::vector<Tensor>{Tensor(pv.shape(), std::move(d))};
      });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return mean_all(mul(d, d));
}

// ---- enum-dispatched surface ----------------------------------------------

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor* b, double scalar) {
  switch (kind) {
    case EwKind::kRelu: return relu(a);
    case EwKind::kSigmoid: return sigmoid(a);
    case EwKind::kAdd: return b ? add(a, *b) : add(a, scalar);
    case EwKind::kSub: return b ? sub(a, *b) : sub(a, scalar);
    case EwKind::kMul: return b ? mul(a, *b) : scale(a, scalar);
    case EwKind::kScale: return scale(a, scalar);
  }
  throw std::logic_error("elementwise: unknown kind");
}

Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int64_t> axes) {
  return kind == ReduceKind::kSum ? reduce_sum(a, std::move(axes))
                                  : reduce_mean(a, std::move(axes));
}

}  // namespace cldet::ad
