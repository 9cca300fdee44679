#include "facenet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "facenet/errors.hpp"

namespace facenet::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

// Index mapping for same-rank broadcasting.
struct Broadcast {
  Shape out;
  std::vector<std::int64_t> a_stride, b_stride, out_stride;

  Broadcast(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) {
      throw ShapeError(std::string(op) + ": rank mismatch " + shape_string(a) + " vs " + shape_string(b));
    }
    const std::size_t r = a.size();
    out.resize(r);
    for (std::size_t i = 0; i < r; ++i) {
      if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " vs " + shape_string(b));
      }
      out[i] = std::max(a[i], b[i]);
    }
    a_stride = strides(a);
    b_stride = strides(b);
    out_stride = strides(out);
    for (std::size_t i = 0; i < r; ++i) {
      if (a[i] == 1) a_stride[i] = 0;
      if (b[i] == 1) b_stride[i] = 0;
    }
  }

  static std::vector<std::int64_t> strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
  }

  template <class F>
  void for_each(F&& f) const {
    const std::int64_t n = shape_numel(out);
    const std::size_t r = out.size();
    for (std::int64_t o = 0; o < n; ++o) {
      std::int64_t rem = o, ia = 0, ib = 0;
      for (std::size_t d = 0; d < r; ++d) {
        const std::int64_t idx = rem / out_stride[d];
        rem -= idx * out_stride[d];
        ia += idx * a_stride[d];
        ib += idx * b_stride[d];
      }
      f(o, ia, ib);
    }
  }
};

bool same_shape(const Var& a, const Var& b) { return a.shape() == b.shape(); }

}  // namespace

std::int64_t conv_out_size(std::int64_t in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Var add(const Var& a, const Var& b) {
  if (same_shape(a, b)) {
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
    return Var::from_op(std::move(out), {a, b}, [](const Tensor& g, std::vector<Tensor*>& pg) {
      for (auto* p : pg) {
        if (!p) continue;
        for (std::int64_t i = 0; i < g.numel(); ++i) (*p)[i] += g[i];
      }
    });
  }
  Broadcast bc(a.shape(), b.shape(), "add");
  Tensor out(bc.out);
  const auto& av = a.value();
  const auto& bv = b.value();
  bc.for_each([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { out[o] = av[ia] + bv[ib]; });
  return Var::from_op(std::move(out), {a, b}, [bc](const Tensor& g, std::vector<Tensor*>& pg) {
    bc.for_each([&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      if (pg[0]) (*pg[0])[ia] += g[o];
      if (pg[1]) (*pg[1])[ib] += g[o];
    });
  });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
  const Tensor av = a.value();
  const Tensor bv = b.value();
  if (same_shape(a, b)) {
    Tensor out = av;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return Var::from_op(std::move(out), {a, b}, [av, bv](const Tensor& g, std::vector<Tensor*>& pg) {
      if (pg[0])
        for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i] * bv[i];
      if (pg[1])
        for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[1])[i] += g[i] * av[i];
    });
  }
  Broadcast bc(a.shape(), b.shape(), "mul");
  Tensor out(bc.out);
  bc.for_each([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { out[o] = av[ia] * bv[ib]; });
  return Var::from_op(std::move(out), {a, b}, [bc, av, bv](const Tensor& g, std::vector<Tensor*>& pg) {
    bc.for_each([&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      if (pg[0]) (*pg[0])[ia] += g[o] * bv[ib];
      if (pg[1]) (*pg[1])[ib] += g[o] * av[ia];
    });
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return Var::from_op(std::move(out), {a}, [s](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += s * g[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  return Var::from_op(std::move(out), {a}, [](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  Tensor mask = out;
  return Var::from_op(std::move(out), {x}, [mask = std::move(mask)](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < g.numel(); ++i)
      if (mask[i] > 0.0) (*pg[0])[i] += g[i];
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = sigmoid_scalar(v);
  Tensor y = out;
  return Var::from_op(std::move(out), {x}, [y = std::move(y)](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

namespace {

struct ConvGeom {
  std::int64_t B, Cin, H, W, Cout, kh, kw, Ho, Wo;
  int stride, pad;
  std::int64_t K() const { return Cin * kh * kw; }
  std::int64_t P() const { return Ho * Wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// cols is K x (B*P), row-major.
void im2col(const ConvGeom& g, const double* x, double* cols) {
  const std::int64_t BP = g.B * g.P();
  for (std::int64_t c = 0; c < g.Cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * BP;
        for (std::int64_t b = 0; b < g.B; ++b) {
          const double* xb = x + (b * g.Cin + c) * g.H * g.W;
          double* rb = row + b * g.P();
          for (std::int64_t oh = 0; oh < g.Ho; ++oh) {
            const std::int64_t ih = oh * g.stride - g.pad + ki;
            double* dst = rb + oh * g.Wo;
            if (ih < 0 || ih >= g.H) {
              std::fill(dst, dst + g.Wo, 0.0);
              continue;
            }
            const double* src = xb + ih * g.W;
            for (std::int64_t ow = 0; ow < g.Wo; ++ow) {
              const std::int64_t iw = ow * g.stride - g.pad + kj;
              dst[ow] = (iw >= 0 && iw < g.W) ? src[iw] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeom& g, const double* cols, double* dx) {
  const std::int64_t BP = g.B * g.P();
  for (std::int64_t c = 0; c < g.Cin; ++c) {
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * BP;
        for (std::int64_t b = 0; b < g.B; ++b) {
          double* xb = dx + (b * g.Cin + c) * g.H * g.W;
          const double* rb = row + b * g.P();
          for (std::int64_t oh = 0; oh < g.Ho; ++oh) {
            const std::int64_t ih = oh * g.stride - g.pad + ki;
            if (ih < 0 || ih >= g.H) continue;
            const double* src = rb + oh * g.Wo;
            double* dst = xb + ih * g.W;
            for (std::int64_t ow = 0; ow < g.Wo; ++ow) {
              const std::int64_t iw = ow * g.stride - g.pad + kj;
              if (iw >= 0 && iw < g.W) dst[iw] += src[ow];
            }
          }
        }
      }
    }
  }
}

// Channel-major (C x B*P) <-> batch-major (B x C x P) layout shuffles.
void to_channel_major(const double* src, double* dst, std::int64_t B, std::int64_t C, std::int64_t P) {
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      std::copy_n(src + (b * C + c) * P, P, dst + c * B * P + b * P);
}

void to_batch_major(const double* src, double* dst, std::int64_t B, std::int64_t C, std::int64_t P) {
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      std::copy_n(src + c * B * P + b * P, P, dst + (b * C + c) * P);
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/padding");
  ConvGeom g{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(2), wv.dim(3), 0, 0, stride, pad};
  if (wv.dim(1) != g.Cin) {
    throw ShapeError("conv2d: weight " + shape_string(wv.shape()) + " does not match input " +
                     shape_string(xv.shape()));
  }
  g.Ho = conv_out_size(g.H, static_cast<int>(g.kh), stride, pad);
  g.Wo = conv_out_size(g.W, static_cast<int>(g.kw), stride, pad);
  if (g.Ho <= 0 || g.Wo <= 0) throw ShapeError("conv2d: kernel larger than padded input " + shape_string(xv.shape()));
  if (bias.defined() && (bias.value().numel() != g.Cout)) throw ShapeError("conv2d: bias length mismatch");

  const std::int64_t K = g.K(), BP = g.B * g.P();
  std::vector<double> cols(static_cast<std::size_t>(K * BP));
  if (g.pointwise()) {
    to_channel_major(xv.raw(), cols.data(), g.B, g.Cin, g.P());
  } else {
    im2col(g, xv.raw(), cols.data());
  }
  std::vector<double> ycm(static_cast<std::size_t>(g.Cout * BP));
  ConstMapMat Wm(wv.raw(), g.Cout, K);
  ConstMapMat Cm(cols.data(), K, BP);
  MapMat Ym(ycm.data(), g.Cout, BP);
  Ym.noalias() = Wm * Cm;
  if (bias.defined()) {
    const Tensor& bv = bias.value();
    for (std::int64_t o = 0; o < g.Cout; ++o) Ym.row(o).array() += bv[o];
  }
  Tensor out({g.B, g.Cout, g.Ho, g.Wo});
  to_batch_major(ycm.data(), out.raw(), g.B, g.Cout, g.P());

  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  if (!grad_enabled() || !(x.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad()))) {
    return Var(std::move(out));
  }
  return Var::from_op(std::move(out), std::move(parents),
                      [g, wv, cols = std::move(cols)](const Tensor& grad, std::vector<Tensor*>& pg) {
                        const std::int64_t K = g.K(), BP = g.B * g.P();
                        std::vector<double> gcm(static_cast<std::size_t>(g.Cout * BP));
                        to_channel_major(grad.raw(), gcm.data(), g.B, g.Cout, g.P());
                        ConstMapMat Gm(gcm.data(), g.Cout, BP);
                        if (pg[1]) {
                          MapMat dW(pg[1]->raw(), g.Cout, K);
                          dW.noalias() += Gm * ConstMapMat(cols.data(), K, BP).transpose();
                        }
                        if (pg.size() > 2 && pg[2]) {
                          // Plain loop: Eigen's vectorised sum peels by address, which
                          // makes the rounding depend on where the buffer landed.
                          for (std::int64_t o = 0; o < g.Cout; ++o) {
                            double s = 0.0;
                            for (std::int64_t j = 0; j < BP; ++j) s += gcm[static_cast<std::size_t>(o * BP + j)];
                            (*pg[2])[o] += s;
                          }
                        }
                        if (pg[0]) {
                          std::vector<double> dcols(static_cast<std::size_t>(K * BP));
                          MapMat Dc(dcols.data(), K, BP);
                          Dc.noalias() = ConstMapMat(wv.raw(), g.Cout, K).transpose() * Gm;
                          if (g.pointwise()) {
                            std::vector<double> tmp(static_cast<std::size_t>(K * BP));
                            to_batch_major(dcols.data(), tmp.data(), g.B, g.Cin, g.P());
                            for (std::int64_t i = 0; i < K * BP; ++i) (*pg[0])[i] += tmp[i];
                          } else {
                            col2im_add(g, dcols.data(), pg[0]->raw());
                          }
                        }
                      });
}

Var max_pool2d(const Var& x, int kernel, int stride, int pad) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "max_pool2d");
  const std::int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const std::int64_t Ho = conv_out_size(H, kernel, stride, pad), Wo = conv_out_size(W, kernel, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("max_pool2d: window larger than input");
  Tensor out({B, C, Ho, Wo});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const double* src = xv.raw() + bc * H * W;
    for (std::int64_t oh = 0; oh < Ho; ++oh) {
      for (std::int64_t ow = 0; ow < Wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const std::int64_t ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const std::int64_t iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= W) continue;
            if (src[ih * W + iw] > best) {
              best = src[ih * W + iw];
              best_idx = bc * H * W + ih * W + iw;
            }
          }
        }
        const std::int64_t o = (bc * Ho + oh) * Wo + ow;
        out[o] = best;
        argmax[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }
  return Var::from_op(std::move(out), {x}, [argmax = std::move(argmax)](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t o = 0; o < g.numel(); ++o) (*pg[0])[argmax[static_cast<std::size_t>(o)]] += g[o];
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "global_avg_pool");
  const std::int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor out({B, C, 1, 1});
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (std::int64_t i = 0; i < HW; ++i) s += xv[bc * HW + i];
    out[bc] = s / static_cast<double>(HW);
  }
  return Var::from_op(std::move(out), {x}, [HW](const Tensor& g, std::vector<Tensor*>& pg) {
    const double inv = 1.0 / static_cast<double>(HW);
    for (std::int64_t bc = 0; bc < g.numel(); ++bc)
      for (std::int64_t i = 0; i < HW; ++i) (*pg[0])[bc * HW + i] += g[bc] * inv;
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "group_norm");
  const std::int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  if (groups <= 0 || C % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " + std::to_string(groups) +
                     " groups");
  }
  if (gamma.value().numel() != C || beta.value().numel() != C) throw ShapeError("group_norm: affine length mismatch");
  const std::int64_t G = groups, CG = C / G, N = CG * HW;
  const Tensor gv = gamma.value();
  // Normalised input and 1/sigma per (sample, group), kept for the backward pass.
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(B * G));
  Tensor out(xv.shape());
  const Tensor& bv = beta.value();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t g = 0; g < G; ++g) {
      const std::int64_t base = (b * C + g * CG) * HW;
      double mu = 0.0;
      for (std::int64_t i = 0; i < N; ++i) mu += xv[base + i];
      mu /= static_cast<double>(N);
      double var = 0.0;
      for (std::int64_t i = 0; i < N; ++i) var += (xv[base + i] - mu) * (xv[base + i] - mu);
      var /= static_cast<double>(N);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(b * G + g)] = is;
      for (std::int64_t i = 0; i < N; ++i) {
        const std::int64_t c = g * CG + i / HW;
        xhat[base + i] = (xv[base + i] - mu) * is;
        out[base + i] = xhat[base + i] * gv[c] + bv[c];
      }
    }
  return Var::from_op(std::move(out), {x, gamma, beta},
                      [xhat, inv_std, gv, B, C, G, CG, HW, N](const Tensor& gr, std::vector<Tensor*>& pg) {
                        for (std::int64_t b = 0; b < B; ++b)
                          for (std::int64_t g = 0; g < G; ++g) {
                            const std::int64_t base = (b * C + g * CG) * HW;
                            double sum_dy = 0.0, sum_dy_xhat = 0.0;
                            for (std::int64_t i = 0; i < N; ++i) {
                              const std::int64_t c = g * CG + i / HW;
                              const double dy = gr[base + i];
                              if (pg[1]) (*pg[1])[c] += dy * xhat[base + i];
                              if (pg[2]) (*pg[2])[c] += dy;
                              const double dxhat = dy * gv[c];
                              sum_dy += dxhat;
                              sum_dy_xhat += dxhat * xhat[base + i];
                            }
                            if (!pg[0]) continue;
                            const double is = inv_std[static_cast<std::size_t>(b * G + g)];
                            const double n = static_cast<double>(N);
                            for (std::int64_t i = 0; i < N; ++i) {
                              const std::int64_t c = g * CG + i / HW;
                              const double dxhat = gr[base + i] * gv[c];
                              (*pg[0])[base + i] += is * (dxhat - sum_dy / n - xhat[base + i] * sum_dy_xhat / n);
                            }
                          }
                      });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return Var::from_op(std::move(out), {x}, [](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i];
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  const std::int64_t B = xv.dim(0), D = xv.dim(1), O = wv.dim(0);
  if (wv.dim(1) != D) {
    throw ShapeError("linear: weight " + shape_string(wv.shape()) + " does not match input " + shape_string(xv.shape()));
  }
  if (bias.defined() && bias.value().numel() != O) throw ShapeError("linear: bias length mismatch");
  Tensor out({B, O});
  MapMat Y(out.raw(), B, O);
  Y.noalias() = ConstMapMat(xv.raw(), B, D) * ConstMapMat(wv.raw(), O, D).transpose();
  if (bias.defined()) {
    const Tensor& bv = bias.value();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t o = 0; o < O; ++o) Y(b, o) += bv[o];
  }
  std::vector<Var> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return Var::from_op(std::move(out), std::move(parents),
                      [xv, wv, B, D, O](const Tensor& g, std::vector<Tensor*>& pg) {
                        ConstMapMat G(g.raw(), B, O);
                        if (pg[0]) MapMat(pg[0]->raw(), B, D).noalias() += G * ConstMapMat(wv.raw(), O, D);
                        if (pg[1]) MapMat(pg[1]->raw(), O, D).noalias() += G.transpose() * ConstMapMat(xv.raw(), B, D);
                        if (pg.size() > 2 && pg[2]) {
                          for (std::int64_t o = 0; o < O; ++o) {
                            double s = 0.0;
                            for (std::int64_t b = 0; b < B; ++b) s += g[b * O + o];
                            (*pg[2])[o] += s;
                          }
                        }
                      });
}

Var concat1(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || av.rank() < 2) throw ShapeError("concat1: rank mismatch");
  for (int d = 0; d < av.rank(); ++d) {
    if (d != 1 && av.dim(d) != bv.dim(d)) {
      throw ShapeError("concat1: shapes " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
    }
  }
  const std::int64_t B = av.dim(0);
  const std::int64_t inner_a = av.numel() / B, inner_b = bv.numel() / B;
  Shape shape = av.shape();
  shape[1] += bv.dim(1);
  Tensor out(shape);
  for (std::int64_t i = 0; i < B; ++i) {
    std::copy_n(av.raw() + i * inner_a, inner_a, out.raw() + i * (inner_a + inner_b));
    std::copy_n(bv.raw() + i * inner_b, inner_b, out.raw() + i * (inner_a + inner_b) + inner_a);
  }
  return Var::from_op(std::move(out), {a, b}, [B, inner_a, inner_b](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t i = 0; i < B; ++i) {
      const double* src = g.raw() + i * (inner_a + inner_b);
      if (pg[0])
        for (std::int64_t j = 0; j < inner_a; ++j) (*pg[0])[i * inner_a + j] += src[j];
      if (pg[1])
        for (std::int64_t j = 0; j < inner_b; ++j) (*pg[1])[i * inner_b + j] += src[inner_a + j];
    }
  });
}

Var repeat_channels(const Var& x, std::int64_t channels) {
  const Tensor& xv = x.value();
  require_rank(xv, 4, "repeat_channels");
  if (xv.dim(1) != 1) throw ShapeError("repeat_channels: input must have one channel");
  const std::int64_t B = xv.dim(0), HW = xv.dim(2) * xv.dim(3);
  Tensor out({B, channels, xv.dim(2), xv.dim(3)});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < channels; ++c) std::copy_n(xv.raw() + b * HW, HW, out.raw() + (b * channels + c) * HW);
  return Var::from_op(std::move(out), {x}, [B, HW, channels](const Tensor& g, std::vector<Tensor*>& pg) {
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t c = 0; c < channels; ++c)
        for (std::int64_t i = 0; i < HW; ++i) (*pg[0])[b * HW + i] += g[(b * channels + c) * HW + i];
  });
}

Var sum(const Var& x) {
  Tensor out({1}, x.value().sum());
  return Var::from_op(std::move(out), {x}, [](const Tensor& g, std::vector<Tensor*>& pg) {
    for (auto& v : pg[0]->data()) v += g[0];
  });
}

Var mean(const Var& x) {
  const auto n = static_cast<double>(x.value().numel());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var binarize_ste(const Var& soft, const Var& delta) {
  const Tensor& sv = soft.value();
  if (delta.value().numel() != 1) throw ShapeError("binarize_ste: threshold must be a scalar");
  const double t = sigmoid_scalar(delta.value()[0]);
  Tensor out(sv.shape());
  for (std::int64_t i = 0; i < sv.numel(); ++i) out[i] = sv[i] > t ? 1.0 : 0.0;
  const double dt = t * (1.0 - t);
  return Var::from_op(std::move(out), {soft, delta}, [dt](const Tensor& g, std::vector<Tensor*>& pg) {
    if (pg[0])
      for (std::int64_t i = 0; i < g.numel(); ++i) (*pg[0])[i] += g[i];
    if (pg[1]) (*pg[1])[0] -= dt * g.sum();
  });
}

}  // namespace facenet::ops
