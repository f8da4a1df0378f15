#ifndef MAPGAN_OPS_HPP_
#define MAPGAN_OPS_HPP_

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

namespace detail {

inline void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                  const float* a, int lda, const float* b, int ldb, float beta,
                  float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

// Unrolls K*K patches of a zero-padded image into a [C*K*K, Hout*Wout]
// matrix so the convolution reduces to one GEMM per sample.
inline void im2col(const float* img, int c_channels, int h, int w, int k,
                   int stride, int pad, int hout, int wout, float* cols) {
  const int64_t plane = static_cast<int64_t>(hout) * wout;
  int row = 0;
  for (int c = 0; c < c_channels; ++c) {
    const float* src = img + static_cast<int64_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        float* dst = cols + row * plane;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wout, 0.0f);
            dst += wout;
            continue;
          }
          const float* src_row = src + static_cast<int64_t>(iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride - pad + kj;
            *dst++ = (ix >= 0 && ix < w) ? src_row[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// adjoint of im2col: scatter-adds column entries back into the image
inline void col2im(const float* cols, int c_channels, int h, int w, int k,
                   int stride, int pad, int hout, int wout, float* img) {
  int row = 0;
  for (int c = 0; c < c_channels; ++c) {
    float* dst = img + static_cast<int64_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj, ++row) {
        const float* src = cols + static_cast<int64_t>(row) * hout * wout;
        for (int oy = 0; oy < hout; ++oy) {
          int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) {
            src += wout;
            continue;
          }
          float* dst_row = dst + static_cast<int64_t>(iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst_row[ix] += src[ox];
          }
          src += wout;
        }
      }
    }
  }
}

struct ConvGeom {
  int b, cin, h, w, cout, k, stride, pad, hout, wout;
};

inline ConvGeom conv2d_geometry(const Tensor& input, const Tensor& kernel,
                                int stride, int padding) {
  check(input.ndim() == 4, "conv2d: input must be [B,Cin,H,W], got " +
                               shape_str(input.shape()));
  check(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
        "conv2d: kernel must be [Cout,Cin,K,K], got " +
            shape_str(kernel.shape()));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(padding >= 0, "conv2d: padding must be >= 0");
  ConvGeom g;
  g.b = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  check(g.k >= 1, "conv2d: kernel size must be >= 1");
  check(kernel.dim(1) == g.cin,
        "conv2d: input channels (" + std::to_string(g.cin) +
            ") do not match kernel input channels (" +
            std::to_string(kernel.dim(1)) + ")");
  check(g.h + 2 * g.pad >= g.k && g.w + 2 * g.pad >= g.k,
        "conv2d: padded input " + std::to_string(g.h + 2 * g.pad) + "x" +
            std::to_string(g.w + 2 * g.pad) + " is smaller than kernel " +
            std::to_string(g.k));
  g.hout = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wout = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

}  // namespace detail

// -------------------------------------------------------------------------
// convolution

// Zero-padded 2d cross-correlation. kernel is [Cout,Cin,K,K]; bias, when
// defined, is [Cout]. Output is [B,Cout,Hout,Wout] with
// Hout = floor((H + 2*pad - K)/stride) + 1.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel,
                     const Tensor& bias, int stride, int padding) {
  using detail::ConvGeom;
  const ConvGeom g = detail::conv2d_geometry(input, kernel, stride, padding);
  if (bias.defined())
    detail::check(bias.ndim() == 1 && bias.dim(0) == g.cout,
                  "conv2d: bias must be [Cout], got " +
                      detail::shape_str(bias.shape()));

  const int rows = g.cin * g.k * g.k;
  const int64_t plane = static_cast<int64_t>(g.hout) * g.wout;
  Tensor out = Tensor::zeros({g.b, g.cout, g.hout, g.wout});
  std::vector<float> cols(static_cast<size_t>(rows) * plane);
  for (int b = 0; b < g.b; ++b) {
    const float* x = input.data() + static_cast<int64_t>(b) * g.cin * g.h * g.w;
    float* y = out.data() + static_cast<int64_t>(b) * g.cout * plane;
    detail::im2col(x, g.cin, g.h, g.w, g.k, g.stride, g.pad, g.hout, g.wout,
                   cols.data());
    detail::sgemm(false, false, g.cout, static_cast<int>(plane), rows, 1.0f,
                  kernel.data(), rows, cols.data(), static_cast<int>(plane),
                  0.0f, y, static_cast<int>(plane));
    if (bias.defined())
      for (int co = 0; co < g.cout; ++co)
        for (int64_t p = 0; p < plane; ++p) y[co * plane + p] += bias.data()[co];
  }

  if (detail::tracing({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    detail::watch_all({&input, &kernel, &bias});
    Graph::current()->record(
        out, [input, kernel, bias, g](const std::vector<float>& gout,
                                      Graph::GradMap& gm) {
          const int rows = g.cin * g.k * g.k;
          const int64_t plane = static_cast<int64_t>(g.hout) * g.wout;
          std::vector<float> gkernel, ginput, cols, colsg;
          if (kernel.requires_grad()) {
            gkernel.assign(kernel.values().size(), 0.0f);
            cols.resize(static_cast<size_t>(rows) * plane);
          }
          if (input.requires_grad()) {
            ginput.assign(input.values().size(), 0.0f);
            colsg.resize(static_cast<size_t>(rows) * plane);
          }
          for (int b = 0; b < g.b; ++b) {
            const float* go = gout.data() + static_cast<int64_t>(b) * g.cout * plane;
            if (kernel.requires_grad()) {
              const float* x =
                  input.data() + static_cast<int64_t>(b) * g.cin * g.h * g.w;
              detail::im2col(x, g.cin, g.h, g.w, g.k, g.stride, g.pad, g.hout,
                             g.wout, cols.data());
              detail::sgemm(false, true, g.cout, rows, static_cast<int>(plane),
                            1.0f, go, static_cast<int>(plane), cols.data(),
                            static_cast<int>(plane), 1.0f, gkernel.data(), rows);
            }
            if (input.requires_grad()) {
              detail::sgemm(true, false, rows, static_cast<int>(plane), g.cout,
                            1.0f, kernel.data(), rows, go,
                            static_cast<int>(plane), 0.0f, colsg.data(),
                            static_cast<int>(plane));
              detail::col2im(colsg.data(), g.cin, g.h, g.w, g.k, g.stride,
                             g.pad, g.hout, g.wout,
                             ginput.data() +
                                 static_cast<int64_t>(b) * g.cin * g.h * g.w);
            }
          }
          if (kernel.requires_grad())
            Graph::add_grad(gm, kernel, std::move(gkernel));
          if (input.requires_grad()) Graph::add_grad(gm, input, std::move(ginput));
          if (bias.defined() && bias.requires_grad()) {
            std::vector<float> gbias(static_cast<size_t>(g.cout), 0.0f);
            for (int b = 0; b < g.b; ++b) {
              const float* go =
                  gout.data() + static_cast<int64_t>(b) * g.cout * plane;
              for (int co = 0; co < g.cout; ++co)
                for (int64_t p = 0; p < plane; ++p) gbias[co] += go[co * plane + p];
            }
            Graph::add_grad(gm, bias, std::move(gbias));
          }
        });
  }
  return out;
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride,
                     int padding) {
  return conv2d(input, kernel, Tensor(), stride, padding);
}

// Transposed convolution (the adjoint of conv2d in its spatial map).
// kernel is [Cin,Cout,K,K]; output is [B,Cout,Hout,Wout] with
// Hout = (H - 1)*stride - 2*pad + K.
inline Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                               const Tensor& bias, int stride, int padding) {
  detail::check(input.ndim() == 4, "conv_transpose2d: input must be [B,Cin,H,W], got " +
                                       detail::shape_str(input.shape()));
  detail::check(kernel.ndim() == 4 && kernel.dim(2) == kernel.dim(3),
                "conv_transpose2d: kernel must be [Cin,Cout,K,K], got " +
                    detail::shape_str(kernel.shape()));
  detail::check(stride >= 1 && padding >= 0,
                "conv_transpose2d: stride must be >= 1 and padding >= 0");
  detail::check(kernel.dim(0) == input.dim(1),
                "conv_transpose2d: input channels (" +
                    std::to_string(input.dim(1)) +
                    ") do not match kernel input channels (" +
                    std::to_string(kernel.dim(0)) + ")");

  detail::ConvGeom g;
  g.b = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(1);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = padding;
  g.hout = (g.h - 1) * stride - 2 * padding + g.k;
  g.wout = (g.w - 1) * stride - 2 * padding + g.k;
  detail::check(g.hout >= 1 && g.wout >= 1,
                "conv_transpose2d: output would be empty for input " +
                    detail::shape_str(input.shape()));
  if (bias.defined())
    detail::check(bias.ndim() == 1 && bias.dim(0) == g.cout,
                  "conv_transpose2d: bias must be [Cout], got " +
                      detail::shape_str(bias.shape()));

  const int rows = g.cout * g.k * g.k;        // column-matrix rows
  const int64_t in_plane = static_cast<int64_t>(g.h) * g.w;
  const int64_t out_plane = static_cast<int64_t>(g.hout) * g.wout;
  Tensor out = Tensor::zeros({g.b, g.cout, g.hout, g.wout});
  std::vector<float> cols(static_cast<size_t>(rows) * in_plane);
  for (int b = 0; b < g.b; ++b) {
    const float* x = input.data() + static_cast<int64_t>(b) * g.cin * in_plane;
    float* y = out.data() + static_cast<int64_t>(b) * g.cout * out_plane;
    detail::sgemm(true, false, rows, static_cast<int>(in_plane), g.cin, 1.0f,
                  kernel.data(), rows, x, static_cast<int>(in_plane), 0.0f,
                  cols.data(), static_cast<int>(in_plane));
    detail::col2im(cols.data(), g.cout, g.hout, g.wout, g.k, g.stride, g.pad,
                   g.h, g.w, y);
    if (bias.defined())
      for (int co = 0; co < g.cout; ++co)
        for (int64_t p = 0; p < out_plane; ++p)
          y[co * out_plane + p] += bias.data()[co];
  }

  if (detail::tracing({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    detail::watch_all({&input, &kernel, &bias});
    Graph::current()->record(
        out, [input, kernel, bias, g](const std::vector<float>& gout,
                                      Graph::GradMap& gm) {
          const int rows = g.cout * g.k * g.k;
          const int64_t in_plane = static_cast<int64_t>(g.h) * g.w;
          const int64_t out_plane = static_cast<int64_t>(g.hout) * g.wout;
          std::vector<float> cols(static_cast<size_t>(rows) * in_plane);
          std::vector<float> gkernel, ginput;
          if (kernel.requires_grad()) gkernel.assign(kernel.values().size(), 0.0f);
          if (input.requires_grad()) ginput.assign(input.values().size(), 0.0f);
          for (int b = 0; b < g.b; ++b) {
            const float* go =
                gout.data() + static_cast<int64_t>(b) * g.cout * out_plane;
            // both grads consume the unrolled output gradient
            detail::im2col(go, g.cout, g.hout, g.wout, g.k, g.stride, g.pad,
                           g.h, g.w, cols.data());
            if (input.requires_grad()) {
              detail::sgemm(false, false, g.cin, static_cast<int>(in_plane),
                            rows, 1.0f, kernel.data(), rows, cols.data(),
                            static_cast<int>(in_plane), 0.0f,
                            ginput.data() +
                                static_cast<int64_t>(b) * g.cin * in_plane,
                            static_cast<int>(in_plane));
            }
            if (kernel.requires_grad()) {
              const float* x =
                  input.data() + static_cast<int64_t>(b) * g.cin * in_plane;
              detail::sgemm(false, true, g.cin, rows,
                            static_cast<int>(in_plane), 1.0f, x,
                            static_cast<int>(in_plane), cols.data(),
                            static_cast<int>(in_plane), 1.0f, gkernel.data(),
                            rows);
            }
          }
          if (kernel.requires_grad())
            Graph::add_grad(gm, kernel, std::move(gkernel));
          if (input.requires_grad()) Graph::add_grad(gm, input, std::move(ginput));
          if (bias.defined() && bias.requires_grad()) {
            std::vector<float> gbias(static_cast<size_t>(g.cout), 0.0f);
            for (int b = 0; b < g.b; ++b) {
              const float* go =
                  gout.data() + static_cast<int64_t>(b) * g.cout * out_plane;
              for (int co = 0; co < g.cout; ++co)
                for (int64_t p = 0; p < out_plane; ++p)
                  gbias[co] += go[co * out_plane + p];
            }
            Graph::add_grad(gm, bias, std::move(gbias));
          }
        });
  }
  return out;
}

inline Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                               int stride, int padding) {
  return conv_transpose2d(input, kernel, Tensor(), stride, padding);
}

// -------------------------------------------------------------------------
// batch normalization

// Per-channel normalization over (B,H,W). Train mode uses batch statistics
// (biased variance) and folds them into the running stats with the given
// momentum; eval mode normalizes with the running stats and leaves them
// untouched. B*H*W == 1 in train mode is legal: eps keeps the division
// finite.
inline Tensor batch_norm(const Tensor& input, const Tensor& gamma,
                         const Tensor& beta, Tensor& running_mean,
                         Tensor& running_var, Mode mode, float eps = 1e-5f,
                         float momentum = 0.1f) {
  detail::check(input.ndim() == 4, "batch_norm: input must be [B,C,H,W], got " +
                                       detail::shape_str(input.shape()));
  const int b = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  detail::check(gamma.ndim() == 1 && gamma.dim(0) == c &&
                    beta.ndim() == 1 && beta.dim(0) == c,
                "batch_norm: gamma/beta must be [C] with C=" + std::to_string(c));
  detail::check(running_mean.dim(0) == c && running_var.dim(0) == c,
                "batch_norm: running stats must be [C]");
  detail::check(eps > 0.0f, "batch_norm: eps must be positive");

  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t n = static_cast<int64_t>(b) * plane;

  std::vector<float> mean(c), inv_std(c);
  if (mode == Mode::Train) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const float* x = input.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
        for (int64_t p = 0; p < plane; ++p) acc += x[p];
      }
      double mu = acc / static_cast<double>(n);
      double var_acc = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const float* x = input.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
        for (int64_t p = 0; p < plane; ++p) {
          double d = x[p] - mu;
          var_acc += d * d;
        }
      }
      double var = var_acc / static_cast<double>(n);
      mean[ch] = static_cast<float>(mu);
      inv_std[ch] = static_cast<float>(1.0 / std::sqrt(var + eps));
      running_mean.data()[ch] =
          (1.0f - momentum) * running_mean.data()[ch] + momentum * mean[ch];
      running_var.data()[ch] = (1.0f - momentum) * running_var.data()[ch] +
                               momentum * static_cast<float>(var);
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean.data()[ch];
      inv_std[ch] =
          1.0f / std::sqrt(running_var.data()[ch] + eps);
    }
  }

  Tensor out = Tensor::zeros(input.shape());
  for (int bi = 0; bi < b; ++bi)
    for (int ch = 0; ch < c; ++ch) {
      const float* x = input.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
      float* y = out.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
      const float g = gamma.data()[ch], bt = beta.data()[ch];
      const float mu = mean[ch], is = inv_std[ch];
      for (int64_t p = 0; p < plane; ++p) y[p] = g * (x[p] - mu) * is + bt;
    }

  if (detail::tracing({&input, &gamma, &beta})) {
    out.set_requires_grad(true);
    detail::watch_all({&input, &gamma, &beta});
    Graph::current()->record(
        out, [input, gamma, beta, mean, inv_std, mode, b, c, plane,
              n](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> ggamma(c, 0.0f), gbeta(c, 0.0f);
          std::vector<double> sum_go(c, 0.0), sum_go_xhat(c, 0.0);
          for (int bi = 0; bi < b; ++bi)
            for (int ch = 0; ch < c; ++ch) {
              const float* x =
                  input.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
              const float* go = gout.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
              const float mu = mean[ch], is = inv_std[ch];
              double sg = 0.0, sgx = 0.0;
              for (int64_t p = 0; p < plane; ++p) {
                sg += go[p];
                sgx += go[p] * (x[p] - mu) * is;
              }
              sum_go[ch] += sg;
              sum_go_xhat[ch] += sgx;
            }
          for (int ch = 0; ch < c; ++ch) {
            gbeta[ch] = static_cast<float>(sum_go[ch]);
            ggamma[ch] = static_cast<float>(sum_go_xhat[ch]);
          }
          if (input.requires_grad()) {
            std::vector<float> ginput(input.values().size());
            for (int bi = 0; bi < b; ++bi)
              for (int ch = 0; ch < c; ++ch) {
                const float* x =
                    input.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
                const float* go =
                    gout.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
                float* gx =
                    ginput.data() + (static_cast<int64_t>(bi) * c + ch) * plane;
                const float g = gamma.data()[ch];
                const float mu = mean[ch], is = inv_std[ch];
                if (mode == Mode::Train) {
                  const float mean_go = static_cast<float>(sum_go[ch] / n);
                  const float mean_go_xhat =
                      static_cast<float>(sum_go_xhat[ch] / n);
                  for (int64_t p = 0; p < plane; ++p) {
                    float xhat = (x[p] - mu) * is;
                    gx[p] = g * is * (go[p] - mean_go - xhat * mean_go_xhat);
                  }
                } else {
                  for (int64_t p = 0; p < plane; ++p) gx[p] = g * is * go[p];
                }
              }
            Graph::add_grad(gm, input, std::move(ginput));
          }
          if (gamma.requires_grad()) Graph::add_grad(gm, gamma, std::move(ggamma));
          if (beta.requires_grad()) Graph::add_grad(gm, beta, std::move(gbeta));
        });
  }
  return out;
}

// -------------------------------------------------------------------------
// pointwise ops

// max(x, slope*x); the gradient at exactly 0 is slope
inline Tensor leaky_relu(const Tensor& input, float slope) {
  detail::check(slope >= 0.0f && slope < 1.0f,
                "leaky_relu: slope must be in [0,1), got " + std::to_string(slope));
  Tensor out = Tensor::zeros(input.shape());
  const float* x = input.data();
  float* y = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, slope](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(gout.size());
          const float* x = input.data();
          for (size_t i = 0; i < gout.size(); ++i)
            gx[i] = gout[i] * (x[i] > 0.0f ? 1.0f : slope);
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

namespace detail {
// largest float strictly below 1
inline float one_minus_ulp() { return std::nextafter(1.0f, 0.0f); }
}  // namespace detail

// hyperbolic tangent clamped to the open interval (-1, 1): float32
// std::tanh saturates to exactly +/-1 around |x| ~ 9, which would make
// downstream logs of (1 - |y|) explode
inline Tensor tanh(const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  const float hi = detail::one_minus_ulp();
  const float* x = input.data();
  float* y = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i)
    y[i] = std::clamp(std::tanh(x[i]), -hi, hi);

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, out](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(gout.size());
          const float* y = out.data();
          for (size_t i = 0; i < gout.size(); ++i)
            gx[i] = gout[i] * (1.0f - y[i] * y[i]);
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// logistic function, branch-stable for large |x| and clamped to the open
// interval (0, 1)
inline Tensor sigmoid(const Tensor& input) {
  Tensor out = Tensor::zeros(input.shape());
  const float lo = std::numeric_limits<float>::min();
  const float hi = detail::one_minus_ulp();
  const float* x = input.data();
  float* y = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) {
    float s;
    if (x[i] >= 0.0f) {
      s = 1.0f / (1.0f + std::exp(-x[i]));
    } else {
      float e = std::exp(x[i]);
      s = e / (1.0f + e);
    }
    y[i] = std::clamp(s, lo, hi);
  }

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, out](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(gout.size());
          const float* y = out.data();
          for (size_t i = 0; i < gout.size(); ++i)
            gx[i] = gout[i] * y[i] * (1.0f - y[i]);
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); eval mode is the identity. The mask is
// drawn from `rng` at forward time and reused in backward.
inline Tensor dropout(const Tensor& input, float rate, Mode mode, Rng& rng) {
  detail::check(rate >= 0.0f && rate < 1.0f,
                "dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0f) return input;

  const int64_t n = input.numel();
  auto mask = std::make_shared<std::vector<float>>(static_cast<size_t>(n));
  const float keep_scale = 1.0f / (1.0f - rate);
  for (int64_t i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0f;

  Tensor out = Tensor::zeros(input.shape());
  const float* x = input.data();
  float* y = out.data();
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] * (*mask)[i];

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, mask](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(gout.size());
          for (size_t i = 0; i < gout.size(); ++i) gx[i] = gout[i] * (*mask)[i];
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// -------------------------------------------------------------------------
// shape ops

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  detail::check(a.ndim() == 4 && b.ndim() == 4,
                "concat_channels: inputs must be [B,C,H,W]");
  detail::check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                    a.dim(3) == b.dim(3),
                "concat_channels: batch/spatial dims differ: " +
                    detail::shape_str(a.shape()) + " vs " +
                    detail::shape_str(b.shape()));
  const int bn = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
            w = a.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out = Tensor::zeros({bn, ca + cb, h, w});
  for (int bi = 0; bi < bn; ++bi) {
    float* dst = out.data() + static_cast<int64_t>(bi) * (ca + cb) * plane;
    const float* pa = a.data() + static_cast<int64_t>(bi) * ca * plane;
    const float* pb = b.data() + static_cast<int64_t>(bi) * cb * plane;
    std::copy(pa, pa + ca * plane, dst);
    std::copy(pb, pb + cb * plane, dst + ca * plane);
  }

  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    detail::watch_all({&a, &b});
    Graph::current()->record(
        out, [a, b, bn, ca, cb, plane](const std::vector<float>& gout,
                                       Graph::GradMap& gm) {
          if (a.requires_grad()) {
            std::vector<float> ga(a.values().size());
            for (int bi = 0; bi < bn; ++bi) {
              const float* src =
                  gout.data() + static_cast<int64_t>(bi) * (ca + cb) * plane;
              std::copy(src, src + ca * plane,
                        ga.begin() + static_cast<int64_t>(bi) * ca * plane);
            }
            Graph::add_grad(gm, a, std::move(ga));
          }
          if (b.requires_grad()) {
            std::vector<float> gb(b.values().size());
            for (int bi = 0; bi < bn; ++bi) {
              const float* src =
                  gout.data() + static_cast<int64_t>(bi) * (ca + cb) * plane +
                  ca * plane;
              std::copy(src, src + cb * plane,
                        gb.begin() + static_cast<int64_t>(bi) * cb * plane);
            }
            Graph::add_grad(gm, b, std::move(gb));
          }
        });
  }
  return out;
}

// channels [c0, c1) of a [B,C,H,W] tensor
inline Tensor slice_channels(const Tensor& input, int c0, int c1) {
  detail::check(input.ndim() == 4, "slice_channels: input must be [B,C,H,W]");
  const int bn = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  detail::check(0 <= c0 && c0 < c1 && c1 <= c,
                "slice_channels: invalid range [" + std::to_string(c0) + "," +
                    std::to_string(c1) + ") for C=" + std::to_string(c));
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int cs = c1 - c0;
  Tensor out = Tensor::zeros({bn, cs, h, w});
  for (int bi = 0; bi < bn; ++bi) {
    const float* src =
        input.data() + (static_cast<int64_t>(bi) * c + c0) * plane;
    std::copy(src, src + cs * plane,
              out.data() + static_cast<int64_t>(bi) * cs * plane);
  }

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, bn, c, c0, cs, plane](const std::vector<float>& gout,
                                           Graph::GradMap& gm) {
          std::vector<float> gx(input.values().size(), 0.0f);
          for (int bi = 0; bi < bn; ++bi) {
            const float* src = gout.data() + static_cast<int64_t>(bi) * cs * plane;
            std::copy(src, src + cs * plane,
                      gx.begin() + (static_cast<int64_t>(bi) * c + c0) * plane);
          }
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// -------------------------------------------------------------------------
// reductions and scalar arithmetic

inline Tensor sum(const Tensor& input) {
  double acc = 0.0;
  const float* x = input.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(input.values().size(), gout[0]);
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// sum(x * w) as a scalar; primarily backs gradient checking, where a fixed
// random weighting turns any op output into a scalar probe
inline Tensor weighted_sum(const Tensor& input, const Tensor& weights) {
  detail::check(input.numel() == weights.numel(),
                "weighted_sum: size mismatch " + detail::shape_str(input.shape()) +
                    " vs " + detail::shape_str(weights.shape()));
  double acc = 0.0;
  const float* x = input.data();
  const float* w = weights.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * w[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));

  if (detail::tracing({&input, &weights})) {
    out.set_requires_grad(true);
    detail::watch_all({&input, &weights});
    Graph::current()->record(
        out, [input, weights](const std::vector<float>& gout, Graph::GradMap& gm) {
          if (input.requires_grad()) {
            std::vector<float> gx(input.values().size());
            const float* w = weights.data();
            for (size_t i = 0; i < gx.size(); ++i) gx[i] = gout[0] * w[i];
            Graph::add_grad(gm, input, std::move(gx));
          }
          if (weights.requires_grad()) {
            std::vector<float> gw(weights.values().size());
            const float* x = input.data();
            for (size_t i = 0; i < gw.size(); ++i) gw[i] = gout[0] * x[i];
            Graph::add_grad(gm, weights, std::move(gw));
          }
        });
  }
  return out;
}

// a + lambda * b, elementwise over equal shapes
inline Tensor add_scaled(const Tensor& a, const Tensor& b, float lambda) {
  detail::check(a.numel() == b.numel(),
                "add_scaled: size mismatch " + detail::shape_str(a.shape()) +
                    " vs " + detail::shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* y = out.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = pa[i] + lambda * pb[i];

  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    detail::watch_all({&a, &b});
    Graph::current()->record(
        out, [a, b, lambda](const std::vector<float>& gout, Graph::GradMap& gm) {
          if (a.requires_grad()) {
            std::vector<float> ga(gout);
            Graph::add_grad(gm, a, std::move(ga));
          }
          if (b.requires_grad()) {
            std::vector<float> gb(gout.size());
            for (size_t i = 0; i < gout.size(); ++i) gb[i] = lambda * gout[i];
            Graph::add_grad(gm, b, std::move(gb));
          }
        });
  }
  return out;
}

inline Tensor scale(const Tensor& input, float factor) {
  Tensor out = Tensor::zeros(input.shape());
  const float* x = input.data();
  float* y = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = factor * x[i];

  if (detail::tracing({&input})) {
    out.set_requires_grad(true);
    detail::watch_all({&input});
    Graph::current()->record(
        out, [input, factor](const std::vector<float>& gout, Graph::GradMap& gm) {
          std::vector<float> gx(gout.size());
          for (size_t i = 0; i < gout.size(); ++i) gx[i] = factor * gout[i];
          Graph::add_grad(gm, input, std::move(gx));
        });
  }
  return out;
}

// plain mean of the values; reporting helper, not differentiable
inline double mean_value(const Tensor& t) {
  double acc = 0.0;
  const float* x = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) acc += x[i];
  return acc / static_cast<double>(n);
}

inline bool all_finite(const Tensor& t) {
  const float* x = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace mapgan

#endif  // MAPGAN_OPS_HPP_
