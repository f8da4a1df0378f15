#ifndef MAPGAN_TESTS_TESTUTIL_HPP_
#define MAPGAN_TESTS_TESTUTIL_HPP_

// Shared test helpers. The *_ref functions are deliberately naive
// reimplementations (explicit loops, double accumulation, no im2col, no
// BLAS); they are the oracles the fast paths are checked against and must
// stay independent of include/mapgan internals.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <mapgan/data.hpp>
#include <mapgan/image.hpp>
#include <mapgan/rng.hpp>
#include <mapgan/tensor.hpp>

namespace testutil {

// ---------------------------------------------------------------------------
// tensor helpers

inline float& at4(mapgan::Tensor& t, int a, int b, int c, int d) {
  return t.data()[((static_cast<int64_t>(a) * t.dim(1) + b) * t.dim(2) + c) *
                      t.dim(3) +
                  d];
}

inline float at4(const mapgan::Tensor& t, int a, int b, int c, int d) {
  return t.data()[((static_cast<int64_t>(a) * t.dim(1) + b) * t.dim(2) + c) *
                      t.dim(3) +
                  d];
}

inline mapgan::Tensor rand_tensor(const std::vector<int>& shape,
                                  mapgan::Rng& rng, float lo = -1.0f,
                                  float hi = 1.0f) {
  mapgan::Tensor t = mapgan::Tensor::zeros(shape);
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(lo, hi);
  return t;
}

inline void expect_allclose(const mapgan::Tensor& got,
                            const mapgan::Tensor& want, double atol,
                            double rtol, const std::string& tag) {
  ASSERT_EQ(got.shape(), want.shape()) << tag << ": shape mismatch";
  const float* g = got.data();
  const float* w = want.data();
  int64_t bad = 0;
  int64_t worst = 0;
  double worst_excess = -1.0;
  for (int64_t i = 0; i < got.numel(); ++i) {
    const double diff = std::abs(static_cast<double>(g[i]) - w[i]);
    const double tol = atol + rtol * std::abs(static_cast<double>(w[i]));
    if (diff > tol) {
      ++bad;
      if (diff - tol > worst_excess) {
        worst_excess = diff - tol;
        worst = i;
      }
    }
  }
  EXPECT_EQ(bad, 0) << tag << ": " << bad << " of " << got.numel()
                    << " elements out of tolerance; worst at flat index "
                    << worst << ": got " << g[worst] << ", want " << w[worst];
}

inline void expect_bitwise_equal(const mapgan::Tensor& got,
                                 const mapgan::Tensor& want,
                                 const std::string& tag) {
  ASSERT_EQ(got.shape(), want.shape()) << tag << ": shape mismatch";
  const float* g = got.data();
  const float* w = want.data();
  for (int64_t i = 0; i < got.numel(); ++i)
    ASSERT_EQ(g[i], w[i]) << tag << ": differs at flat index " << i;
}

inline double inner(const mapgan::Tensor& a, const mapgan::Tensor& b) {
  EXPECT_EQ(a.numel(), b.numel());
  double acc = 0.0;
  const float* pa = a.data();
  const float* pb = b.data();
  for (int64_t i = 0; i < a.numel(); ++i)
    acc += static_cast<double>(pa[i]) * pb[i];
  return acc;
}

// ---------------------------------------------------------------------------
// reference ops (nested loops, double accumulation)

inline mapgan::Tensor conv2d_ref(const mapgan::Tensor& x,
                                 const mapgan::Tensor& k,
                                 const mapgan::Tensor& bias, int stride,
                                 int pad) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = k.dim(0), K = k.dim(2);
  const int Ho = (H + 2 * pad - K) / stride + 1;
  const int Wo = (W + 2 * pad - K) / stride + 1;
  mapgan::Tensor y = mapgan::Tensor::zeros({B, Cout, Ho, Wo});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = bias.defined() ? bias.data()[co] : 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * stride + ky - pad;
                const int ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(at4(x, b, ci, iy, ix)) *
                       at4(k, co, ci, ky, kx);
              }
          at4(y, b, co, oy, ox) = static_cast<float>(acc);
        }
  return y;
}

// scatter form: each input element stamps a kernel-sized patch
inline mapgan::Tensor conv_transpose2d_ref(const mapgan::Tensor& x,
                                           const mapgan::Tensor& k,
                                           const mapgan::Tensor& bias,
                                           int stride, int pad) {
  const int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = k.dim(1), K = k.dim(2);
  const int Ho = (H - 1) * stride - 2 * pad + K;
  const int Wo = (W - 1) * stride - 2 * pad + K;
  std::vector<double> acc(static_cast<size_t>(B) * Cout * Ho * Wo, 0.0);
  for (int b = 0; b < B; ++b)
    for (int ci = 0; ci < Cin; ++ci)
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix) {
          const double v = at4(x, b, ci, iy, ix);
          for (int co = 0; co < Cout; ++co)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int oy = iy * stride + ky - pad;
                const int ox = ix * stride + kx - pad;
                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                acc[((static_cast<size_t>(b) * Cout + co) * Ho + oy) * Wo +
                    ox] += v * at4(k, ci, co, ky, kx);
              }
        }
  mapgan::Tensor y = mapgan::Tensor::zeros({B, Cout, Ho, Wo});
  for (int64_t i = 0; i < y.numel(); ++i)
    y.data()[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
  if (bias.defined())
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox)
            at4(y, b, co, oy, ox) += bias.data()[co];
  return y;
}

// train-mode batch norm: biased variance over (B,H,W) per channel
inline mapgan::Tensor batch_norm_train_ref(const mapgan::Tensor& x,
                                           const mapgan::Tensor& gamma,
                                           const mapgan::Tensor& beta,
                                           float eps) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const double n = static_cast<double>(B) * H * W;
  mapgan::Tensor y = mapgan::Tensor::zeros(x.shape());
  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) mean += at4(x, b, c, i, j);
    mean /= n;
    double var = 0.0;
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const double d = at4(x, b, c, i, j) - mean;
          var += d * d;
        }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          at4(y, b, c, i, j) =
              static_cast<float>(gamma.data()[c] * (at4(x, b, c, i, j) - mean) *
                                     is +
                                 beta.data()[c]);
  }
  return y;
}

inline mapgan::Tensor batch_norm_eval_ref(const mapgan::Tensor& x,
                                          const mapgan::Tensor& gamma,
                                          const mapgan::Tensor& beta,
                                          const mapgan::Tensor& running_mean,
                                          const mapgan::Tensor& running_var,
                                          float eps) {
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  mapgan::Tensor y = mapgan::Tensor::zeros(x.shape());
  for (int c = 0; c < C; ++c) {
    const double is =
        1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + eps);
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          at4(y, b, c, i, j) = static_cast<float>(
              gamma.data()[c] * (at4(x, b, c, i, j) - running_mean.data()[c]) *
                  is +
              beta.data()[c]);
  }
  return y;
}

// ---------------------------------------------------------------------------
// reference losses (direct summation)

inline double clamp_score_ref(double s) {
  const double eps = 1e-7;
  return std::min(std::max(s, eps), 1.0 - eps);
}

inline double d_loss_ref(const mapgan::Tensor& real,
                         const mapgan::Tensor& fake) {
  double sr = 0.0, sf = 0.0;
  for (int64_t i = 0; i < real.numel(); ++i)
    sr += std::log(clamp_score_ref(real.data()[i]));
  for (int64_t i = 0; i < fake.numel(); ++i)
    sf += std::log(1.0 - clamp_score_ref(fake.data()[i]));
  return -sr / static_cast<double>(real.numel()) -
         sf / static_cast<double>(fake.numel());
}

inline double g_loss_saturating_ref(const mapgan::Tensor& fake) {
  double s = 0.0;
  for (int64_t i = 0; i < fake.numel(); ++i)
    s += std::log(1.0 - clamp_score_ref(fake.data()[i]));
  return s / static_cast<double>(fake.numel());
}

inline double g_loss_non_saturating_ref(const mapgan::Tensor& fake) {
  double s = 0.0;
  for (int64_t i = 0; i < fake.numel(); ++i)
    s += std::log(clamp_score_ref(fake.data()[i]));
  return -s / static_cast<double>(fake.numel());
}

inline double l1_ref(const mapgan::Tensor& a, const mapgan::Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
  return s / static_cast<double>(a.numel());
}

// one Adam step on a scalar, double precision throughout
struct AdamScalarRef {
  double m = 0.0, v = 0.0;
  int64_t t = 0;
  double step(double w, double g, double lr, double b1, double b2, double eps) {
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return w - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

// ---------------------------------------------------------------------------
// reference bilinear resize (half-pixel centers, double math)

inline mapgan::ImageU8 bilinear_ref(const mapgan::ImageU8& src, int dw,
                                    int dh) {
  mapgan::ImageU8 dst;
  dst.width = dw;
  dst.height = dh;
  dst.pixels.resize(static_cast<size_t>(dw) * dh * 3);
  const double sx = static_cast<double>(src.width) / dw;
  const double sy = static_cast<double>(src.height) / dh;
  for (int y = 0; y < dh; ++y)
    for (int x = 0; x < dw; ++x) {
      const double fx =
          std::min(std::max((x + 0.5) * sx - 0.5, 0.0),
                   static_cast<double>(src.width - 1));
      const double fy =
          std::min(std::max((y + 0.5) * sy - 0.5, 0.0),
                   static_cast<double>(src.height - 1));
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double tx = fx - x0;
      const double ty = fy - y0;
      for (int c = 0; c < 3; ++c) {
        const double p00 = src.at(x0, y0, c);
        const double p10 = src.at(x1, y0, c);
        const double p01 = src.at(x0, y1, c);
        const double p11 = src.at(x1, y1, c);
        const double top = p00 + tx * (p10 - p00);
        const double bot = p01 + tx * (p11 - p01);
        const double v = top + ty * (bot - top);
        dst.pixels[(static_cast<size_t>(y) * dw + x) * 3 + c] =
            static_cast<unsigned char>(
                std::min(std::max(std::lround(v), 0L), 255L));
      }
    }
  return dst;
}

// ---------------------------------------------------------------------------
// filesystem fixtures

class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "mapgan_test_XXXXXX")
            .string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    const char* got = mkdtemp(buf.data());
    if (got == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = got;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string sub(const std::string& rel) const {
    return (std::filesystem::path(path_) / rel).string();
  }

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// synthetic paired images

using PixelFn = std::function<void(int x, int y, unsigned char* rgb)>;

// half_w*2 x h pair image; x passed to each painter is local to its half
inline void write_pair_png(const std::string& path, int half_w, int h,
                           const PixelFn& left, const PixelFn& right) {
  mapgan::ImageU8 img;
  img.width = 2 * half_w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(img.width) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < half_w; ++x) {
      left(x, y, &img.pixels[(static_cast<size_t>(y) * img.width + x) * 3]);
      right(x, y,
            &img.pixels[(static_cast<size_t>(y) * img.width + half_w + x) * 3]);
    }
  mapgan::save_png(path, img);
}

inline PixelFn solid(unsigned char r, unsigned char g, unsigned char b) {
  return [r, g, b](int, int, unsigned char* rgb) {
    rgb[0] = r;
    rgb[1] = g;
    rgb[2] = b;
  };
}

// Smooth sinusoid "satellite" with a posterized "map" counterpart. The map
// is a fixed function of the satellite field, so the translation is
// learnable; per-index phases keep the pairs distinct.
inline void write_synthetic_pair(const std::string& path, int size,
                                 uint64_t style_seed) {
  const double fx = 1.0 + static_cast<double>(style_seed % 3);
  const double fy = 1.0 + static_cast<double>((style_seed >> 8) % 3);
  const double phase =
      static_cast<double>(style_seed % 628) / 100.0;
  const auto field = [=](int x, int y) {
    const double pi = 3.14159265358979323846;
    return std::sin(2.0 * pi * fx * x / size + phase) *
           std::cos(2.0 * pi * fy * y / size);
  };
  const PixelFn sat = [=](int x, int y, unsigned char* rgb) {
    const double v = field(x, y);
    rgb[0] = static_cast<unsigned char>(127.5 * (1.0 + v));
    rgb[1] = static_cast<unsigned char>(127.5 * (1.0 - 0.5 * v));
    rgb[2] = static_cast<unsigned char>(127.5 * (1.0 + 0.25 * v));
  };
  const PixelFn map = [=](int x, int y, unsigned char* rgb) {
    const double v = field(x, y);
    if (v < -0.3) {
      rgb[0] = 40;
      rgb[1] = 60;
      rgb[2] = 160;  // water
    } else if (v <= 0.3) {
      rgb[0] = 230;
      rgb[1] = 225;
      rgb[2] = 210;  // background
    } else {
      rgb[0] = 90;
      rgb[1] = 170;
      rgb[2] = 90;  // park
    }
  };
  write_pair_png(path, size, size, sat, map);
}

// dir/train/pair_NNNN.png, sorted listing order == index order
inline void write_synthetic_corpus(const std::string& root, int count,
                                   int size, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "train");
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "pair_%04d.png", i);
    write_synthetic_pair((fs::path(root) / "train" / name).string(), size,
                         mapgan::mix_seed(seed, static_cast<uint64_t>(i)));
  }
}

}  // namespace testutil

#endif  // MAPGAN_TESTS_TESTUTIL_HPP_
