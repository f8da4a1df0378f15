#ifndef MAPGAN_GRADCHECK_HPP_
#define MAPGAN_GRADCHECK_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mapgan/gan.hpp"
#include "mapgan/nn.hpp"
#include "mapgan/ops.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

// Scalar-valued probe of the op under test. The function must be a pure,
// re-runnable map of the point tensors: any internal randomness has to be
// re-seeded identically on every call.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

namespace detail {

inline double relative_error(double a, double n) {
  return std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-8);
}

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& pts) {
  Tensor out = f(pts);
  check(out.numel() == 1, "gradcheck: probe function must return a scalar");
  return static_cast<double>(out.item());
}

}  // namespace detail

// Central-difference check of every element of every point tensor against
// the recorded gradients. The point is cloned, so caller tensors stay
// untouched. Returns the worst relative error
// (|a-n|)/(|a|+|n|+1e-8).
//
// Elements where BOTH |analytic| and |numeric| are < min_grad are skipped:
// a float32 forward resolves derivatives only down to roughly
// |f|*2^-24/epsilon, and below that the relative error is pure noise. A
// broken backward still registers, because a zero analytic gradient against
// a resolvable numeric one (or the reverse) exceeds any sane floor.
inline float gradcheck(const ScalarFn& f, const std::vector<Tensor>& point,
                       float epsilon = 1e-3f, float min_grad = 0.0f) {
  detail::check(epsilon > 0.0f, "gradcheck: epsilon must be positive");
  std::vector<Tensor> pts;
  pts.reserve(point.size());
  for (const Tensor& p : point) {
    Tensor c = p.clone();
    c.set_requires_grad(true);
    pts.push_back(c);
  }

  std::vector<std::vector<float>> analytic(pts.size());
  {
    Graph graph;
    Tensor loss = f(pts);
    detail::check(loss.numel() == 1, "gradcheck: probe function must return a scalar");
    graph.backward(loss);
  }
  for (size_t t = 0; t < pts.size(); ++t)
    analytic[t] = pts[t].has_grad()
                      ? pts[t].grad()
                      : std::vector<float>(pts[t].values().size(), 0.0f);

  double max_rel = 0.0;
  int64_t measured = 0;
  for (size_t t = 0; t < pts.size(); ++t) {
    float* data = pts[t].data();
    const int64_t n = pts[t].numel();
    for (int64_t i = 0; i < n; ++i) {
      const float saved = data[i];
      data[i] = saved + epsilon;
      const double fp = detail::eval_scalar(f, pts);
      data[i] = saved - epsilon;
      const double fm = detail::eval_scalar(f, pts);
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * static_cast<double>(epsilon));
      const double a = analytic[t][i];
      if (std::max(std::abs(a), std::abs(numeric)) < min_grad) continue;
      ++measured;
      max_rel = std::max(max_rel, detail::relative_error(a, numeric));
    }
  }
  detail::check(measured > 0, "gradcheck: every element fell below min_grad");
  return static_cast<float>(max_rel);
}

// Sampled variant for large parameter sets. Operates on the point tensors
// IN PLACE (they must be the very tensors the probe closes over, e.g. live
// model parameters). Entries whose analytic gradient is below
// grad_floor_frac of the largest are resampled: at a near-zero gradient the
// finite difference is pure float32 noise and the relative error carries no
// signal.
//
// When fd_stability > 0, each coordinate is measured at steps epsilon and
// epsilon/2 and accepted only if the two agree within fd_stability. A
// central difference measures a derivative only where the function is
// locally linear at the step scale; a leaky_relu kink inside the window
// makes the measurement scale-dependent, so the coordinate is resampled. A
// wrong analytic gradient still fails: it disagrees with a scale-stable
// measurement. If no stable coordinate turns up, the last unstable one is
// scored rather than skipped, so instability can tighten the check but
// never pass it vacuously.
inline float gradcheck_sampled(const ScalarFn& f, std::vector<Tensor> point,
                               int n_samples, Rng& rng, float epsilon = 1e-2f,
                               float grad_floor_frac = 1e-3f,
                               float fd_stability = 0.0f) {
  detail::check(epsilon > 0.0f && n_samples >= 1,
                "gradcheck_sampled: bad epsilon or sample count");
  for (Tensor& p : point) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::vector<float>> analytic(point.size());
  {
    Graph graph;
    Tensor loss = f(point);
    detail::check(loss.numel() == 1,
                  "gradcheck: probe function must return a scalar");
    graph.backward(loss);
  }
  double max_abs = 0.0;
  int64_t total = 0;
  for (size_t t = 0; t < point.size(); ++t) {
    analytic[t] = point[t].has_grad()
                      ? point[t].grad()
                      : std::vector<float>(point[t].values().size(), 0.0f);
    total += point[t].numel();
    for (float g : analytic[t]) max_abs = std::max(max_abs, std::abs(double{g}));
  }
  const double floor = max_abs * grad_floor_frac;

  const auto fd_at = [&f, &point](float* slot, float saved,
                                  float eps) -> double {
    slot[0] = saved + eps;
    const double fp = detail::eval_scalar(f, point);
    slot[0] = saved - eps;
    const double fm = detail::eval_scalar(f, point);
    slot[0] = saved;
    return (fp - fm) / (2.0 * static_cast<double>(eps));
  };

  double max_rel = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    double coord_rel = 0.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
      const bool last_try = attempt == 199;
      int64_t flat = static_cast<int64_t>(rng.below(static_cast<uint64_t>(total)));
      size_t t = 0;
      while (flat >= point[t].numel()) {
        flat -= point[t].numel();
        ++t;
      }
      const int64_t i = flat;
      if (std::abs(analytic[t][i]) < floor && !last_try) continue;
      float* data = point[t].data();
      const float saved = data[i];
      const double numeric = fd_at(data + i, saved, epsilon);
      if (fd_stability > 0.0f) {
        const double finer = fd_at(data + i, saved, 0.5f * epsilon);
        coord_rel = detail::relative_error(analytic[t][i], finer);
        if (detail::relative_error(numeric, finer) >= fd_stability &&
            !last_try)
          continue;
      } else {
        coord_rel = detail::relative_error(analytic[t][i], numeric);
      }
      break;
    }
    max_rel = std::max(max_rel, coord_rel);
  }
  return static_cast<float>(max_rel);
}

// -------------------------------------------------------------------------
// suite

struct GradcheckReport {
  std::string op;
  float max_rel_err = 0.0f;
  float tolerance = 0.0f;
  bool pass = false;
};

namespace detail {

inline Tensor rand_uniform_t(const std::vector<int>& shape, Rng& rng, float lo,
                             float hi) {
  Tensor t = Tensor::zeros(shape);
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(lo, hi);
  return t;
}

// magnitudes in [min_mag, max_mag] with random sign, bounded away from the
// kink at zero
inline Tensor rand_signed_t(const std::vector<int>& shape, Rng& rng,
                            float min_mag, float max_mag) {
  Tensor t = Tensor::zeros(shape);
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) {
    const float mag = rng.uniform(min_mag, max_mag);
    p[i] = rng.uniform() < 0.5f ? -mag : mag;
  }
  return t;
}

// Scalarization weights with |w| in [0.5, 1.5] and random sign. Bounding the
// magnitude away from zero keeps every per-element gradient of
// weighted_sum(op(x), w) above the float32 central-difference noise floor;
// an unbounded draw puts some weights at ~1e-3 and turns those elements'
// relative error into coin flips.
inline Tensor fixed_weights(const std::vector<int>& shape, uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros(shape);
  float* p = w.data();
  for (int64_t i = 0; i < w.numel(); ++i) {
    const float mag = rng.uniform(0.5f, 1.5f);
    p[i] = rng.uniform() < 0.5f ? -mag : mag;
  }
  return w;
}

// Central differences on a float32 forward have an optimal step near
// cbrt(2^-24) ~ 1e-2: smaller steps drown in rounding noise, larger ones in
// truncation. Entries clamp the caller's epsilon into the band where their
// own curvature and gradient scale keep both effects inside tolerance.
inline float clamp_eps(float eps, float lo, float hi) {
  return std::min(std::max(eps, lo), hi);
}

struct SuiteEntry {
  std::string name;
  float tolerance;
  int seeds;
  std::function<float(uint64_t seed, float epsilon)> run;
};

inline std::vector<SuiteEntry> gradcheck_suite_entries() {
  std::vector<SuiteEntry> entries;
  const float kPointwiseTol = 1e-3f;
  const float kConvTol = 1e-2f;

  entries.push_back({"tanh", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 3, 5}, rng, -2.0f, 2.0f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0x9e37u);
    return gradcheck(
        [w](const std::vector<Tensor>& p) { return weighted_sum(tanh(p[0]), w); },
        {x}, clamp_eps(eps, 1e-2f, 2e-2f));
  }});
  entries.push_back({"sigmoid", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 3, 5}, rng, -3.0f, 3.0f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0x51edu);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(sigmoid(p[0]), w);
        },
        {x}, clamp_eps(eps, 1e-2f, 2e-2f));
  }});
  entries.push_back({"leaky_relu", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    // |x| >= 0.05 > max step 2e-2: no central difference straddles the kink
    Tensor x = rand_signed_t({2, 3, 5}, rng, 0.05f, 2.0f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0xa5a5u);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(leaky_relu(p[0], 0.2f), w);
        },
        {x}, clamp_eps(eps, 1e-2f, 2e-2f));
  }});
  entries.push_back({"dropout", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 4, 4}, rng, -2.0f, 2.0f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0x7311u);
    const uint64_t mask_seed = mix_seed(seed, 11);
    return gradcheck(
        [w, mask_seed](const std::vector<Tensor>& p) {
          Rng mask_rng(mask_seed);
          return weighted_sum(dropout(p[0], 0.5f, Mode::Train, mask_rng), w);
        },
        {x}, clamp_eps(eps, 1e-2f, 2e-2f));
  }});
  entries.push_back({"conv2d", kConvTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 3, 6, 6}, rng, -1.0f, 1.0f);
    Tensor k = rand_uniform_t({4, 3, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b = rand_uniform_t({4}, rng, -0.5f, 0.5f);
    Tensor w = fixed_weights({2, 4, 3, 3}, seed ^ 0x1234u);
    // bilinear in (x, k): each coordinate is exactly linear, so only the
    // noise floor matters; input and kernel gradients are signed sums that
    // can cancel below it
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(conv2d(p[0], p[1], p[2], 2, 1), w);
        },
        {x, k, b}, clamp_eps(eps, 1e-2f, 5e-2f), 2e-2f);
  }});
  entries.push_back({"conv_transpose2d", kConvTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 3, 4, 4}, rng, -1.0f, 1.0f);
    Tensor k = rand_uniform_t({3, 4, 3, 3}, rng, -0.5f, 0.5f);
    Tensor b = rand_uniform_t({4}, rng, -0.5f, 0.5f);
    Tensor w = fixed_weights({2, 4, 7, 7}, seed ^ 0x4321u);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(conv_transpose2d(p[0], p[1], p[2], 2, 1), w);
        },
        {x, k, b}, clamp_eps(eps, 1e-2f, 5e-2f), 2e-2f);
  }});
  entries.push_back({"batch_norm_train", kConvTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({4, 3, 5, 5}, rng, -2.0f, 2.0f);
    Tensor gamma = rand_uniform_t({3}, rng, 0.5f, 1.5f);
    Tensor beta = rand_uniform_t({3}, rng, -0.5f, 0.5f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0xbeefu);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          // fresh running stats per eval: train mode writes them
          Tensor rm = Tensor::zeros({3});
          Tensor rv = Tensor::ones({3});
          return weighted_sum(
              batch_norm(p[0], p[1], p[2], rm, rv, Mode::Train), w);
        },
        // centering makes input gradients signed sums; floor the tiny ones
        {x, gamma, beta}, clamp_eps(eps, 1e-2f, 2e-2f), 2e-2f);
  }});
  entries.push_back({"batch_norm_eval", kConvTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({4, 3, 5, 5}, rng, -2.0f, 2.0f);
    Tensor gamma = rand_uniform_t({3}, rng, 0.5f, 1.5f);
    Tensor beta = rand_uniform_t({3}, rng, -0.5f, 0.5f);
    Tensor rm = rand_uniform_t({3}, rng, -0.5f, 0.5f);
    Tensor rv = rand_uniform_t({3}, rng, 0.5f, 1.5f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0xfeedu);
    return gradcheck(
        [w, rm, rv](const std::vector<Tensor>& p) {
          Tensor m = rm.clone();
          Tensor v = rv.clone();
          return weighted_sum(batch_norm(p[0], p[1], p[2], m, v, Mode::Eval),
                              w);
        },
        {x, gamma, beta}, clamp_eps(eps, 1e-2f, 5e-2f), 2e-2f);
  }});
  entries.push_back({"concat_channels", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor a = rand_uniform_t({2, 2, 3, 3}, rng, -1.0f, 1.0f);
    Tensor b = rand_uniform_t({2, 3, 3, 3}, rng, -1.0f, 1.0f);
    Tensor w = fixed_weights({2, 5, 3, 3}, seed ^ 0xc0deu);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(concat_channels(p[0], p[1]), w);
        },
        {a, b}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"slice_channels", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 5, 3, 3}, rng, -1.0f, 1.0f);
    Tensor w = fixed_weights({2, 3, 3, 3}, seed ^ 0x511ceu);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(slice_channels(p[0], 1, 4), w);
        },
        // channels outside the slice have a true zero gradient; both sides
        // of the comparison agree there, so no floor is needed
        {x}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"add_scaled", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor a = rand_uniform_t({2, 3, 4}, rng, -1.0f, 1.0f);
    Tensor b = rand_uniform_t({2, 3, 4}, rng, -1.0f, 1.0f);
    Tensor w = fixed_weights(a.shape(), seed ^ 0xadd5u);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(add_scaled(p[0], p[1], 0.7f), w);
        },
        {a, b}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"scale", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({2, 3, 4}, rng, -1.0f, 1.0f);
    Tensor w = fixed_weights(x.shape(), seed ^ 0x5ca1u);
    return gradcheck(
        [w](const std::vector<Tensor>& p) {
          return weighted_sum(scale(p[0], 1.3f), w);
        },
        {x}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"sum", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor x = rand_uniform_t({3, 4, 5}, rng, -1.0f, 1.0f);
    return gradcheck([](const std::vector<Tensor>& p) { return sum(p[0]); },
                     {x}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"weighted_sum", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    // the gradient wrt each operand IS the other operand: keep both away
    // from zero
    Tensor x = rand_signed_t({3, 4}, rng, 0.5f, 1.5f);
    Tensor w = rand_signed_t({3, 4}, rng, 0.5f, 1.5f);
    return gradcheck(
        [](const std::vector<Tensor>& p) { return weighted_sum(p[0], p[1]); },
        {x, w}, clamp_eps(eps, 1e-2f, 5e-2f));
  }});
  entries.push_back({"discriminator_loss", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor r = rand_uniform_t({2, 1, 3, 3}, rng, 0.1f, 0.9f);
    Tensor f = rand_uniform_t({2, 1, 3, 3}, rng, 0.1f, 0.9f);
    // log curvature grows as 1/score^3: keep the step small enough that
    // truncation stays inside tolerance at score 0.1
    return gradcheck(
        [](const std::vector<Tensor>& p) {
          return discriminator_loss(p[0], p[1]);
        },
        {r, f}, clamp_eps(eps, 1e-3f, 5e-3f));
  }});
  entries.push_back({"generator_loss_saturating", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor f = rand_uniform_t({2, 1, 3, 3}, rng, 0.1f, 0.9f);
    return gradcheck(
        [](const std::vector<Tensor>& p) {
          return generator_loss(p[0], GanLossVariant::Saturating);
        },
        {f}, clamp_eps(eps, 1e-3f, 5e-3f));
  }});
  entries.push_back({"generator_loss_non_saturating", kPointwiseTol, 10,
                     [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor f = rand_uniform_t({2, 1, 3, 3}, rng, 0.1f, 0.9f);
    return gradcheck(
        [](const std::vector<Tensor>& p) {
          return generator_loss(p[0], GanLossVariant::NonSaturating);
        },
        {f}, clamp_eps(eps, 1e-3f, 5e-3f));
  }});
  entries.push_back({"l1_loss", kPointwiseTol, 10, [](uint64_t seed, float eps) {
    Rng rng(seed);
    Tensor a = rand_uniform_t({2, 3, 4}, rng, -1.0f, 1.0f);
    // keep |a - b| >= 0.1 so no central difference straddles the kink
    Tensor d = rand_signed_t({2, 3, 4}, rng, 0.1f, 0.6f);
    Tensor b = add_scaled(a, d, 1.0f);
    return gradcheck(
        [](const std::vector<Tensor>& p) { return l1_loss(p[0], p[1]); },
        {a, b}, clamp_eps(eps, 1e-3f, 5e-3f));
  }});
  // end-to-end: weighted sum of a full U-Net forward, gradients through
  // every layer, 20 sampled parameters at desk scale. Two fixture choices
  // keep the loss locally linear at a resolvable step: batch 4, because a
  // single image leaves the 2x2 stage normalizing over four values, and
  // conv kernels scaled x8 after init, because the stock 0.02-std init
  // puts pre-normalization channel sigmas at the scale of the step itself.
  // Batch norm reabsorbs the scaling, so activations stay in range.
  entries.push_back({"unet", kConvTol, 1, [](uint64_t seed, float eps) {
    Rng init_rng(mix_seed(seed, 777));
    GeneratorConfig cfg;
    cfg.image_size = 16;
    cfg.base_channels = 8;
    Generator g = Generator::create(cfg, init_rng);
    for (auto& [name, p] : g.named_parameters())
      if (name.find(".kernel") != std::string::npos)
        for (int64_t i = 0; i < p.numel(); ++i) p.data()[i] *= 8.0f;
    Rng data_rng(mix_seed(seed, 778));
    Tensor x = rand_uniform_t({4, 3, 16, 16}, data_rng, -1.0f, 1.0f);
    Tensor w = fixed_weights({4, 3, 16, 16}, seed ^ 0x0e2eu);
    const uint64_t mask_seed = mix_seed(seed, 779);
    std::vector<Tensor> params;
    for (auto& [name, p] : g.named_parameters()) params.push_back(p);
    ScalarFn f = [&g, x, w, mask_seed](const std::vector<Tensor>&) {
      Rng mask_rng(mask_seed);
      return weighted_sum(generator_forward(g, x, kTrainMode, mask_rng), w);
    };
    Rng pick_rng(mix_seed(seed, 780));
    // The 5% floor keeps samples where float32 noise cannot drown the
    // signal; the stability gate rejects coordinates whose finite
    // difference straddles a leaky_relu kink. Steps above ~5e-3 cross
    // kinks for most coordinates on a graph this deep, steps below ~2e-3
    // sink into forward rounding noise.
    return gradcheck_sampled(f, params, 20, pick_rng,
                             clamp_eps(eps, 2e-3f, 5e-3f), 0.05f, 2e-3f);
  }});
  return entries;
}

}  // namespace detail

// Runs every suite entry whose name contains `filter` (empty = all) and
// reports the worst relative error per op across that entry's seeds.
// `epsilon` is a request: each entry clamps it into the step band where its
// curvature and float32 noise both stay inside the entry's tolerance.
inline std::vector<GradcheckReport> run_gradcheck_suite(
    const std::string& filter = "", float epsilon = 1e-3f, uint64_t seed = 0) {
  std::vector<GradcheckReport> reports;
  for (const auto& entry : detail::gradcheck_suite_entries()) {
    if (!filter.empty() && entry.name.find(filter) == std::string::npos)
      continue;
    GradcheckReport rep;
    rep.op = entry.name;
    rep.tolerance = entry.tolerance;
    for (int s = 0; s < entry.seeds; ++s)
      rep.max_rel_err =
          std::max(rep.max_rel_err, entry.run(mix_seed(seed, s), epsilon));
    rep.pass = rep.max_rel_err < rep.tolerance;
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace mapgan

#endif  // MAPGAN_GRADCHECK_HPP_
