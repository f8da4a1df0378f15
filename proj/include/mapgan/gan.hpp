#ifndef MAPGAN_GAN_HPP_
#define MAPGAN_GAN_HPP_

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mapgan/nn.hpp"
#include "mapgan/ops.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

namespace detail {

inline bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

inline int log2_int(int v) {
  int n = 0;
  while ((1 << n) < v) ++n;
  return n;
}

}  // namespace detail

// -------------------------------------------------------------------------
// generator

struct GeneratorConfig {
  int image_size = 256;  // power of two >= 4
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 64;
  float decoder_slope = 0.0f;
};

// U-Net: n = log2(image_size) encoder blocks halving down to a 1x1
// bottleneck, n decoder blocks doubling back up, skip concatenation from
// encoder i into the decoder stage at the same resolution. Channel plan
// base*min(2^i, 8); dropout 0.5 on the first three decoder blocks; the last
// decoder block maps to out_channels through tanh.
struct Generator {
  GeneratorConfig cfg;
  std::vector<EncoderBlock> enc;
  std::vector<DecoderBlock> dec;

  static Generator create(const GeneratorConfig& cfg, Rng& rng) {
    detail::check(detail::is_power_of_two(cfg.image_size) && cfg.image_size >= 4,
                  "Generator: image_size must be a power of two >= 4, got " +
                      std::to_string(cfg.image_size));
    detail::check(cfg.in_channels >= 1 && cfg.out_channels >= 1 &&
                      cfg.base_channels >= 1,
                  "Generator: channel counts must be >= 1");
    const int n = detail::log2_int(cfg.image_size);
    std::vector<int> plan(n);
    for (int i = 0; i < n; ++i)
      plan[i] = cfg.base_channels * std::min(1 << i, 8);

    Generator g;
    g.cfg = cfg;
    for (int i = 0; i < n; ++i) {
      const int cin = i == 0 ? cfg.in_channels : plan[i - 1];
      // no batch norm on the first block or on the 1x1 bottleneck
      const bool bn = i != 0 && i != n - 1;
      g.enc.push_back(make_encoder_block(cin, plan[i], bn, rng));
    }
    for (int j = 0; j < n; ++j) {
      const bool last = j == n - 1;
      const int cin = j == 0 ? plan[n - 1] : 2 * plan[n - 1 - j];
      const int cout = last ? cfg.out_channels : plan[n - 2 - j];
      const float rate = (j < 3 && !last) ? 0.5f : 0.0f;
      g.dec.push_back(make_decoder_block(cin, cout, !last, rate, rng,
                                         cfg.decoder_slope, last));
    }
    return g;
  }

  NamedTensors named_parameters() const {
    NamedTensors out;
    for (size_t i = 0; i < enc.size(); ++i)
      append_params(enc[i], "enc" + std::to_string(i), out);
    for (size_t j = 0; j < dec.size(); ++j)
      append_params(dec[j], "dec" + std::to_string(j), out);
    return out;
  }

  NamedTensors named_buffers() const {
    NamedTensors out;
    for (size_t i = 0; i < enc.size(); ++i)
      if (enc[i].use_batchnorm)
        append_buffers(enc[i].bn, "enc" + std::to_string(i), out);
    for (size_t j = 0; j < dec.size(); ++j)
      if (dec[j].use_batchnorm)
        append_buffers(dec[j].bn, "dec" + std::to_string(j), out);
    return out;
  }
};

inline Tensor generator_forward(Generator& g, const Tensor& satellite,
                                ForwardMode mode, Rng& rng) {
  const int s = g.cfg.image_size;
  detail::check(satellite.ndim() == 4 && satellite.dim(1) == g.cfg.in_channels &&
                    satellite.dim(2) == s && satellite.dim(3) == s,
                "generator_forward: expected input [B," +
                    std::to_string(g.cfg.in_channels) + "," + std::to_string(s) +
                    "," + std::to_string(s) + "], got " +
                    detail::shape_str(satellite.shape()));
  const int n = static_cast<int>(g.enc.size());
  std::vector<Tensor> skips;
  skips.reserve(n);
  Tensor x = satellite;
  for (int i = 0; i < n; ++i) {
    x = encoder_forward(g.enc[i], x, mode.stats);
    skips.push_back(x);
  }
  for (int j = 0; j < n; ++j) {
    const Tensor skip = j <= n - 2 ? skips[n - 2 - j] : Tensor();
    x = decoder_forward(g.dec[j], x, skip, mode, rng);
  }
  return x;
}

// -------------------------------------------------------------------------
// discriminator

struct DiscriminatorConfig {
  int in_channels = 6;  // channel-concatenated (satellite, map) pair
  int base_channels = 64;
};

// Patch classifier: three stride-2 stages, one stride-1 stage, then a
// 1-channel stride-1 conv and sigmoid. 256x256 pairs score as a 30x30 patch
// map; each patch sees a ~70x70 receptive field.
struct Discriminator {
  DiscriminatorConfig cfg;
  std::vector<EncoderBlock> stages;
  Tensor final_kernel;  // [1, 8*base, 4, 4]
  Tensor final_bias;    // [1]

  static Discriminator create(const DiscriminatorConfig& cfg, Rng& rng) {
    detail::check(cfg.in_channels >= 2 && cfg.in_channels % 2 == 0,
                  "Discriminator: in_channels must be even (pair input)");
    detail::check(cfg.base_channels >= 1,
                  "Discriminator: base_channels must be >= 1");
    const int b = cfg.base_channels;
    Discriminator d;
    d.cfg = cfg;
    d.stages.push_back(make_encoder_block(cfg.in_channels, b, false, rng));
    d.stages.push_back(make_encoder_block(b, 2 * b, true, rng));
    d.stages.push_back(make_encoder_block(2 * b, 4 * b, true, rng));
    d.stages.push_back(make_encoder_block(4 * b, 8 * b, true, rng, 0.2f, 1));
    d.final_kernel = init_weights({1, 8 * b, 4, 4}, InitScheme{}, rng);
    d.final_bias = Tensor::zeros({1});
    d.final_bias.set_requires_grad(true);
    return d;
  }

  NamedTensors named_parameters() const {
    NamedTensors out;
    for (size_t i = 0; i < stages.size(); ++i)
      append_params(stages[i], "stage" + std::to_string(i), out);
    out.emplace_back("final.kernel", final_kernel);
    out.emplace_back("final.bias", final_bias);
    return out;
  }

  NamedTensors named_buffers() const {
    NamedTensors out;
    for (size_t i = 0; i < stages.size(); ++i)
      if (stages[i].use_batchnorm)
        append_buffers(stages[i].bn, "stage" + std::to_string(i), out);
    return out;
  }
};

inline Tensor discriminator_forward(Discriminator& d, const Tensor& satellite,
                                    const Tensor& map_img,
                                    Mode mode = Mode::Train) {
  detail::check(satellite.shape() == map_img.shape(),
                "discriminator_forward: pair halves differ: " +
                    detail::shape_str(satellite.shape()) + " vs " +
                    detail::shape_str(map_img.shape()));
  Tensor x = concat_channels(satellite, map_img);
  for (auto& stage : d.stages) x = encoder_forward(stage, x, mode);
  x = conv2d(x, d.final_kernel, d.final_bias, 1, 1);
  return sigmoid(x);
}

// -------------------------------------------------------------------------
// losses

// The scores feeding each log are clamped to [kScoreEps, 1-kScoreEps]; the
// clamped value also feeds the log's derivative, which bounds every
// per-element gradient by 1/(kScoreEps*N) instead of flattening it to zero
// at the rails.
inline constexpr float kScoreEps = 1e-7f;

namespace detail {

inline float clamp_score(float s) {
  return std::clamp(s, kScoreEps, 1.0f - kScoreEps);
}

}  // namespace detail

// -mean(log D(real)) - mean(log(1 - D(fake))): the minimized form of the
// discriminator's max objective. Means run over all batch and patch
// positions of each score map.
inline Tensor discriminator_loss(const Tensor& real_scores,
                                 const Tensor& fake_scores) {
  const int64_t nr = real_scores.numel();
  const int64_t nf = fake_scores.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < nr; ++i)
    acc -= std::log(detail::clamp_score(real_scores.data()[i])) /
           static_cast<double>(nr);
  for (int64_t i = 0; i < nf; ++i)
    acc -= std::log(1.0 - detail::clamp_score(fake_scores.data()[i])) /
           static_cast<double>(nf);
  Tensor out = Tensor::scalar(static_cast<float>(acc));

  if (detail::tracing({&real_scores, &fake_scores})) {
    out.set_requires_grad(true);
    detail::watch_all({&real_scores, &fake_scores});
    Graph::current()->record(
        out, [real_scores, fake_scores, nr, nf](const std::vector<float>& gout,
                                                Graph::GradMap& gm) {
          if (real_scores.requires_grad()) {
            std::vector<float> g(static_cast<size_t>(nr));
            for (int64_t i = 0; i < nr; ++i)
              g[i] = -gout[0] / (static_cast<float>(nr) *
                                 detail::clamp_score(real_scores.data()[i]));
            Graph::add_grad(gm, real_scores, std::move(g));
          }
          if (fake_scores.requires_grad()) {
            std::vector<float> g(static_cast<size_t>(nf));
            for (int64_t i = 0; i < nf; ++i)
              g[i] = gout[0] / (static_cast<float>(nf) *
                                (1.0f - detail::clamp_score(fake_scores.data()[i])));
            Graph::add_grad(gm, fake_scores, std::move(g));
          }
        });
  }
  return out;
}

enum class GanLossVariant { Saturating, NonSaturating };

inline std::string to_string(GanLossVariant v) {
  return v == GanLossVariant::Saturating ? "saturating" : "non-saturating";
}

// Saturating: mean(log(1 - D(fake))), the literal min-max minimand.
// Non-saturating: -mean(log D(fake)); same fixed points, usable gradients
// when the discriminator is ahead.
inline Tensor generator_loss(const Tensor& fake_scores, GanLossVariant variant) {
  const int64_t n = fake_scores.numel();
  double acc = 0.0;
  if (variant == GanLossVariant::Saturating) {
    for (int64_t i = 0; i < n; ++i)
      acc += std::log(1.0 - detail::clamp_score(fake_scores.data()[i])) /
             static_cast<double>(n);
  } else {
    for (int64_t i = 0; i < n; ++i)
      acc -= std::log(detail::clamp_score(fake_scores.data()[i])) /
             static_cast<double>(n);
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc));

  if (detail::tracing({&fake_scores})) {
    out.set_requires_grad(true);
    detail::watch_all({&fake_scores});
    Graph::current()->record(
        out, [fake_scores, variant, n](const std::vector<float>& gout,
                                       Graph::GradMap& gm) {
          std::vector<float> g(static_cast<size_t>(n));
          for (int64_t i = 0; i < n; ++i) {
            const float s = detail::clamp_score(fake_scores.data()[i]);
            g[i] = variant == GanLossVariant::Saturating
                       ? -gout[0] / (static_cast<float>(n) * (1.0f - s))
                       : -gout[0] / (static_cast<float>(n) * s);
          }
          Graph::add_grad(gm, fake_scores, std::move(g));
        });
  }
  return out;
}

// mean absolute difference; the subgradient at exact ties is 0
inline Tensor l1_loss(const Tensor& generated, const Tensor& target) {
  detail::check(generated.shape() == target.shape(),
                "l1_loss: shape mismatch " + detail::shape_str(generated.shape()) +
                    " vs " + detail::shape_str(target.shape()));
  const int64_t n = generated.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(generated.data()[i]) -
                    target.data()[i]) /
           static_cast<double>(n);
  Tensor out = Tensor::scalar(static_cast<float>(acc));

  if (detail::tracing({&generated, &target})) {
    out.set_requires_grad(true);
    detail::watch_all({&generated, &target});
    Graph::current()->record(
        out, [generated, target, n](const std::vector<float>& gout,
                                    Graph::GradMap& gm) {
          std::vector<float> sign(static_cast<size_t>(n));
          for (int64_t i = 0; i < n; ++i) {
            const float d = generated.data()[i] - target.data()[i];
            sign[i] = gout[0] * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f)) /
                      static_cast<float>(n);
          }
          if (generated.requires_grad()) {
            std::vector<float> g = sign;
            Graph::add_grad(gm, generated, std::move(g));
          }
          if (target.requires_grad()) {
            for (auto& v : sign) v = -v;
            Graph::add_grad(gm, target, std::move(sign));
          }
        });
  }
  return out;
}

// -------------------------------------------------------------------------
// optimizer

struct AdamConfig {
  float lr = 2e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam over a fixed list of named parameters. Gradients are
// read from each parameter's accumulated grad buffer; one shared step
// counter covers all parameters.
class Adam {
 public:
  Adam(NamedTensors params, const AdamConfig& cfg = AdamConfig())
      : cfg_(cfg), params_(std::move(params)) {
    detail::check(cfg_.lr > 0.0f, "Adam: lr must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& [name, p] : params_) {
      m_.push_back(Tensor::zeros(p.shape()));
      v_.push_back(Tensor::zeros(p.shape()));
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), t_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& [name, p] = params_[i];
      if (!p.has_grad())
        throw std::runtime_error("adam_step: missing gradient for parameter '" +
                                 name + "'");
      const std::vector<float>& g = p.grad();
      float* m = m_[i].data();
      float* v = v_[i].data();
      float* w = p.data();
      const int64_t n = p.numel();
      for (int64_t k = 0; k < n; ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) {
    detail::check(t >= 0, "Adam: step count must be >= 0");
    t_ = t;
  }

  const AdamConfig& config() const { return cfg_; }
  const NamedTensors& params() const { return params_; }

  // moment buffers as <param-name>.m / <param-name>.v
  NamedTensors named_state() const {
    NamedTensors out;
    for (size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back(params_[i].first + ".m", m_[i]);
      out.emplace_back(params_[i].first + ".v", v_[i]);
    }
    return out;
  }

 private:
  AdamConfig cfg_;
  NamedTensors params_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
};

}  // namespace mapgan

#endif  // MAPGAN_GAN_HPP_
