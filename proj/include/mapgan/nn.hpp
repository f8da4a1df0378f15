#ifndef MAPGAN_NN_HPP_
#define MAPGAN_NN_HPP_

#include <string>
#include <utility>
#include <vector>

#include "mapgan/ops.hpp"
#include "mapgan/rng.hpp"
#include "mapgan/tensor.hpp"

namespace mapgan {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// i.i.d. normal initialization; the only parameter-generating scheme
struct InitScheme {
  float mean = 0.0f;
  float stddev = 0.02f;
};

inline Tensor init_weights(const std::vector<int>& shape,
                           const InitScheme& scheme, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  float* p = t.data();
  const int64_t n = t.numel();
  for (int64_t i = 0; i < n; ++i) p[i] = rng.normal(scheme.mean, scheme.stddev);
  t.set_requires_grad(true);
  return t;
}

struct BatchNorm {
  Tensor gamma;         // [C], trainable
  Tensor beta;          // [C], trainable
  Tensor running_mean;  // [C], buffer
  Tensor running_var;   // [C], buffer
  float eps = 1e-5f;
  float momentum = 0.1f;
};

inline BatchNorm make_batch_norm(int channels) {
  BatchNorm bn;
  bn.gamma = Tensor::ones({channels});
  bn.gamma.set_requires_grad(true);
  bn.beta = Tensor::zeros({channels});
  bn.beta.set_requires_grad(true);
  bn.running_mean = Tensor::zeros({channels});
  bn.running_var = Tensor::ones({channels});
  return bn;
}

// Batch-norm statistics mode and dropout mode, controlled separately:
// stochastic inference keeps running statistics (stats = Eval) while still
// sampling dropout masks (noise = Train).
struct ForwardMode {
  Mode stats;
  Mode noise;
  constexpr ForwardMode(Mode m) : stats(m), noise(m) {}  // NOLINT(runtime/explicit)
  constexpr ForwardMode(Mode s, Mode n) : stats(s), noise(n) {}
};

inline constexpr ForwardMode kTrainMode{Mode::Train};
inline constexpr ForwardMode kEvalMode{Mode::Eval};
inline constexpr ForwardMode kStochasticEval{Mode::Eval, Mode::Train};

// conv(4x4, pad 1) -> optional batch norm -> leaky_relu. Stride 2 halves
// even spatial dims exactly; bias exists only when batch norm is off (beta
// subsumes it otherwise).
struct EncoderBlock {
  Tensor kernel;  // [Cout,Cin,4,4]
  Tensor bias;    // [Cout], defined iff !use_batchnorm
  BatchNorm bn;
  bool use_batchnorm = true;
  float slope = 0.2f;
  int stride = 2;
};

inline EncoderBlock make_encoder_block(int cin, int cout, bool use_batchnorm,
                                       Rng& rng, float slope = 0.2f,
                                       int stride = 2) {
  detail::check(cin >= 1 && cout >= 1, "make_encoder_block: channels must be >= 1");
  EncoderBlock b;
  b.kernel = init_weights({cout, cin, 4, 4}, InitScheme{}, rng);
  b.use_batchnorm = use_batchnorm;
  if (use_batchnorm) {
    b.bn = make_batch_norm(cout);
  } else {
    b.bias = Tensor::zeros({cout});
    b.bias.set_requires_grad(true);
  }
  b.slope = slope;
  b.stride = stride;
  return b;
}

inline Tensor encoder_forward(EncoderBlock& block, const Tensor& x, Mode mode) {
  detail::check(x.ndim() == 4, "encoder_forward: input must be [B,C,H,W], got " +
                                   detail::shape_str(x.shape()));
  if (block.stride == 2)
    detail::check(x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0 && x.dim(2) >= 2 &&
                      x.dim(3) >= 2,
                  "encoder_forward: spatial dims must be even and >= 2, got " +
                      detail::shape_str(x.shape()));
  Tensor y = conv2d(x, block.kernel, block.bias, block.stride, 1);
  if (block.use_batchnorm)
    y = batch_norm(y, block.bn.gamma, block.bn.beta, block.bn.running_mean,
                   block.bn.running_var, mode, block.bn.eps, block.bn.momentum);
  return leaky_relu(y, block.slope);
}

// conv_transpose(4x4, stride 2, pad 1) -> optional batch norm -> dropout ->
// activation (tanh on the output block, leaky_relu elsewhere); the caller's
// skip tensor is channel-concatenated after the activation.
struct DecoderBlock {
  Tensor kernel;  // [Cin,Cout,4,4]
  Tensor bias;    // [Cout], defined iff !use_batchnorm
  BatchNorm bn;
  bool use_batchnorm = true;
  float dropout_rate = 0.0f;
  float slope = 0.0f;
  bool tanh_output = false;
};

inline DecoderBlock make_decoder_block(int cin, int cout, bool use_batchnorm,
                                       float dropout_rate, Rng& rng,
                                       float slope = 0.0f,
                                       bool tanh_output = false) {
  detail::check(cin >= 1 && cout >= 1, "make_decoder_block: channels must be >= 1");
  detail::check(dropout_rate >= 0.0f && dropout_rate < 1.0f,
                "make_decoder_block: dropout_rate must be in [0,1)");
  DecoderBlock b;
  b.kernel = init_weights({cin, cout, 4, 4}, InitScheme{}, rng);
  b.use_batchnorm = use_batchnorm;
  if (use_batchnorm) {
    b.bn = make_batch_norm(cout);
  } else {
    b.bias = Tensor::zeros({cout});
    b.bias.set_requires_grad(true);
  }
  b.dropout_rate = dropout_rate;
  b.slope = slope;
  b.tanh_output = tanh_output;
  return b;
}

inline Tensor decoder_forward(DecoderBlock& block, const Tensor& x,
                              const Tensor& skip, ForwardMode mode, Rng& rng) {
  detail::check(x.ndim() == 4, "decoder_forward: input must be [B,C,H,W], got " +
                                   detail::shape_str(x.shape()));
  Tensor y = conv_transpose2d(x, block.kernel, block.bias, 2, 1);
  if (block.use_batchnorm)
    y = batch_norm(y, block.bn.gamma, block.bn.beta, block.bn.running_mean,
                   block.bn.running_var, mode.stats, block.bn.eps,
                   block.bn.momentum);
  if (block.dropout_rate > 0.0f)
    y = dropout(y, block.dropout_rate, mode.noise, rng);
  y = block.tanh_output ? tanh(y) : leaky_relu(y, block.slope);
  if (skip.defined()) {
    detail::check(skip.ndim() == 4 && skip.dim(2) == y.dim(2) &&
                      skip.dim(3) == y.dim(3),
                  "decoder_forward: skip dims " + detail::shape_str(skip.shape()) +
                      " do not match upsampled output " +
                      detail::shape_str(y.shape()));
    y = concat_channels(y, skip);
  }
  return y;
}

// checkpoint/optimizer naming: <prefix>.conv.kernel, <prefix>.bn.gamma, ...

inline void append_params(const EncoderBlock& b, const std::string& prefix,
                          NamedTensors& out) {
  out.emplace_back(prefix + ".conv.kernel", b.kernel);
  if (b.bias.defined()) out.emplace_back(prefix + ".conv.bias", b.bias);
  if (b.use_batchnorm) {
    out.emplace_back(prefix + ".bn.gamma", b.bn.gamma);
    out.emplace_back(prefix + ".bn.beta", b.bn.beta);
  }
}

inline void append_params(const DecoderBlock& b, const std::string& prefix,
                          NamedTensors& out) {
  out.emplace_back(prefix + ".conv.kernel", b.kernel);
  if (b.bias.defined()) out.emplace_back(prefix + ".conv.bias", b.bias);
  if (b.use_batchnorm) {
    out.emplace_back(prefix + ".bn.gamma", b.bn.gamma);
    out.emplace_back(prefix + ".bn.beta", b.bn.beta);
  }
}

inline void append_buffers(const BatchNorm& bn, const std::string& prefix,
                           NamedTensors& out) {
  out.emplace_back(prefix + ".bn.running_mean", bn.running_mean);
  out.emplace_back(prefix + ".bn.running_var", bn.running_var);
}

}  // namespace mapgan

#endif  // MAPGAN_NN_HPP_
