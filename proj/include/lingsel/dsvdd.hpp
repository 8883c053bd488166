#pragma once

// Deep SVDD (one-class objective) over a fixed, bias-free 1-D convolutional
// encoder. Embeddings are treated as 1-channel sequences of length d.
//
//   encoder:  conv(1->8, k5, s2, p2) -> lrelu -> conv(8->4, k5, s2, p2) -> lrelu
//             -> flatten -> dense(-> latent)
//   decoder:  dense(latent ->) -> lrelu -> tconv(4->8) -> lrelu -> tconv(8->1)
//
// The autoencoder is pretrained on mean squared reconstruction; its encoder
// then minimises (1/n) sum ||phi(x_i) - c||^2 + (lambda/2) ||W||^2 around a
// center c that is fixed once and never updated. Gradients are hand-derived.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lingsel/error.hpp"
#include "lingsel/numcore.hpp"

namespace lingsel {

struct DsvddConfig {
  std::size_t ae_epochs = 2500;
  double ae_lr = 1e-2;
  std::size_t enc_epochs = 1000;
  double enc_lr = 1e-3;
  double weight_decay = 1e-6;  ///< lambda
  std::size_t batch_size = 64;
  std::size_t latent_dim = 32;
  std::uint64_t seed = 0;

  friend bool operator==(const DsvddConfig&, const DsvddConfig&) = default;
};

/// Learning rates of 0 are accepted (a no-op step), negatives are not.
inline void validate(const DsvddConfig& c) {
  if (c.ae_epochs < 1 || c.enc_epochs < 1) throw UsageError("epochs must be at least 1");
  if (!(c.ae_lr >= 0.0) || !(c.enc_lr >= 0.0) || !std::isfinite(c.ae_lr) ||
      !std::isfinite(c.enc_lr)) {
    throw UsageError("learning rates must be finite and non-negative");
  }
  if (!(c.weight_decay >= 0.0) || !std::isfinite(c.weight_decay)) {
    throw UsageError("weight decay must be finite and non-negative");
  }
  if (c.batch_size < 1) throw UsageError("batch size must be at least 1");
  if (c.latent_dim < 1) throw UsageError("latent dim must be at least 1");
}

inline constexpr double kLeakySlope = 0.1;
inline constexpr double kCenterFloor = 1e-6;

namespace nn {

inline double lrelu(double a) { return a > 0.0 ? a : kLeakySlope * a; }
inline double lrelu_grad(double a) { return a > 0.0 ? 1.0 : kLeakySlope; }

/// Range [lo, hi) of t in [0, count) with 0 <= t*stride + k - pad < span.
inline std::pair<std::size_t, std::size_t> tap_range(std::size_t k, std::size_t stride,
                                                     std::size_t pad, std::size_t span,
                                                     std::size_t count) {
  const std::size_t lo = k >= pad ? 0 : (pad - k + stride - 1) / stride;
  if (span + pad <= k) return {0, 0};
  const std::size_t hi = std::min(count, (span - 1 + pad - k) / stride + 1);
  return {lo, std::max(lo, hi)};
}

/// y[o][t] = sum_{c,k} w[o][c][k] * x[c][t*stride + k - pad]
struct Conv1d {
  std::size_t in_ch = 0, out_ch = 0, kernel = 5, stride = 2, pad = 2;
  std::vector<double> weight;  // [out][in][k]

  std::size_t out_len(std::size_t in_len) const {
    return (in_len + 2 * pad - kernel) / stride + 1;
  }

  void forward(std::span<const double> x, std::size_t in_len, std::span<double> y) const {
    const std::size_t len = out_len(in_len);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(out_ch * len), 0.0);
    for (std::size_t o = 0; o < out_ch; ++o) {
      double* yo = &y[o * len];
      for (std::size_t c = 0; c < in_ch; ++c) {
        const double* xc = &x[c * in_len];
        for (std::size_t k = 0; k < kernel; ++k) {
          const double w = weight[(o * in_ch + c) * kernel + k];
          const auto [lo, hi] = tap_range(k, stride, pad, in_len, len);
          for (std::size_t t = lo; t < hi; ++t) yo[t] += w * xc[t * stride + k - pad];
        }
      }
    }
  }

  /// Accumulates into dw and (when non-empty) dx.
  void backward(std::span<const double> x, std::size_t in_len, std::span<const double> dy,
                std::span<double> dx, std::span<double> dw) const {
    const std::size_t len = out_len(in_len);
    for (std::size_t o = 0; o < out_ch; ++o) {
      const double* g = &dy[o * len];
      for (std::size_t c = 0; c < in_ch; ++c) {
        const double* xc = &x[c * in_len];
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::size_t wi = (o * in_ch + c) * kernel + k;
          const auto [lo, hi] = tap_range(k, stride, pad, in_len, len);
          double acc = 0.0;
          for (std::size_t t = lo; t < hi; ++t) acc += g[t] * xc[t * stride + k - pad];
          dw[wi] += acc;
          if (dx.empty()) continue;
          double* dxc = &dx[c * in_len];
          const double w = weight[wi];
          for (std::size_t t = lo; t < hi; ++t) dxc[t * stride + k - pad] += g[t] * w;
        }
      }
    }
  }
};

/// Adjoint of Conv1d: y[o][t*stride + k - pad] += w[i][o][k] * x[i][t]
struct ConvTranspose1d {
  std::size_t in_ch = 0, out_ch = 0, kernel = 5, stride = 2, pad = 2, out_pad = 0;
  std::vector<double> weight;  // [in][out][k]

  std::size_t out_len(std::size_t in_len) const {
    return (in_len - 1) * stride + kernel + out_pad - 2 * pad;
  }

  void forward(std::span<const double> x, std::size_t in_len, std::span<double> y) const {
    const std::size_t len = out_len(in_len);
    std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(out_ch * len), 0.0);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = &x[i * in_len];
      for (std::size_t o = 0; o < out_ch; ++o) {
        double* yo = &y[o * len];
        for (std::size_t k = 0; k < kernel; ++k) {
          const double w = weight[(i * out_ch + o) * kernel + k];
          const auto [lo, hi] = tap_range(k, stride, pad, len, in_len);
          for (std::size_t t = lo; t < hi; ++t) yo[t * stride + k - pad] += w * xi[t];
        }
      }
    }
  }

  void backward(std::span<const double> x, std::size_t in_len, std::span<const double> dy,
                std::span<double> dx, std::span<double> dw) const {
    const std::size_t len = out_len(in_len);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* xi = &x[i * in_len];
      for (std::size_t o = 0; o < out_ch; ++o) {
        const double* g = &dy[o * len];
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::size_t wi = (i * out_ch + o) * kernel + k;
          const auto [lo, hi] = tap_range(k, stride, pad, len, in_len);
          double acc = 0.0;
          for (std::size_t t = lo; t < hi; ++t) acc += xi[t] * g[t * stride + k - pad];
          dw[wi] += acc;
          if (dx.empty()) continue;
          double* dxi = &dx[i * in_len];
          const double w = weight[wi];
          for (std::size_t t = lo; t < hi; ++t) dxi[t] += w * g[t * stride + k - pad];
        }
      }
    }
  }
};

/// y = W x, no bias.
struct Dense {
  std::size_t in = 0, out = 0;
  std::vector<double> weight;  // [out][in]

  void forward(std::span<const double> x, std::span<double> y) const {
    for (std::size_t o = 0; o < out; ++o) {
      const double* w = &weight[o * in];
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }

  void backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx,
                std::span<double> dw) const {
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[o];
      const double* w = &weight[o * in];
      double* gw = &dw[o * in];
      for (std::size_t i = 0; i < in; ++i) {
        gw[i] += g * x[i];
        if (!dx.empty()) dx[i] += g * w[i];
      }
    }
  }
};

inline void init_gaussian(std::vector<double>& w, std::size_t size, std::size_t fan_in,
                          SplitMix64& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  w.resize(size);
  for (double& v : w) v = scale * rng.gaussian();
}

/// Per-parameter first/second moment estimates.
class Adam {
 public:
  explicit Adam(const std::vector<std::size_t>& sizes) {
    for (std::size_t s : sizes) {
      m_.emplace_back(s, 0.0);
      v_.emplace_back(s, 0.0);
    }
  }

  void step(const std::vector<std::vector<double>*>& params,
            const std::vector<std::vector<double>>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = *params[p];
      const auto& g = grads[p];
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace nn

/// Bias-free 1-D convolutional encoder phi(x; W).
struct EncoderNet {
  std::size_t input_dim = 0;
  nn::Conv1d conv1;
  nn::Conv1d conv2;
  nn::Dense dense;

  std::size_t len1() const { return conv1.out_len(input_dim); }
  std::size_t len2() const { return conv2.out_len(len1()); }
  std::size_t latent_dim() const { return dense.out; }

  std::vector<std::vector<double>*> parameters() {
    return {&conv1.weight, &conv2.weight, &dense.weight};
  }
  std::vector<const std::vector<double>*> parameters() const {
    return {&conv1.weight, &conv2.weight, &dense.weight};
  }

  friend bool operator==(const EncoderNet& a, const EncoderNet& b) {
    return a.input_dim == b.input_dim && a.conv1.weight == b.conv1.weight &&
           a.conv2.weight == b.conv2.weight && a.dense.weight == b.dense.weight &&
           a.dense.out == b.dense.out;
  }
};

struct DecoderNet {
  nn::Dense dense;
  nn::ConvTranspose1d deconv1;
  nn::ConvTranspose1d deconv2;

  std::vector<std::vector<double>*> parameters() {
    return {&dense.weight, &deconv1.weight, &deconv2.weight};
  }
  std::vector<const std::vector<double>*> parameters() const {
    return {&dense.weight, &deconv1.weight, &deconv2.weight};
  }
};

struct Autoencoder {
  EncoderNet encoder;
  DecoderNet decoder;

  std::vector<std::vector<double>*> parameters() {
    auto p = encoder.parameters();
    for (auto* q : decoder.parameters()) p.push_back(q);
    return p;
  }
  std::vector<const std::vector<double>*> parameters() const {
    auto p = encoder.parameters();
    for (const auto* q : decoder.parameters()) p.push_back(q);
    return p;
  }
};

inline EncoderNet make_encoder_shape(std::size_t input_dim, std::size_t latent_dim) {
  if (input_dim < 1) throw DataError("encoder input dimension must be positive");
  EncoderNet e;
  e.input_dim = input_dim;
  e.conv1 = {1, 8, 5, 2, 2, {}};
  e.conv2 = {8, 4, 5, 2, 2, {}};
  e.dense.in = e.conv2.out_ch * e.len2();
  e.dense.out = latent_dim;
  return e;
}

/// Fresh autoencoder with fan-in scaled Gaussian weights drawn from
/// derive_seed(seed, 0).
inline Autoencoder make_autoencoder(std::size_t input_dim, std::size_t latent_dim,
                                    std::uint64_t seed) {
  Autoencoder ae;
  ae.encoder = make_encoder_shape(input_dim, latent_dim);
  const std::size_t l1 = ae.encoder.len1();
  const std::size_t l2 = ae.encoder.len2();
  auto& dec = ae.decoder;
  dec.dense.in = latent_dim;
  dec.dense.out = ae.encoder.dense.in;
  dec.deconv1 = {4, 8, 5, 2, 2, l1 + 1 - 2 * l2, {}};
  dec.deconv2 = {8, 1, 5, 2, 2, input_dim + 1 - 2 * l1, {}};

  SplitMix64 rng(derive_seed(seed, 0));
  auto& enc = ae.encoder;
  nn::init_gaussian(enc.conv1.weight, 8 * 1 * 5, 1 * 5, rng);
  nn::init_gaussian(enc.conv2.weight, 4 * 8 * 5, 8 * 5, rng);
  nn::init_gaussian(enc.dense.weight, enc.dense.in * enc.dense.out, enc.dense.in, rng);
  nn::init_gaussian(dec.dense.weight, dec.dense.in * dec.dense.out, dec.dense.in, rng);
  nn::init_gaussian(dec.deconv1.weight, 4 * 8 * 5, 4 * 5, rng);
  nn::init_gaussian(dec.deconv2.weight, 8 * 1 * 5, 8 * 5, rng);
  return ae;
}

namespace detail {

/// Activations kept for the backward pass.
struct EncoderTape {
  std::vector<double> a1, h1, a2, h2, z;
};

struct DecoderTape {
  std::vector<double> b0, g0, b1, g1, out;
};

inline void encode(const EncoderNet& net, std::span<const double> x, EncoderTape& tape) {
  const std::size_t l1 = net.len1(), l2 = net.len2();
  tape.a1.resize(net.conv1.out_ch * l1);
  tape.h1.resize(tape.a1.size());
  tape.a2.resize(net.conv2.out_ch * l2);
  tape.h2.resize(tape.a2.size());
  tape.z.resize(net.dense.out);
  net.conv1.forward(x, net.input_dim, tape.a1);
  std::transform(tape.a1.begin(), tape.a1.end(), tape.h1.begin(), nn::lrelu);
  net.conv2.forward(tape.h1, l1, tape.a2);
  std::transform(tape.a2.begin(), tape.a2.end(), tape.h2.begin(), nn::lrelu);
  net.dense.forward(tape.h2, tape.z);
}

/// dz -> weight gradients (accumulated into grads[0..2]).
inline void encode_backward(const EncoderNet& net, std::span<const double> x,
                            const EncoderTape& tape, std::span<const double> dz,
                            std::span<std::vector<double>> grads) {
  const std::size_t l1 = net.len1();
  std::vector<double> dh2(tape.h2.size(), 0.0);
  net.dense.backward(tape.h2, dz, dh2, grads[2]);
  for (std::size_t i = 0; i < dh2.size(); ++i) dh2[i] *= nn::lrelu_grad(tape.a2[i]);
  std::vector<double> dh1(tape.h1.size(), 0.0);
  net.conv2.backward(tape.h1, l1, dh2, dh1, grads[1]);
  for (std::size_t i = 0; i < dh1.size(); ++i) dh1[i] *= nn::lrelu_grad(tape.a1[i]);
  net.conv1.backward(x, net.input_dim, dh1, {}, grads[0]);
}

inline void decode(const DecoderNet& net, const EncoderNet& enc, std::span<const double> z,
                   DecoderTape& tape) {
  const std::size_t l2 = enc.len2(), l1 = enc.len1();
  tape.b0.resize(net.dense.out);
  tape.g0.resize(net.dense.out);
  tape.b1.resize(net.deconv1.out_ch * l1);
  tape.g1.resize(tape.b1.size());
  tape.out.resize(enc.input_dim);
  net.dense.forward(z, tape.b0);
  std::transform(tape.b0.begin(), tape.b0.end(), tape.g0.begin(), nn::lrelu);
  net.deconv1.forward(tape.g0, l2, tape.b1);
  std::transform(tape.b1.begin(), tape.b1.end(), tape.g1.begin(), nn::lrelu);
  net.deconv2.forward(tape.g1, l1, tape.out);
}

/// dout -> decoder weight gradients (grads[0..2]) and returns dz.
inline std::vector<double> decode_backward(const DecoderNet& net, const EncoderNet& enc,
                                           std::span<const double> z, const DecoderTape& tape,
                                           std::span<const double> dout,
                                           std::span<std::vector<double>> grads) {
  const std::size_t l2 = enc.len2(), l1 = enc.len1();
  std::vector<double> dg1(tape.g1.size(), 0.0);
  net.deconv2.backward(tape.g1, l1, dout, dg1, grads[2]);
  for (std::size_t i = 0; i < dg1.size(); ++i) dg1[i] *= nn::lrelu_grad(tape.b1[i]);
  std::vector<double> dg0(tape.g0.size(), 0.0);
  net.deconv1.backward(tape.g0, l2, dg1, dg0, grads[1]);
  for (std::size_t i = 0; i < dg0.size(); ++i) dg0[i] *= nn::lrelu_grad(tape.b0[i]);
  std::vector<double> dz(z.size(), 0.0);
  net.dense.backward(z, dg0, dz, grads[0]);
  return dz;
}

template <typename Net>
std::vector<std::size_t> parameter_sizes(Net& net) {
  std::vector<std::size_t> s;
  for (auto* p : net.parameters()) s.push_back(p->size());
  return s;
}

}  // namespace detail

/// phi(x; W)
inline std::vector<double> encode(const EncoderNet& net, std::span<const double> x) {
  if (x.size() != net.input_dim) {
    throw DataError("input dimension " + std::to_string(x.size()) + " does not match encoder " +
                    std::to_string(net.input_dim));
  }
  detail::EncoderTape tape;
  detail::encode(net, x, tape);
  return std::move(tape.z);
}

/// Mean over the batch and over coordinates of (x_hat - x)^2. When grads is
/// non-null it receives d(loss)/dW, one vector per parameter tensor in
/// Autoencoder::parameters() order.
inline double ae_objective(const Autoencoder& ae, const Matrix& batch,
                           std::vector<std::vector<double>>* grads = nullptr) {
  const double scale = 1.0 / static_cast<double>(batch.rows() * batch.cols());
  detail::EncoderTape et;
  detail::DecoderTape dt;
  if (grads) {
    grads->clear();
    for (const auto* p : ae.parameters()) grads->emplace_back(p->size(), 0.0);
  }
  double loss = 0.0;
  std::vector<double> dout(batch.cols());
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    const auto x = batch.row(b);
    detail::encode(ae.encoder, x, et);
    detail::decode(ae.decoder, ae.encoder, et.z, dt);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double r = dt.out[j] - x[j];
      loss += r * r;
      dout[j] = 2.0 * r * scale;
    }
    if (grads) {
      const std::span<std::vector<double>> all(*grads);
      const auto dz =
          detail::decode_backward(ae.decoder, ae.encoder, et.z, dt, dout, all.subspan(3));
      detail::encode_backward(ae.encoder, x, et, dz, all.first(3));
    }
  }
  return loss * scale;
}

/// (1/B) sum_b ||phi(x_b) - c||^2 + (lambda/2) ||W||^2, optionally with its
/// gradient in EncoderNet::parameters() order.
inline double svdd_objective(const EncoderNet& net, std::span<const double> center,
                             const Matrix& batch, double weight_decay,
                             std::vector<std::vector<double>>* grads = nullptr) {
  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  if (grads) {
    grads->clear();
    for (const auto* p : net.parameters()) grads->emplace_back(p->size(), 0.0);
  }
  detail::EncoderTape tape;
  std::vector<double> dz(center.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.rows(); ++b) {
    detail::encode(net, batch.row(b), tape);
    for (std::size_t k = 0; k < center.size(); ++k) {
      const double r = tape.z[k] - center[k];
      loss += r * r * inv_b;
      dz[k] = 2.0 * r * inv_b;
    }
    if (grads) detail::encode_backward(net, batch.row(b), tape, dz, *grads);
  }
  double sq = 0.0;
  const auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double w = (*params[p])[i];
      sq += w * w;
      if (grads) (*grads)[p][i] += weight_decay * w;
    }
  }
  return loss + 0.5 * weight_decay * sq;
}

struct TrainTrace {
  std::vector<double> epoch_loss;  ///< size-weighted mean of minibatch losses
};

namespace detail {

/// Epoch loop shared by both phases: per-epoch shuffle from `stream`, minibatch
/// gradients from `objective`, Adam updates.
template <typename Net, typename Objective>
TrainTrace run_epochs(Net& net, const Matrix& data, std::size_t epochs, double lr,
                      std::size_t batch_size, std::uint64_t stream, const char* phase,
                      Objective&& objective) {
  TrainTrace trace;
  const std::size_t n = data.rows();
  const std::size_t bs = std::min(batch_size, n);
  nn::Adam adam(parameter_sizes(net));
  SplitMix64 rng(stream);
  std::vector<std::size_t> order(n);
  std::vector<std::vector<double>> grads;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      const Matrix batch =
          data.select_rows(std::span<const std::size_t>(order).subspan(start, stop - start));
      const double loss = objective(net, batch, &grads);
      if (!std::isfinite(loss)) {
        throw NumericError(std::string(phase) + " diverged at epoch " + std::to_string(epoch) +
                           " (loss is not finite)");
      }
      total += loss * static_cast<double>(stop - start);
      adam.step(net.parameters(), grads, lr);
    }
    trace.epoch_loss.push_back(total / static_cast<double>(n));
  }
  for (const auto* p : net.parameters()) {
    for (double w : *p) {
      if (!std::isfinite(w)) {
        throw NumericError(std::string(phase) + " produced non-finite weights");
      }
    }
  }
  return trace;
}

}  // namespace detail

struct PretrainResult {
  Autoencoder autoencoder;  ///< encoder and decoder after pretraining
  TrainTrace trace;

  const EncoderNet& encoder() const { return autoencoder.encoder; }
};

/// Trains a fresh make_autoencoder(d, latent, seed) for ae_epochs at ae_lr.
inline PretrainResult ae_pretrain(const Matrix& data, const DsvddConfig& config) {
  validate(config);
  if (data.rows() < 1) throw DataError("autoencoder pretraining needs at least 1 vector");
  PretrainResult out{make_autoencoder(data.cols(), config.latent_dim, config.seed), {}};
  out.trace = detail::run_epochs(
      out.autoencoder, data, config.ae_epochs, config.ae_lr, config.batch_size,
      derive_seed(config.seed, 1), "autoencoder pretraining",
      [](const Autoencoder& ae, const Matrix& batch, std::vector<std::vector<double>>* g) {
        return ae_objective(ae, batch, g);
      });
  return out;
}

/// Mean encoder output; components closer to zero than 1e-6 are pushed to
/// +-1e-6 (zero goes to +1e-6).
inline std::vector<double> fix_center(const EncoderNet& encoder, const Matrix& data) {
  if (data.rows() < 1) throw DataError("cannot fix a center without data");
  std::vector<double> c(encoder.latent_dim(), 0.0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto z = encode(encoder, data.row(i));
    for (std::size_t k = 0; k < c.size(); ++k) c[k] += z[k];
  }
  for (double& v : c) {
    v /= static_cast<double>(data.rows());
    if (std::abs(v) < kCenterFloor) v = v < 0.0 ? -kCenterFloor : kCenterFloor;
  }
  return c;
}

struct DsvddModel {
  EncoderNet encoder;
  std::vector<double> center;
  DsvddConfig config;
  std::vector<double> train_distances;  ///< ascending ||phi(x_i) - c||^2 over training data

  std::size_t dim() const noexcept { return encoder.input_dim; }
};

inline double squared_distance_to_center(const EncoderNet& encoder,
                                         std::span<const double> center,
                                         std::span<const double> x) {
  return squared_distance(encode(encoder, x), center);
}

inline std::vector<double> distances_to_center(const EncoderNet& encoder,
                                               std::span<const double> center,
                                               const Matrix& data) {
  std::vector<double> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    out[i] = squared_distance_to_center(encoder, center, data.row(i));
  }
  return out;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct SvddTrainResult {
  DsvddModel model;
  TrainTrace trace;
  double initial_mean_distance = 0.0;
  double final_mean_distance = 0.0;
};

/// Fine-tunes `encoder` on the one-class objective around the fixed center.
/// Throws NumericError if the mean training distance grew.
inline SvddTrainResult dsvdd_train(const Matrix& data, EncoderNet encoder,
                                   std::vector<double> center, const DsvddConfig& config) {
  validate(config);
  if (data.rows() < 1) throw DataError("Deep SVDD training needs at least 1 vector");
  if (center.size() != encoder.latent_dim()) throw DataError("center size != latent dim");

  SvddTrainResult out;
  out.initial_mean_distance = mean_of(distances_to_center(encoder, center, data));
  out.trace = detail::run_epochs(
      encoder, data, config.enc_epochs, config.enc_lr, config.batch_size,
      derive_seed(config.seed, 2), "Deep SVDD training",
      [&](const EncoderNet& net, const Matrix& batch, std::vector<std::vector<double>>* g) {
        return svdd_objective(net, center, batch, config.weight_decay, g);
      });
  auto distances = distances_to_center(encoder, center, data);
  out.final_mean_distance = mean_of(distances);
  if (out.final_mean_distance > out.initial_mean_distance) {
    throw NumericError("Deep SVDD training increased the mean distance to the center (" +
                       std::to_string(out.initial_mean_distance) + " -> " +
                       std::to_string(out.final_mean_distance) + ")");
  }
  std::sort(distances.begin(), distances.end());
  out.model = DsvddModel{std::move(encoder), std::move(center), config, std::move(distances)};
  return out;
}

struct DsvddFit {
  DsvddModel model;
  TrainTrace ae_trace;
  TrainTrace svdd_trace;
};

/// Pretrain -> fix center -> train.
inline DsvddFit dsvdd_fit(const Matrix& data, const DsvddConfig& config) {
  auto pre = ae_pretrain(data, config);
  auto center = fix_center(pre.encoder(), data);
  auto trained = dsvdd_train(data, pre.autoencoder.encoder, std::move(center), config);
  return {std::move(trained.model), std::move(pre.trace), std::move(trained.trace)};
}

/// -||phi(x) - c||^2; 0 is the maximum.
inline double dsvdd_decision(const DsvddModel& model, std::span<const double> x) {
  return -squared_distance_to_center(model.encoder, model.center, x);
}

/// Nearest-rank q-quantile of the given squared distances.
inline double distance_quantile(std::vector<double> distances, double q) {
  if (distances.empty()) throw DataError("threshold needs at least one training distance");
  if (!(q > 0.0 && q <= 1.0)) throw UsageError("quantile must lie in (0, 1]");
  std::sort(distances.begin(), distances.end());
  // The slack keeps products like 0.07 * 100 = 7.000000000000001 at rank 7.
  auto rank =
      static_cast<std::size_t>(std::ceil(q * static_cast<double>(distances.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, distances.size());
  return distances[rank - 1];
}

/// Outlier <=> ||phi(x) - c||^2 > threshold.
inline double dsvdd_threshold(const DsvddModel& model, const Matrix& train_data, double q) {
  return distance_quantile(distances_to_center(model.encoder, model.center, train_data), q);
}

/// Same, from the distances recorded at training time.
inline double dsvdd_threshold(const DsvddModel& model, double q) {
  return distance_quantile(model.train_distances, q);
}

}  // namespace lingsel
