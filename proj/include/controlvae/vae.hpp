#pragma once

// Minimal VAE: tanh MLP encoder producing (mu, log_var), diagonal-Gaussian
// latent with the reparameterization trick, tanh MLP decoder producing
// Bernoulli logits. Gradients are written out by hand.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "controlvae/controller.hpp"

namespace controlvae {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct VaeDims {
  int input = 64;
  int hidden = 64;
  int latent = 6;

  friend bool operator==(const VaeDims&, const VaeDims&) = default;
};

/// All trainable tensors, in checkpoint declaration order. Biases are 1 x n.
struct VaeParams {
  enum Tensor : std::size_t { kEncW1, kEncB1, kEncW2, kEncB2, kDecW1, kDecB1, kDecW2, kDecB2, kCount };

  std::array<Matrix, kCount> tensors;

  static VaeParams zeros(const VaeDims& d) {
    VaeParams p;
    p[kEncW1] = Matrix::Zero(d.input, d.hidden);
    p[kEncB1] = Matrix::Zero(1, d.hidden);
    p[kEncW2] = Matrix::Zero(d.hidden, 2 * d.latent);
    p[kEncB2] = Matrix::Zero(1, 2 * d.latent);
    p[kDecW1] = Matrix::Zero(d.latent, d.hidden);
    p[kDecB1] = Matrix::Zero(1, d.hidden);
    p[kDecW2] = Matrix::Zero(d.hidden, d.input);
    p[kDecB2] = Matrix::Zero(1, d.input);
    return p;
  }

  Matrix& operator[](Tensor t) { return tensors[t]; }
  const Matrix& operator[](Tensor t) const { return tensors[t]; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& m : tensors) n += static_cast<std::size_t>(m.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& m : tensors)
      if (!m.allFinite()) return false;
    return true;
  }
};

struct VaeModel {
  VaeDims dims;
  VaeParams params;
  std::uint64_t seed = 0;

  /// Glorot-uniform weights, zero biases.
  static VaeModel init(const VaeDims& dims, std::uint64_t seed) {
    if (dims.input < 1 || dims.hidden < 1 || dims.latent < 1)
      throw InputError("vae: dimensions must be positive");
    VaeModel m{dims, VaeParams::zeros(dims), seed};
    std::mt19937_64 rng(seed);
    for (auto t : {VaeParams::kEncW1, VaeParams::kEncW2, VaeParams::kDecW1, VaeParams::kDecW2}) {
      Matrix& w = m.params[t];
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    }
    return m;
  }
};

/// Binary data (batch x input) and standard-normal draws (batch x latent).
struct Batch {
  Matrix data;
  Matrix noise;
};

struct EncoderOutput {
  Matrix mu;
  Matrix log_var;
};

inline EncoderOutput encode(const VaeModel& model, const Matrix& data) {
  if (data.cols() != model.dims.input) throw InputError("vae: data columns != input_dim");
  const auto& p = model.params;
  const Matrix h = ((data * p[VaeParams::kEncW1]).rowwise() + p[VaeParams::kEncB1].row(0)).array().tanh().matrix();
  const Matrix out = (h * p[VaeParams::kEncW2]).rowwise() + p[VaeParams::kEncB2].row(0);
  const int L = model.dims.latent;
  return {out.leftCols(L), out.rightCols(L)};
}

inline Matrix reparameterize(const Matrix& mu, const Matrix& log_var, const Matrix& noise) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols() || mu.rows() != noise.rows() ||
      mu.cols() != noise.cols())
    throw InputError("vae: reparameterize shape mismatch");
  return (mu.array() + (0.5 * log_var.array()).exp() * noise.array()).matrix();
}

/// Per-sample KL(q || N(0, I)) in nats, summed over latent dimensions.
inline Vector gaussian_kl(const Matrix& mu, const Matrix& log_var) {
  if (mu.rows() != log_var.rows() || mu.cols() != log_var.cols())
    throw InputError("vae: gaussian_kl shape mismatch");
  return (0.5 * (mu.array().square() + log_var.array().exp() - log_var.array() - 1.0)).matrix().rowwise().sum();
}

inline Matrix decode(const VaeModel& model, const Matrix& z) {
  if (z.cols() != model.dims.latent) throw InputError("vae: z columns != latent_dim");
  const auto& p = model.params;
  const Matrix h = ((z * p[VaeParams::kDecW1]).rowwise() + p[VaeParams::kDecB1].row(0)).array().tanh().matrix();
  return (h * p[VaeParams::kDecW2]).rowwise() + p[VaeParams::kDecB2].row(0);
}

/// Per-sample negative Bernoulli log-likelihood, -sum_i [x log s(l) + (1-x) log(1-s(l))].
inline Vector bernoulli_nll(const Matrix& logits, const Matrix& data) {
  const auto l = logits.array();
  const auto bce = l.max(0.0) - l * data.array() + (-l.abs()).exp().log1p();
  return bce.matrix().rowwise().sum();
}

enum class Objective { Elbo, BetaFixed, Capacity, Controlled };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::Elbo: return "elbo";
    case Objective::BetaFixed: return "beta_fixed";
    case Objective::Capacity: return "capacity";
    case Objective::Controlled: return "controlled";
  }
  return "?";
}

struct LossTerms {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

/// Intermediate values of one forward pass, kept for the backward pass.
struct ForwardPass {
  Matrix enc_hidden;
  Matrix mu;
  Matrix log_var;
  Matrix z;
  Matrix dec_hidden;
  Matrix logits;
  double recon = 0.0;  // batch mean
  double kl = 0.0;     // batch mean
};

inline ForwardPass forward(const VaeModel& model, const Batch& batch) {
  if (batch.data.cols() != model.dims.input) throw InputError("vae: data columns != input_dim");
  if (batch.noise.cols() != model.dims.latent || batch.noise.rows() != batch.data.rows())
    throw InputError("vae: noise must be batch_size x latent_dim");
  const auto& p = model.params;
  ForwardPass f;
  f.enc_hidden = ((batch.data * p[VaeParams::kEncW1]).rowwise() + p[VaeParams::kEncB1].row(0)).array().tanh().matrix();
  const Matrix out = (f.enc_hidden * p[VaeParams::kEncW2]).rowwise() + p[VaeParams::kEncB2].row(0);
  const int L = model.dims.latent;
  f.mu = out.leftCols(L);
  f.log_var = out.rightCols(L);
  f.z = reparameterize(f.mu, f.log_var, batch.noise);
  f.dec_hidden = ((f.z * p[VaeParams::kDecW1]).rowwise() + p[VaeParams::kDecB1].row(0)).array().tanh().matrix();
  f.logits = (f.dec_hidden * p[VaeParams::kDecW2]).rowwise() + p[VaeParams::kDecB2].row(0);
  f.recon = bernoulli_nll(f.logits, batch.data).mean();
  f.kl = gaussian_kl(f.mu, f.log_var).mean();
  return f;
}

/// Minimization form of the objective for a completed forward pass.
inline LossTerms loss_terms(const ForwardPass& f, Objective objective, double beta, double capacity) {
  LossTerms out{0.0, f.recon, f.kl};
  switch (objective) {
    case Objective::Elbo: out.total = f.recon + f.kl; break;
    case Objective::BetaFixed:
    case Objective::Controlled: out.total = f.recon + beta * f.kl; break;
    case Objective::Capacity: out.total = f.recon + beta * std::abs(f.kl - capacity); break;
  }
  return out;
}

/// d total / d (batch-mean KL). The |kl - C| kink takes subgradient 0.
inline double kl_weight(Objective objective, double kl, double beta, double capacity) {
  switch (objective) {
    case Objective::Elbo: return 1.0;
    case Objective::BetaFixed:
    case Objective::Controlled: return beta;
    case Objective::Capacity: return kl > capacity ? beta : (kl < capacity ? -beta : 0.0);
  }
  return 0.0;
}

inline LossTerms loss(const VaeModel& model, const Batch& batch, Objective objective, double beta,
                      double capacity = 0.0) {
  return loss_terms(forward(model, batch), objective, beta, capacity);
}

/// Reverse-mode gradients of the total loss; beta is a constant.
inline VaeParams backward(const VaeModel& model, const Batch& batch, const ForwardPass& f, Objective objective,
                          double beta, double capacity = 0.0) {
  const auto& p = model.params;
  const double inv_b = 1.0 / static_cast<double>(batch.data.rows());
  const double w_kl = kl_weight(objective, f.kl, beta, capacity) * inv_b;
  VaeParams g;

  // Decoder.
  const Matrix d_logits = ((1.0 / (1.0 + (-f.logits.array()).exp())) - batch.data.array()).matrix() * inv_b;
  g[VaeParams::kDecW2] = f.dec_hidden.transpose() * d_logits;
  g[VaeParams::kDecB2] = d_logits.colwise().sum();
  const Matrix d_dec_pre =
      ((d_logits * p[VaeParams::kDecW2].transpose()).array() * (1.0 - f.dec_hidden.array().square())).matrix();
  g[VaeParams::kDecW1] = f.z.transpose() * d_dec_pre;
  g[VaeParams::kDecB1] = d_dec_pre.colwise().sum();
  const Matrix d_z = d_dec_pre * p[VaeParams::kDecW1].transpose();

  // Latent: reparameterization plus the KL pathway.
  const auto sigma = (0.5 * f.log_var.array()).exp();
  const int L = model.dims.latent;
  Matrix d_out(batch.data.rows(), 2 * L);
  d_out.leftCols(L) = (d_z.array() + w_kl * f.mu.array()).matrix();
  d_out.rightCols(L) =
      (d_z.array() * 0.5 * sigma * batch.noise.array() + w_kl * 0.5 * (f.log_var.array().exp() - 1.0)).matrix();

  // Encoder.
  g[VaeParams::kEncW2] = f.enc_hidden.transpose() * d_out;
  g[VaeParams::kEncB2] = d_out.colwise().sum();
  const Matrix d_enc_pre =
      ((d_out * p[VaeParams::kEncW2].transpose()).array() * (1.0 - f.enc_hidden.array().square())).matrix();
  g[VaeParams::kEncW1] = batch.data.transpose() * d_enc_pre;
  g[VaeParams::kEncB1] = d_enc_pre.colwise().sum();
  return g;
}

inline VaeParams backward(const VaeModel& model, const Batch& batch, Objective objective, double beta,
                          double capacity = 0.0) {
  return backward(model, batch, forward(model, batch), objective, beta, capacity);
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamMoments {
  VaeParams m;
  VaeParams v;

  static AdamMoments zeros(const VaeDims& d) { return {VaeParams::zeros(d), VaeParams::zeros(d)}; }
};

/// Bias-corrected Adam update in place; `t` is the 1-based step number.
inline void adam_step(VaeParams& params, const VaeParams& grads, AdamMoments& moments, std::int64_t t,
                      const AdamConfig& cfg = {}) {
  if (t < 1) throw InputError("adam: step must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < VaeParams::kCount; ++i) {
    auto m = moments.m.tensors[i].array();
    auto v = moments.v.tensors[i].array();
    const auto g = grads.tensors[i].array();
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
    params.tensors[i].array() -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
  }
}

// Checkpoint: "KLP1", input/hidden/latent as little-endian int32, then every
// parameter as a little-endian float64 in declaration order (row-major).

inline void save_checkpoint(std::ostream& os, const VaeModel& model) {
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_f64 = [&](double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  os.write("KLP1", 4);
  put_u32(static_cast<std::uint32_t>(model.dims.input));
  put_u32(static_cast<std::uint32_t>(model.dims.hidden));
  put_u32(static_cast<std::uint32_t>(model.dims.latent));
  for (const auto& m : model.params.tensors)
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(m.data()[i]);
}

inline VaeModel load_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "KLP1") throw InputError("checkpoint: bad magic");
  auto get_bytes = [&](int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const int c = is.get();
      if (c == std::char_traits<char>::eof()) throw InputError("checkpoint: truncated");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  };
  VaeDims d;
  d.input = static_cast<std::int32_t>(get_bytes(4));
  d.hidden = static_cast<std::int32_t>(get_bytes(4));
  d.latent = static_cast<std::int32_t>(get_bytes(4));
  if (d.input < 1 || d.hidden < 1 || d.latent < 1) throw InputError("checkpoint: bad dimensions");
  VaeModel model{d, VaeParams::zeros(d), 0};
  for (auto& m : model.params.tensors)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(get_bytes(8));
  if (is.peek() != std::char_traits<char>::eof()) throw InputError("checkpoint: trailing bytes");
  return model;
}

}  // namespace controlvae
