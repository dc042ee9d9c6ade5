#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "nhalf/error.hpp"

namespace nhalf {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr int kDefaultClip = 31;

// Per-channel BatchNorm statistics, PReLU slope and the symmetric HardTanh
// bound of one convolution block. `a` holds either one slope per channel or
// a single broadcast slope.
struct ActivationParams {
  std::vector<double> gamma, beta, mu, sigma_sq;
  std::vector<double> a;
  double epsilon = kDefaultEpsilon;
  int clip = kDefaultClip;

  std::size_t channels() const { return gamma.size(); }
  double slope(std::size_t ch) const { return a.size() == 1 ? a[0] : a.at(ch); }

  static ActivationParams identity(std::size_t channels, int clip = kDefaultClip) {
    ActivationParams p;
    p.gamma.assign(channels, 1.0);
    p.beta.assign(channels, 0.0);
    p.mu.assign(channels, 0.0);
    p.sigma_sq.assign(channels, 1.0);
    p.a.assign(channels, 1.0);
    p.epsilon = 0.0;
    p.clip = clip;
    return p;
  }

  // Structural checks plus the arithmetic minimum (sigma_sq + epsilon > 0).
  // Checkpoints additionally demand epsilon > 0; see check_checkpoint_params.
  void validate() const {
    const std::size_t c = channels();
    if (c == 0) throw ConfigError("activation params have no channels");
    if (beta.size() != c || mu.size() != c || sigma_sq.size() != c)
      throw ConfigError("activation params: per-channel vectors differ in length");
    if (a.size() != 1 && a.size() != c)
      throw ConfigError("activation params: PReLU slope count must be 1 or " + std::to_string(c));
    if (clip < 1) throw ConfigError("clip must be >= 1");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
    for (std::size_t i = 0; i < c; ++i) {
      if (!(sigma_sq[i] >= 0.0)) throw ConfigError("sigma_sq must be >= 0 at channel " + std::to_string(i));
      if (!(sigma_sq[i] + epsilon > 0.0))
        throw ConfigError("sigma_sq + epsilon must be > 0 at channel " + std::to_string(i));
      if (!std::isfinite(gamma[i]) || !std::isfinite(beta[i]) || !std::isfinite(mu[i]) ||
          !std::isfinite(sigma_sq[i]) || !std::isfinite(slope(i)))
        throw ConfigError("non-finite activation parameter at channel " + std::to_string(i));
    }
  }

  bool operator==(const ActivationParams&) const = default;
};

// +1 for x >= 0 (ties go to +1), -1 otherwise.
inline int sign(double x) {
  if (!std::isfinite(x)) throw DomainError("sign of non-finite value");
  return x >= 0.0 ? 1 : -1;
}

inline double hardtanh(double x, int clip) {
  if (clip < 1) throw DomainError("clip must be >= 1");
  if (!std::isfinite(x)) throw DomainError("hardtanh of non-finite value");
  const double bound = static_cast<double>(clip);
  return x > bound ? bound : (x < -bound ? -bound : x);
}

inline double prelu(double x, double a) { return x >= 0.0 ? x : a * x; }

inline double batchnorm(double x, const ActivationParams& p, std::size_t ch) {
  return (x - p.mu.at(ch)) / std::sqrt(p.sigma_sq.at(ch) + p.epsilon) * p.gamma.at(ch) +
         p.beta.at(ch);
}

// Closed form of batchnorm(prelu(hardtanh(x))) as a piecewise affine map of
// the integer pooled value x.
inline double func_reference(std::int64_t x, const ActivationParams& p, std::size_t ch) {
  const double std_dev = std::sqrt(p.sigma_sq.at(ch) + p.epsilon);
  const double k = p.gamma.at(ch) / std_dev;
  const double b = p.beta.at(ch) - p.mu.at(ch) * p.gamma.at(ch) / std_dev;
  const double a = p.slope(ch);
  const double clip = static_cast<double>(p.clip);
  if (x > p.clip) return clip * k + b;
  if (x < -p.clip) return a * (-clip) * k + b;
  const double xd = static_cast<double>(x);
  if (x >= 0) return k * xd + b;
  return a * k * xd + b;
}

}  // namespace nhalf
