#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "needletrack/model.hpp"

namespace needletrack {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  /// Parameter names that skip weight decay. Empty: every tensor decays,
  /// biases included.
  std::vector<std::string> decay_exclude;

  void validate() const;
  bool decays(const std::string& name) const;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

template <typename T>
struct MomentPair {
  Tensor<T> m;
  Tensor<T> v;
};

template <typename T>
struct OptimizerState {
  std::map<std::string, MomentPair<T>, std::less<>> moments;
  std::int64_t step = 0;

  /// Zero moments mirroring `params`, step 0.
  static OptimizerState fresh(const ParameterSet<T>& params);
};

/// One decoupled-weight-decay Adam update, in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
/// with the decay term taken on the pre-step theta. Throws on any name/shape
/// mismatch or a non-finite gradient, before touching anything.
template <typename T>
void adamw_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state,
                const AdamWConfig& config);

}  // namespace needletrack
