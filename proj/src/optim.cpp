#include "needletrack/optim.hpp"

#include <algorithm>
#include <cmath>

#include "needletrack/errors.hpp"

namespace needletrack {

void AdamWConfig::validate() const {
  // lr == 0 freezes the weights.
  if (!(lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("optimizer.beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("optimizer.beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
}

bool AdamWConfig::decays(const std::string& name) const {
  return std::find(decay_exclude.begin(), decay_exclude.end(), name) == decay_exclude.end();
}

template <typename T>
OptimizerState<T> OptimizerState<T>::fresh(const ParameterSet<T>& params) {
  OptimizerState state;
  for (const auto& [name, p] : params) {
    state.moments.emplace(name, MomentPair<T>{Tensor<T>(p.shape()), Tensor<T>(p.shape())});
  }
  return state;
}

template <typename T>
void adamw_step(ParameterSet<T>& params, const ParameterSet<T>& grads, OptimizerState<T>& state,
                const AdamWConfig& config) {
  if (params.size() != grads.size() || params.size() != state.moments.size()) {
    throw ShapeError("adamw_step: parameter, gradient and state sets differ in size (" +
                     std::to_string(params.size()) + ", " + std::to_string(grads.size()) + ", " +
                     std::to_string(state.moments.size()) + ")");
  }
  for (const auto& [name, p] : params) {
    if (!grads.contains(name)) throw ShapeError("adamw_step: no gradient for '" + name + "'");
    auto it = state.moments.find(name);
    if (it == state.moments.end()) throw ShapeError("adamw_step: no state for '" + name + "'");
    const auto& g = grads.at(name);
    require_same_shape(g.shape(), p.shape(), ("adamw_step gradient '" + name + "'").c_str());
    require_same_shape(it->second.m.shape(), p.shape(), ("adamw_step state '" + name + "'").c_str());
    if (!g.all_finite()) {
      throw std::domain_error("adamw_step: non-finite gradient for parameter '" + name + "'");
    }
  }

  const std::int64_t t = ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));

  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    auto& moments = state.moments.find(name)->second;
    const double decay = config.decays(name) ? config.lr * config.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double m = b1 * moments.m[i] + (1.0 - b1) * gi;
      const double v = b2 * moments.v[i] + (1.0 - b2) * gi * gi;
      moments.m[i] = static_cast<T>(m);
      moments.v[i] = static_cast<T>(v);
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      const double theta = p[i];
      p[i] = static_cast<T>(theta - config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon) -
                            decay * theta);
    }
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adamw_step(ParameterSet<float>&, const ParameterSet<float>&, OptimizerState<float>&,
                         const AdamWConfig&);
template void adamw_step(ParameterSet<double>&, const ParameterSet<double>&,
                         OptimizerState<double>&, const AdamWConfig&);

}  // namespace needletrack
