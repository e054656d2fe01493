#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "needletrack/layers.hpp"
#include "needletrack/tensor.hpp"

namespace needletrack {

/// Tip-regression CNN:
///   conv1 3x3/s2/p1 -> ReLU -> maxpool 2x2 -> conv2 3x3/s1/p1 -> ReLU ->
///   maxpool 2x2 -> flatten -> fc1 -> ReLU -> dropout -> fc2 (linear head).
/// With the defaults a (3,400,400) image flattens to 32*50*50 = 80,000.
struct NetworkConfig {
  std::size_t input_channels = 3;
  std::size_t input_side = 400;
  std::size_t conv1_out = 16;
  std::size_t conv2_out = 32;
  std::size_t hidden = 512;
  std::size_t output_dim = 3;
  double dropout_rate = 0.5;

  static NetworkConfig desk_scale() {
    NetworkConfig cfg;
    cfg.input_side = 64;
    return cfg;
  }

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  std::size_t flatten_size() const { return conv2_out * (input_side / 8) * (input_side / 8); }
  Shape input_shape() const { return {input_channels, input_side, input_side}; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Named parameter tensors, kept in ascending name order.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>, std::less<>>;

  void insert(std::string name, Tensor<T> tensor);
  bool contains(std::string_view name) const { return tensors_.find(name) != tensors_.end(); }
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t parameter_count() const;
  /// Parameters whose name starts with `layer` followed by a dot.
  std::size_t parameter_count(std::string_view layer) const;

  /// Same names and shapes, all elements zero.
  ParameterSet zeros_like() const;
  void set_zero();

  auto begin() noexcept { return tensors_.begin(); }
  auto end() noexcept { return tensors_.end(); }
  auto begin() const noexcept { return tensors_.begin(); }
  auto end() const noexcept { return tensors_.end(); }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : tensors_) out.insert(name, t.template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.tensors_ == b.tensors_;
  }

 private:
  Map tensors_;
};

struct LayerShape {
  std::string layer;
  Shape shape;
};

template <typename T>
struct ForwardTrace {
  Mode mode = Mode::eval;
  bool consumed = false;
  Conv2dContext<T> conv1;
  ReluContext<T> relu1;
  MaxPoolContext<T> pool1;
  Conv2dContext<T> conv2;
  ReluContext<T> relu2;
  MaxPoolContext<T> pool2;
  Shape pooled_shape;
  LinearContext<T> fc1;
  ReluContext<T> relu3;
  DropoutContext<T> drop;
  LinearContext<T> fc2;
  /// Output shape of every stage in execution order, starting with the input.
  std::vector<LayerShape> shapes;
};

template <typename T>
struct ForwardResult {
  Tensor<T> prediction;
  ForwardTrace<T> trace;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Deterministic in
/// `seed`; each tensor draws from its own named stream.
template <typename T>
ParameterSet<T> build_network(const NetworkConfig& config, std::uint64_t seed);

/// Throws if `params` is missing a tensor or holds one of the wrong shape.
template <typename T>
void check_parameters(const NetworkConfig& config, const ParameterSet<T>& params);

/// The trace keeps views into `params`; they must outlive it unchanged.
template <typename T>
ForwardResult<T> forward(const NetworkConfig& config, const ParameterSet<T>& params,
                         const Tensor<T>& image, Mode mode, Rng& rng);

/// Eval-mode prediction without keeping a trace around.
template <typename T>
Tensor<T> predict(const NetworkConfig& config, const ParameterSet<T>& params,
                  const Tensor<T>& image);

template <typename T>
ParameterSet<T> backward(ForwardTrace<T>& trace, const Tensor<T>& grad_prediction);

/// Adds this example's gradients into `accum`, which must mirror the
/// parameter set.
template <typename T>
void backward_into(ForwardTrace<T>& trace, const Tensor<T>& grad_prediction,
                   ParameterSet<T>& accum);

}  // namespace needletrack
