#include "needletrack/model.hpp"

#include <cmath>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "needletrack/errors.hpp"

namespace needletrack {
namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kConv1Stride = 2;
constexpr std::size_t kConv2Stride = 1;
constexpr std::size_t kPadding = 1;

void require_positive(std::size_t value, const char* name) {
  if (value == 0) throw ConfigError(std::string("network.") + name + " must be positive");
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, std::uint64_t seed, std::string_view name) {
  // Boost's MT19937-64 and ziggurat normal: fc1 at full resolution holds ~41M
  // weights and the std equivalents take about three times as long.
  boost::random::mt19937_64 rng(derive_seed(seed, name));
  boost::random::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> values(element_count(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(values));
}

}  // namespace

void NetworkConfig::validate() const {
  require_positive(input_channels, "input_channels");
  require_positive(conv1_out, "conv1_out");
  require_positive(conv2_out, "conv2_out");
  require_positive(hidden, "hidden");
  require_positive(output_dim, "output_dim");
  if (input_side < 8 || input_side % 8 != 0) {
    throw ConfigError("network.input_side must be a positive multiple of 8 (two halvings after a "
                      "stride-2 conv), got " + std::to_string(input_side));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("network.dropout_rate must be in [0, 1), got " +
                      std::to_string(dropout_rate));
  }
}

template <typename T>
void ParameterSet<T>::insert(std::string name, Tensor<T> tensor) {
  tensors_.insert_or_assign(std::move(name), std::move(tensor));
}

template <typename T>
Tensor<T>& ParameterSet<T>::at(std::string_view name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

template <typename T>
std::size_t ParameterSet<T>::parameter_count(std::string_view layer) const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) {
    if (name.size() > layer.size() && name.compare(0, layer.size(), layer) == 0 &&
        name[layer.size()] == '.') {
      n += t.size();
    }
  }
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, t] : tensors_) out.insert(name, Tensor<T>(t.shape()));
  return out;
}

template <typename T>
void ParameterSet<T>::set_zero() {
  for (auto& [name, t] : tensors_) t.fill(T{0});
}

namespace {

std::vector<std::pair<std::string, Shape>> expected_shapes(const NetworkConfig& c) {
  return {
      {"conv1.weight", {c.conv1_out, c.input_channels, kKernel, kKernel}},
      {"conv1.bias", {c.conv1_out}},
      {"conv2.weight", {c.conv2_out, c.conv1_out, kKernel, kKernel}},
      {"conv2.bias", {c.conv2_out}},
      {"fc1.weight", {c.hidden, c.flatten_size()}},
      {"fc1.bias", {c.hidden}},
      {"fc2.weight", {c.output_dim, c.hidden}},
      {"fc2.bias", {c.output_dim}},
  };
}

}  // namespace

template <typename T>
ParameterSet<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet<T> params;
  for (auto& [name, shape] : expected_shapes(config)) {
    if (shape.size() == 1) {
      params.insert(name, Tensor<T>(shape));
    } else {
      const std::size_t fan_in = element_count(shape) / shape[0];
      params.insert(name, he_normal<T>(shape, fan_in, seed, name));
    }
  }
  return params;
}

template <typename T>
void check_parameters(const NetworkConfig& config, const ParameterSet<T>& params) {
  const auto expected = expected_shapes(config);
  for (const auto& [name, shape] : expected) {
    if (!params.contains(name)) throw DataError("parameter set is missing '" + name + "'");
    if (params.at(name).shape() != shape) {
      throw DataError("parameter '" + name + "' has shape " + to_string(params.at(name).shape()) +
                      ", network config expects " + to_string(shape));
    }
  }
  if (params.size() != expected.size()) {
    throw DataError("parameter set has " + std::to_string(params.size()) +
                    " tensors, network expects " + std::to_string(expected.size()));
  }
}

template <typename T>
ForwardResult<T> forward(const NetworkConfig& config, const ParameterSet<T>& params,
                         const Tensor<T>& image, Mode mode, Rng& rng) {
  if (image.shape() != config.input_shape()) {
    throw ShapeError("network expects an image of shape " + to_string(config.input_shape()) +
                     ", got " + to_string(image.shape()));
  }
  ForwardResult<T> result;
  ForwardTrace<T>& tr = result.trace;
  tr.mode = mode;
  tr.shapes.push_back({"input", image.shape()});

  auto c1 = conv2d(image, params.at("conv1.weight"), params.at("conv1.bias"), kConv1Stride,
                   kPadding);
  tr.conv1 = std::move(c1.ctx);
  tr.shapes.push_back({"conv1", c1.output.shape()});
  auto r1 = relu(c1.output);
  tr.relu1 = std::move(r1.ctx);
  tr.shapes.push_back({"relu1", r1.output.shape()});
  auto p1 = maxpool2d(r1.output);
  tr.pool1 = std::move(p1.ctx);
  tr.shapes.push_back({"pool1", p1.output.shape()});

  auto c2 = conv2d(p1.output, params.at("conv2.weight"), params.at("conv2.bias"), kConv2Stride,
                   kPadding);
  tr.conv2 = std::move(c2.ctx);
  tr.shapes.push_back({"conv2", c2.output.shape()});
  auto r2 = relu(c2.output);
  tr.relu2 = std::move(r2.ctx);
  tr.shapes.push_back({"relu2", r2.output.shape()});
  auto p2 = maxpool2d(r2.output);
  tr.pool2 = std::move(p2.ctx);
  tr.shapes.push_back({"pool2", p2.output.shape()});

  tr.pooled_shape = p2.output.shape();
  const std::size_t flat = p2.output.size();
  Tensor<T> flattened = std::move(p2.output).reshaped({flat});
  tr.shapes.push_back({"flatten", flattened.shape()});

  auto f1 = linear(flattened, params.at("fc1.weight"), params.at("fc1.bias"));
  tr.fc1 = std::move(f1.ctx);
  tr.shapes.push_back({"fc1", f1.output.shape()});
  auto r3 = relu(f1.output);
  tr.relu3 = std::move(r3.ctx);
  tr.shapes.push_back({"relu3", r3.output.shape()});
  auto d = dropout(r3.output, config.dropout_rate, mode, rng);
  tr.drop = std::move(d.ctx);
  tr.shapes.push_back({"dropout", d.output.shape()});

  auto f2 = linear(d.output, params.at("fc2.weight"), params.at("fc2.bias"));
  tr.fc2 = std::move(f2.ctx);
  tr.shapes.push_back({"fc2", f2.output.shape()});

  result.prediction = std::move(f2.output);
  return result;
}

template <typename T>
Tensor<T> predict(const NetworkConfig& config, const ParameterSet<T>& params,
                  const Tensor<T>& image) {
  Rng unused(0);
  return forward(config, params, image, Mode::eval, unused).prediction;
}

template <typename T>
void backward_into(ForwardTrace<T>& trace, const Tensor<T>& grad_prediction,
                   ParameterSet<T>& accum) {
  if (trace.consumed) throw ContextReuseError("network backward: trace was already consumed");
  if (trace.mode != Mode::train) {
    throw std::logic_error("network backward needs a trace from a train-mode forward");
  }
  trace.consumed = true;

  Tensor<T> g = linear_backward_into(trace.fc2, grad_prediction, accum.at("fc2.weight"),
                                     accum.at("fc2.bias"));
  g = dropout_backward(trace.drop, g);
  g = relu_backward(trace.relu3, g);
  g = linear_backward_into(trace.fc1, g, accum.at("fc1.weight"), accum.at("fc1.bias"));
  g = std::move(g).reshaped(trace.pooled_shape);
  g = maxpool2d_backward(trace.pool2, g);
  g = relu_backward(trace.relu2, g);
  g = conv2d_backward_into(trace.conv2, g, accum.at("conv2.weight"), accum.at("conv2.bias"));
  g = maxpool2d_backward(trace.pool1, g);
  g = relu_backward(trace.relu1, g);
  conv2d_backward_into(trace.conv1, g, accum.at("conv1.weight"), accum.at("conv1.bias"),
                       /*want_input_grad=*/false);
}

template <typename T>
ParameterSet<T> backward(ForwardTrace<T>& trace, const Tensor<T>& grad_prediction) {
  auto conv_shape = [](const Conv2dContext<T>& c) {
    return Shape{c.output_shape.at(0), c.input_shape.at(0), c.kernel_h, c.kernel_w};
  };
  ParameterSet<T> grads;
  grads.insert("conv1.weight", Tensor<T>(conv_shape(trace.conv1)));
  grads.insert("conv1.bias", Tensor<T>({trace.conv1.output_shape.at(0)}));
  grads.insert("conv2.weight", Tensor<T>(conv_shape(trace.conv2)));
  grads.insert("conv2.bias", Tensor<T>({trace.conv2.output_shape.at(0)}));
  grads.insert("fc1.weight", Tensor<T>({trace.fc1.out_features, trace.fc1.input.size()}));
  grads.insert("fc1.bias", Tensor<T>({trace.fc1.out_features}));
  grads.insert("fc2.weight", Tensor<T>({trace.fc2.out_features, trace.fc2.input.size()}));
  grads.insert("fc2.bias", Tensor<T>({trace.fc2.out_features}));
  backward_into(trace, grad_prediction, grads);
  return grads;
}

#define NEEDLETRACK_INSTANTIATE_MODEL(T)                                                      \
  template class ParameterSet<T>;                                                             \
  template ParameterSet<T> build_network(const NetworkConfig&, std::uint64_t);                \
  template void check_parameters(const NetworkConfig&, const ParameterSet<T>&);               \
  template ForwardResult<T> forward(const NetworkConfig&, const ParameterSet<T>&,             \
                                    const Tensor<T>&, Mode, Rng&);                            \
  template Tensor<T> predict(const NetworkConfig&, const ParameterSet<T>&, const Tensor<T>&); \
  template ParameterSet<T> backward(ForwardTrace<T>&, const Tensor<T>&);                      \
  template void backward_into(ForwardTrace<T>&, const Tensor<T>&, ParameterSet<T>&);

NEEDLETRACK_INSTANTIATE_MODEL(float)
NEEDLETRACK_INSTANTIATE_MODEL(double)

}  // namespace needletrack
