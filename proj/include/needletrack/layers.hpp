#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "needletrack/rng.hpp"
#include "needletrack/tensor.hpp"

namespace needletrack {

/// Thrown when a layer context is handed to backward a second time.
class ContextReuseError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// State shared by every layer context: a backward call consumes it.
class SingleUse {
 public:
  void consume(const char* layer);
  bool consumed() const noexcept { return consumed_; }

 private:
  bool consumed_ = false;
};

// Contexts hold a non-owning view of the weights used in forward. The weights
// must stay alive and unmodified until the matching backward has run.

template <typename T>
struct Conv2dContext : SingleUse {
  Shape input_shape;
  Shape output_shape;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::vector<T> columns;  // [C_in*kH*kW, H'*W'] lowered input windows
  std::span<const T> weight;
};

template <typename T>
struct ReluContext : SingleUse {
  Shape shape;
  std::vector<std::uint8_t> active;
};

template <typename T>
struct MaxPoolContext : SingleUse {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> argmax;
};

template <typename T>
struct LinearContext : SingleUse {
  std::vector<T> input;
  std::size_t out_features = 0;
  std::span<const T> weight;
};

template <typename T>
struct DropoutContext : SingleUse {
  Shape shape;
  std::vector<T> scale;  // empty when the layer acted as the identity
};

template <typename T, typename Context>
struct LayerResult {
  Tensor<T> output;
  Context ctx;
};

template <typename T>
struct ParamGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

enum class Mode { train, eval };

Shape conv2d_output_shape(const Shape& input, const Shape& weight, std::size_t stride,
                          std::size_t padding);

template <typename T>
LayerResult<T, Conv2dContext<T>> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& bias, std::size_t stride,
                                        std::size_t padding);

template <typename T>
ParamGrads<T> conv2d_backward(Conv2dContext<T>& ctx, const Tensor<T>& grad_out);

/// Adds the weight and bias gradients into the given accumulators and
/// returns the input gradient, or an empty tensor when it is not wanted.
template <typename T>
Tensor<T> conv2d_backward_into(Conv2dContext<T>& ctx, const Tensor<T>& grad_out,
                               Tensor<T>& grad_weight, Tensor<T>& grad_bias,
                               bool want_input_grad = true);

template <typename T>
LayerResult<T, ReluContext<T>> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(ReluContext<T>& ctx, const Tensor<T>& grad_out);

/// 2x2 window, stride 2. Ties go to the first position in row-major order.
template <typename T>
LayerResult<T, MaxPoolContext<T>> maxpool2d(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2d_backward(MaxPoolContext<T>& ctx, const Tensor<T>& grad_out);

template <typename T>
LayerResult<T, LinearContext<T>> linear(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& bias);

template <typename T>
ParamGrads<T> linear_backward(LinearContext<T>& ctx, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> linear_backward_into(LinearContext<T>& ctx, const Tensor<T>& grad_out,
                               Tensor<T>& grad_weight, Tensor<T>& grad_bias);

/// Inverted dropout: kept elements are scaled by 1/(1-rate) during training,
/// so evaluation mode is exactly the identity.
template <typename T>
LayerResult<T, DropoutContext<T>> dropout(const Tensor<T>& input, double rate, Mode mode,
                                          Rng& rng);

template <typename T>
Tensor<T> dropout_backward(DropoutContext<T>& ctx, const Tensor<T>& grad_out);

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace needletrack
