#include "needletrack/layers.hpp"

#include <algorithm>
#include <string>

namespace needletrack {
namespace {

// Eight independent partial sums so the reduction pipelines and vectorizes
// without reassociation flags; the summation order is fixed.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) acc[j] += a[i + j] * b[i + j];
  }
  T tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(what) + " expects a rank-" + std::to_string(rank) +
                     " tensor, got " + to_string(shape));
  }
}

}  // namespace

void SingleUse::consume(const char* layer) {
  if (consumed_) {
    throw ContextReuseError(std::string(layer) + " backward: context was already consumed");
  }
  consumed_ = true;
}

Shape conv2d_output_shape(const Shape& input, const Shape& weight, std::size_t stride,
                          std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (input[0] != weight[1]) {
    throw ShapeError("conv2d: input " + to_string(input) + " has " + std::to_string(input[0]) +
                     " channels but weight " + to_string(weight) + " expects " +
                     std::to_string(weight[1]));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t h = input[1] + 2 * padding;
  const std::size_t w = input[2] + 2 * padding;
  if (h < weight[2] || w < weight[3]) {
    throw ShapeError("conv2d: padded input " + to_string(input) + " is smaller than kernel " +
                     to_string(weight));
  }
  return {weight[0], (h - weight[2]) / stride + 1, (w - weight[3]) / stride + 1};
}

template <typename T>
LayerResult<T, Conv2dContext<T>> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& bias, std::size_t stride,
                                        std::size_t padding) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), stride, padding);
  require_same_shape(bias.shape(), Shape{weight.dim(0)}, "conv2d bias");

  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t cout = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const std::size_t k_total = cin * kh * kw;
  const std::size_t positions = oh * ow;

  Conv2dContext<T> ctx;
  ctx.input_shape = input.shape();
  ctx.output_shape = out_shape;
  ctx.stride = stride;
  ctx.padding = padding;
  ctx.kernel_h = kh;
  ctx.kernel_w = kw;
  ctx.weight = weight.data();
  ctx.columns.assign(k_total * positions, T{0});

  const T* in = input.data().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* col = ctx.columns.data() + ((c * kh + ki) * kw + kj) * positions;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                          static_cast<std::ptrdiff_t>(padding);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* row = in + (c * h + static_cast<std::size_t>(ii)) * w;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                            static_cast<std::ptrdiff_t>(padding);
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            col[oi * ow + oj] = row[jj];
          }
        }
      }
    }
  }

  Tensor<T> output(out_shape);
  T* out = output.data().data();
  const T* wt = weight.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    T* out_row = out + o * positions;
    std::fill(out_row, out_row + positions, bias[o]);
    for (std::size_t k = 0; k < k_total; ++k) {
      axpy(wt[o * k_total + k], ctx.columns.data() + k * positions, out_row, positions);
    }
  }
  return {std::move(output), std::move(ctx)};
}

template <typename T>
Tensor<T> conv2d_backward_into(Conv2dContext<T>& ctx, const Tensor<T>& grad_out,
                               Tensor<T>& grad_weight, Tensor<T>& grad_bias,
                               bool want_input_grad) {
  require_same_shape(grad_out.shape(), ctx.output_shape, "conv2d backward grad_out");
  ctx.consume("conv2d");

  const std::size_t cin = ctx.input_shape[0], h = ctx.input_shape[1], w = ctx.input_shape[2];
  const std::size_t kh = ctx.kernel_h, kw = ctx.kernel_w;
  const std::size_t cout = ctx.output_shape[0], oh = ctx.output_shape[1],
                    ow = ctx.output_shape[2];
  const std::size_t k_total = cin * kh * kw;
  const std::size_t positions = oh * ow;
  require_same_shape(grad_weight.shape(), Shape{cout, cin, kh, kw}, "conv2d grad_weight");
  require_same_shape(grad_bias.shape(), Shape{cout}, "conv2d grad_bias");

  const T* g = grad_out.data().data();
  T* gw = grad_weight.data().data();
  for (std::size_t o = 0; o < cout; ++o) {
    const T* g_row = g + o * positions;
    T sum = 0;
    for (std::size_t p = 0; p < positions; ++p) sum += g_row[p];
    grad_bias[o] += sum;
    for (std::size_t k = 0; k < k_total; ++k) {
      gw[o * k_total + k] += dot(g_row, ctx.columns.data() + k * positions, positions);
    }
  }

  if (!want_input_grad) return {};

  std::vector<T> grad_columns(k_total * positions, T{0});
  const T* wt = ctx.weight.data();
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t k = 0; k < k_total; ++k) {
      axpy(wt[o * k_total + k], g + o * positions, grad_columns.data() + k * positions,
           positions);
    }
  }

  Tensor<T> grad_input(ctx.input_shape);
  T* gi = grad_input.data().data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* col = grad_columns.data() + ((c * kh + ki) * kw + kj) * positions;
        for (std::size_t oi = 0; oi < oh; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * ctx.stride + ki) -
                          static_cast<std::ptrdiff_t>(ctx.padding);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
          T* row = gi + (c * h + static_cast<std::size_t>(ii)) * w;
          for (std::size_t oj = 0; oj < ow; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * ctx.stride + kj) -
                            static_cast<std::ptrdiff_t>(ctx.padding);
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
            row[jj] += col[oi * ow + oj];
          }
        }
      }
    }
  }
  return grad_input;
}

template <typename T>
ParamGrads<T> conv2d_backward(Conv2dContext<T>& ctx, const Tensor<T>& grad_out) {
  const Shape& in = ctx.input_shape;
  ParamGrads<T> grads;
  grads.weight = Tensor<T>({ctx.output_shape.at(0), in.at(0), ctx.kernel_h, ctx.kernel_w});
  grads.bias = Tensor<T>({ctx.output_shape.at(0)});
  grads.input = conv2d_backward_into(ctx, grad_out, grads.weight, grads.bias, true);
  return grads;
}

template <typename T>
LayerResult<T, ReluContext<T>> relu(const Tensor<T>& input) {
  ReluContext<T> ctx;
  ctx.shape = input.shape();
  ctx.active.resize(input.size());
  Tensor<T> output(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > T{0};
    ctx.active[i] = on;
    output[i] = on ? input[i] : T{0};
  }
  return {std::move(output), std::move(ctx)};
}

template <typename T>
Tensor<T> relu_backward(ReluContext<T>& ctx, const Tensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), ctx.shape, "relu backward grad_out");
  ctx.consume("relu");
  Tensor<T> grad(ctx.shape);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = ctx.active[i] ? grad_out[i] : T{0};
  return grad;
}

template <typename T>
LayerResult<T, MaxPoolContext<T>> maxpool2d(const Tensor<T>& input) {
  require_rank(input.shape(), 3, "maxpool2d input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2d: 2x2/stride-2 pooling needs even height and width, got " +
                     to_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolContext<T> ctx;
  ctx.input_shape = input.shape();
  ctx.output_shape = {c, oh, ow};
  ctx.argmax.resize(c * oh * ow);
  Tensor<T> output(ctx.output_shape);

  const T* in = input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t top = (ch * h + 2 * i) * w + 2 * j;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (in[window[k]] > in[best]) best = window[k];
        }
        const std::size_t o = (ch * oh + i) * ow + j;
        output[o] = in[best];
        ctx.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return {std::move(output), std::move(ctx)};
}

template <typename T>
Tensor<T> maxpool2d_backward(MaxPoolContext<T>& ctx, const Tensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), ctx.output_shape, "maxpool2d backward grad_out");
  ctx.consume("maxpool2d");
  Tensor<T> grad(ctx.input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad[ctx.argmax[o]] += grad_out[o];
  return grad;
}

template <typename T>
LayerResult<T, LinearContext<T>> linear(const Tensor<T>& input, const Tensor<T>& weight,
                                        const Tensor<T>& bias) {
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t n_out = weight.dim(0), n_in = weight.dim(1);
  if (input.size() != n_in) {
    throw ShapeError("linear: input " + to_string(input.shape()) + " has " +
                     std::to_string(input.size()) + " features but weight " +
                     to_string(weight.shape()) + " expects " + std::to_string(n_in));
  }
  require_same_shape(bias.shape(), Shape{n_out}, "linear bias");

  LinearContext<T> ctx;
  ctx.input = input.values();
  ctx.out_features = n_out;
  ctx.weight = weight.data();

  Tensor<T> output({n_out});
  const T* wt = weight.data().data();
  const T* x = input.data().data();
  for (std::size_t o = 0; o < n_out; ++o) output[o] = bias[o] + dot(wt + o * n_in, x, n_in);
  return {std::move(output), std::move(ctx)};
}

template <typename T>
Tensor<T> linear_backward_into(LinearContext<T>& ctx, const Tensor<T>& grad_out,
                               Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
  require_same_shape(grad_out.shape(), Shape{ctx.out_features}, "linear backward grad_out");
  ctx.consume("linear");
  const std::size_t n_out = ctx.out_features, n_in = ctx.input.size();
  require_same_shape(grad_weight.shape(), Shape{n_out, n_in}, "linear grad_weight");
  require_same_shape(grad_bias.shape(), Shape{n_out}, "linear grad_bias");

  Tensor<T> grad_input({n_in});
  T* gi = grad_input.data().data();
  T* gw = grad_weight.data().data();
  const T* wt = ctx.weight.data();
  for (std::size_t o = 0; o < n_out; ++o) {
    const T g = grad_out[o];
    grad_bias[o] += g;
    if (g == T{0}) continue;
    axpy(g, ctx.input.data(), gw + o * n_in, n_in);
    axpy(g, wt + o * n_in, gi, n_in);
  }
  return grad_input;
}

template <typename T>
ParamGrads<T> linear_backward(LinearContext<T>& ctx, const Tensor<T>& grad_out) {
  ParamGrads<T> grads;
  grads.weight = Tensor<T>({ctx.out_features, ctx.input.size()});
  grads.bias = Tensor<T>({ctx.out_features});
  grads.input = linear_backward_into(ctx, grad_out, grads.weight, grads.bias);
  return grads;
}

template <typename T>
LayerResult<T, DropoutContext<T>> dropout(const Tensor<T>& input, double rate, Mode mode,
                                          Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  DropoutContext<T> ctx;
  ctx.shape = input.shape();
  if (mode == Mode::eval || rate == 0.0) return {input, std::move(ctx)};

  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  ctx.scale.resize(input.size());
  Tensor<T> output(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    ctx.scale[i] = u >= rate ? keep_scale : T{0};
    output[i] = input[i] * ctx.scale[i];
  }
  return {std::move(output), std::move(ctx)};
}

template <typename T>
Tensor<T> dropout_backward(DropoutContext<T>& ctx, const Tensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), ctx.shape, "dropout backward grad_out");
  ctx.consume("dropout");
  if (ctx.scale.empty()) return grad_out;
  Tensor<T> grad(ctx.shape);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = grad_out[i] * ctx.scale[i];
  return grad;
}

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse_loss");
  const auto n = static_cast<double>(pred.size());
  LossResult<T> result;
  result.grad = Tensor<T>(pred.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += diff * diff;
    result.grad[i] = static_cast<T>(2.0 * diff / n);
  }
  result.loss = sum / n;
  return result;
}

#define NEEDLETRACK_INSTANTIATE_LAYERS(T)                                                     \
  template LayerResult<T, Conv2dContext<T>> conv2d(const Tensor<T>&, const Tensor<T>&,       \
                                                   const Tensor<T>&, std::size_t, std::size_t); \
  template ParamGrads<T> conv2d_backward(Conv2dContext<T>&, const Tensor<T>&);               \
  template Tensor<T> conv2d_backward_into(Conv2dContext<T>&, const Tensor<T>&, Tensor<T>&,   \
                                          Tensor<T>&, bool);                                  \
  template LayerResult<T, ReluContext<T>> relu(const Tensor<T>&);                             \
  template Tensor<T> relu_backward(ReluContext<T>&, const Tensor<T>&);                        \
  template LayerResult<T, MaxPoolContext<T>> maxpool2d(const Tensor<T>&);                     \
  template Tensor<T> maxpool2d_backward(MaxPoolContext<T>&, const Tensor<T>&);                \
  template LayerResult<T, LinearContext<T>> linear(const Tensor<T>&, const Tensor<T>&,       \
                                                   const Tensor<T>&);                         \
  template ParamGrads<T> linear_backward(LinearContext<T>&, const Tensor<T>&);               \
  template Tensor<T> linear_backward_into(LinearContext<T>&, const Tensor<T>&, Tensor<T>&,   \
                                          Tensor<T>&);                                        \
  template LayerResult<T, DropoutContext<T>> dropout(const Tensor<T>&, double, Mode, Rng&);  \
  template Tensor<T> dropout_backward(DropoutContext<T>&, const Tensor<T>&);                  \
  template LossResult<T> mse_loss(const Tensor<T>&, const Tensor<T>&);

NEEDLETRACK_INSTANTIATE_LAYERS(float)
NEEDLETRACK_INSTANTIATE_LAYERS(double)

}  // namespace needletrack
