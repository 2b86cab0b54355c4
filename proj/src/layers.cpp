#include "simrod/layers.hpp"

#include <cmath>

#include <fmt/format.h>

#include "simrod/errors.hpp"

namespace simrod::nn {

namespace {

constexpr std::ptrdiff_t kPad = 1;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shape {} does not match {}", what, shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Forward<T, Conv2dCache<T>> conv2d_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                                          const BasicParam<T>& bias) {
  require_4d(input, "conv2d");
  const auto& ws = weight.value.shape();
  if (ws.size() != 4 || ws[2] != kKernel || ws[3] != kKernel) {
    throw ShapeError(fmt::format("conv2d weight must be [Cout,Cin,3,3], got {}", shape_string(ws)));
  }
  const std::size_t n_batch = input.dim(0), c_in = input.dim(1), height = input.dim(2),
                    width = input.dim(3), c_out = ws[0];
  if (ws[1] != c_in) {
    throw ShapeError(fmt::format("conv2d: input has {} channels, weight expects {}", c_in, ws[1]));
  }
  if (bias.value.numel() != c_out) {
    throw ShapeError(fmt::format("conv2d: bias has {} entries, expected {}", bias.value.numel(), c_out));
  }

  BasicTensor<T> out({n_batch, c_out, height, width});
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < c_out; ++co) {
      T* dst = &out.at(n, co, 0, 0);
      const T b = bias.value[co];
      for (std::size_t i = 0; i < height * width; ++i) dst[i] = b;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* src = &input.at(n, ci, 0, 0);
        for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
          for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
            const T k = weight.value.at(co, ci, ky, kx);
            for (std::ptrdiff_t y = 0; y < H; ++y) {
              const std::ptrdiff_t sy = y + ky - kPad;
              if (sy < 0 || sy >= H) continue;
              const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, kPad - kx);
              const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W + kPad - kx);
              const std::ptrdiff_t off = sy * W + kx - kPad;
              T* drow = dst + y * W;
              for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += k * src[off + x];
            }
          }
        }
      }
    }
  }
  return {std::move(out), Conv2dCache<T>{input}};
}

template <typename T>
BasicTensor<T> conv2d_backward(const Conv2dCache<T>& cache, const BasicTensor<T>& grad_out,
                               BasicParam<T>& weight, BasicParam<T>& bias) {
  const auto& input = cache.input;
  const std::size_t n_batch = input.dim(0), c_in = input.dim(1), height = input.dim(2),
                    width = input.dim(3), c_out = weight.value.dim(0);
  if (grad_out.shape() != Shape{n_batch, c_out, height, width}) {
    throw ShapeError("conv2d_backward: gradient shape does not match forward output");
  }
  BasicTensor<T> grad_in(input.shape());
  const auto H = static_cast<std::ptrdiff_t>(height);
  const auto W = static_cast<std::ptrdiff_t>(width);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t co = 0; co < c_out; ++co) {
      const T* g = &grad_out.at(n, co, 0, 0);
      T bsum = 0;
      for (std::size_t i = 0; i < height * width; ++i) bsum += g[i];
      bias.grad[co] += bsum;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* src = &input.at(n, ci, 0, 0);
        T* gsrc = &grad_in.at(n, ci, 0, 0);
        for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
          for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
            const T k = weight.value.at(co, ci, ky, kx);
            T wsum = 0;
            for (std::ptrdiff_t y = 0; y < H; ++y) {
              const std::ptrdiff_t sy = y + ky - kPad;
              if (sy < 0 || sy >= H) continue;
              const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, kPad - kx);
              const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(W, W + kPad - kx);
              const std::ptrdiff_t off = sy * W + kx - kPad;
              const T* gy = g + y * W;
              for (std::ptrdiff_t x = x0; x < x1; ++x) {
                wsum += gy[x] * src[off + x];
                gsrc[off + x] += gy[x] * k;
              }
            }
            weight.grad.at(co, ci, ky, kx) += wsum;
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : scale(BasicTensor<T>({channels}, T{1})),
      shift(Shape{channels}),
      running_mean(Shape{channels}),
      running_var(Shape{channels}, T{1}) {}

template <typename T>
Forward<T, BatchNormCache<T>> batchnorm2d_forward(const BasicTensor<T>& input, BatchNorm<T>& bn,
                                                  NormMode mode, bool update_running) {
  require_4d(input, "batchnorm2d");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1),
                    plane = input.dim(2) * input.dim(3);
  if (channels != bn.channels()) {
    throw ShapeError(fmt::format("batchnorm2d: input has {} channels, layer has {}", channels,
                                 bn.channels()));
  }
  const std::size_t count = n_batch * plane;
  if (mode == NormMode::train && count < 2) {
    throw ShapeError("batchnorm2d: train mode needs at least two values per channel (degenerate batch)");
  }

  BatchNormCache<T> cache{mode, BasicTensor<T>(input.shape()), std::vector<T>(channels)};
  BasicTensor<T> out(input.shape());
  const T eps = static_cast<T>(kBatchNormEps);
  const T momentum = static_cast<T>(kBatchNormMomentum);
  for (std::size_t c = 0; c < channels; ++c) {
    T mean, var;
    if (mode == NormMode::train) {
      T sum = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* src = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      }
      mean = sum / static_cast<T>(count);
      T sq = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const T* src = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = src[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<T>(count);
      if (update_running) {
        const T unbiased = sq / static_cast<T>(count - 1);
        bn.running_mean[c] = (1 - momentum) * bn.running_mean[c] + momentum * mean;
        bn.running_var[c] = (1 - momentum) * bn.running_var[c] + momentum * unbiased;
      }
    } else {
      mean = bn.running_mean[c];
      var = bn.running_var[c];
    }
    const T inv = T{1} / std::sqrt(var + eps);
    cache.inv_std[c] = inv;
    const T gamma = bn.scale.value[c], beta = bn.shift.value[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const T* src = &input.at(n, c, 0, 0);
      T* xh = &cache.normalized.at(n, c, 0, 0);
      T* dst = &out.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - mean) * inv;
        dst[i] = gamma * xh[i] + beta;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
BasicTensor<T> batchnorm2d_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out,
                                    BatchNorm<T>& bn) {
  require_same_shape(grad_out, cache.normalized, "batchnorm2d_backward");
  const std::size_t n_batch = grad_out.dim(0), channels = grad_out.dim(1),
                    plane = grad_out.dim(2) * grad_out.dim(3);
  const auto count = static_cast<T>(n_batch * plane);
  BasicTensor<T> grad_in(grad_out.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    T sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const T* g = &grad_out.at(n, c, 0, 0);
      const T* xh = &cache.normalized.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    bn.shift.grad[c] += sum_g;
    bn.scale.grad[c] += sum_gx;
    const T gamma = bn.scale.value[c];
    const T inv = cache.inv_std[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const T* g = &grad_out.at(n, c, 0, 0);
      const T* xh = &cache.normalized.at(n, c, 0, 0);
      T* dst = &grad_in.at(n, c, 0, 0);
      if (cache.mode == NormMode::train) {
        const T k = gamma * inv / count;
        for (std::size_t i = 0; i < plane; ++i) {
          dst[i] = k * (count * g[i] - sum_g - xh[i] * sum_gx);
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) dst[i] = g[i] * gamma * inv;
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

template <typename T>
Forward<T, LeakyReluCache<T>> leaky_relu_forward(const BasicTensor<T>& input, T slope) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const T x = input[i];
    out[i] = x >= 0 ? x : slope * x;
  }
  return {std::move(out), LeakyReluCache<T>{input, slope}};
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const LeakyReluCache<T>& cache, const BasicTensor<T>& grad_out) {
  require_same_shape(grad_out, cache.input, "leaky_relu_backward");
  BasicTensor<T> grad_in(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.numel(); ++i) {
    grad_in[i] = cache.input[i] >= 0 ? grad_out[i] : cache.slope * grad_out[i];
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_4d(a, "concat_channels");
  require_4d(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError(fmt::format("concat_channels: {} and {} differ outside the channel axis",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  const std::size_t n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1),
                    plane = a.dim(2) * a.dim(3);
  BasicTensor<T> out({n_batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(a.data().begin() + n * ca * plane, ca * plane,
                out.data().begin() + n * (ca + cb) * plane);
    std::copy_n(b.data().begin() + n * cb * plane, cb * plane,
                out.data().begin() + (n * (ca + cb) + ca) * plane);
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(const BasicTensor<T>& grad,
                                                                   std::size_t channels_a) {
  require_4d(grad, "concat_channels_backward");
  const std::size_t n_batch = grad.dim(0), total = grad.dim(1), plane = grad.dim(2) * grad.dim(3);
  if (channels_a > total) throw ShapeError("concat_channels_backward: split point out of range");
  const std::size_t channels_b = total - channels_a;
  BasicTensor<T> ga({n_batch, channels_a, grad.dim(2), grad.dim(3)});
  BasicTensor<T> gb({n_batch, channels_b, grad.dim(2), grad.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(grad.data().begin() + n * total * plane, channels_a * plane,
                ga.data().begin() + n * channels_a * plane);
    std::copy_n(grad.data().begin() + (n * total + channels_a) * plane, channels_b * plane,
                gb.data().begin() + n * channels_b * plane);
  }
  return {std::move(ga), std::move(gb)};
}

template <typename T>
BasicTensor<T> select_channels(const BasicTensor<T>& input, const std::vector<std::size_t>& channels) {
  require_4d(input, "select_channels");
  const std::size_t n_batch = input.dim(0), plane = input.dim(2) * input.dim(3);
  BasicTensor<T> out({n_batch, channels.size(), input.dim(2), input.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t k = 0; k < channels.size(); ++k) {
      if (channels[k] >= input.dim(1)) throw ShapeError("select_channels: channel out of range");
      std::copy_n(&input.at(n, channels[k], 0, 0), plane, &out.at(n, k, 0, 0));
    }
  }
  return out;
}

template <typename T>
void scatter_add_channels(const BasicTensor<T>& grad_selected,
                          const std::vector<std::size_t>& channels, BasicTensor<T>& grad_full) {
  const std::size_t n_batch = grad_full.dim(0), plane = grad_full.dim(2) * grad_full.dim(3);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const T* src = &grad_selected.at(n, k, 0, 0);
      T* dst = &grad_full.at(n, channels[k], 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  require_same_shape(dst, src, "add");
  for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input) {
  require_4d(input, "global_avg_pool");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1),
                    plane = input.dim(2) * input.dim(3);
  BasicTensor<T> out({n_batch, channels});
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = &input.at(n, c, 0, 0);
      T sum = 0;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      out[n * channels + c] = sum / static_cast<T>(plane);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape) {
  BasicTensor<T> grad_in(input_shape);
  const std::size_t n_batch = input_shape[0], channels = input_shape[1],
                    plane = input_shape[2] * input_shape[3];
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T g = grad_out[n * channels + c] / static_cast<T>(plane);
      T* dst = &grad_in.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
    }
  }
  return grad_in;
}

template <typename T>
Forward<T, LinearCache<T>> linear_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                                          const BasicParam<T>& bias) {
  if (input.rank() != 2 || weight.value.rank() != 2 || weight.value.dim(1) != input.dim(1) ||
      bias.numel() != weight.value.dim(0)) {
    throw ShapeError(fmt::format("linear: incompatible input {} and weight {}",
                                 shape_string(input.shape()), shape_string(weight.value.shape())));
  }
  const std::size_t n_batch = input.dim(0), in = input.dim(1), out_dim = weight.value.dim(0);
  BasicTensor<T> out({n_batch, out_dim});
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      T acc = bias.value[o];
      for (std::size_t i = 0; i < in; ++i) acc += weight.value[o * in + i] * input[n * in + i];
      out[n * out_dim + o] = acc;
    }
  }
  return {std::move(out), LinearCache<T>{input}};
}

template <typename T>
BasicTensor<T> linear_backward(const LinearCache<T>& cache, const BasicTensor<T>& grad_out,
                               BasicParam<T>& weight, BasicParam<T>& bias) {
  const auto& input = cache.input;
  const std::size_t n_batch = input.dim(0), in = input.dim(1), out_dim = weight.value.dim(0);
  BasicTensor<T> grad_in(input.shape());
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T g = grad_out[n * out_dim + o];
      bias.grad[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        weight.grad[o * in + i] += g * input[n * in + i];
        grad_in[n * in + i] += g * weight.value[o * in + i];
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------------------

template <typename T>
ConvBlock<T>::ConvBlock(std::size_t in_channels, std::size_t out_channels)
    : weight(Shape{out_channels, in_channels, kKernel, kKernel}),
      bias(Shape{out_channels}),
      bn(out_channels) {}

template <typename T>
Forward<T, ConvBlockCache<T>> conv_block_forward(const BasicTensor<T>& input, ConvBlock<T>& block,
                                                 NormMode mode, bool update_running) {
  // In train mode the bias cancels against the batch mean, so normalize the
  // bias-free response and only let the bias reach the running mean.
  const bool fold = mode == NormMode::train;
  BasicParam<T> no_bias(BasicTensor<T>(block.bias.value.shape()));
  auto conv = conv2d_forward(input, block.weight, fold ? no_bias : block.bias);
  auto norm = batchnorm2d_forward(conv.output, block.bn, mode, update_running);
  if (fold && update_running) {
    const T momentum = static_cast<T>(kBatchNormMomentum);
    for (std::size_t c = 0; c < block.bn.channels(); ++c) block.bn.running_mean[c] += momentum * block.bias.value[c];
  }
  auto act = leaky_relu_forward(norm.output);
  return {std::move(act.output),
          ConvBlockCache<T>{std::move(conv.cache), std::move(norm.cache), std::move(act.cache)}};
}

template <typename T>
BasicTensor<T> conv_block_backward(const ConvBlockCache<T>& cache, const BasicTensor<T>& grad_out,
                                   ConvBlock<T>& block) {
  auto g = leaky_relu_backward(cache.act, grad_out);
  g = batchnorm2d_backward(cache.bn, g, block.bn);
  return conv2d_backward(cache.conv, g, block.weight, block.bias);
}

#define SIMROD_INSTANTIATE_LAYERS(T)                                                              \
  template Forward<T, Conv2dCache<T>> conv2d_forward(const BasicTensor<T>&, const BasicParam<T>&, \
                                                     const BasicParam<T>&);                       \
  template BasicTensor<T> conv2d_backward(const Conv2dCache<T>&, const BasicTensor<T>&,           \
                                          BasicParam<T>&, BasicParam<T>&);                        \
  template struct BatchNorm<T>;                                                                   \
  template Forward<T, BatchNormCache<T>> batchnorm2d_forward(const BasicTensor<T>&,               \
                                                             BatchNorm<T>&, NormMode, bool);      \
  template BasicTensor<T> batchnorm2d_backward(const BatchNormCache<T>&, const BasicTensor<T>&,   \
                                               BatchNorm<T>&);                                    \
  template Forward<T, LeakyReluCache<T>> leaky_relu_forward(const BasicTensor<T>&, T);            \
  template BasicTensor<T> leaky_relu_backward(const LeakyReluCache<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(                    \
      const BasicTensor<T>&, std::size_t);                                                        \
  template BasicTensor<T> select_channels(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template void scatter_add_channels(const BasicTensor<T>&, const std::vector<std::size_t>&,      \
                                     BasicTensor<T>&);                                            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                              \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                 \
  template BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>&, const Shape&);          \
  template Forward<T, LinearCache<T>> linear_forward(const BasicTensor<T>&, const BasicParam<T>&, \
                                                     const BasicParam<T>&);                       \
  template BasicTensor<T> linear_backward(const LinearCache<T>&, const BasicTensor<T>&,           \
                                          BasicParam<T>&, BasicParam<T>&);                        \
  template struct ConvBlock<T>;                                                                   \
  template Forward<T, ConvBlockCache<T>> conv_block_forward(const BasicTensor<T>&, ConvBlock<T>&, \
                                                            NormMode, bool);                      \
  template BasicTensor<T> conv_block_backward(const ConvBlockCache<T>&, const BasicTensor<T>&,    \
                                              ConvBlock<T>&);

SIMROD_INSTANTIATE_LAYERS(float)
SIMROD_INSTANTIATE_LAYERS(double)

#undef SIMROD_INSTANTIATE_LAYERS

}  // namespace simrod::nn
