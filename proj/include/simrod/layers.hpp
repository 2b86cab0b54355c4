#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "simrod/tensor.hpp"

namespace simrod::nn {

/// Output of a forward pass together with what its backward pass needs.
template <typename T, typename Cache>
struct Forward {
  BasicTensor<T> output;
  Cache cache;
};

// ---------------------------------------------------------------------------
// conv2d: 3x3 kernel, stride 1, zero padding 1 (spatial size preserved).

inline constexpr std::size_t kKernel = 3;

template <typename T>
struct Conv2dCache {
  BasicTensor<T> input;
};

/// weight: [Cout, Cin, 3, 3], bias: [Cout]. Plain cross-correlation.
template <typename T>
Forward<T, Conv2dCache<T>> conv2d_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                                          const BasicParam<T>& bias);

/// Accumulates into weight.grad and bias.grad; returns the input gradient.
template <typename T>
BasicTensor<T> conv2d_backward(const Conv2dCache<T>& cache, const BasicTensor<T>& grad_out,
                               BasicParam<T>& weight, BasicParam<T>& bias);

// ---------------------------------------------------------------------------
// batchnorm2d

enum class NormMode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
struct BatchNorm {
  BasicParam<T> scale;
  BasicParam<T> shift;
  // Not learnable; excluded from parameter counts.
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);
  std::size_t channels() const noexcept { return scale.numel(); }

  template <typename U>
  BatchNorm<U> cast() const {
    BatchNorm<U> out;
    out.scale = scale.template cast<U>();
    out.shift = shift.template cast<U>();
    out.running_mean = running_mean.template cast<U>();
    out.running_var = running_var.template cast<U>();
    return out;
  }
};

template <typename T>
struct BatchNormCache {
  NormMode mode = NormMode::train;
  BasicTensor<T> normalized;  // x_hat, same shape as the input
  std::vector<T> inv_std;     // per channel
};

/// Train mode normalizes with biased batch statistics and, when
/// update_running is set, folds them into the running estimates (the running
/// variance uses the unbiased estimate). Eval mode uses the running estimates.
template <typename T>
Forward<T, BatchNormCache<T>> batchnorm2d_forward(const BasicTensor<T>& input, BatchNorm<T>& bn,
                                                  NormMode mode, bool update_running = true);

template <typename T>
BasicTensor<T> batchnorm2d_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& grad_out,
                                    BatchNorm<T>& bn);

// ---------------------------------------------------------------------------
// leaky_relu

inline constexpr double kLeakySlope = 0.1;

template <typename T>
struct LeakyReluCache {
  BasicTensor<T> input;
  T slope;
};

template <typename T>
Forward<T, LeakyReluCache<T>> leaky_relu_forward(const BasicTensor<T>& input,
                                                 T slope = static_cast<T>(kLeakySlope));

/// Subgradient at 0 is 1.
template <typename T>
BasicTensor<T> leaky_relu_backward(const LeakyReluCache<T>& cache, const BasicTensor<T>& grad_out);

// ---------------------------------------------------------------------------
// channel concat / elementwise add

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Splits a concat gradient into the parts for (a, b); a had `channels_a` channels.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> concat_channels_backward(const BasicTensor<T>& grad,
                                                                   std::size_t channels_a);

/// Selects the listed channels, in order.
template <typename T>
BasicTensor<T> select_channels(const BasicTensor<T>& input, const std::vector<std::size_t>& channels);

/// Adds a gradient over selected channels back into a full-width gradient.
template <typename T>
void scatter_add_channels(const BasicTensor<T>& grad_selected,
                          const std::vector<std::size_t>& channels, BasicTensor<T>& grad_full);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src);

// ---------------------------------------------------------------------------
// global average pool + linear (surrogate head)

/// [N, C, H, W] -> [N, C]
template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const BasicTensor<T>& grad_out, const Shape& input_shape);

template <typename T>
struct LinearCache {
  BasicTensor<T> input;
};

/// input [N, In], weight [Out, In], bias [Out] -> [N, Out]
template <typename T>
Forward<T, LinearCache<T>> linear_forward(const BasicTensor<T>& input, const BasicParam<T>& weight,
                                          const BasicParam<T>& bias);

template <typename T>
BasicTensor<T> linear_backward(const LinearCache<T>& cache, const BasicTensor<T>& grad_out,
                               BasicParam<T>& weight, BasicParam<T>& bias);

// ---------------------------------------------------------------------------
// conv -> batchnorm -> leaky block

template <typename T>
struct ConvBlock {
  BasicParam<T> weight;
  BasicParam<T> bias;
  BatchNorm<T> bn;

  ConvBlock() = default;
  ConvBlock(std::size_t in_channels, std::size_t out_channels);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }
  std::size_t param_count() const {
    return weight.numel() + bias.numel() + bn.scale.numel() + bn.shift.numel();
  }

  template <typename U>
  ConvBlock<U> cast() const {
    ConvBlock<U> out;
    out.weight = weight.template cast<U>();
    out.bias = bias.template cast<U>();
    out.bn = bn.template cast<U>();
    return out;
  }
};

template <typename T>
struct ConvBlockCache {
  Conv2dCache<T> conv;
  BatchNormCache<T> bn;
  LeakyReluCache<T> act;
};

template <typename T>
Forward<T, ConvBlockCache<T>> conv_block_forward(const BasicTensor<T>& input, ConvBlock<T>& block,
                                                 NormMode mode, bool update_running = true);

template <typename T>
BasicTensor<T> conv_block_backward(const ConvBlockCache<T>& cache, const BasicTensor<T>& grad_out,
                                   ConvBlock<T>& block);

}  // namespace simrod::nn
