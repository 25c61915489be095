#pragma once

// Differentiable building blocks shared by the generator and the discriminator.
//
// All convolutions keep unit-variance raw weights and multiply them by the He constant
// sqrt(2 / fan_in) on every forward pass, so the optimizer sees an equalized dynamic range.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <torch/torch.h>

namespace futuregan::layers {

struct Extent3 {
  int64_t t = 1;
  int64_t h = 1;
  int64_t w = 1;

  int64_t volume() const { return t * h * w; }
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

enum class ConvRole {
  block,          // (3,3,3) stride 1, padding 1
  projection,     // 1x1x1 to/from frame space
  spatial_down,   // (1,4,4) stride (1,2,2) padding (0,1,1)
  spatial_up,     // transposed variant of spatial_down
  temporal_down,  // (t_in,1,1): T t_in -> 1
  temporal_up,    // transposed (t_out,1,1): T 1 -> t_out
  generic,
};

std::string to_string(ConvRole role);

struct ConvSpec {
  int64_t in_maps = 1;
  int64_t out_maps = 1;
  Extent3 kernel;
  Extent3 stride;
  Extent3 padding{0, 0, 0};
  bool transposed = false;
  ConvRole role = ConvRole::generic;

  void validate() const;
  /// in_maps * kernel volume, for plain and transposed convolutions alike.
  int64_t fan_in() const { return in_maps * kernel.volume(); }
  /// Exact output extent; throws DimensionError naming the first axis that does not fit.
  Extent3 output_extent(Extent3 in) const;

  static ConvSpec within_block(int64_t in, int64_t out);
  static ConvSpec projection(int64_t in, int64_t out);
  static ConvSpec spatial_down(int64_t in, int64_t out);
  static ConvSpec spatial_up(int64_t in, int64_t out);
  static ConvSpec temporal_down(int64_t in, int64_t out, int64_t t_in);
  static ConvSpec temporal_up(int64_t in, int64_t out, int64_t t_out);
};

inline double he_constant(int64_t fan_in) { return std::sqrt(2.0 / static_cast<double>(fan_in)); }

/// 3D (optionally transposed) convolution with runtime He weight scaling and a zero-initialized
/// bias that is not scaled.
class ScaledConv3dImpl : public torch::nn::Module {
 public:
  explicit ScaledConv3dImpl(ConvSpec spec, std::optional<at::Generator> gen = std::nullopt);

  torch::Tensor forward(const torch::Tensor& x) const;
  torch::Tensor effective_weight() const { return weight * scale_; }

  const ConvSpec& spec() const { return spec_; }
  double scale() const { return scale_; }

  torch::Tensor weight;  // raw, N(0, 1)
  torch::Tensor bias;

 private:
  void check_input(const torch::Tensor& x) const;

  ConvSpec spec_;
  double scale_;
};
TORCH_MODULE(ScaledConv3d);

/// Fully connected layer with the same runtime He scaling.
class ScaledLinearImpl : public torch::nn::Module {
 public:
  ScaledLinearImpl(int64_t in_features, int64_t out_features, std::optional<at::Generator> gen = std::nullopt);

  torch::Tensor forward(const torch::Tensor& x) const;

  int64_t in_features() const { return in_; }
  int64_t out_features() const { return out_; }
  double scale() const { return scale_; }

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  int64_t in_;
  int64_t out_;
  double scale_;
};
TORCH_MODULE(ScaledLinear);

inline constexpr double kPixelNormEpsilon = 1e-8;

/// Normalizes the channel vector at every (time, height, width) site to unit mean square:
/// b = a / sqrt(mean_c(a^2) + eps).
torch::Tensor pixelwise_feature_norm(const torch::Tensor& a, double eps = kPixelNormEpsilon);

/// Mean over all (feature, t, h, w) sites of the population standard deviation across the batch.
/// Returns a 0-dim tensor. The square root has a zero (not NaN) gradient where the variance is 0.
torch::Tensor minibatch_stddev_value(const torch::Tensor& features);

/// Appends minibatch_stddev_value as one constant feature map: (B, F, T, H, W) -> (B, F+1, T, H, W).
torch::Tensor minibatch_stddev(const torch::Tensor& features);

inline torch::Tensor leaky_relu(const torch::Tensor& x, double slope) { return torch::leaky_relu(x, slope); }

}  // namespace futuregan::layers
