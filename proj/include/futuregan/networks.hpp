#pragma once

// Progressively growing encoder-decoder generator and discriminator.
//
// A network at level L works on frames of resolution base * 2^L. Every level owns its own
// frame projections ("from-frame" 1x1x1 conv into feature space, "to-frame" back to pixels),
// so the previous level stays a complete network after grow(). During a transition the
// output is the convex combination
//
//     alpha * path(x, L) + (1 - alpha) * resample(path(downsample(x), L - 1))
//
// which fades the new blocks in as a residual branch and reproduces the pre-growth
// network exactly at alpha = 0.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "futuregan/layers.hpp"
#include "json.hpp"

namespace futuregan::networks {

struct NetworkSpec {
  int64_t base_resolution = 4;
  int64_t final_resolution = 64;
  int64_t base_feature_maps = 512;
  int64_t halve_from_resolution = 64;
  int64_t t_in = 6;
  int64_t t_out = 6;
  int64_t channels = 1;
  double lrelu_slope = 0.2;

  void validate() const;
  int64_t num_levels() const;
  int64_t resolution_at(int64_t level) const;
  int64_t level_of(int64_t resolution) const;
  /// base_feature_maps below halve_from_resolution, halved once per doubling beyond it, minimum 1.
  int64_t maps_at(int64_t resolution) const;

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
};

enum class PhaseKind { transition, stabilization, final };

std::string to_string(PhaseKind kind);
PhaseKind phase_kind_from_string(const std::string& s);

struct PhaseState {
  int64_t resolution = 4;
  PhaseKind kind = PhaseKind::stabilization;
  double alpha = 1.0;

  void validate() const;
  bool fading() const { return kind == PhaseKind::transition && alpha < 1.0; }
};

struct LayerInfo {
  std::string name;
  std::string kind;
  int64_t in_maps = 0;
  int64_t out_maps = 0;
  std::vector<int64_t> output_shape;  // (C, T, H, W) for batch size 1, or (features)
  int64_t parameters = 0;
};

class GeneratorImpl : public torch::nn::Module {
 public:
  GeneratorImpl(NetworkSpec spec, at::Generator init);

  /// z: (B, C, t_in, r, r) -> (B, C, t_out, r, r), linear output.
  torch::Tensor forward(const torch::Tensor& z, const PhaseState& phase);
  /// Unfaded network of `level` (<= current level) applied to z at that level's resolution.
  torch::Tensor path(const torch::Tensor& z, int64_t level);

  void grow(at::Generator init);
  int64_t level() const { return level_; }
  int64_t resolution() const { return spec_.resolution_at(level_); }
  const NetworkSpec& spec() const { return spec_; }

  /// Layers evaluated by path(level()), in order.
  std::vector<LayerInfo> layers() const;
  /// Names of parameters on the forward path of `phase` (both branches while fading).
  std::vector<std::string> active_parameter_names(const PhaseState& phase) const;

 private:
  torch::Tensor act(const torch::Tensor& x) const;
  void add_level(int64_t level, at::Generator& init);

  NetworkSpec spec_;
  int64_t level_ = 0;
  std::vector<layers::ScaledConv3d> from_frame_;
  std::vector<layers::ScaledConv3d> enc_conv_;
  std::vector<layers::ScaledConv3d> enc_down_;
  layers::ScaledConv3d base_enc1_{nullptr};
  layers::ScaledConv3d base_enc2_{nullptr};
  layers::ScaledConv3d temporal_down_{nullptr};
  layers::ScaledConv3d temporal_up_{nullptr};
  layers::ScaledConv3d base_dec1_{nullptr};
  layers::ScaledConv3d base_dec2_{nullptr};
  std::vector<layers::ScaledConv3d> dec_up_;
  std::vector<layers::ScaledConv3d> dec_conv_;
  std::vector<layers::ScaledConv3d> to_frame_;
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(NetworkSpec spec, at::Generator init);

  /// x: (B, C, t_in + t_out, r, r) -> (B,) unbounded scores.
  torch::Tensor forward(const torch::Tensor& x, const PhaseState& phase);
  torch::Tensor path(const torch::Tensor& x, int64_t level);

  void grow(at::Generator init);
  int64_t level() const { return level_; }
  int64_t resolution() const { return spec_.resolution_at(level_); }
  const NetworkSpec& spec() const { return spec_; }

  std::vector<LayerInfo> layers() const;
  std::vector<std::string> active_parameter_names(const PhaseState& phase) const;

  /// Called with the minibatch standard deviation scalar on every evaluation.
  std::function<void(const torch::Tensor&)> stddev_hook;

 private:
  void add_level(int64_t level, at::Generator& init);

  NetworkSpec spec_;
  int64_t level_ = 0;
  std::vector<layers::ScaledConv3d> from_frame_;
  std::vector<layers::ScaledConv3d> conv_;
  std::vector<layers::ScaledConv3d> down_;
  layers::ScaledConv3d base_conv1_{nullptr};
  layers::ScaledConv3d base_conv2_{nullptr};
  layers::ScaledLinear fc_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Layer listing, shapes and parameter counts of both networks at their current level.
nlohmann::json architecture_summary(const GeneratorImpl& g, const DiscriminatorImpl& d);

}  // namespace futuregan::networks
