#pragma once

// Wasserstein critic loss with gradient penalty and epsilon drift penalty, and the matching
// generator loss.
//
//   L_D = E[D(fake)] - E[D(real)] + lambda * E[(||grad D(x_hat)||_2 - 1)^2] + eps * E[D(real)^2]
//   L_G = -E[D(fake)]
//
// x_hat = u * real + (1 - u) * fake with one u ~ U(0, 1) per sample. The gradient norm is taken
// jointly over all non-batch axes.

#include <functional>

#include <torch/torch.h>

#include "json.hpp"

namespace futuregan::losses {

/// Maps a (B, ...) batch to (B,) scores.
using Critic = std::function<torch::Tensor(const torch::Tensor&)>;

struct LossCoefficients {
  double lambda_gp = 10.0;
  double epsilon_drift = 0.001;

  void validate() const;
};

struct PenaltyResult {
  torch::Tensor value;       // lambda * mean((||g|| - 1)^2), differentiable w.r.t. critic parameters
  torch::Tensor grad_norms;  // (B,)
};

/// `u` is (B,) in [0, 1]; pass one drawn from the interpolation stream.
PenaltyResult gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, const torch::Tensor& u);

PenaltyResult gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, at::Generator& gen);

struct DiscriminatorLoss {
  torch::Tensor total;
  torch::Tensor wgan;              // E[D(fake)] - E[D(real)]
  torch::Tensor gradient_penalty;  // lambda-weighted
  torch::Tensor epsilon_penalty;   // eps-weighted
  double mean_real_score = 0.0;
  double mean_fake_score = 0.0;

  bool finite() const;
  /// term name -> value
  nlohmann::json diagnostics() const;
};

/// `fake` must be detached from the generator by the caller when only the critic is updated.
DiscriminatorLoss discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                     const LossCoefficients& coeff, at::Generator& gen);

DiscriminatorLoss discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                     const LossCoefficients& coeff, const torch::Tensor& u);

torch::Tensor generator_loss(const Critic& critic, const torch::Tensor& fake);

}  // namespace futuregan::losses
