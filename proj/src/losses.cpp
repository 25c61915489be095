#include "futuregan/losses.hpp"

#include <cmath>

#include "futuregan/error.hpp"

namespace futuregan::losses {

namespace {

void check_pair(const torch::Tensor& real, const torch::Tensor& fake) {
  if (real.sizes() != fake.sizes()) throw DimensionError("real and fake batches must have identical shapes");
  if (real.dim() < 1 || real.size(0) < 1) throw DimensionError("batch axis: need at least one sample");
}

torch::Tensor scores_of(const Critic& critic, const torch::Tensor& x) {
  auto s = critic(x);
  if (s.dim() != 1 || s.size(0) != x.size(0)) throw DimensionError("critic must return one score per sample");
  return s;
}

}  // namespace

void LossCoefficients::validate() const {
  if (!(lambda_gp >= 0.0) || !(epsilon_drift >= 0.0)) throw ValidationError("loss coefficients must be >= 0");
}

PenaltyResult gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, const torch::Tensor& u) {
  check_pair(real, fake);
  if (u.dim() != 1 || u.size(0) != real.size(0)) throw DimensionError("interpolation weights must be (batch,)");
  std::vector<int64_t> bshape(static_cast<size_t>(real.dim()), 1);
  bshape[0] = real.size(0);
  const auto w = u.to(real.scalar_type()).view(bshape);
  auto x_hat = (real.detach() * w + fake.detach() * (1.0 - w)).requires_grad_(true);
  const auto scores = scores_of(critic, x_hat);

  torch::Tensor grad;
  if (scores.requires_grad()) {
    auto grads = torch::autograd::grad({scores.sum()}, {x_hat}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                       /*create_graph=*/true, /*allow_unused=*/true);
    grad = grads[0];
  }
  if (!grad.defined()) grad = torch::zeros_like(x_hat);  // critic does not depend on its input
  const auto norms = grad.flatten(1).norm(2, 1);
  return {(norms - 1.0).pow(2).mean() * lambda_gp, norms};
}

PenaltyResult gradient_penalty(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               double lambda_gp, at::Generator& gen) {
  check_pair(real, fake);
  return gradient_penalty(critic, real, fake, lambda_gp, torch::rand({real.size(0)}, gen, torch::kFloat32));
}

bool DiscriminatorLoss::finite() const {
  return std::isfinite(total.item<double>()) && std::isfinite(wgan.item<double>()) &&
         std::isfinite(gradient_penalty.item<double>()) && std::isfinite(epsilon_penalty.item<double>());
}

nlohmann::json DiscriminatorLoss::diagnostics() const {
  return {{"d_total", total.item<double>()},
          {"d_wgan", wgan.item<double>()},
          {"d_gradient_penalty", gradient_penalty.item<double>()},
          {"d_epsilon_penalty", epsilon_penalty.item<double>()},
          {"d_real_score", mean_real_score},
          {"d_fake_score", mean_fake_score}};
}

DiscriminatorLoss discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                     const LossCoefficients& coeff, const torch::Tensor& u) {
  coeff.validate();
  check_pair(real, fake);
  const auto real_scores = scores_of(critic, real);
  const auto fake_scores = scores_of(critic, fake);
  DiscriminatorLoss out;
  out.wgan = fake_scores.mean() - real_scores.mean();
  out.gradient_penalty = gradient_penalty(critic, real, fake, coeff.lambda_gp, u).value;
  out.epsilon_penalty = real_scores.pow(2).mean() * coeff.epsilon_drift;
  out.total = out.wgan + out.gradient_penalty + out.epsilon_penalty;
  out.mean_real_score = real_scores.mean().item<double>();
  out.mean_fake_score = fake_scores.mean().item<double>();
  return out;
}

DiscriminatorLoss discriminator_loss(const Critic& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                     const LossCoefficients& coeff, at::Generator& gen) {
  check_pair(real, fake);
  return discriminator_loss(critic, real, fake, coeff, torch::rand({real.size(0)}, gen, torch::kFloat32));
}

torch::Tensor generator_loss(const Critic& critic, const torch::Tensor& fake) {
  return -scores_of(critic, fake).mean();
}

}  // namespace futuregan::losses
