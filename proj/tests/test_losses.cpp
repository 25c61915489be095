#include <gtest/gtest.h>

#include <cmath>

#include "futuregan/losses.hpp"

using namespace futuregan;
using namespace futuregan::losses;

namespace {

Critic constant(double c) {
  return [c](const torch::Tensor& x) { return (x * 0.0).flatten(1).sum(1) + c; };
}

}  // namespace

TEST(DiscriminatorLoss, ConstantCritic) {
  const auto real = torch::randn({4, 1, 3, 4, 4}), fake = torch::randn({4, 1, 3, 4, 4});
  const LossCoefficients coef;
  for (double c : {0.0, 1.0, -3.0}) {
    const auto l = discriminator_loss(constant(c), real, fake, coef, torch::rand({4}));
    EXPECT_NEAR(l.total.item<double>(), 10.0 + 0.001 * c * c, 1e-5) << c;
    EXPECT_NEAR(l.wgan.item<double>(), 0.0, 1e-6);
    EXPECT_NEAR(l.gradient_penalty.item<double>(), 10.0, 1e-6);
    EXPECT_TRUE(l.finite());
  }
}

TEST(DiscriminatorLoss, MeanCriticPenalty) {
  const auto real = torch::randn({2, 1, 2, 4, 4}), fake = torch::randn({2, 1, 2, 4, 4});
  const double n = 2 * 4 * 4;
  const Critic mean = [](const torch::Tensor& x) { return x.flatten(1).mean(1); };
  const auto p = gradient_penalty(mean, real, fake, 10.0, torch::rand({2}));
  EXPECT_NEAR(p.value.item<double>(), 10.0 * std::pow(1 / std::sqrt(n) - 1, 2), 1e-5);
  EXPECT_TRUE(torch::allclose(p.grad_norms, torch::full({2}, 1 / std::sqrt(n)), 1e-6, 1e-6));
}

TEST(DiscriminatorLoss, ComponentsAddUp) {
  torch::manual_seed(3);
  const auto w = torch::randn({1, 1, 2, 3, 3});
  const Critic quad = [w](const torch::Tensor& x) { return (x * w).flatten(1).sum(1).pow(2) * 0.1 + x.flatten(1).sum(1); };
  const auto real = torch::randn({3, 1, 2, 3, 3}), fake = torch::randn({3, 1, 2, 3, 3});
  const auto l = discriminator_loss(quad, real, fake, {10.0, 0.001}, torch::rand({3}));
  const auto dr = quad(real), df = quad(fake);
  EXPECT_NEAR(l.wgan.item<double>(), (df.mean() - dr.mean()).item<double>(), 1e-5);
  EXPECT_NEAR(l.epsilon_penalty.item<double>(), 0.001 * dr.pow(2).mean().item<double>(), 1e-6);
  EXPECT_NEAR(l.total.item<double>(),
              (l.wgan + l.gradient_penalty + l.epsilon_penalty).item<double>(), 1e-5);
  EXPECT_NEAR(l.mean_real_score, dr.mean().item<double>(), 1e-5);
  EXPECT_TRUE(l.diagnostics().contains("d_gradient_penalty"));
}

TEST(GradientPenalty, UnitLinearCriticAndZeroLambda) {
  auto w = torch::randn({1, 1, 3, 4, 4});
  w = w / w.norm();
  const Critic lin = [w](const torch::Tensor& x) { return (x * w).flatten(1).sum(1); };
  const auto real = torch::randn({5, 1, 3, 4, 4}), fake = torch::randn({5, 1, 3, 4, 4});
  EXPECT_NEAR(gradient_penalty(lin, real, fake, 10.0, torch::rand({5})).value.item<double>(), 0.0, 1e-5);
  const Critic sq = [](const torch::Tensor& x) { return x.pow(2).flatten(1).sum(1); };
  EXPECT_EQ(gradient_penalty(sq, real, fake, 0.0, torch::rand({5})).value.item<double>(), 0.0);
}

TEST(GradientPenalty, DegenerateLineUsesRealPoints) {
  torch::manual_seed(21);
  const Critic sq = [](const torch::Tensor& x) { return x.pow(2).flatten(1).sum(1); };
  const auto real = torch::randn({2, 1, 2, 2, 2});
  const auto a = gradient_penalty(sq, real, real, 10.0, torch::tensor({0.1f, 0.9f})).value.item<double>();
  const auto b = gradient_penalty(sq, real, real, 10.0, torch::tensor({0.7f, 0.2f})).value.item<double>();
  EXPECT_NEAR(a, b, 1e-5 * a);
  // grad of sum(x^2) is 2x, so the norm is 2 * ||real||.
  const auto norms = 2 * real.flatten(1).norm(2, 1);
  EXPECT_NEAR(a, 10 * (norms - 1).pow(2).mean().item<double>(), 1e-5 * a);
}

TEST(GradientPenalty, GeneratorOverloadIsReproducible) {
  const Critic sq = [](const torch::Tensor& x) { return x.pow(2).flatten(1).sum(1); };
  const auto real = torch::randn({3, 1, 2, 2, 2}), fake = torch::randn({3, 1, 2, 2, 2});
  auto g1 = at::detail::createCPUGenerator(12), g2 = at::detail::createCPUGenerator(12);
  EXPECT_EQ(gradient_penalty(sq, real, fake, 10.0, g1).value.item<double>(),
            gradient_penalty(sq, real, fake, 10.0, g2).value.item<double>());
}

TEST(GeneratorLoss, NegativeMeanScore) {
  const auto fake = torch::randn({3, 1, 2, 2, 2});
  EXPECT_NEAR(generator_loss(constant(2.5), fake).item<double>(), -2.5, 1e-6);
  EXPECT_EQ(generator_loss(constant(0.0), fake).item<double>(), 0.0);
  const Critic sum = [](const torch::Tensor& x) { return x.flatten(1).sum(1); };
  EXPECT_EQ(generator_loss(sum, fake).item<double>(), generator_loss(sum, fake.clone()).item<double>());
}

TEST(DiscriminatorLoss, NonFiniteIsReported) {
  const Critic bad = [](const torch::Tensor& x) { return x.flatten(1).sum(1) * std::numeric_limits<float>::infinity(); };
  const auto l = discriminator_loss(bad, torch::ones({2, 1, 1, 2, 2}), torch::ones({2, 1, 1, 2, 2}), {}, torch::rand({2}));
  EXPECT_FALSE(l.finite());
}
