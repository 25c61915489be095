#include "futuregan/optimizer.hpp"

#include <cmath>
#include <unordered_set>

namespace futuregan::trainer {

int64_t Adam::track(torch::nn::Module& module) {
  std::unordered_set<std::string> known;
  for (const auto& s : slots_) known.insert(s.name);
  int64_t added = 0;
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    if (known.count(item.key()) != 0) continue;
    const auto& p = item.value();
    slots_.push_back({item.key(), p, torch::zeros_like(p), torch::zeros_like(p), 0});
    ++added;
  }
  return added;
}

void Adam::step(double lr) {
  torch::NoGradGuard no_grad;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  for (auto& s : slots_) {
    const auto& grad = s.param.grad();
    if (!grad.defined()) continue;
    ++s.steps;
    s.exp_avg.mul_(b1).add_(grad, 1.0 - b1);
    s.exp_avg_sq.mul_(b2).addcmul_(grad, grad, 1.0 - b2);
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.steps));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.steps));
    const auto denom = (s.exp_avg_sq.sqrt() / std::sqrt(bc2)).add_(settings_.epsilon);
    s.param.addcdiv_(s.exp_avg, denom, -lr / bc1);
  }
}

void Adam::zero_grad() {
  for (auto& s : slots_) {
    auto& g = s.param.mutable_grad();
    if (g.defined()) g = torch::Tensor();
  }
}

}  // namespace futuregan::trainer
