#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace futuregan::trainer {

struct AdamSettings {
  double beta1 = 0.0;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

/// Adam over the named parameters of one module. Parameters can be added after growth; each
/// keeps its own bias-correction step count so new layers start with fresh moments while the
/// moments of existing layers are preserved.
class Adam {
 public:
  struct Slot {
    std::string name;
    torch::Tensor param;
    torch::Tensor exp_avg;
    torch::Tensor exp_avg_sq;
    int64_t steps = 0;
  };

  explicit Adam(AdamSettings settings = {}) : settings_(settings) {}

  /// Starts tracking every parameter of `module` not tracked yet. Returns how many were added.
  int64_t track(torch::nn::Module& module);

  /// Parameters whose gradient is undefined are left untouched (they are off the active path).
  void step(double lr);
  void zero_grad();

  const AdamSettings& settings() const { return settings_; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  AdamSettings settings_;
  std::vector<Slot> slots_;
};

}  // namespace futuregan::trainer
