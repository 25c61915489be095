#pragma once

// Progressive training: growth schedule, learning-rate policy, alternating critic/generator
// updates, and the run loop with checkpointing and resume.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "futuregan/config.hpp"
#include "futuregan/losses.hpp"
#include "futuregan/networks.hpp"
#include "futuregan/optimizer.hpp"
#include "futuregan/videodata.hpp"
#include "json.hpp"

namespace futuregan::trainer {

using networks::PhaseKind;

struct ScheduleOverrides {
  int64_t epochs_transition = 10;
  int64_t epochs_stabilization = 10;
  int64_t epochs_final_extra = 20;
};

struct PhasePlan {
  int64_t level = 0;
  int64_t resolution = 4;
  PhaseKind kind = PhaseKind::stabilization;
  int64_t epochs = 0;
  bool fades = false;  // false for the base level's transition epochs: there is no old path
};

struct GrowthSchedule {
  std::vector<int64_t> levels;  // resolutions, base first
  int64_t epochs_transition = 10;
  int64_t epochs_stabilization = 10;
  int64_t epochs_final_extra = 20;

  /// levels * (transition + stabilization) + final extra
  int64_t total_epochs() const;
  /// transition, stabilization per level, then one final phase at the last level.
  std::vector<PhasePlan> phases() const;
};

GrowthSchedule build_schedule(int64_t final_resolution, const ScheduleOverrides& overrides = {},
                              int64_t base_resolution = 4);

struct OptimizerConfig {
  double learning_rate_base = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double adam_epsilon = 1e-8;
  double lr_decay_per_level = 0.87;
  int64_t batch_size_base = 16;                     // halved per level when no explicit entry exists
  std::map<int64_t, int64_t> batch_size_per_level;  // resolution -> batch size

  void validate() const;
  int64_t batch_size_for(int64_t level, int64_t resolution) const;
};

/// learning_rate_base * lr_decay_per_level^level
double lr_for_level(const OptimizerConfig& config, int64_t level_index);

/// iteration / iterations_in_transition clamped to [0, 1]; 1 when the transition is empty.
double alpha_at(int64_t iteration, int64_t iterations_in_transition);

struct TrainConfig {
  networks::NetworkSpec network;
  ScheduleOverrides schedule;
  OptimizerConfig optimizer;
  losses::LossCoefficients loss;
  uint64_t seed = 0;
  int64_t checkpoint_every = 1000;  // iterations; phase boundaries always checkpoint
  int64_t window_stride = 0;        // 0 = non-overlapping

  void validate() const;
  GrowthSchedule growth_schedule() const;

  /// Every training-relevant field as flat keys; also the checkpoint snapshot.
  config::KeyValueConfig to_kv() const;
  static TrainConfig from_kv(const config::KeyValueConfig& kv);
  nlohmann::json to_json() const;
  uint64_t hash() const;

  /// Documented keys with one-line descriptions, for --help and config validation.
  static const std::vector<std::pair<std::string, std::string>>& documented_keys();
};

/// "key: ours -> theirs" lines; empty when the configurations agree.
std::string diff_configs(const TrainConfig& a, const TrainConfig& b);

struct PhaseCursor {
  int64_t phase_index = 0;
  int64_t epoch = 0;       // within the phase
  int64_t iteration = 0;   // within the epoch
  int64_t global_step = 0;
  int64_t global_epoch = 0;

  nlohmann::json to_json() const;
  static PhaseCursor from_json(const nlohmann::json& j);
  friend bool operator==(const PhaseCursor&, const PhaseCursor&) = default;
};

/// Everything needed to continue a run bit-identically on the same platform.
struct TrainState {
  TrainConfig config;
  networks::Generator generator{nullptr};
  networks::Discriminator discriminator{nullptr};
  Adam adam_g;
  Adam adam_d;
  PhaseCursor cursor;
  at::Generator init_rng;
  at::Generator interp_rng;

  static TrainState fresh(const TrainConfig& config);
  /// Grows both networks by one level, drawing new weights from init_rng.
  void grow();
};

struct StepDiagnostics {
  int64_t global_step = 0;
  int64_t phase_index = 0;
  int64_t level = 0;
  int64_t resolution = 4;
  PhaseKind kind = PhaseKind::stabilization;
  int64_t epoch = 0;
  int64_t iteration = 0;
  double alpha = 1.0;
  double lr = 0.0;
  int64_t batch_size = 0;
  double d_total = 0.0;
  double d_wgan = 0.0;
  double d_gradient_penalty = 0.0;
  double d_epsilon_penalty = 0.0;
  double d_real_score = 0.0;
  double d_fake_score = 0.0;
  double g_loss = 0.0;

  nlohmann::json to_json() const;
};

/// Downsamples a raw batch to the phase resolution and blends it while fading.
videodata::SequenceBatch prepare_batch(const videodata::SequenceBatch& raw, const networks::PhaseState& phase);

/// One critic update on the WGAN-GP loss (generator output detached), then one generator update.
/// Throws TrainingFault, without applying the offending update, when a loss is non-finite.
StepDiagnostics train_step(TrainState& state, const torch::Tensor& z, const torch::Tensor& target,
                           const networks::PhaseState& phase, double lr);

struct RunOptions {
  std::filesystem::path out_dir;          // checkpoints are written below out_dir/checkpoints when set
  std::ostream* log = nullptr;            // line-delimited JSON records
  std::optional<int64_t> stop_after_step; // stop once global_step reaches this value
  std::function<void(const StepDiagnostics&)> on_step;
};

struct RunSummary {
  int64_t steps = 0;
  int64_t epochs = 0;
  int64_t grow_events = 0;
  std::vector<std::filesystem::path> checkpoints;
  bool completed = false;
};

RunSummary run_training(TrainState& state, const videodata::VideoSet& data, const RunOptions& options);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

}  // namespace futuregan::trainer
