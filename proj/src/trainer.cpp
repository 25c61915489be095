#include "futuregan/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <ATen/CPUGeneratorImpl.h>

#include "futuregan/error.hpp"
#include "futuregan/fileio.hpp"
#include "futuregan/random.hpp"

namespace futuregan::trainer {

using networks::PhaseState;

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

constexpr const char* kBatchPrefix = "optimizer.batch_size.";

// Disables gradients of a module's parameters for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& m) : params_(m.parameters()) {
    for (auto& p : params_) p.requires_grad_(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.requires_grad_(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
};

std::string checkpoint_name(const char* prefix, int64_t phase, int64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_p%02lld_s%08lld.fgc", prefix, static_cast<long long>(phase),
                static_cast<long long>(step));
  return buf;
}

void emit(std::ostream* log, const nlohmann::json& record) {
  if (log == nullptr) return;
  *log << record.dump() << '\n';
  log->flush();
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Schedule

int64_t GrowthSchedule::total_epochs() const {
  return static_cast<int64_t>(levels.size()) * (epochs_transition + epochs_stabilization) + epochs_final_extra;
}

std::vector<PhasePlan> GrowthSchedule::phases() const {
  std::vector<PhasePlan> out;
  for (size_t l = 0; l < levels.size(); ++l) {
    const auto level = static_cast<int64_t>(l);
    out.push_back({level, levels[l], PhaseKind::transition, epochs_transition, l > 0});
    out.push_back({level, levels[l], PhaseKind::stabilization, epochs_stabilization, false});
  }
  if (!levels.empty())
    out.push_back({static_cast<int64_t>(levels.size()) - 1, levels.back(), PhaseKind::final, epochs_final_extra, false});
  return out;
}

GrowthSchedule build_schedule(int64_t final_resolution, const ScheduleOverrides& overrides, int64_t base_resolution) {
  if (!is_power_of_two(base_resolution) || !is_power_of_two(final_resolution) || final_resolution < base_resolution)
    throw ValidationError("final resolution must be a power of two >= " + std::to_string(base_resolution));
  if (overrides.epochs_transition < 0 || overrides.epochs_stabilization < 0 || overrides.epochs_final_extra < 0)
    throw ValidationError("epoch counts must be >= 0");
  GrowthSchedule s;
  for (int64_t r = base_resolution; r <= final_resolution; r *= 2) s.levels.push_back(r);
  s.epochs_transition = overrides.epochs_transition;
  s.epochs_stabilization = overrides.epochs_stabilization;
  s.epochs_final_extra = overrides.epochs_final_extra;
  return s;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate_base >= 0.0)) throw ValidationError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ValidationError("Adam epsilon must be > 0");
  if (!(lr_decay_per_level > 0.0)) throw ValidationError("lr_decay_per_level must be > 0");
  if (batch_size_base < 1) throw ValidationError("batch sizes must be >= 1");
  for (const auto& [r, b] : batch_size_per_level)
    if (b < 1) throw ValidationError("batch size for resolution " + std::to_string(r) + " must be >= 1");
}

int64_t OptimizerConfig::batch_size_for(int64_t level, int64_t resolution) const {
  if (const auto it = batch_size_per_level.find(resolution); it != batch_size_per_level.end()) return it->second;
  return std::max<int64_t>(1, batch_size_base >> std::min<int64_t>(level, 62));
}

double lr_for_level(const OptimizerConfig& config, int64_t level_index) {
  if (level_index < 0) throw ValidationError("level index must be >= 0");
  return config.learning_rate_base * std::pow(config.lr_decay_per_level, static_cast<double>(level_index));
}

double alpha_at(int64_t iteration, int64_t iterations_in_transition) {
  if (iterations_in_transition <= 0) return 1.0;
  return std::clamp(static_cast<double>(iteration) / static_cast<double>(iterations_in_transition), 0.0, 1.0);
}

// ---------------------------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  network.validate();
  optimizer.validate();
  loss.validate();
  if (checkpoint_every < 0) throw ValidationError("checkpoint_every must be >= 0");
  if (window_stride < 0) throw ValidationError("window_stride must be >= 0");
  build_schedule(network.final_resolution, schedule, network.base_resolution);
}

GrowthSchedule TrainConfig::growth_schedule() const {
  return build_schedule(network.final_resolution, schedule, network.base_resolution);
}

const std::vector<std::pair<std::string, std::string>>& TrainConfig::documented_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"network.base_resolution", "resolution of the first level (px)"},
      {"network.final_resolution", "resolution of the last level (px)"},
      {"network.base_feature_maps", "feature maps per layer below network.halve_from_resolution"},
      {"network.halve_from_resolution", "feature maps halve per doubling beyond this resolution"},
      {"network.t_in", "conditioning frames"},
      {"network.t_out", "predicted frames"},
      {"network.channels", "1 (grayscale) or 3 (RGB)"},
      {"network.lrelu_slope", "leaky ReLU negative slope"},
      {"schedule.epochs_transition", "epochs per transition phase"},
      {"schedule.epochs_stabilization", "epochs per stabilization phase"},
      {"schedule.epochs_final_extra", "extra epochs at the final resolution"},
      {"optimizer.learning_rate", "learning rate at the base level"},
      {"optimizer.beta1", "Adam beta1"},
      {"optimizer.beta2", "Adam beta2"},
      {"optimizer.epsilon", "Adam epsilon"},
      {"optimizer.lr_decay_per_level", "learning-rate factor per resolution step"},
      {"optimizer.batch_size_base", "batch size at the base level, halved per level"},
      {"optimizer.batch_size.<resolution>", "explicit batch size for one resolution"},
      {"loss.lambda_gp", "gradient-penalty coefficient"},
      {"loss.epsilon_drift", "epsilon drift-penalty coefficient"},
      {"train.seed", "global seed (dataset order, initialization, interpolation)"},
      {"train.checkpoint_every", "checkpoint period in iterations (0 = phase boundaries only)"},
      {"train.window_stride", "sequence window stride (0 = t_in + t_out)"},
  };
  return keys;
}

config::KeyValueConfig TrainConfig::to_kv() const {
  config::KeyValueConfig kv;
  kv.set("network.base_resolution", std::to_string(network.base_resolution));
  kv.set("network.final_resolution", std::to_string(network.final_resolution));
  kv.set("network.base_feature_maps", std::to_string(network.base_feature_maps));
  kv.set("network.halve_from_resolution", std::to_string(network.halve_from_resolution));
  kv.set("network.t_in", std::to_string(network.t_in));
  kv.set("network.t_out", std::to_string(network.t_out));
  kv.set("network.channels", std::to_string(network.channels));
  kv.set("network.lrelu_slope", format_double(network.lrelu_slope));
  kv.set("schedule.epochs_transition", std::to_string(schedule.epochs_transition));
  kv.set("schedule.epochs_stabilization", std::to_string(schedule.epochs_stabilization));
  kv.set("schedule.epochs_final_extra", std::to_string(schedule.epochs_final_extra));
  kv.set("optimizer.learning_rate", format_double(optimizer.learning_rate_base));
  kv.set("optimizer.beta1", format_double(optimizer.beta1));
  kv.set("optimizer.beta2", format_double(optimizer.beta2));
  kv.set("optimizer.epsilon", format_double(optimizer.adam_epsilon));
  kv.set("optimizer.lr_decay_per_level", format_double(optimizer.lr_decay_per_level));
  kv.set("optimizer.batch_size_base", std::to_string(optimizer.batch_size_base));
  for (const auto& [r, b] : optimizer.batch_size_per_level) kv.set(kBatchPrefix + std::to_string(r), std::to_string(b));
  kv.set("loss.lambda_gp", format_double(loss.lambda_gp));
  kv.set("loss.epsilon_drift", format_double(loss.epsilon_drift));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.checkpoint_every", std::to_string(checkpoint_every));
  kv.set("train.window_stride", std::to_string(window_stride));
  return kv;
}

TrainConfig TrainConfig::from_kv(const config::KeyValueConfig& kv) {
  std::vector<std::string> known;
  for (const auto& [k, d] : documented_keys()) known.push_back(k);
  if (const auto unknown = kv.unknown_keys(known, {kBatchPrefix, "io."}); !unknown.empty())
    throw ValidationError("unknown config key: " + unknown.front());

  TrainConfig c;
  auto& n = c.network;
  n.base_resolution = kv.get_int("network.base_resolution", n.base_resolution);
  n.final_resolution = kv.get_int("network.final_resolution", n.final_resolution);
  n.base_feature_maps = kv.get_int("network.base_feature_maps", n.base_feature_maps);
  n.halve_from_resolution = kv.get_int("network.halve_from_resolution", n.halve_from_resolution);
  n.t_in = kv.get_int("network.t_in", n.t_in);
  n.t_out = kv.get_int("network.t_out", n.t_out);
  n.channels = kv.get_int("network.channels", n.channels);
  n.lrelu_slope = kv.get_double("network.lrelu_slope", n.lrelu_slope);
  auto& s = c.schedule;
  s.epochs_transition = kv.get_int("schedule.epochs_transition", s.epochs_transition);
  s.epochs_stabilization = kv.get_int("schedule.epochs_stabilization", s.epochs_stabilization);
  s.epochs_final_extra = kv.get_int("schedule.epochs_final_extra", s.epochs_final_extra);
  auto& o = c.optimizer;
  o.learning_rate_base = kv.get_double("optimizer.learning_rate", o.learning_rate_base);
  o.beta1 = kv.get_double("optimizer.beta1", o.beta1);
  o.beta2 = kv.get_double("optimizer.beta2", o.beta2);
  o.adam_epsilon = kv.get_double("optimizer.epsilon", o.adam_epsilon);
  o.lr_decay_per_level = kv.get_double("optimizer.lr_decay_per_level", o.lr_decay_per_level);
  o.batch_size_base = kv.get_int("optimizer.batch_size_base", o.batch_size_base);
  for (const auto& [k, v] : kv.values()) {
    if (k.rfind(kBatchPrefix, 0) != 0) continue;
    const std::string res = k.substr(std::char_traits<char>::length(kBatchPrefix));
    int64_t r = 0;
    const auto [ptr, ec] = std::from_chars(res.data(), res.data() + res.size(), r);
    if (ec != std::errc() || ptr != res.data() + res.size()) throw ValidationError("bad batch-size key: " + k);
    o.batch_size_per_level[r] = kv.get_int(k, 1);
  }
  c.loss.lambda_gp = kv.get_double("loss.lambda_gp", c.loss.lambda_gp);
  c.loss.epsilon_drift = kv.get_double("loss.epsilon_drift", c.loss.epsilon_drift);
  c.seed = static_cast<uint64_t>(kv.get_int("train.seed", static_cast<int64_t>(c.seed)));
  c.checkpoint_every = kv.get_int("train.checkpoint_every", c.checkpoint_every);
  c.window_stride = kv.get_int("train.window_stride", c.window_stride);
  c.validate();
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  const auto kv = to_kv();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

uint64_t TrainConfig::hash() const { return fileio::fnv1a64(to_kv().dump()); }

std::string diff_configs(const TrainConfig& a, const TrainConfig& b) {
  const auto ka = a.to_kv().values();
  const auto kb = b.to_kv().values();
  std::string out;
  for (const auto& [k, v] : ka) {
    const auto it = kb.find(k);
    const std::string other = it == kb.end() ? "<unset>" : it->second;
    if (other != v) out += k + ": " + v + " -> " + other + "\n";
  }
  for (const auto& [k, v] : kb)
    if (ka.count(k) == 0) out += k + ": <unset> -> " + v + "\n";
  return out;
}

nlohmann::json PhaseCursor::to_json() const {
  return {{"phase_index", phase_index},
          {"epoch", epoch},
          {"iteration", iteration},
          {"global_step", global_step},
          {"global_epoch", global_epoch}};
}

PhaseCursor PhaseCursor::from_json(const nlohmann::json& j) {
  PhaseCursor c;
  c.phase_index = j.at("phase_index");
  c.epoch = j.at("epoch");
  c.iteration = j.at("iteration");
  c.global_step = j.at("global_step");
  c.global_epoch = j.at("global_epoch");
  return c;
}

// ---------------------------------------------------------------------------------------------
// State and step

TrainState TrainState::fresh(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.init_rng = at::detail::createCPUGenerator(derive_seed(config.seed, Stream::init));
  s.interp_rng = at::detail::createCPUGenerator(derive_seed(config.seed, Stream::interpolation));
  s.generator = networks::Generator(config.network, s.init_rng);
  s.discriminator = networks::Discriminator(config.network, s.init_rng);
  const AdamSettings adam{config.optimizer.beta1, config.optimizer.beta2, config.optimizer.adam_epsilon};
  s.adam_g = Adam(adam);
  s.adam_d = Adam(adam);
  s.adam_g.track(*s.generator);
  s.adam_d.track(*s.discriminator);
  return s;
}

void TrainState::grow() {
  generator->grow(init_rng);
  discriminator->grow(init_rng);
  adam_g.track(*generator);
  adam_d.track(*discriminator);
}

nlohmann::json StepDiagnostics::to_json() const {
  return {{"event", "step"},
          {"global_step", global_step},
          {"phase_index", phase_index},
          {"level", level},
          {"resolution", resolution},
          {"kind", networks::to_string(kind)},
          {"epoch", epoch},
          {"iteration", iteration},
          {"alpha", alpha},
          {"lr", lr},
          {"batch_size", batch_size},
          {"d_total", d_total},
          {"d_wgan", d_wgan},
          {"d_gradient_penalty", d_gradient_penalty},
          {"d_epsilon_penalty", d_epsilon_penalty},
          {"d_real_score", d_real_score},
          {"d_fake_score", d_fake_score},
          {"g_loss", g_loss}};
}

videodata::SequenceBatch prepare_batch(const videodata::SequenceBatch& raw, const PhaseState& phase) {
  auto z = videodata::downsample_to_resolution(raw.input, phase.resolution);
  auto t = videodata::downsample_to_resolution(raw.target, phase.resolution);
  if (phase.fading()) {
    z = videodata::blend_transition_input(z, phase.alpha);
    t = videodata::blend_transition_input(t, phase.alpha);
  }
  return {z.contiguous(), t.contiguous()};
}

StepDiagnostics train_step(TrainState& state, const torch::Tensor& z, const torch::Tensor& target,
                           const PhaseState& phase, double lr) {
  auto& g = state.generator;
  auto& d = state.discriminator;
  if (z.size(0) != target.size(0)) throw DimensionError("batch axis: input and target batch sizes differ");

  StepDiagnostics diag;
  diag.level = g->level();
  diag.resolution = phase.resolution;
  diag.kind = phase.kind;
  diag.alpha = phase.alpha;
  diag.lr = lr;
  diag.batch_size = z.size(0);

  const losses::Critic critic = [&](const torch::Tensor& x) { return d->forward(x, phase); };
  const auto real = torch::cat({z, target}, 2);

  // Critic update.
  state.adam_d.zero_grad();
  torch::Tensor predicted;
  {
    torch::NoGradGuard no_grad;
    predicted = g->forward(z, phase);
  }
  const auto fake = torch::cat({z, predicted}, 2);
  const auto dl = losses::discriminator_loss(critic, real, fake, state.config.loss, state.interp_rng);
  if (!dl.finite()) throw TrainingFault("non-finite discriminator loss at step " + std::to_string(state.cursor.global_step));
  dl.total.backward();
  state.adam_d.step(lr);
  diag.d_total = dl.total.item<double>();
  diag.d_wgan = dl.wgan.item<double>();
  diag.d_gradient_penalty = dl.gradient_penalty.item<double>();
  diag.d_epsilon_penalty = dl.epsilon_penalty.item<double>();
  diag.d_real_score = dl.mean_real_score;
  diag.d_fake_score = dl.mean_fake_score;

  // Generator update against the updated critic.
  state.adam_g.zero_grad();
  {
    FreezeGuard frozen(*d);
    const auto gl = losses::generator_loss(critic, torch::cat({z, g->forward(z, phase)}, 2));
    diag.g_loss = gl.item<double>();
    if (!std::isfinite(diag.g_loss))
      throw TrainingFault("non-finite generator loss at step " + std::to_string(state.cursor.global_step));
    gl.backward();
  }
  state.adam_g.step(lr);
  return diag;
}

// ---------------------------------------------------------------------------------------------
// Run loop

RunSummary run_training(TrainState& state, const videodata::VideoSet& data, const RunOptions& options) {
  const auto& cfg = state.config;
  const auto& spec = cfg.network;
  if (data.empty()) throw ValidationError("training dataset is empty");
  if (data.resolution() < spec.final_resolution)
    throw ValidationError("dataset resolution " + std::to_string(data.resolution()) + " is below the final resolution");
  if (data.channels() != spec.channels) throw ValidationError("dataset channel count does not match the network");

  videodata::SequenceWindowing windowing{spec.t_in, spec.t_out, cfg.window_stride};
  const auto windows = videodata::window_sequences(data, windowing);
  const auto schedule = cfg.growth_schedule();
  const auto phases = schedule.phases();

  for (size_t l = 0; l < schedule.levels.size(); ++l) {
    const auto b = cfg.optimizer.batch_size_for(static_cast<int64_t>(l), schedule.levels[l]);
    if (windows.size() < b)
      throw ValidationError("dataset has " + std::to_string(windows.size()) + " sequences, fewer than one batch of " +
                            std::to_string(b));
  }

  RunSummary summary;
  auto& cur = state.cursor;
  int64_t last_checkpoint_step = -1;
  auto checkpoint = [&](const char* prefix) {
    if (options.out_dir.empty()) return;
    const auto path = options.out_dir / "checkpoints" / checkpoint_name(prefix, cur.phase_index, cur.global_step);
    save_checkpoint(state, path);
    summary.checkpoints.push_back(path);
    last_checkpoint_step = cur.global_step;
    emit(options.log, {{"event", "checkpoint"}, {"path", path.string()}, {"cursor", cur.to_json()}});
  };

  emit(options.log, {{"event", cur.global_step == 0 ? "run_start" : "resume"},
                     {"cursor", cur.to_json()},
                     {"config_hash", fileio::hex64(cfg.hash())},
                     {"total_epochs", schedule.total_epochs()}});

  while (cur.phase_index < static_cast<int64_t>(phases.size())) {
    const auto& plan = phases[static_cast<size_t>(cur.phase_index)];
    while (state.generator->level() < plan.level) {
      const int64_t from = state.generator->resolution();
      state.grow();
      ++summary.grow_events;
      emit(options.log, {{"event", "grow"}, {"from", from}, {"to", state.generator->resolution()},
                         {"global_step", cur.global_step}});
    }
    if (cur.epoch == 0 && cur.iteration == 0) {
      emit(options.log, {{"event", plan.kind == PhaseKind::final ? "final_phase" : "phase_start"},
                         {"phase_index", cur.phase_index},
                         {"kind", networks::to_string(plan.kind)},
                         {"resolution", plan.resolution},
                         {"epochs", plan.epochs},
                         {"fades", plan.fades}});
    }

    const int64_t batch = cfg.optimizer.batch_size_for(plan.level, plan.resolution);
    const int64_t per_epoch = windows.size() / batch;
    const int64_t phase_iters = plan.epochs * per_epoch;
    const double lr = lr_for_level(cfg.optimizer, plan.level);

    while (cur.epoch < plan.epochs) {
      const auto order = videodata::epoch_order(windows.size(), cfg.seed, cur.global_epoch);
      while (cur.iteration < per_epoch) {
        PhaseState phase{plan.resolution, plan.kind, 1.0};
        if (plan.fades) phase.alpha = alpha_at(cur.epoch * per_epoch + cur.iteration, phase_iters);

        const std::span<const int64_t> idx(order.data() + cur.iteration * batch, static_cast<size_t>(batch));
        const auto prepared = prepare_batch(videodata::gather(data, windows, idx), phase);

        StepDiagnostics diag;
        try {
          diag = train_step(state, prepared.input, prepared.target, phase, lr);
        } catch (const TrainingFault& fault) {
          emit(options.log, {{"event", "fault"}, {"message", fault.what()}, {"cursor", cur.to_json()}});
          checkpoint("emergency");
          throw;
        }
        diag.global_step = cur.global_step;
        diag.phase_index = cur.phase_index;
        diag.epoch = cur.epoch;
        diag.iteration = cur.iteration;

        ++cur.iteration;
        ++cur.global_step;
        ++summary.steps;
        emit(options.log, diag.to_json());
        if (options.on_step) options.on_step(diag);
        if (cfg.checkpoint_every > 0 && cur.global_step % cfg.checkpoint_every == 0) checkpoint("step");
        // A cursor left at iteration == per_epoch is rolled over by the loops on resume.
        if (options.stop_after_step && cur.global_step >= *options.stop_after_step) return summary;
      }
      cur.iteration = 0;
      ++cur.epoch;
      ++cur.global_epoch;
      ++summary.epochs;
    }
    cur.epoch = 0;
    ++cur.phase_index;
    emit(options.log, {{"event", "phase_end"}, {"phase_index", cur.phase_index - 1}, {"global_step", cur.global_step}});
    if (last_checkpoint_step != cur.global_step) checkpoint("phase");
  }
  summary.completed = true;
  emit(options.log, {{"event", "run_end"}, {"cursor", cur.to_json()}, {"steps", summary.steps}});
  return summary;
}

}  // namespace futuregan::trainer
