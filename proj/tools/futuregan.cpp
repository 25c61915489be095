// futuregan: dataset generation, training, prediction and evaluation from the command line.
//
// Exit codes: 0 success, 2 I/O or validation error, 3 configuration conflict, 4 numerical fault.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "futuregan/config.hpp"
#include "futuregan/error.hpp"
#include "futuregan/evalkit.hpp"
#include "futuregan/fileio.hpp"
#include "futuregan/imageio.hpp"
#include "futuregan/networks.hpp"
#include "futuregan/trainer.hpp"
#include "futuregan/videodata.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace futuregan;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0, kExitIo = 2, kExitConflict = 3, kExitFault = 4;

// Flags are recorded as config keys so a config file and the command line share one namespace.
struct Keyed {
  std::optional<fs::path> config_file;
  std::map<std::string, std::string> overrides;

  config::KeyValueConfig merged() const {
    auto kv = config_file ? config::KeyValueConfig::load(*config_file) : config::KeyValueConfig{};
    for (const auto& [k, v] : overrides) kv.set(k, v);
    return kv;
  }
};

void keyed_option(CLI::App* app, Keyed& keyed, const std::string& flag, const std::string& key, const std::string& desc) {
  app->add_option_function<std::string>(
      flag, [&keyed, key](const std::string& v) { keyed.overrides[key] = v; }, desc + "  [key: " + key + "]");
}

void config_option(CLI::App* app, Keyed& keyed) {
  app->add_option_function<std::string>(
      "--config", [&keyed](const std::string& v) { keyed.config_file = v; }, "key = value configuration file");
}

fs::path out_root() {
  if (const char* env = std::getenv("FUTUREGAN_OUT_ROOT"); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path out_dir_for(const config::KeyValueConfig& kv, const std::string& command) {
  if (const auto dir = kv.get("io.out_dir")) return *dir;
  return out_root() / command;
}

std::string require(const config::KeyValueConfig& kv, const std::string& key, const std::string& flag) {
  const auto v = kv.get(key);
  if (!v || v->empty()) throw ValidationError("missing " + flag + " (config key " + key + ")");
  return *v;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct RunManifest {
  std::string command;
  json config = json::object();
  uint64_t seed = 0;
  std::vector<fs::path> artifacts;
  std::string started = utc_now();
  std::chrono::steady_clock::time_point clock = std::chrono::steady_clock::now();

  RunManifest(std::string cmd, json cfg, uint64_t s) : command(std::move(cmd)), config(std::move(cfg)), seed(s) {}

  void write(const fs::path& dir) const {
    json paths = json::array();
    for (const auto& p : artifacts) {
      if (!fs::exists(p)) throw IoError("manifest artifact missing: " + p.string());
      paths.push_back(p.string());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count();
    const json j = {{"command", command},
                    {"config", config},
                    {"seed", seed},
                    {"artifacts", paths},
                    {"tool_version", FUTUREGAN_VERSION},
                    {"timings", {{"started", started}, {"finished", utc_now()}, {"wall_seconds", wall}}}};
    fileio::atomic_write(dir / "run_manifest.json", j.dump(2) + "\n");
  }
};

json kv_json(const config::KeyValueConfig& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv.values()) j[k] = v;
  return j;
}

// Keys of other commands may share a config file; the trainer only sees its own sections.
config::KeyValueConfig training_keys(const config::KeyValueConfig& kv) {
  config::KeyValueConfig out;
  for (const auto& [k, v] : kv.values())
    if (k.rfind("dataset.", 0) != 0 && k.rfind("predict.", 0) != 0 && k.rfind("eval.", 0) != 0) out.set(k, v);
  return out;
}

videodata::VideoSet at_resolution(const videodata::VideoSet& set, int64_t r) {
  if (set.resolution() == r) return set;
  if (set.resolution() < r)
    throw ValidationError("dataset resolution " + std::to_string(set.resolution()) + " is below the model resolution " +
                          std::to_string(r));
  std::vector<torch::Tensor> videos;
  for (int64_t i = 0; i < set.size(); ++i) videos.push_back(videodata::downsample_to_resolution(set.video(i), r).contiguous());
  return videodata::VideoSet(std::move(videos), set.channels(), r, set.meta());
}

// ---------------------------------------------------------------------------------------------
// dataset

int cmd_dataset_gen(const Keyed& keyed) {
  const auto kv = keyed.merged();
  videodata::MovingMnistConfig cfg;
  cfg.num_videos = kv.get_int("dataset.num_videos", 10000);
  cfg.video_length = kv.get_int("dataset.video_length", cfg.video_length);
  cfg.canvas = kv.get_int("dataset.canvas", cfg.canvas);
  cfg.digits_per_video = kv.get_int("dataset.digits", cfg.digits_per_video);
  cfg.speed_min = kv.get_double("dataset.speed_min", cfg.speed_min);
  cfg.speed_max = kv.get_double("dataset.speed_max", cfg.speed_max);
  cfg.seed = static_cast<uint64_t>(kv.get_int("dataset.seed", 0));
  cfg.validate();
  const fs::path glyph_dir = kv.get_string("dataset.glyphs", videodata::DigitGlyphs::default_dir().string());
  const fs::path dir = out_dir_for(kv, "dataset");
  const fs::path file = dir / kv.get_string("dataset.file", "moving_mnist.fgv");

  RunManifest manifest{"dataset gen", kv_json(kv), cfg.seed};
  const auto glyphs = videodata::DigitGlyphs::load(glyph_dir);
  const auto set = videodata::generate_moving_mnist(cfg, glyphs);
  set.save(file);
  manifest.artifacts.push_back(file);
  manifest.write(dir);
  std::cout << "wrote " << set.size() << " videos to " << file.string() << " (checksum "
            << fileio::hex64(fileio::fnv1a64(fileio::read_file(file))) << ")\n";
  return kExitOk;
}

int cmd_dataset_import(const Keyed& keyed) {
  const auto kv = keyed.merged();
  videodata::FolderLoadOptions opts;
  opts.resolution = kv.get_int("dataset.resolution", opts.resolution);
  opts.channels = kv.get_int("dataset.channels", opts.channels);
  const fs::path root = require(kv, "dataset.folder", "--folder");
  const fs::path dir = out_dir_for(kv, "dataset");
  const fs::path file = dir / kv.get_string("dataset.file", "videos.fgv");

  RunManifest manifest{"dataset import", kv_json(kv), 0};
  const auto result = videodata::load_video_folder(root, opts);
  for (const auto& d : result.diagnostics) std::cerr << "skipped: " << d << "\n";
  result.videos.save(file);
  manifest.artifacts.push_back(file);
  manifest.write(dir);
  std::cout << "wrote " << result.videos.size() << " videos to " << file.string() << "\n";
  return kExitOk;
}

int cmd_dataset_inspect(const Keyed& keyed) {
  const auto kv = keyed.merged();
  const auto set = videodata::VideoSet::load(require(kv, "io.dataset", "--dataset"));
  videodata::SequenceWindowing w{kv.get_int("network.t_in", 6), kv.get_int("network.t_out", 6),
                                 kv.get_int("train.window_stride", 0)};
  w.validate();
  const auto windows = videodata::window_sequences(set, w);
  int64_t min_len = set.empty() ? 0 : set.length(0), max_len = min_len;
  for (int64_t i = 0; i < set.size(); ++i) {
    min_len = std::min(min_len, set.length(i));
    max_len = std::max(max_len, set.length(i));
  }
  const json j = {{"videos", set.size()},
                  {"channels", set.channels()},
                  {"resolution", set.resolution()},
                  {"min_length", min_len},
                  {"max_length", max_len},
                  {"t_in", w.t_in},
                  {"t_out", w.t_out},
                  {"stride", w.effective_stride()},
                  {"sequences", windows.size()},
                  {"skipped_videos", windows.skipped},
                  {"meta", set.meta()}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// train

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  long long best_step = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".fgc") continue;
    const auto stem = e.path().stem().string();
    const auto pos = stem.rfind("_s");
    if (pos == std::string::npos) continue;
    const long long step = std::atoll(stem.c_str() + pos + 2);
    if (step > best_step || (step == best_step && e.path() > *best)) {
      best_step = step;
      best = e.path();
    }
  }
  return best;
}

int cmd_train(const Keyed& keyed) {
  const auto kv = keyed.merged();
  const auto train_kv = training_keys(kv);
  const fs::path dir = out_dir_for(kv, "train");
  const fs::path data_path = require(kv, "io.dataset", "--dataset");
  const auto resume = kv.get("io.resume");
  std::optional<int64_t> max_steps;
  if (kv.contains("io.max_steps")) max_steps = kv.get_int("io.max_steps", 0);

  trainer::TrainState state;
  if (resume) {
    fs::path ckpt = *resume;
    if (*resume == "latest") {
      const auto found = latest_checkpoint(dir / "checkpoints");
      if (!found) throw IoError("no checkpoint to resume in " + (dir / "checkpoints").string());
      ckpt = *found;
    }
    state = trainer::load_checkpoint(ckpt);
    // Anything given explicitly must agree with the checkpoint.
    auto requested_kv = state.config.to_kv();
    for (const auto& [k, v] : train_kv.values()) requested_kv.set(k, v);
    const auto requested = trainer::TrainConfig::from_kv(requested_kv);
    if (const auto diff = trainer::diff_configs(state.config, requested); !diff.empty())
      throw ConfigConflictError("configuration conflicts with the checkpoint being resumed", diff);
    std::cout << "resuming from " << ckpt.string() << " at step " << state.cursor.global_step << "\n";
  } else {
    state = trainer::TrainState::fresh(trainer::TrainConfig::from_kv(train_kv));
  }

  const auto data = videodata::VideoSet::load(data_path);
  RunManifest manifest{"train", kv_json(kv), state.config.seed};
  const fs::path snapshot = dir / "config.snapshot";
  const fs::path log_path = dir / "train_log.jsonl";
  fileio::atomic_write(snapshot, state.config.to_kv().dump());
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path.string());

  trainer::RunOptions options;
  options.out_dir = dir;
  options.log = &log;
  options.stop_after_step = max_steps;
  const auto total = state.config.growth_schedule().total_epochs();
  options.on_step = [&](const trainer::StepDiagnostics& d) {
    if (d.iteration == 0)
      std::cout << "step " << d.global_step << "  res " << d.resolution << "  " << networks::to_string(d.kind)
                << "  alpha " << d.alpha << "  D " << d.d_total << "  G " << d.g_loss << "  (" << total
                << " epochs total)\n";
  };
  trainer::RunSummary summary;
  try {
    summary = trainer::run_training(state, data, options);
  } catch (...) {
    log.flush();
    throw;
  }
  log.close();
  manifest.artifacts = {snapshot, log_path};
  for (const auto& c : summary.checkpoints) manifest.artifacts.push_back(c);
  manifest.write(dir);
  std::cout << (summary.completed ? "finished" : "stopped") << " after " << state.cursor.global_step << " steps; "
            << summary.checkpoints.size() << " checkpoints in " << (dir / "checkpoints").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// predict / evaluate

evalkit::Predictor generator_predictor(networks::Generator g) {
  return [g](const torch::Tensor& input, int64_t t_out) mutable {
    if (t_out != g->spec().t_out)
      throw ValidationError("model predicts " + std::to_string(g->spec().t_out) + " frames, " + std::to_string(t_out) +
                            " requested");
    torch::NoGradGuard no_grad;
    return g->forward(input, networks::PhaseState{g->resolution(), networks::PhaseKind::stabilization, 1.0});
  };
}

std::vector<torch::Tensor> frame_images(const torch::Tensor& clip) {
  // clip: (C, T, H, W) in [-1, 1]
  std::vector<torch::Tensor> out;
  const auto u8 = imageio::to_u8(clip);
  for (int64_t t = 0; t < u8.size(1); ++t) out.push_back(imageio::to_hwc(u8.select(1, t)));
  return out;
}

int cmd_predict(const Keyed& keyed) {
  const auto kv = keyed.merged();
  const auto state = trainer::load_checkpoint(require(kv, "io.checkpoint", "--checkpoint"));
  const auto& g = state.generator;
  const int64_t t_in = g->spec().t_in, t_out = g->spec().t_out;
  const int64_t steps = kv.get_int("predict.steps", t_out);
  const int64_t video = kv.get_int("predict.video", 0);
  const int64_t start = kv.get_int("predict.start", 0);
  const fs::path dir = out_dir_for(kv, "predict");

  const auto data = at_resolution(videodata::VideoSet::load(require(kv, "io.dataset", "--input")), g->resolution());
  if (video < 0 || video >= data.size()) throw ValidationError("--video out of range");
  if (start < 0 || start + t_in > data.length(video)) throw ValidationError("--start leaves fewer than t_in input frames");
  const auto input = data.frames(video, start, t_in).unsqueeze(0);

  RunManifest manifest{"predict", kv_json(kv), state.config.seed};
  const auto result = evalkit::long_term_predict(generator_predictor(g), input, t_out, steps);
  const auto predicted = frame_images(result.frames[0]);
  for (size_t i = 0; i < predicted.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.png", i + 1);
    imageio::write_png(dir / name, predicted[i]);
    manifest.artifacts.push_back(dir / name);
  }
  auto observed = frame_images(input[0]);
  std::vector<torch::Tensor> sequence = observed;
  sequence.insert(sequence.end(), predicted.begin(), predicted.end());
  if (!predicted.empty()) {
    imageio::write_gif(dir / "prediction.gif", sequence);
    auto strip = imageio::make_strip(sequence);
    const int64_t available = std::min<int64_t>(static_cast<int64_t>(predicted.size()), data.length(video) - start - t_in);
    if (available > 0) {
      auto truth = observed;
      for (const auto& f : frame_images(data.frames(video, start + t_in, available))) truth.push_back(f);
      auto row = imageio::make_strip(truth);
      auto gap = torch::full({2, strip.size(1)}, 255, torch::kUInt8);
      if (strip.dim() == 3) gap = gap.unsqueeze(2).expand({2, strip.size(1), 3});
      auto padded = torch::full(strip.sizes(), 255, torch::kUInt8);
      padded.narrow(1, 0, row.size(1)).copy_(row);
      strip = torch::cat({strip, gap, padded}, 0);
    }
    imageio::write_png(dir / "strip.png", strip);
    manifest.artifacts.push_back(dir / "prediction.gif");
    manifest.artifacts.push_back(dir / "strip.png");
  }
  manifest.config["passes"] = std::to_string(result.passes);
  manifest.write(dir);
  std::cout << "predicted " << result.frames.size(2) << " of " << steps << " frames in " << result.passes << " passes\n";
  if (result.partial) {
    std::cerr << "prediction stopped early: " << result.failure << "\n";
    return kExitFault;
  }
  return kExitOk;
}

int cmd_evaluate(const Keyed& keyed) {
  const auto kv = keyed.merged();
  const auto checkpoint = kv.get("io.checkpoint");
  const auto baseline = kv.get("eval.baseline");
  if (baseline && *baseline != "copylast") throw ValidationError("unknown baseline '" + *baseline + "'");
  if (!checkpoint && !baseline) throw ValidationError("give --checkpoint, --baseline copylast, or both");
  const fs::path dir = out_dir_for(kv, "evaluate");

  evalkit::EvalOptions opts;
  opts.batch_size = kv.get_int("eval.batch_size", 64);
  opts.metrics.window = evalkit::ssim_window_from_string(kv.get_string("eval.ssim_window", "uniform7"));

  std::optional<trainer::TrainState> state;
  int64_t t_in = kv.get_int("network.t_in", 6), t_out = kv.get_int("network.t_out", 6);
  auto data = videodata::VideoSet::load(require(kv, "io.dataset", "--dataset"));
  if (checkpoint) {
    state = trainer::load_checkpoint(*checkpoint);
    t_in = state->generator->spec().t_in;
    t_out = state->generator->spec().t_out;
    data = at_resolution(data, state->generator->resolution());
  }
  const int64_t horizon = kv.get_int("eval.long_term", t_out);
  if (horizon < t_out) throw ValidationError("--long-term must be at least t_out");
  videodata::SequenceWindowing w{t_in, horizon, kv.get_int("train.window_stride", 0)};
  w.validate();
  const auto windows = videodata::window_sequences(data, w);

  auto rollout = [t_out](evalkit::Predictor p) -> evalkit::Predictor {
    return [p, t_out](const torch::Tensor& input, int64_t n) {
      if (n == t_out) return p(input, n);
      auto r = evalkit::long_term_predict(p, input, t_out, n);
      if (r.partial) throw TrainingFault("long-term rollout failed: " + r.failure);
      return r.frames;
    };
  };

  std::vector<std::pair<std::string, evalkit::MetricsReport>> reports;
  const std::string dataset_id = fs::path(*kv.get("io.dataset")).filename().string();
  opts.dataset_id = dataset_id;
  if (state) {
    opts.model_id = fs::path(*checkpoint).filename().string();
    reports.emplace_back("model", evalkit::evaluate(rollout(generator_predictor(state->generator)), data, windows, opts));
  }
  if (baseline) {
    opts.model_id = "copylast";
    reports.emplace_back("copylast", evalkit::evaluate(evalkit::copy_last_predictor(), data, windows, opts));
  }

  RunManifest manifest{"evaluate", kv_json(kv), state ? state->config.seed : 0};
  json report = json::object();
  std::string csv;
  for (const auto& [name, r] : reports) {
    report[name] = r.to_json();
    csv += "# " + name + "\n" + r.to_csv();
  }
  std::vector<std::pair<std::string, std::string>> plots = {{"mse", "MSE"}, {"psnr", "PSNR (dB)"}, {"ssim", "SSIM"}};
  for (const auto& [key, label] : plots) {
    std::vector<imageio::Series> series;
    for (const auto& [name, r] : reports) {
      imageio::Series s{name, {}};
      for (const auto& m : r.per_frame) s.values.push_back(key == "mse" ? m.mse : key == "psnr" ? m.psnr_db : m.ssim);
      series.push_back(std::move(s));
    }
    const auto path = dir / (key + ".png");
    imageio::plot_curves(path, label + " per predicted frame", label, series);
    manifest.artifacts.push_back(path);
  }
  fileio::atomic_write(dir / "report.json", report.dump(2) + "\n");
  fileio::atomic_write(dir / "report.csv", csv);
  manifest.artifacts.push_back(dir / "report.json");
  manifest.artifacts.push_back(dir / "report.csv");

  if (kv.get_int("eval.flow", 0) != 0 && state) {
    // Flow from the last observed frame to each frame of the first window, for prediction and truth.
    std::vector<int64_t> first = {0};
    const auto batch = videodata::gather(data, windows, first);
    const auto pred = rollout(generator_predictor(state->generator))(batch.input, horizon).clamp(-1, 1);
    const auto last = batch.input[0][0][t_in - 1];
    for (int64_t t = 0; t < horizon; ++t) {
      const auto f_true = evalkit::optical_flow(last, batch.target[0][0][t]);
      const auto f_pred = evalkit::optical_flow(last, pred[0][0][t]);
      const double peak = std::max(f_true.pow(2).sum(0).sqrt().max().item<double>(), 1e-6);
      char name[48];
      std::snprintf(name, sizeof name, "flow_truth_%03lld.png", static_cast<long long>(t + 1));
      imageio::write_png(dir / name, evalkit::flow_to_color(f_true, peak));
      manifest.artifacts.push_back(dir / name);
      std::snprintf(name, sizeof name, "flow_model_%03lld.png", static_cast<long long>(t + 1));
      imageio::write_png(dir / name, evalkit::flow_to_color(f_pred, peak));
      manifest.artifacts.push_back(dir / name);
    }
  }
  manifest.write(dir);
  for (const auto& [name, r] : reports)
    std::cout << name << ": mse " << r.averaged.mse << "  psnr " << r.averaged.psnr_db << " dB  ssim " << r.averaged.ssim
              << "  (" << windows.size() << " sequences)\n";
  return kExitOk;
}

std::string config_key_listing() {
  std::string out = "Training config keys:\n";
  for (const auto& [k, d] : trainer::TrainConfig::documented_keys()) out += "  " + k + "  " + d + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FutureGAN video prediction: datasets, training, prediction and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FUTUREGAN_VERSION);

  Keyed gen_k, import_k, inspect_k, train_k, predict_k, eval_k;

  auto* dataset = app.add_subcommand("dataset", "generate, import or inspect video datasets");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "render a synthetic MovingMNIST dataset");
  config_option(gen, gen_k);
  keyed_option(gen, gen_k, "--videos", "dataset.num_videos", "number of videos");
  keyed_option(gen, gen_k, "--length", "dataset.video_length", "frames per video");
  keyed_option(gen, gen_k, "--canvas", "dataset.canvas", "frame size in pixels");
  keyed_option(gen, gen_k, "--digits", "dataset.digits", "digits per video");
  keyed_option(gen, gen_k, "--speed-min", "dataset.speed_min", "minimum digit speed (px/frame)");
  keyed_option(gen, gen_k, "--speed-max", "dataset.speed_max", "maximum digit speed (px/frame)");
  keyed_option(gen, gen_k, "--seed", "dataset.seed", "generator seed");
  keyed_option(gen, gen_k, "--glyphs", "dataset.glyphs", "directory with MNIST IDX files");
  keyed_option(gen, gen_k, "--out-dir", "io.out_dir", "output directory");
  keyed_option(gen, gen_k, "--name", "dataset.file", "dataset file name");

  auto* import = dataset->add_subcommand("import", "convert a folder of frame folders into a dataset file");
  config_option(import, import_k);
  keyed_option(import, import_k, "--folder", "dataset.folder", "root folder; each subfolder is one video");
  keyed_option(import, import_k, "--resolution", "dataset.resolution", "square frame size after resizing");
  keyed_option(import, import_k, "--channels", "dataset.channels", "1 (grayscale) or 3 (RGB)");
  keyed_option(import, import_k, "--out-dir", "io.out_dir", "output directory");
  keyed_option(import, import_k, "--name", "dataset.file", "dataset file name");

  auto* inspect = dataset->add_subcommand("inspect", "print dataset shape and sequence count");
  config_option(inspect, inspect_k);
  keyed_option(inspect, inspect_k, "--dataset", "io.dataset", "dataset file");
  keyed_option(inspect, inspect_k, "--t-in", "network.t_in", "conditioning frames");
  keyed_option(inspect, inspect_k, "--t-out", "network.t_out", "predicted frames");
  keyed_option(inspect, inspect_k, "--stride", "train.window_stride", "window stride (0 = non-overlapping)");

  auto* train = app.add_subcommand("train", "progressively grow and train the networks");
  train->footer(config_key_listing());
  config_option(train, train_k);
  keyed_option(train, train_k, "--dataset", "io.dataset", "training dataset file");
  keyed_option(train, train_k, "--out-dir", "io.out_dir", "run directory (checkpoints, log, manifest)");
  keyed_option(train, train_k, "--resume", "io.resume", "checkpoint file, or 'latest' in the run directory");
  keyed_option(train, train_k, "--max-steps", "io.max_steps", "stop after this many global steps");
  keyed_option(train, train_k, "--final-resolution", "network.final_resolution", "last resolution to grow to");
  keyed_option(train, train_k, "--base-maps", "network.base_feature_maps", "feature maps per layer");
  keyed_option(train, train_k, "--t-in", "network.t_in", "conditioning frames");
  keyed_option(train, train_k, "--t-out", "network.t_out", "predicted frames");
  keyed_option(train, train_k, "--seed", "train.seed", "global seed");
  keyed_option(train, train_k, "--batch-size", "optimizer.batch_size_base", "batch size at the base level");
  keyed_option(train, train_k, "--lr", "optimizer.learning_rate", "learning rate at the base level");
  keyed_option(train, train_k, "--checkpoint-every", "train.checkpoint_every", "checkpoint period in iterations");
  train->add_option_function<std::string>(
      "--epochs",
      [&train_k](const std::string& v) {
        std::vector<std::string> parts;
        std::stringstream in(v);
        for (std::string p; std::getline(in, p, ',');) parts.push_back(p);
        if (parts.size() != 3) throw CLI::ValidationError("--epochs", "expected transition,stabilization,final");
        train_k.overrides["schedule.epochs_transition"] = parts[0];
        train_k.overrides["schedule.epochs_stabilization"] = parts[1];
        train_k.overrides["schedule.epochs_final_extra"] = parts[2];
      },
      "epochs per transition, stabilization and final phase  [keys: schedule.epochs_transition, "
      "schedule.epochs_stabilization, schedule.epochs_final_extra]");

  auto* predict = app.add_subcommand("predict", "predict future frames from a checkpoint");
  config_option(predict, predict_k);
  keyed_option(predict, predict_k, "--checkpoint", "io.checkpoint", "checkpoint file");
  keyed_option(predict, predict_k, "--input", "io.dataset", "dataset file holding the conditioning frames");
  keyed_option(predict, predict_k, "--video", "predict.video", "video index in the dataset");
  keyed_option(predict, predict_k, "--start", "predict.start", "first conditioning frame");
  keyed_option(predict, predict_k, "--steps", "predict.steps", "frames to predict (recursive beyond t_out)");
  keyed_option(predict, predict_k, "--out-dir", "io.out_dir", "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "per-frame MSE, PSNR and SSIM on a dataset");
  config_option(evaluate, eval_k);
  keyed_option(evaluate, eval_k, "--checkpoint", "io.checkpoint", "checkpoint file");
  keyed_option(evaluate, eval_k, "--dataset", "io.dataset", "test dataset file");
  keyed_option(evaluate, eval_k, "--baseline", "eval.baseline", "add a baseline curve (copylast)");
  keyed_option(evaluate, eval_k, "--long-term", "eval.long_term", "evaluate a recursive rollout of N frames");
  keyed_option(evaluate, eval_k, "--t-in", "network.t_in", "conditioning frames when no checkpoint is given");
  keyed_option(evaluate, eval_k, "--t-out", "network.t_out", "predicted frames when no checkpoint is given");
  keyed_option(evaluate, eval_k, "--stride", "train.window_stride", "window stride (0 = non-overlapping)");
  keyed_option(evaluate, eval_k, "--ssim-window", "eval.ssim_window", "uniform7 or gaussian11");
  keyed_option(evaluate, eval_k, "--batch-size", "eval.batch_size", "sequences per forward pass");
  keyed_option(evaluate, eval_k, "--flow", "eval.flow", "1 to write optical-flow maps for the first sequence");
  keyed_option(evaluate, eval_k, "--out", "io.out_dir", "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitIo;
  }

  try {
    if (gen->parsed()) return cmd_dataset_gen(gen_k);
    if (import->parsed()) return cmd_dataset_import(import_k);
    if (inspect->parsed()) return cmd_dataset_inspect(inspect_k);
    if (train->parsed()) return cmd_train(train_k);
    if (predict->parsed()) return cmd_predict(predict_k);
    if (evaluate->parsed()) return cmd_evaluate(eval_k);
  } catch (const ConfigConflictError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.diff();
    return kExitConflict;
  } catch (const TrainingFault& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitIo;
}
