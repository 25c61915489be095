// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 7        run only the listed criteria
//
// Exit status is 0 only when every selected criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "futuregan/error.hpp"
#include "futuregan/evalkit.hpp"
#include "futuregan/layers.hpp"
#include "futuregan/losses.hpp"
#include "futuregan/networks.hpp"
#include "futuregan/trainer.hpp"
#include "futuregan/videodata.hpp"

using namespace futuregan;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kPixelnormTol = 1e-3;
constexpr double kScaleInvarianceTol = 1e-6;
constexpr double kLossTol = 1e-5;
constexpr double kFiniteDiffRelTol = 1e-3;
constexpr double kLrTol = 1e-12;
constexpr double kCopyLastMse = 0.2580, kCopyLastMseTol = 0.030;
constexpr double kCopyLastSsim = 0.6791, kCopyLastSsimTol = 0.035;
constexpr double kOverfitMse = 0.05;
constexpr int64_t kOverfitMaxSteps = 1000;
constexpr double kFlowMedianTol = 0.5;
constexpr double kFlowStillTol = 1e-3;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    Outcome o{pass_, {}};
    for (const auto& n : notes_) o.detail += (o.detail.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) o.detail += (o.detail.empty() ? "" : "; ") + std::string("FAILED ") + f;
    return o;
  }

 private:
  bool pass_ = true;
  std::vector<std::string> notes_, failures_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ------------------------------------------------------------------------------------------

Outcome layer_properties() {
  Check c;
  torch::manual_seed(1);
  const auto x = torch::randn({4, 16, 3, 5, 5});
  const auto y = layers::pixelwise_feature_norm(x);
  const double ms_err = (y.pow(2).mean(1) - 1.0).abs().max().item<double>();
  c.note("mean-square error " + fmt(ms_err));
  c.expect(ms_err < kPixelnormTol, "unit mean square");
  c.expect(layers::pixelwise_feature_norm(torch::zeros({2, 8, 1, 2, 2})).abs().max().item<double>() == 0.0, "zero maps to zero");
  const double inv = (layers::pixelwise_feature_norm(x * 3.7) - y).abs().max().item<double>();
  c.note("scale invariance " + fmt(inv));
  c.expect(inv < kScaleInvarianceTol, "scale-direction invariance");

  const auto m = layers::minibatch_stddev(torch::randn({4, 8, 2, 4, 4}));
  const auto appended = m.select(1, 8);
  c.expect(m.size(1) == 9, "one appended map");
  c.expect((appended.max() - appended.min()).item<double>() == 0.0, "appended map constant");
  const auto same = torch::randn({1, 8, 2, 4, 4}).expand({4, 8, 2, 4, 4}).contiguous();
  c.expect(layers::minibatch_stddev(same).select(1, 8).abs().max().item<double>() == 0.0, "identical batch gives zero");
  const auto pair = torch::cat({torch::zeros({1, 3, 1, 2, 2}), torch::full({1, 3, 1, 2, 2}, 2.0)});
  const double hand = layers::minibatch_stddev_value(pair).item<double>();
  c.note("{0,2} value " + fmt(hand));
  c.expect(hand == 1.0, "hand value 1.0");
  return c.outcome();
}

Outcome loss_oracles() {
  Check c;
  const losses::LossCoefficients coef{10.0, 0.001};
  const auto real = torch::randn({3, 1, 4, 4, 4});
  const auto fake = torch::randn({3, 1, 4, 4, 4});
  for (double k : {0.0, 2.5}) {
    const losses::Critic constant = [k](const torch::Tensor& x) { return (x * 0.0).flatten(1).sum(1) + k; };
    const auto l = losses::discriminator_loss(constant, real, fake, coef, torch::rand({3}));
    const double expected = coef.lambda_gp + coef.epsilon_drift * k * k;
    const double got = l.total.item<double>();
    c.note("D=" + fmt(k) + ": L_D " + fmt(got));
    c.expect(std::abs(got - expected) < kLossTol, "constant critic c=" + fmt(k));
  }
  auto w = torch::randn({1, 1, 4, 4, 4});
  w = w / w.norm();
  const losses::Critic linear = [w](const torch::Tensor& x) { return (x * w).flatten(1).sum(1); };
  const double gp = losses::gradient_penalty(linear, real, fake, coef.lambda_gp, torch::rand({3})).value.item<double>();
  c.note("unit linear penalty " + fmt(gp));
  c.expect(std::abs(gp) < kLossTol, "unit-gradient linear critic");

  // Double-backward check against central differences on a small critic.
  auto gen = at::detail::createCPUGenerator(11);
  layers::ScaledConv3d conv(layers::ConvSpec::within_block(1, 3), gen);
  layers::ScaledLinear fc(3 * 2 * 4 * 4, 1, gen);
  conv->to(torch::kFloat64);
  fc->to(torch::kFloat64);
  {
    torch::NoGradGuard ng;
    for (auto& p : conv->parameters()) p.add_(0.1 * torch::randn(p.sizes(), torch::kFloat64));
    for (auto& p : fc->parameters()) p.add_(0.1 * torch::randn(p.sizes(), torch::kFloat64));
  }
  std::vector<torch::Tensor> params = conv->parameters();
  for (auto& p : fc->parameters()) params.push_back(p);
  int64_t count = 0;
  for (auto& p : params) count += p.numel();
  const losses::Critic small = [&](const torch::Tensor& x) {
    return fc->forward(layers::leaky_relu(conv->forward(x), 0.2).flatten(1)).squeeze(1);
  };
  const auto r2 = torch::randn({2, 1, 2, 4, 4}, torch::kFloat64);
  const auto f2 = torch::randn({2, 1, 2, 4, 4}, torch::kFloat64);
  const auto u = torch::tensor({0.3, 0.8}, torch::kFloat64);
  auto penalty = [&] { return losses::gradient_penalty(small, r2, f2, 10.0, u).value; };
  auto ad = torch::autograd::grad({penalty()}, params, {}, std::nullopt, false, /*allow_unused=*/true);
  for (size_t i = 0; i < ad.size(); ++i)
    if (!ad[i].defined()) ad[i] = torch::zeros_like(params[i]);
  double num = 0, den = 0;
  const double h = 1e-6;
  torch::NoGradGuard ng;
  for (size_t i = 0; i < params.size(); ++i) {
    auto flat = params[i].view(-1);
    const auto g = ad[i].view(-1);
    for (int64_t j = 0; j < flat.numel(); ++j) {
      const double orig = flat[j].item<double>();
      flat[j] = orig + h;
      double plus, minus;
      {
        torch::AutoGradMode on(true);
        plus = penalty().item<double>();
      }
      flat[j] = orig - h;
      {
        torch::AutoGradMode on(true);
        minus = penalty().item<double>();
      }
      flat[j] = orig;
      const double fd = (plus - minus) / (2 * h);
      num += std::pow(g[j].item<double>() - fd, 2);
      den += fd * fd;
    }
  }
  const double rel = std::sqrt(num / den);
  c.note(std::to_string(count) + "-parameter critic, finite-difference rel. error " + fmt(rel));
  c.expect(count <= 1000 && rel < kFiniteDiffRelTol, "penalty gradient");
  return c.outcome();
}

Outcome shape_growth() {
  Check c;
  networks::NetworkSpec spec;
  spec.final_resolution = 32;
  spec.t_in = spec.t_out = 4;
  spec.channels = 1;
  spec.base_feature_maps = 64;
  auto gen = at::detail::createCPUGenerator(5);
  networks::Generator g(spec, gen);
  networks::Discriminator d(spec, gen);
  torch::NoGradGuard ng;
  const int64_t b = 2;
  for (int64_t level = 0; level < spec.num_levels(); ++level) {
    if (level > 0) {
      std::map<std::string, torch::Tensor> before;
      for (const auto& p : g->named_parameters()) before["g/" + p.key()] = p.value().clone();
      for (const auto& p : d->named_parameters()) before["d/" + p.key()] = p.value().clone();
      g->grow(gen);
      d->grow(gen);
      bool kept = true;
      for (const auto& p : g->named_parameters())
        if (before.count("g/" + p.key())) kept = kept && torch::equal(before["g/" + p.key()], p.value());
      for (const auto& p : d->named_parameters())
        if (before.count("d/" + p.key())) kept = kept && torch::equal(before["d/" + p.key()], p.value());
      c.expect(kept, "parameters preserved across grow to level " + std::to_string(level));
    }
    const int64_t r = spec.resolution_at(level);
    const auto z = torch::randn({b, 1, 4, r, r});
    const auto x = torch::randn({b, 1, 8, r, r});
    std::vector<networks::PhaseState> phases = {{r, networks::PhaseKind::stabilization, 1.0}};
    if (level > 0)
      for (double a : {0.0, 0.5, 1.0}) phases.push_back({r, networks::PhaseKind::transition, a});
    for (const auto& ph : phases) {
      const auto gy = g->forward(z, ph);
      const auto dy = d->forward(x, ph);
      c.expect(gy.sizes() == torch::IntArrayRef({b, 1, 4, r, r}), "G shape at " + std::to_string(r));
      c.expect(dy.sizes() == torch::IntArrayRef({b}), "D shape at " + std::to_string(r));
    }
    if (level > 0) {
      const networks::PhaseState a0{r, networks::PhaseKind::transition, 0.0}, a1{r, networks::PhaseKind::transition, 1.0};
      const auto old_g = videodata::upsample_to_resolution(g->path(videodata::downsample_to_resolution(z, r / 2), level - 1), r);
      c.expect(torch::equal(g->forward(z, a0), old_g), "G alpha=0 equals upsampled old path at " + std::to_string(r));
      c.expect(torch::equal(g->forward(z, a1), g->path(z, level)), "G alpha=1 equals new path at " + std::to_string(r));
      const auto old_d = d->path(videodata::downsample_to_resolution(x, r / 2), level - 1);
      c.expect(torch::equal(d->forward(x, a0), old_d), "D alpha=0 equals old path at " + std::to_string(r));
      c.expect(torch::equal(d->forward(x, a1), d->path(x, level)), "D alpha=1 equals new path at " + std::to_string(r));
    }
  }
  c.note("levels 4..32 checked, G and D shapes, fade endpoints exact, growth preserves parameters");
  return c.outcome();
}

Outcome schedule_arithmetic() {
  Check c;
  const auto e64 = trainer::build_schedule(64).total_epochs();
  const auto e128 = trainer::build_schedule(128).total_epochs();
  c.note("epochs 64: " + std::to_string(e64) + ", 128: " + std::to_string(e128));
  c.expect(e64 == 120, "120 epochs at 64");
  c.expect(e128 == 140, "140 epochs at 128");
  trainer::OptimizerConfig opt;
  double worst = 0;
  double expected = 0.001;
  for (int level = 0; level < 6; ++level) {
    worst = std::max(worst, std::abs(trainer::lr_for_level(opt, level) - expected));
    expected *= 0.87;
  }
  c.note("lr max deviation " + fmt(worst));
  c.expect(worst < kLrTol, "lr sequence");
  return c.outcome();
}

const videodata::VideoSet& test_split() {
  static const videodata::VideoSet set = [] {
    videodata::MovingMnistConfig cfg;
    cfg.num_videos = 2250;
    cfg.video_length = 36;
    cfg.seed = 2250;
    return videodata::generate_moving_mnist(cfg, videodata::DigitGlyphs::load(videodata::DigitGlyphs::default_dir()));
  }();
  return set;
}

Outcome dataset_counts() {
  Check c;
  const auto& set = test_split();
  const auto w = videodata::window_sequences(set, {6, 6, 12});
  c.note(std::to_string(set.size()) + " videos -> " + std::to_string(w.size()) + " sequences");
  c.expect(w.size() == 6750, "6750 sequences");
  return c.outcome();
}

Outcome copylast_reproduction() {
  Check c;
  const auto& set = test_split();
  const auto w = videodata::window_sequences(set, {6, 6, 12});
  evalkit::EvalOptions opts;
  opts.batch_size = 256;
  const auto report = evalkit::evaluate(evalkit::copy_last_predictor(), set, w, opts);
  c.note("MSE " + fmt(report.averaged.mse) + " (target " + fmt(kCopyLastMse) + " +- " + fmt(kCopyLastMseTol) + "), SSIM " +
         fmt(report.averaged.ssim) + " (target " + fmt(kCopyLastSsim) + " +- " + fmt(kCopyLastSsimTol) + ")");
  c.expect(std::abs(report.averaged.mse - kCopyLastMse) <= kCopyLastMseTol, "MSE");
  c.expect(std::abs(report.averaged.ssim - kCopyLastSsim) <= kCopyLastSsimTol, "SSIM");
  return c.outcome();
}

Outcome overfit_smoke() {
  Check c;
  videodata::MovingMnistConfig mm;
  mm.num_videos = 1;
  mm.video_length = 12;
  mm.seed = 3;
  const auto data = videodata::generate_moving_mnist(mm, videodata::DigitGlyphs::load(videodata::DigitGlyphs::default_dir()));

  trainer::TrainConfig cfg;
  cfg.network.final_resolution = 16;
  cfg.network.base_feature_maps = 32;
  cfg.network.t_in = cfg.network.t_out = 6;
  cfg.optimizer.batch_size_base = 1;
  cfg.schedule = {40, 40, 760};
  cfg.checkpoint_every = 0;
  cfg.seed = 1;
  const int64_t steps = cfg.growth_schedule().total_epochs();  // one iteration per epoch
  auto state = trainer::TrainState::fresh(cfg);
  bool finite = true;
  trainer::RunOptions opts;
  opts.on_step = [&](const trainer::StepDiagnostics& d) {
    finite = finite && std::isfinite(d.d_total) && std::isfinite(d.g_loss);
  };
  bool fault = false;
  try {
    trainer::run_training(state, data, opts);
  } catch (const TrainingFault&) {
    fault = true;
  }
  const auto w = videodata::window_sequences(data, {6, 6, 0});
  const std::vector<int64_t> idx = {0};
  const auto batch = trainer::prepare_batch(videodata::gather(data, w, idx), {16, networks::PhaseKind::final, 1.0});
  torch::NoGradGuard ng;
  const auto pred = state.generator->forward(batch.input, {16, networks::PhaseKind::final, 1.0}).clamp(-1, 1);
  const double mse = (pred - batch.target).pow(2).mean().item<double>();
  c.note(std::to_string(steps) + " steps, generator MSE " + fmt(mse) + " (< " + fmt(kOverfitMse) + ")");
  c.expect(steps <= kOverfitMaxSteps, "step budget");
  c.expect(finite && !fault, "finite losses");
  c.expect(mse < kOverfitMse, "overfit MSE");
  return c.outcome();
}

Outcome long_term_mechanics() {
  Check c;
  int64_t calls = 0;
  const auto base = evalkit::copy_last_predictor();
  const evalkit::Predictor counted = [&](const torch::Tensor& in, int64_t t_out) {
    ++calls;
    return base(in, t_out);
  };
  const auto z = torch::rand({1, 1, 6, 8, 8}) * 2 - 1;
  const auto r = evalkit::long_term_predict(counted, z, 6, 30);
  c.note(std::to_string(r.passes) + " passes, " + std::to_string(r.frames.size(2)) + " frames");
  c.expect(r.passes == 5 && calls == 5, "5 passes");
  c.expect(r.frames.size(2) == 30 && !r.partial, "30 frames");
  const auto last = z.select(2, 5).unsqueeze(2).expand_as(r.frames);
  c.expect(torch::equal(r.frames, last), "constant output equal to last real frame");
  return c.outcome();
}

Outcome optical_flow_oracle() {
  Check c;
  torch::manual_seed(9);
  // Smooth texture: upsampled coarse noise.
  auto coarse = torch::rand({1, 1, 12, 12});
  auto tex = torch::nn::functional::interpolate(
                 coarse, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{80, 80})
                             .mode(torch::kBicubic).align_corners(false))[0][0];
  tex = (tex - tex.min()) / (tex.max() - tex.min()) * 255.0;
  const auto big = tex.round().clamp(0, 255).to(torch::kUInt8);
  const auto a = big.slice(0, 8, 72).slice(1, 8, 72).contiguous();
  const auto b = big.slice(0, 8, 72).slice(1, 6, 70).contiguous();  // content moves +2 px in x
  const auto flow = evalkit::optical_flow(a, b);
  const auto interior = flow.slice(1, 8, 56).slice(2, 8, 56);
  const auto err = (interior - torch::tensor({2.0f, 0.0f}).view({2, 1, 1})).pow(2).sum(0).sqrt();
  const double median = err.flatten().median().item<double>();
  const double still = evalkit::optical_flow(a, a).pow(2).sum(0).sqrt().max().item<double>();
  c.note("median interior error " + fmt(median) + " px, identical-frame max " + fmt(still) + " px");
  c.expect(flow.sizes() == torch::IntArrayRef({2, 64, 64}), "flow shape");
  c.expect(median < kFlowMedianTol, "translation recovered");
  c.expect(still < kFlowStillTol, "no motion");
  return c.outcome();
}

Outcome determinism_resume() {
  Check c;
  videodata::MovingMnistConfig mm;
  mm.num_videos = 5;
  mm.video_length = 36;
  mm.seed = 4;
  const auto data = videodata::generate_moving_mnist(mm, videodata::DigitGlyphs::load(videodata::DigitGlyphs::default_dir()));
  trainer::TrainConfig cfg;
  cfg.network.final_resolution = 8;
  cfg.network.base_feature_maps = 16;
  cfg.optimizer.batch_size_base = 2;
  cfg.schedule = {1, 1, 1};
  cfg.checkpoint_every = 0;
  cfg.seed = 77;

  auto run = [&](trainer::TrainState& s, int64_t stop) {
    std::vector<nlohmann::json> diags;
    trainer::RunOptions o;
    o.stop_after_step = stop;
    o.on_step = [&](const trainer::StepDiagnostics& d) { diags.push_back(d.to_json()); };
    trainer::run_training(s, data, o);
    return diags;
  };
  auto s1 = trainer::TrainState::fresh(cfg);
  auto s2 = trainer::TrainState::fresh(cfg);
  const auto a = run(s1, 50);
  const auto b = run(s2, 50);
  c.expect(a.size() == 50 && a == b, "same seed gives identical diagnostics for 50 steps");

  const auto dir = fs::temp_directory_path() / "futuregan_acceptance";
  fs::create_directories(dir);
  auto s3 = trainer::TrainState::fresh(cfg);
  auto first = run(s3, 20);
  trainer::save_checkpoint(s3, dir / "resume.fgc");
  auto s4 = trainer::load_checkpoint(dir / "resume.fgc");
  auto rest = run(s4, 50);
  first.insert(first.end(), rest.begin(), rest.end());
  c.expect(first == a, "resume at step 20 (across a growth step) reproduces steps 21..50");
  fs::remove_all(dir);
  c.note(std::to_string(a.size()) + " steps compared, resume at step 20");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"layer properties", layer_properties},
      {"loss oracles", loss_oracles},
      {"shape and growth", shape_growth},
      {"schedule arithmetic", schedule_arithmetic},
      {"dataset counts", dataset_counts},
      {"copy-last reproduction", copylast_reproduction},
      {"end-to-end overfit", overfit_smoke},
      {"long-term mechanics", long_term_mechanics},
      {"optical-flow oracle", optical_flow_oracle},
      {"determinism and resume", determinism_resume},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %-24s %7.1fs  %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
