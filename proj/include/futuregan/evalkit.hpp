#pragma once

// Frame-quality metrics, the copy-last baseline, recursive long-term prediction and dense
// optical flow.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "futuregan/videodata.hpp"
#include "json.hpp"

namespace futuregan::evalkit {

enum class SsimWindow {
  uniform7,    // 7x7 box window, sample covariance
  gaussian11,  // 11x11 Gaussian window, sigma 1.5
};

struct MetricOptions {
  double data_range = 2.0;  // max - min of the pixel scale the frames are expressed in
  SsimWindow window = SsimWindow::uniform7;
  double k1 = 0.01;
  double k2 = 0.03;
  double psnr_cap_db = 100.0;

  /// Frames in [-1, 1].
  static MetricOptions signed_unit() { return {}; }
  /// Frames in [0, 1].
  static MetricOptions unit() {
    MetricOptions o;
    o.data_range = 1.0;
    return o;
  }
};

std::string to_string(SsimWindow w);
SsimWindow ssim_window_from_string(const std::string& s);

struct FrameMetrics {
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

double psnr_from_mse(double mse, double data_range, double cap_db = 100.0);

/// pred, truth: (H, W) or (C, H, W). SSIM is averaged over channels.
FrameMetrics frame_metrics(const torch::Tensor& pred, const torch::Tensor& truth, const MetricOptions& options = {});
/// Batched form: (N, C, H, W) -> one entry per frame.
std::vector<FrameMetrics> frame_metrics_batch(const torch::Tensor& pred, const torch::Tensor& truth,
                                              const MetricOptions& options = {});

struct MetricsReport {
  std::vector<FrameMetrics> per_frame;
  FrameMetrics averaged;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// (B, C, t_in, H, W), t_out -> (B, C, t_out, H, W)
using Predictor = std::function<torch::Tensor(const torch::Tensor& input, int64_t t_out)>;

/// Repeats the last frame along the time axis (dimension -3). Accepts (C, T, H, W) or (B, C, T, H, W).
torch::Tensor copy_last_baseline(const torch::Tensor& z, int64_t t_out);
Predictor copy_last_predictor();

struct EvalOptions {
  int64_t batch_size = 64;
  MetricOptions metrics;
  std::string model_id = "model";
  std::string dataset_id = "dataset";
};

/// Per-frame metrics over every window, predictions clamped to [-1, 1] first.
MetricsReport evaluate(const Predictor& model, const videodata::VideoSet& videos, const videodata::Windows& windows,
                       const EvalOptions& options = {});

struct LongTermResult {
  torch::Tensor frames;  // (B, C, produced, H, W)
  int64_t passes = 0;
  int64_t requested = 0;
  bool partial = false;
  std::string failure;
};

/// Predicts t_out frames at a time, feeding them back as the most recent inputs, until n_steps
/// frames exist. A pass that throws or yields non-finite values ends the rollout as partial.
LongTermResult long_term_predict(const Predictor& model, const torch::Tensor& z, int64_t t_out, int64_t n_steps);

struct FlowParams {
  double pyramid_scale = 0.5;
  int levels = 3;
  int window = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.2;
  int border = 16;  // replicated margin added before and cropped after, keeps edge artifacts out of the field
};

/// Dense flow from frame_a to frame_b, both (H, W): uint8, or float in [-1, 1].
/// Returns (2, H, W) float with channel 0 the horizontal and channel 1 the vertical component.
torch::Tensor optical_flow(const torch::Tensor& frame_a, const torch::Tensor& frame_b, const FlowParams& params = {});

/// Hue from direction, value from magnitude (normalised by max_magnitude, or the field maximum
/// when it is <= 0). Returns (H, W, 3) uint8 RGB.
torch::Tensor flow_to_color(const torch::Tensor& flow, double max_magnitude = 0.0);

}  // namespace futuregan::evalkit
