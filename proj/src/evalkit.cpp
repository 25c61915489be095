#include "futuregan/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <opencv2/imgproc.hpp>
#include <opencv2/video/tracking.hpp>

#include "futuregan/error.hpp"

namespace futuregan::evalkit {

namespace F = torch::nn::functional;

std::string to_string(SsimWindow w) { return w == SsimWindow::uniform7 ? "uniform7" : "gaussian11"; }

SsimWindow ssim_window_from_string(const std::string& s) {
  if (s == "uniform7") return SsimWindow::uniform7;
  if (s == "gaussian11") return SsimWindow::gaussian11;
  throw ValidationError("unknown SSIM window '" + s + "' (expected uniform7 or gaussian11)");
}

double psnr_from_mse(double mse, double data_range, double cap_db) {
  const double ratio = mse / (data_range * data_range);
  if (ratio < 1e-10) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(1.0 / ratio));
}

namespace {

double sum_sorted(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0);
}

torch::Tensor gaussian_kernel() {
  auto ax = torch::arange(11, torch::kFloat64) - 5.0;
  auto g = torch::exp(-(ax * ax) / (2.0 * 1.5 * 1.5));
  g = g / g.sum();
  return torch::outer(g, g).view({1, 1, 11, 11});
}

// (M, 1, H, W) float64 -> (M,) mean SSIM over valid windows
torch::Tensor ssim_planes(const torch::Tensor& x, const torch::Tensor& y, const MetricOptions& o) {
  const int64_t win = o.window == SsimWindow::uniform7 ? 7 : 11;
  if (x.size(2) < win || x.size(3) < win)
    throw DimensionError("SSIM needs frames of at least " + std::to_string(win) + "x" + std::to_string(win) +
                         ", got " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
  std::function<torch::Tensor(const torch::Tensor&)> filt;
  double cov_scale = 1.0;
  if (o.window == SsimWindow::uniform7) {
    filt = [](const torch::Tensor& t) { return F::avg_pool2d(t, F::AvgPool2dFuncOptions(7).stride(1)); };
    cov_scale = 49.0 / 48.0;
  } else {
    const auto k = gaussian_kernel();
    filt = [k](const torch::Tensor& t) { return F::conv2d(t, k); };
  }
  const double c1 = std::pow(o.k1 * o.data_range, 2);
  const double c2 = std::pow(o.k2 * o.data_range, 2);
  const auto mx = filt(x), my = filt(y);
  const auto sxx = (filt(x * x) - mx * mx) * cov_scale;
  const auto syy = (filt(y * y) - my * my) * cov_scale;
  const auto sxy = (filt(x * y) - mx * my) * cov_scale;
  const auto num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
  const auto den = (mx * mx + my * my + c1) * (sxx + syy + c2);
  return (num / den).flatten(1).mean(1);
}

}  // namespace

std::vector<FrameMetrics> frame_metrics_batch(const torch::Tensor& pred, const torch::Tensor& truth,
                                              const MetricOptions& options) {
  if (pred.sizes() != truth.sizes())
    throw DimensionError("metric inputs differ in shape: " + c10::str(pred.sizes()) + " vs " + c10::str(truth.sizes()));
  if (pred.dim() != 4) throw DimensionError("expected (N, C, H, W) frames, got " + c10::str(pred.sizes()));
  torch::NoGradGuard no_grad;
  const auto p = pred.to(torch::kFloat64);
  const auto t = truth.to(torch::kFloat64);
  const int64_t n = p.size(0), c = p.size(1);
  const auto mse = (p - t).pow(2).flatten(1).mean(1);
  const auto ssim =
      ssim_planes(p.reshape({n * c, 1, p.size(2), p.size(3)}), t.reshape({n * c, 1, t.size(2), t.size(3)}), options)
          .view({n, c})
          .mean(1);
  const auto mse_a = mse.accessor<double, 1>();
  const auto ssim_a = ssim.accessor<double, 1>();
  std::vector<FrameMetrics> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] = {mse_a[i], psnr_from_mse(mse_a[i], options.data_range, options.psnr_cap_db), ssim_a[i]};
  return out;
}

FrameMetrics frame_metrics(const torch::Tensor& pred, const torch::Tensor& truth, const MetricOptions& options) {
  if (pred.sizes() != truth.sizes())
    throw DimensionError("metric inputs differ in shape: " + c10::str(pred.sizes()) + " vs " + c10::str(truth.sizes()));
  if (pred.dim() == 2) return frame_metrics_batch(pred.view({1, 1, pred.size(0), pred.size(1)}),
                                                  truth.view({1, 1, truth.size(0), truth.size(1)}), options)[0];
  if (pred.dim() == 3) return frame_metrics_batch(pred.unsqueeze(0), truth.unsqueeze(0), options)[0];
  throw DimensionError("expected an (H, W) or (C, H, W) frame, got " + c10::str(pred.sizes()));
}

nlohmann::json MetricsReport::to_json() const {
  auto row = [](const FrameMetrics& m) { return nlohmann::json{{"mse", m.mse}, {"psnr_db", m.psnr_db}, {"ssim", m.ssim}}; };
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& m : per_frame) frames.push_back(row(m));
  return {{"per_frame", frames}, {"averaged", row(averaged)}, {"metadata", metadata}};
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "frame,mse,psnr_db,ssim\n";
  for (size_t i = 0; i < per_frame.size(); ++i)
    out << i + 1 << ',' << per_frame[i].mse << ',' << per_frame[i].psnr_db << ',' << per_frame[i].ssim << '\n';
  out << "mean," << averaged.mse << ',' << averaged.psnr_db << ',' << averaged.ssim << '\n';
  return out.str();
}

torch::Tensor copy_last_baseline(const torch::Tensor& z, int64_t t_out) {
  if (t_out < 1) throw ValidationError("t_out must be at least 1");
  if (z.dim() != 4 && z.dim() != 5) throw DimensionError("expected (C, T, H, W) or (B, C, T, H, W), got " + c10::str(z.sizes()));
  const int64_t tdim = z.dim() - 3;
  if (z.size(tdim) == 0) throw ValidationError("copy-last needs at least one input frame");
  auto sizes = z.sizes().vec();
  sizes[static_cast<size_t>(tdim)] = t_out;
  return z.narrow(tdim, z.size(tdim) - 1, 1).expand(sizes).contiguous();
}

Predictor copy_last_predictor() {
  return [](const torch::Tensor& input, int64_t t_out) { return copy_last_baseline(input, t_out); };
}

MetricsReport evaluate(const Predictor& model, const videodata::VideoSet& videos, const videodata::Windows& windows,
                       const EvalOptions& options) {
  if (windows.size() == 0) throw ValidationError("evaluation split has no sequences");
  if (options.batch_size < 1) throw ValidationError("batch size must be at least 1");
  const int64_t t_out = windows.spec.t_out;
  std::vector<std::vector<double>> mse(static_cast<size_t>(t_out)), psnr(mse), ssim(mse);

  torch::NoGradGuard no_grad;
  std::vector<int64_t> idx;
  for (int64_t begin = 0; begin < windows.size(); begin += options.batch_size) {
    const int64_t end = std::min(windows.size(), begin + options.batch_size);
    idx.resize(static_cast<size_t>(end - begin));
    std::iota(idx.begin(), idx.end(), begin);
    const auto batch = videodata::gather(videos, windows, idx);
    auto pred = model(batch.input, t_out);
    if (pred.sizes() != batch.target.sizes())
      throw DimensionError("model output " + c10::str(pred.sizes()) + " does not match the target shape " +
                           c10::str(batch.target.sizes()));
    pred = pred.clamp(-1.0, 1.0);
    for (int64_t t = 0; t < t_out; ++t) {
      const auto frames = frame_metrics_batch(pred.select(2, t), batch.target.select(2, t), options.metrics);
      for (const auto& m : frames) {
        mse[static_cast<size_t>(t)].push_back(m.mse);
        psnr[static_cast<size_t>(t)].push_back(m.psnr_db);
        ssim[static_cast<size_t>(t)].push_back(m.ssim);
      }
    }
  }

  MetricsReport report;
  const double n = static_cast<double>(windows.size());
  for (int64_t t = 0; t < t_out; ++t) {
    const auto i = static_cast<size_t>(t);
    report.per_frame.push_back({sum_sorted(mse[i]) / n, sum_sorted(psnr[i]) / n, sum_sorted(ssim[i]) / n});
  }
  for (const auto& m : report.per_frame) {
    report.averaged.mse += m.mse / static_cast<double>(t_out);
    report.averaged.psnr_db += m.psnr_db / static_cast<double>(t_out);
    report.averaged.ssim += m.ssim / static_cast<double>(t_out);
  }
  report.metadata = {{"model", options.model_id},
                     {"dataset", options.dataset_id},
                     {"t_in", windows.spec.t_in},
                     {"t_out", t_out},
                     {"resolution", videos.resolution()},
                     {"samples", windows.size()},
                     {"data_range", options.metrics.data_range},
                     {"ssim_window", to_string(options.metrics.window)}};
  return report;
}

LongTermResult long_term_predict(const Predictor& model, const torch::Tensor& z, int64_t t_out, int64_t n_steps) {
  if (z.dim() != 5) throw DimensionError("expected (B, C, T, H, W) input, got " + c10::str(z.sizes()));
  if (t_out < 1) throw ValidationError("t_out must be at least 1");
  if (n_steps < t_out)
    throw ValidationError("n_steps (" + std::to_string(n_steps) + ") must be at least t_out (" + std::to_string(t_out) + ")");
  const int64_t t_in = z.size(2);
  LongTermResult result;
  result.requested = n_steps;
  torch::NoGradGuard no_grad;
  auto history = z;
  std::vector<torch::Tensor> produced;
  int64_t count = 0;
  while (count < n_steps) {
    torch::Tensor out;
    try {
      out = model(history.narrow(2, history.size(2) - t_in, t_in), t_out);
      if (out.dim() != 5 || out.size(2) != t_out || out.size(0) != z.size(0) || out.size(1) != z.size(1) ||
          out.size(3) != z.size(3) || out.size(4) != z.size(4))
        throw DimensionError("model output " + c10::str(out.sizes()) + " has the wrong shape");
      if (!torch::isfinite(out).all().item<bool>()) throw TrainingFault("model produced non-finite frames");
    } catch (const std::exception& e) {
      result.partial = true;
      result.failure = e.what();
      break;
    }
    ++result.passes;
    produced.push_back(out);
    count += t_out;
    history = torch::cat({history, out}, 2);
  }
  if (produced.empty()) {
    auto sizes = z.sizes().vec();
    sizes[2] = 0;
    result.frames = torch::empty(sizes, z.options());
  } else {
    result.frames = torch::cat(produced, 2).narrow(2, 0, std::min(count, n_steps)).contiguous();
  }
  return result;
}

namespace {

cv::Mat to_gray8(const torch::Tensor& frame) {
  if (frame.dim() != 2) throw DimensionError("optical flow expects (H, W) frames, got " + c10::str(frame.sizes()));
  torch::Tensor u8;
  if (frame.scalar_type() == torch::kUInt8) {
    u8 = frame.contiguous();
  } else {
    u8 = ((frame.to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 127.5).round().to(torch::kUInt8).contiguous();
  }
  return cv::Mat(static_cast<int>(u8.size(0)), static_cast<int>(u8.size(1)), CV_8UC1, u8.data_ptr()).clone();
}

}  // namespace

torch::Tensor optical_flow(const torch::Tensor& frame_a, const torch::Tensor& frame_b, const FlowParams& p) {
  if (frame_a.sizes() != frame_b.sizes())
    throw DimensionError("flow frames differ in shape: " + c10::str(frame_a.sizes()) + " vs " + c10::str(frame_b.sizes()));
  if (p.border < 0) throw ValidationError("flow border must be >= 0");
  cv::Mat a, b;
  cv::copyMakeBorder(to_gray8(frame_a), a, p.border, p.border, p.border, p.border, cv::BORDER_REPLICATE);
  cv::copyMakeBorder(to_gray8(frame_b), b, p.border, p.border, p.border, p.border, cv::BORDER_REPLICATE);
  cv::Mat flow;
  cv::calcOpticalFlowFarneback(a, b, flow, p.pyramid_scale, p.levels, p.window, p.iterations, p.poly_n, p.poly_sigma, 0);
  const cv::Mat inner = flow(cv::Rect(p.border, p.border, flow.cols - 2 * p.border, flow.rows - 2 * p.border)).clone();
  auto t = torch::from_blob(inner.data, {inner.rows, inner.cols, 2}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous();
}

torch::Tensor flow_to_color(const torch::Tensor& flow, double max_magnitude) {
  if (flow.dim() != 3 || flow.size(0) != 2) throw DimensionError("expected a (2, H, W) flow field, got " + c10::str(flow.sizes()));
  const auto f = flow.to(torch::kFloat32).contiguous();
  const int rows = static_cast<int>(f.size(1)), cols = static_cast<int>(f.size(2));
  cv::Mat fx(rows, cols, CV_32F, f[0].data_ptr()), fy(rows, cols, CV_32F, f[1].data_ptr());
  cv::Mat mag, ang;
  cv::cartToPolar(fx, fy, mag, ang, true);
  double peak = max_magnitude;
  if (peak <= 0) cv::minMaxLoc(mag, nullptr, &peak);
  cv::Mat h, s(rows, cols, CV_8U, cv::Scalar(255)), v;
  ang.convertTo(h, CV_8U, 0.5);
  mag.convertTo(v, CV_8U, peak > 0 ? 255.0 / peak : 0.0);
  cv::Mat hsv, rgb;
  cv::merge(std::vector<cv::Mat>{h, s, v}, hsv);
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  return torch::from_blob(rgb.data, {rows, cols, 3}, torch::kUInt8).clone();
}

}  // namespace futuregan::evalkit
