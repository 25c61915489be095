#pragma once

// Image artifacts: 8-bit frame conversion, PNG and animated GIF output, frame strips and
// metric curve plots.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace futuregan::imageio {

/// Float frames in [-1, 1] (clamped) -> uint8 with the fixed mapping round((x + 1) * 127.5).
torch::Tensor to_u8(const torch::Tensor& frames);

/// (C, H, W) uint8 with C in {1, 3} -> (H, W) or (H, W, 3).
torch::Tensor to_hwc(const torch::Tensor& chw);

/// img: (H, W) gray or (H, W, 3) RGB uint8.
std::string encode_png(const torch::Tensor& img);
void write_png(const std::filesystem::path& path, const torch::Tensor& img);

/// Looping GIF89a. Gray frames use a 256-level gray palette; RGB frames a fixed 6x7x6 cube.
std::string encode_gif(const std::vector<torch::Tensor>& frames, int delay_centiseconds = 20);
void write_gif(const std::filesystem::path& path, const std::vector<torch::Tensor>& frames,
               int delay_centiseconds = 20);

/// Frames side by side, separated by `gap` white columns, each enlarged by an integer `scale`.
torch::Tensor make_strip(const std::vector<torch::Tensor>& frames, int64_t gap = 2, int64_t scale = 1);

struct Series {
  std::string name;
  std::vector<double> values;  // index i is plotted at x = i + 1
};

/// Line plot of one or more series against frame index, written as PNG.
void plot_curves(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                 const std::vector<Series>& series, const std::string& x_label = "predicted frame");

}  // namespace futuregan::imageio
