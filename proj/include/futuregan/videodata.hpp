#pragma once

// Video datasets: synthetic MovingMNIST, generic frame folders, sequence windowing and the
// resolution pipeline used while the networks grow.
//
// Frames are stored as 8-bit intensities and mapped to [-1, 1] when gathered into batches.
// Batches follow the (batch, channel, time, height, width) layout throughout the library.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace futuregan::videodata {

inline constexpr int64_t kGlyphSize = 28;
inline constexpr int64_t kNumDigitClasses = 10;

struct MovingMnistConfig {
  int64_t num_videos = 1;
  int64_t video_length = 36;
  int64_t canvas = 64;
  int64_t digits_per_video = 2;
  double speed_min = 3.0;  // px/frame
  double speed_max = 5.0;
  uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct SequenceWindowing {
  int64_t t_in = 6;
  int64_t t_out = 6;
  int64_t stride = 0;  // 0 selects non-overlapping windows (t_in + t_out)

  int64_t window() const { return t_in + t_out; }
  int64_t effective_stride() const { return stride > 0 ? stride : window(); }
  void validate() const;
  /// floor((length - window) / stride) + 1, or 0 when the window does not fit.
  int64_t count_for_length(int64_t length) const;
};

/// Labelled 28x28 digit images read from IDX files (the MNIST distribution format).
struct DigitGlyphs {
  torch::Tensor images;  // (N, 28, 28) uint8
  std::vector<uint8_t> labels;
  std::array<std::vector<int64_t>, kNumDigitClasses> by_class;

  /// Reads train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz] from `dir`.
  static DigitGlyphs load(const std::filesystem::path& dir);
  /// $FUTUREGAN_GLYPHS if set, else the bundled data/mnist directory.
  static std::filesystem::path default_dir();
};

/// Immutable collection of videos. Each video is a (C, L, H, W) uint8 tensor; all share C, H, W.
class VideoSet {
 public:
  VideoSet() = default;
  VideoSet(std::vector<torch::Tensor> videos, int64_t channels, int64_t resolution,
           nlohmann::json meta = nlohmann::json::object());

  int64_t size() const { return static_cast<int64_t>(videos_.size()); }
  bool empty() const { return videos_.empty(); }
  int64_t channels() const { return channels_; }
  int64_t resolution() const { return resolution_; }
  int64_t length(int64_t i) const { return videos_.at(static_cast<size_t>(i)).size(1); }
  const torch::Tensor& video(int64_t i) const { return videos_.at(static_cast<size_t>(i)); }
  const nlohmann::json& meta() const { return meta_; }

  /// Frames [start, start + count) of video i as float (C, count, H, W) in [-1, 1].
  torch::Tensor frames(int64_t i, int64_t start, int64_t count) const;

  /// Container: magic, JSON manifest (shape, lengths, generator config), dense frame array.
  void save(const std::filesystem::path& path) const;
  static VideoSet load(const std::filesystem::path& path);
  nlohmann::json manifest() const;

 private:
  std::vector<torch::Tensor> videos_;
  int64_t channels_ = 1;
  int64_t resolution_ = 0;
  nlohmann::json meta_ = nlohmann::json::object();
};

VideoSet generate_moving_mnist(const MovingMnistConfig& config, const DigitGlyphs& glyphs);

struct WindowRef {
  int64_t video = 0;
  int64_t start = 0;
};

struct Windows {
  SequenceWindowing spec;
  std::vector<WindowRef> refs;
  int64_t skipped = 0;  // videos too short for a single window

  int64_t size() const { return static_cast<int64_t>(refs.size()); }
};

Windows window_sequences(const VideoSet& videos, const SequenceWindowing& windowing);

/// input: (B, C, t_in, H, W); target: (B, C, t_out, H, W)
struct SequenceBatch {
  torch::Tensor input;
  torch::Tensor target;
};

SequenceBatch gather(const VideoSet& videos, const Windows& windows,
                     std::span<const int64_t> indices);

/// Permutation of [0, n) that depends only on (seed, epoch).
std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch);

/// Spatial nearest-neighbour reduction of the two trailing axes to r x r.
torch::Tensor downsample_to_resolution(const torch::Tensor& batch, int64_t r);
/// Spatial nearest-neighbour enlargement of the two trailing axes to r x r.
torch::Tensor upsample_to_resolution(const torch::Tensor& batch, int64_t r);
/// alpha * batch + (1 - alpha) * upsample(downsample(batch, r / 2), r)
torch::Tensor blend_transition_input(const torch::Tensor& batch, double alpha);

struct FolderLoadOptions {
  int64_t resolution = 128;
  int64_t channels = 1;  // 1 = grayscale, 3 = RGB
};

struct FolderLoadResult {
  VideoSet videos;
  std::vector<std::string> diagnostics;  // one entry per rejected video
};

/// Each subdirectory of `root` is one video; its image files, sorted by name, are the frames.
FolderLoadResult load_video_folder(const std::filesystem::path& root,
                                   const FolderLoadOptions& options);

}  // namespace futuregan::videodata
