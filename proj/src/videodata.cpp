#include "futuregan/videodata.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <zlib.h>

#include "futuregan/error.hpp"
#include "futuregan/fileio.hpp"
#include "futuregan/random.hpp"

#ifndef FUTUREGAN_DEFAULT_DATA_DIR
#define FUTUREGAN_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;

namespace futuregan::videodata {

namespace {

constexpr char kContainerMagic[8] = {'F', 'G', 'V', 'I', 'D', 'S', 'E', 'T'};
constexpr int kContainerVersion = 1;

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// gzread reads plain files transparently, so both .gz and raw IDX files work.
std::string read_maybe_gzipped(const fs::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  int n = 0;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<size_t>(n));
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw IoError("decompression failed: " + path.string());
  return out;
}

uint32_t be32(const std::string& s, size_t off) {
  if (off + 4 > s.size()) throw IoError("truncated IDX header");
  auto b = [&](size_t i) { return static_cast<uint32_t>(static_cast<unsigned char>(s[off + i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

fs::path find_idx(const fs::path& dir, const std::string& stem) {
  for (const auto* suffix : {"", ".gz"}) {
    fs::path p = dir / (stem + suffix);
    if (fs::exists(p)) return p;
  }
  throw IoError("digit glyph file " + stem + "[.gz] not found in " + dir.string());
}

void draw_max(uint8_t* frame, int64_t canvas, const uint8_t* glyph, int64_t x, int64_t y) {
  for (int64_t gy = 0; gy < kGlyphSize; ++gy) {
    uint8_t* row = frame + (y + gy) * canvas + x;
    const uint8_t* src = glyph + gy * kGlyphSize;
    for (int64_t gx = 0; gx < kGlyphSize; ++gx) row[gx] = std::max(row[gx], src[gx]);
  }
}

}  // namespace

void MovingMnistConfig::validate() const {
  if (num_videos < 1) throw ValidationError("num_videos must be >= 1");
  if (video_length < 1) throw ValidationError("video_length must be >= 1");
  if (canvas < kGlyphSize) throw ValidationError("canvas must be >= the 28 px glyph size");
  if (digits_per_video < 1 || digits_per_video > kNumDigitClasses)
    throw ValidationError("digits_per_video must be in [1, 10] (classes are distinct)");
  if (!(speed_min >= 0.0) || !(speed_max >= speed_min))
    throw ValidationError("speed range must satisfy 0 <= speed_min <= speed_max");
  if (speed_max > static_cast<double>(canvas - kGlyphSize))
    throw ValidationError("speed_max must not exceed the free travel range canvas - 28");
}

nlohmann::json MovingMnistConfig::to_json() const {
  return {{"num_videos", num_videos},       {"video_length", video_length},
          {"canvas", canvas},               {"digits_per_video", digits_per_video},
          {"speed_min", speed_min},         {"speed_max", speed_max},
          {"seed", seed}};
}

void SequenceWindowing::validate() const {
  if (t_in < 1 || t_out < 1) throw ValidationError("t_in and t_out must be >= 1");
  if (stride < 0) throw ValidationError("stride must be >= 1 (or 0 for non-overlapping)");
}

int64_t SequenceWindowing::count_for_length(int64_t length) const {
  if (length < window()) return 0;
  return (length - window()) / effective_stride() + 1;
}

DigitGlyphs DigitGlyphs::load(const fs::path& dir) {
  const std::string img = read_maybe_gzipped(find_idx(dir, "train-images-idx3-ubyte"));
  const std::string lab = read_maybe_gzipped(find_idx(dir, "train-labels-idx1-ubyte"));
  if (be32(img, 0) != 2051 || be32(lab, 0) != 2049) throw IoError("bad IDX magic in " + dir.string());
  const int64_t n = be32(img, 4);
  const int64_t rows = be32(img, 8);
  const int64_t cols = be32(img, 12);
  if (rows != kGlyphSize || cols != kGlyphSize) throw IoError("digit glyphs must be 28x28");
  if (static_cast<int64_t>(be32(lab, 4)) != n) throw IoError("image/label count mismatch");
  if (img.size() < 16 + static_cast<size_t>(n * rows * cols) || lab.size() < 8 + static_cast<size_t>(n))
    throw IoError("truncated IDX payload");

  DigitGlyphs g;
  g.images = torch::empty({n, rows, cols}, torch::kUInt8);
  std::memcpy(g.images.data_ptr<uint8_t>(), img.data() + 16, static_cast<size_t>(n * rows * cols));
  g.labels.assign(lab.begin() + 8, lab.begin() + 8 + n);
  for (int64_t i = 0; i < n; ++i) {
    const auto label = g.labels[static_cast<size_t>(i)];
    if (label >= kNumDigitClasses) throw IoError("digit label out of range");
    g.by_class[label].push_back(i);
  }
  return g;
}

fs::path DigitGlyphs::default_dir() {
  if (const char* env = std::getenv("FUTUREGAN_GLYPHS"); env != nullptr && *env != '\0') return env;
  return fs::path(FUTUREGAN_DEFAULT_DATA_DIR) / "mnist";
}

VideoSet::VideoSet(std::vector<torch::Tensor> videos, int64_t channels, int64_t resolution,
                   nlohmann::json meta)
    : videos_(std::move(videos)), channels_(channels), resolution_(resolution), meta_(std::move(meta)) {
  if (channels_ != 1 && channels_ != 3) throw ValidationError("channels must be 1 or 3");
  for (const auto& v : videos_) {
    if (v.dim() != 4 || v.size(0) != channels_ || v.size(2) != resolution_ || v.size(3) != resolution_ ||
        v.scalar_type() != torch::kUInt8)
      throw DimensionError("videos must be uint8 (C, L, H, W) with shared C and H == W == resolution");
  }
}

torch::Tensor VideoSet::frames(int64_t i, int64_t start, int64_t count) const {
  const auto& v = video(i);
  if (start < 0 || count < 0 || start + count > v.size(1)) throw DimensionError("time axis: frame range out of bounds");
  return v.narrow(1, start, count).to(torch::kFloat32).div_(127.5).sub_(1.0);
}

nlohmann::json VideoSet::manifest() const {
  std::vector<int64_t> lengths;
  lengths.reserve(videos_.size());
  for (const auto& v : videos_) lengths.push_back(v.size(1));
  return {{"format_version", kContainerVersion},
          {"channels", channels_},
          {"resolution", resolution_},
          {"num_videos", size()},
          {"lengths", lengths},
          {"dtype", "uint8"},
          {"layout", "video-major (C, L, H, W)"},
          {"meta", meta_}};
}

void VideoSet::save(const fs::path& path) const {
  const std::string header = manifest().dump();
  std::string bytes(kContainerMagic, sizeof kContainerMagic);
  fileio::put_u64(bytes, header.size());
  bytes += header;
  uint64_t payload = 0;
  for (const auto& v : videos_) payload += static_cast<uint64_t>(v.numel());
  fileio::put_u64(bytes, payload);
  bytes.reserve(bytes.size() + payload);
  for (const auto& v : videos_) {
    const auto c = v.contiguous();
    bytes.append(reinterpret_cast<const char*>(c.data_ptr<uint8_t>()), static_cast<size_t>(c.numel()));
  }
  fileio::atomic_write(path, bytes);
}

VideoSet VideoSet::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  auto read_exact = [&](char* dst, size_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw IoError("truncated dataset container " + path.string());
  };
  char magic[8];
  read_exact(magic, 8);
  if (!std::equal(magic, magic + 8, kContainerMagic)) throw IoError("not a video container: " + path.string());
  char num[8];
  read_exact(num, 8);
  const uint64_t header_len = fileio::get_u64(std::string_view(num, 8), 0);
  if (header_len > (1ULL << 32)) throw IoError("corrupt manifest length");
  std::string header(header_len, '\0');
  read_exact(header.data(), header_len);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt manifest: ") + e.what());
  }
  if (m.value("format_version", 0) != kContainerVersion) throw IoError("unsupported container version");
  read_exact(num, 8);
  const uint64_t payload = fileio::get_u64(std::string_view(num, 8), 0);

  const int64_t channels = m.at("channels");
  const int64_t res = m.at("resolution");
  const auto lengths = m.at("lengths").get<std::vector<int64_t>>();
  uint64_t expected = 0;
  for (auto l : lengths) expected += static_cast<uint64_t>(channels * l * res * res);
  if (expected != payload) throw IoError("manifest does not match payload size");

  auto blob = torch::empty({static_cast<int64_t>(payload)}, torch::kUInt8);
  read_exact(reinterpret_cast<char*>(blob.data_ptr<uint8_t>()), payload);

  std::vector<torch::Tensor> videos;
  videos.reserve(lengths.size());
  int64_t offset = 0;
  for (auto l : lengths) {
    const int64_t n = channels * l * res * res;
    videos.push_back(blob.narrow(0, offset, n).view({channels, l, res, res}));
    offset += n;
  }
  return VideoSet(std::move(videos), channels, res, m.value("meta", nlohmann::json::object()));
}

VideoSet generate_moving_mnist(const MovingMnistConfig& config, const DigitGlyphs& glyphs) {
  config.validate();
  for (int c = 0; c < kNumDigitClasses; ++c)
    if (glyphs.by_class[c].empty()) throw IoError("digit glyph source has no samples of class " + std::to_string(c));

  std::mt19937_64 rng(derive_seed(config.seed, Stream::dataset));
  const int64_t s = config.canvas;
  const int64_t len = config.video_length;
  const double travel = static_cast<double>(s - kGlyphSize);
  const auto glyph_data = glyphs.images.contiguous();
  const uint8_t* glyph_base = glyph_data.data_ptr<uint8_t>();

  auto all = torch::zeros({config.num_videos, 1, len, s, s}, torch::kUInt8);
  uint8_t* out = all.data_ptr<uint8_t>();
  std::vector<torch::Tensor> videos;
  videos.reserve(static_cast<size_t>(config.num_videos));

  for (int64_t v = 0; v < config.num_videos; ++v) {
    std::array<int, kNumDigitClasses> classes{};
    for (int c = 0; c < kNumDigitClasses; ++c) classes[c] = c;
    for (int64_t d = 0; d < config.digits_per_video; ++d) {
      const int64_t j = d + uniform_index(rng, kNumDigitClasses - d);
      std::swap(classes[d], classes[j]);
    }
    uint8_t* video = out + v * len * s * s;
    for (int64_t d = 0; d < config.digits_per_video; ++d) {
      const auto& pool = glyphs.by_class[classes[d]];
      const int64_t glyph = pool[static_cast<size_t>(uniform_index(rng, static_cast<int64_t>(pool.size())))];
      const uint8_t* g = glyph_base + glyph * kGlyphSize * kGlyphSize;

      double pos[2] = {uniform01(rng) * travel, uniform01(rng) * travel};
      const double angle = uniform01(rng) * 2.0 * std::numbers::pi;
      const double speed = config.speed_min + uniform01(rng) * (config.speed_max - config.speed_min);
      double vel[2] = {speed * std::cos(angle), speed * std::sin(angle)};

      for (int64_t t = 0; t < len; ++t) {
        const auto x = static_cast<int64_t>(std::lround(pos[0]));
        const auto y = static_cast<int64_t>(std::lround(pos[1]));
        draw_max(video + t * s * s, s, g, x, y);
        for (int a = 0; a < 2; ++a) {
          pos[a] += vel[a];
          if (pos[a] < 0.0) {
            pos[a] = -pos[a];
            vel[a] = -vel[a];
          } else if (pos[a] > travel) {
            pos[a] = 2.0 * travel - pos[a];
            vel[a] = -vel[a];
          }
        }
      }
    }
    videos.push_back(all[v]);
  }
  nlohmann::json meta = {{"source", "moving_mnist"}, {"config", config.to_json()}};
  return VideoSet(std::move(videos), 1, s, std::move(meta));
}

Windows window_sequences(const VideoSet& videos, const SequenceWindowing& windowing) {
  windowing.validate();
  Windows w;
  w.spec = windowing;
  for (int64_t i = 0; i < videos.size(); ++i) {
    const int64_t n = windowing.count_for_length(videos.length(i));
    if (n == 0) {
      ++w.skipped;
      continue;
    }
    for (int64_t k = 0; k < n; ++k) w.refs.push_back({i, k * windowing.effective_stride()});
  }
  return w;
}

SequenceBatch gather(const VideoSet& videos, const Windows& windows, std::span<const int64_t> indices) {
  if (indices.empty()) throw ValidationError("empty batch");
  std::vector<torch::Tensor> inputs;
  std::vector<torch::Tensor> targets;
  inputs.reserve(indices.size());
  targets.reserve(indices.size());
  const auto& spec = windows.spec;
  for (int64_t idx : indices) {
    const auto& ref = windows.refs.at(static_cast<size_t>(idx));
    auto clip = videos.frames(ref.video, ref.start, spec.window());
    inputs.push_back(clip.narrow(1, 0, spec.t_in));
    targets.push_back(clip.narrow(1, spec.t_in, spec.t_out));
  }
  return {torch::stack(inputs), torch::stack(targets)};
}

std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::mt19937_64 rng(derive_seed(seed, Stream::shuffle, static_cast<uint64_t>(epoch)));
  for (int64_t i = n - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(uniform_index(rng, i + 1))]);
  return order;
}

torch::Tensor downsample_to_resolution(const torch::Tensor& batch, int64_t r) {
  if (batch.dim() < 2) throw DimensionError("spatial axes: expected at least 2 dimensions");
  const int64_t h = batch.size(-2);
  const int64_t w = batch.size(-1);
  if (h != w) throw DimensionError("height/width axes: frames must be square");
  if (!is_power_of_two(r)) throw ValidationError("target resolution must be a power of two");
  if (r > h) throw ValidationError("downsample target exceeds current resolution; use upsample_to_resolution");
  if (h % r != 0) throw ValidationError("target resolution must divide the current resolution");
  if (r == h) return batch;
  const int64_t step = h / r;
  return batch.slice(-2, 0, h, step).slice(-1, 0, w, step);
}

torch::Tensor upsample_to_resolution(const torch::Tensor& batch, int64_t r) {
  if (batch.dim() < 2) throw DimensionError("spatial axes: expected at least 2 dimensions");
  const int64_t h = batch.size(-2);
  if (h != batch.size(-1)) throw DimensionError("height/width axes: frames must be square");
  if (r < h || r % h != 0) throw ValidationError("upsample target must be a multiple of the current resolution");
  if (r == h) return batch;
  const int64_t f = r / h;
  auto sizes = batch.sizes().vec();
  sizes.pop_back();
  sizes.pop_back();
  auto expanded_shape = sizes;
  for (int64_t v : {h, f, h, f}) expanded_shape.push_back(v);
  auto out_shape = sizes;
  out_shape.push_back(r);
  out_shape.push_back(r);
  return batch.unsqueeze(-1).unsqueeze(-3).expand(expanded_shape).reshape(out_shape);
}

torch::Tensor blend_transition_input(const torch::Tensor& batch, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  const int64_t r = batch.size(-1);
  if (r < 2 || r % 2 != 0) throw DimensionError("spatial axes: transition blending needs an even resolution");
  auto coarse = upsample_to_resolution(downsample_to_resolution(batch, r / 2), r);
  return batch * alpha + coarse * (1.0 - alpha);
}

FolderLoadResult load_video_folder(const fs::path& root, const FolderLoadOptions& options) {
  if (options.channels != 1 && options.channels != 3) throw ValidationError("channels must be 1 or 3");
  if (!is_power_of_two(options.resolution)) throw ValidationError("resize resolution must be a power of two");
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("empty video folder: " + root.string());

  static const std::vector<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"};
  const int64_t r = options.resolution;
  const int flag = options.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;

  FolderLoadResult result;
  std::vector<torch::Tensor> videos;
  std::vector<std::string> names;
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (std::find(kExtensions.begin(), kExtensions.end(), ext) != kExtensions.end()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      result.diagnostics.push_back(dir.filename().string() + ": no frame images");
      continue;
    }
    auto video = torch::empty({options.channels, static_cast<int64_t>(files.size()), r, r}, torch::kUInt8);
    bool ok = true;
    for (size_t t = 0; t < files.size(); ++t) {
      cv::Mat img = cv::imread(files[t].string(), flag);
      if (img.empty()) {
        result.diagnostics.push_back(dir.filename().string() + ": unreadable frame " + files[t].filename().string());
        ok = false;
        break;
      }
      if (img.depth() != CV_8U) img.convertTo(img, CV_8U, 255.0 / 65535.0);
      cv::Mat resized;
      cv::resize(img, resized, cv::Size(static_cast<int>(r), static_cast<int>(r)), 0, 0, cv::INTER_CUBIC);
      if (options.channels == 3) cv::cvtColor(resized, resized, cv::COLOR_BGR2RGB);
      auto hwc = torch::from_blob(resized.data, {r, r, options.channels}, torch::kUInt8);
      video.select(1, static_cast<int64_t>(t)).copy_(hwc.permute({2, 0, 1}));
    }
    if (ok) {
      videos.push_back(video);
      names.push_back(dir.filename().string());
    }
  }
  if (videos.empty()) throw IoError("no readable videos in " + root.string());
  nlohmann::json meta = {{"source", "video_folder"}, {"root", root.string()}, {"videos", names}};
  result.videos = VideoSet(std::move(videos), options.channels, r, std::move(meta));
  return result;
}

}  // namespace futuregan::videodata
