#include "futuregan/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "futuregan/error.hpp"
#include "futuregan/fileio.hpp"

namespace futuregan::imageio {

torch::Tensor to_u8(const torch::Tensor& frames) {
  return ((frames.detach().to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 127.5).round().to(torch::kUInt8);
}

torch::Tensor to_hwc(const torch::Tensor& chw) {
  if (chw.dim() != 3 || (chw.size(0) != 1 && chw.size(0) != 3))
    throw DimensionError("expected a (1|3, H, W) image, got " + c10::str(chw.sizes()));
  if (chw.size(0) == 1) return chw[0].contiguous();
  return chw.permute({1, 2, 0}).contiguous();
}

namespace {

void check_image(const torch::Tensor& img) {
  if (img.scalar_type() != torch::kUInt8) throw ValidationError("images must be uint8");
  if (!(img.dim() == 2 || (img.dim() == 3 && img.size(2) == 3)))
    throw DimensionError("expected an (H, W) or (H, W, 3) image, got " + c10::str(img.sizes()));
}

cv::Mat to_mat(const torch::Tensor& img) {
  check_image(img);
  auto c = img.contiguous();
  const int type = img.dim() == 2 ? CV_8UC1 : CV_8UC3;
  cv::Mat m(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), type, c.data_ptr());
  cv::Mat out;
  if (img.dim() == 3)
    cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
  else
    out = m.clone();
  return out;
}

std::string encode_mat_png(const cv::Mat& m) {
  std::vector<uchar> buf;
  if (!cv::imencode(".png", m, buf)) throw IoError("PNG encoding failed");
  return std::string(buf.begin(), buf.end());
}

class BitWriter {
 public:
  void put(uint32_t code, int bits) {
    acc_ |= static_cast<uint64_t>(code) << nbits_;
    nbits_ += bits;
    while (nbits_ >= 8) {
      bytes_.push_back(static_cast<char>(acc_ & 0xff));
      acc_ >>= 8;
      nbits_ -= 8;
    }
  }
  std::string finish() {
    if (nbits_ > 0) bytes_.push_back(static_cast<char>(acc_ & 0xff));
    acc_ = 0;
    nbits_ = 0;
    return std::move(bytes_);
  }

 private:
  uint64_t acc_ = 0;
  int nbits_ = 0;
  std::string bytes_;
};

// GIF-flavoured LZW with 8-bit symbols and variable code width up to 12 bits.
std::string lzw_encode(const std::vector<uint8_t>& px) {
  constexpr uint32_t kClear = 256, kEnd = 257;
  BitWriter out;
  std::unordered_map<uint32_t, uint32_t> dict;
  int size = 9;
  uint32_t next = 258;
  out.put(kClear, size);
  if (px.empty()) {
    out.put(kEnd, size);
    return out.finish();
  }
  uint32_t prefix = px[0];
  for (size_t i = 1; i < px.size(); ++i) {
    const uint32_t key = (prefix << 8) | px[i];
    const auto it = dict.find(key);
    if (it != dict.end()) {
      prefix = it->second;
      continue;
    }
    out.put(prefix, size);
    if (next < 4096) {
      dict.emplace(key, next++);
      if (next > (1u << size) && size < 12) ++size;
    } else {
      out.put(kClear, size);
      dict.clear();
      next = 258;
      size = 9;
    }
    prefix = px[i];
  }
  out.put(prefix, size);
  out.put(kClear, size);
  out.put(kEnd, 9);
  return out.finish();
}

void put16(std::string& s, int64_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

std::string encode_png(const torch::Tensor& img) { return encode_mat_png(to_mat(img)); }

void write_png(const std::filesystem::path& path, const torch::Tensor& img) {
  fileio::atomic_write(path, encode_png(img));
}

std::string encode_gif(const std::vector<torch::Tensor>& frames, int delay_centiseconds) {
  if (frames.empty()) throw ValidationError("a GIF needs at least one frame");
  for (const auto& f : frames) check_image(f);
  const int64_t h = frames[0].size(0), w = frames[0].size(1);
  if (h > 65535 || w > 65535) throw DimensionError("image too large for GIF");
  bool rgb = false;
  for (const auto& f : frames) {
    if (f.size(0) != h || f.size(1) != w) throw DimensionError("GIF frames must share one size");
    rgb = rgb || f.dim() == 3;
  }

  std::string out = "GIF89a";
  put16(out, w);
  put16(out, h);
  out += {static_cast<char>(0xF7), 0, 0};
  for (int i = 0; i < 256; ++i) {
    uint8_t r = static_cast<uint8_t>(i), g = r, b = r;
    if (rgb) {
      const int idx = std::min(i, 251);
      r = static_cast<uint8_t>(idx / 42 * 51);
      g = static_cast<uint8_t>(idx / 6 % 7 * 255 / 6);
      b = static_cast<uint8_t>(idx % 6 * 51);
    }
    out += {static_cast<char>(r), static_cast<char>(g), static_cast<char>(b)};
  }
  out += std::string("\x21\xFF\x0BNETSCAPE2.0\x03\x01\x00\x00\x00", 19);

  for (const auto& f : frames) {
    auto c = f.contiguous();
    const uint8_t* p = c.data_ptr<uint8_t>();
    std::vector<uint8_t> idx(static_cast<size_t>(h * w));
    for (size_t i = 0; i < idx.size(); ++i) {
      if (!rgb) {
        idx[i] = p[i];
      } else {
        const uint8_t r = c.dim() == 3 ? p[3 * i] : p[i];
        const uint8_t g = c.dim() == 3 ? p[3 * i + 1] : p[i];
        const uint8_t b = c.dim() == 3 ? p[3 * i + 2] : p[i];
        idx[i] = static_cast<uint8_t>((r * 5 + 127) / 255 * 42 + (g * 6 + 127) / 255 * 6 + (b * 5 + 127) / 255);
      }
    }
    out += {'\x21', static_cast<char>(0xF9), '\x04', '\x04'};
    put16(out, delay_centiseconds);
    out += {'\x00', '\x00'};
    out.push_back('\x2C');
    put16(out, 0);
    put16(out, 0);
    put16(out, w);
    put16(out, h);
    out.push_back('\x00');
    out.push_back('\x08');
    const std::string data = lzw_encode(idx);
    for (size_t pos = 0; pos < data.size(); pos += 255) {
      const size_t n = std::min<size_t>(255, data.size() - pos);
      out.push_back(static_cast<char>(n));
      out.append(data, pos, n);
    }
    out.push_back('\x00');
  }
  out.push_back('\x3B');
  return out;
}

void write_gif(const std::filesystem::path& path, const std::vector<torch::Tensor>& frames, int delay_centiseconds) {
  fileio::atomic_write(path, encode_gif(frames, delay_centiseconds));
}

torch::Tensor make_strip(const std::vector<torch::Tensor>& frames, int64_t gap, int64_t scale) {
  if (frames.empty()) throw ValidationError("a strip needs at least one frame");
  if (scale < 1 || gap < 0) throw ValidationError("strip scale must be >= 1 and gap >= 0");
  bool rgb = false;
  for (const auto& f : frames) {
    check_image(f);
    rgb = rgb || f.dim() == 3;
  }
  std::vector<torch::Tensor> parts;
  for (size_t i = 0; i < frames.size(); ++i) {
    auto f = frames[i];
    if (rgb && f.dim() == 2) f = f.unsqueeze(2).expand({f.size(0), f.size(1), 3});
    if (f.size(0) != frames[0].size(0)) throw DimensionError("strip frames must share one height");
    if (scale > 1) f = f.repeat_interleave(scale, 0).repeat_interleave(scale, 1);
    if (i > 0 && gap > 0) {
      auto sizes = f.sizes().vec();
      sizes[1] = gap;
      parts.push_back(torch::full(sizes, 255, torch::kUInt8));
    }
    parts.push_back(f);
  }
  return torch::cat(parts, 1).contiguous();
}

void plot_curves(const std::filesystem::path& path, const std::string& title, const std::string& y_label,
                 const std::vector<Series>& series, const std::string& x_label) {
  if (series.empty()) throw ValidationError("nothing to plot");
  size_t n = 0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0 || !std::isfinite(lo)) throw ValidationError("no finite values to plot");
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.06 * (hi - lo);
  lo -= pad;
  hi += pad;

  const int width = 640, height = 420, left = 78, right = 24, top = 44, bottom = 58;
  cv::Mat img(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar black(0, 0, 0), grid(225, 225, 225);
  auto px = [&](double x) { return left + (n == 1 ? 0.5 : (x - 1) / static_cast<double>(n - 1)) * (width - left - right); };
  auto py = [&](double y) { return top + (hi - y) / (hi - lo) * (height - top - bottom); };

  char buf[32];
  for (int i = 0; i <= 5; ++i) {
    const double y = lo + (hi - lo) * i / 5.0;
    const int yy = static_cast<int>(std::lround(py(y)));
    cv::line(img, {left, yy}, {width - right, yy}, grid, 1);
    std::snprintf(buf, sizeof buf, "%.4g", y);
    cv::putText(img, buf, {6, yy + 4}, font, 0.4, black, 1, cv::LINE_AA);
  }
  const size_t step = std::max<size_t>(1, (n + 11) / 12);
  for (size_t i = 1; i <= n; i += step) {
    const int xx = static_cast<int>(std::lround(px(static_cast<double>(i))));
    cv::line(img, {xx, height - bottom}, {xx, height - bottom + 4}, black, 1);
    cv::putText(img, std::to_string(i), {xx - 4, height - bottom + 18}, font, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {width - right, height - bottom}, black, 1);
  cv::putText(img, title, {left, 28}, font, 0.6, black, 1, cv::LINE_AA);
  cv::putText(img, x_label, {(width - 8 * static_cast<int>(x_label.size())) / 2, height - 14}, font, 0.45, black, 1,
              cv::LINE_AA);
  cv::putText(img, y_label, {6, top - 8}, font, 0.45, black, 1, cv::LINE_AA);

  const std::vector<cv::Scalar> colors = {{180, 90, 30}, {40, 40, 200}, {40, 150, 40}, {150, 60, 150}, {20, 140, 200}};
  for (size_t s = 0; s < series.size(); ++s) {
    const auto color = colors[s % colors.size()];
    std::vector<cv::Point> pts;
    for (size_t i = 0; i < series[s].values.size(); ++i) {
      const double v = series[s].values[i];
      if (!std::isfinite(v)) continue;
      pts.emplace_back(static_cast<int>(std::lround(px(static_cast<double>(i + 1)))), static_cast<int>(std::lround(py(v))));
    }
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);
    const int ly = top + 16 + 18 * static_cast<int>(s);
    cv::line(img, {width - right - 150, ly - 4}, {width - right - 126, ly - 4}, color, 2);
    cv::putText(img, series[s].name, {width - right - 120, ly}, font, 0.42, black, 1, cv::LINE_AA);
  }
  fileio::atomic_write(path, encode_mat_png(img));
}

}  // namespace futuregan::imageio
