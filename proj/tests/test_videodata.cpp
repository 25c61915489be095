#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "futuregan/error.hpp"
#include "futuregan/fileio.hpp"
#include "futuregan/videodata.hpp"

using namespace futuregan;
using namespace futuregan::videodata;
namespace fs = std::filesystem;

namespace {

const DigitGlyphs& glyphs() {
  static const DigitGlyphs g = DigitGlyphs::load(DigitGlyphs::default_dir());
  return g;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("futuregan_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

VideoSet blank_videos(std::vector<int64_t> lengths, int64_t res = 4) {
  std::vector<torch::Tensor> v;
  for (auto l : lengths) v.push_back(torch::zeros({1, l, res, res}, torch::kUInt8));
  return VideoSet(v, 1, res);
}

}  // namespace

TEST(Glyphs, LoadsLabelledDigits) {
  const auto& g = glyphs();
  EXPECT_EQ(g.images.dim(), 3);
  EXPECT_EQ(g.images.size(1), 28);
  EXPECT_EQ(static_cast<size_t>(g.images.size(0)), g.labels.size());
  for (const auto& cls : g.by_class) EXPECT_FALSE(cls.empty());
}

TEST(MovingMnist, ShapeAndRange) {
  MovingMnistConfig cfg;
  cfg.num_videos = 3;
  cfg.seed = 5;
  const auto set = generate_moving_mnist(cfg, glyphs());
  ASSERT_EQ(set.size(), 3);
  EXPECT_EQ(set.video(0).sizes(), torch::IntArrayRef({1, 36, 64, 64}));
  const auto f = set.frames(0, 0, 36);
  EXPECT_GE(f.min().item<float>(), -1.0f);
  EXPECT_LE(f.max().item<float>(), 1.0f);
  EXPECT_GT(f.max().item<float>(), 0.5f);
}

TEST(MovingMnist, SeedDeterminism) {
  MovingMnistConfig cfg;
  cfg.num_videos = 4;
  cfg.seed = 42;
  const auto a = generate_moving_mnist(cfg, glyphs());
  const auto b = generate_moving_mnist(cfg, glyphs());
  for (int64_t i = 0; i < 4; ++i) EXPECT_TRUE(torch::equal(a.video(i), b.video(i)));
  cfg.seed = 43;
  const auto c = generate_moving_mnist(cfg, glyphs());
  EXPECT_FALSE(torch::equal(a.video(0), c.video(0)));
}

TEST(MovingMnist, ZeroSpeedIsStatic) {
  MovingMnistConfig cfg;
  cfg.num_videos = 1;
  cfg.speed_min = cfg.speed_max = 0;
  const auto v = generate_moving_mnist(cfg, glyphs()).video(0);
  for (int64_t t = 1; t < 36; ++t) EXPECT_TRUE(torch::equal(v.select(1, t), v.select(1, 0)));
}

TEST(MovingMnist, DigitsStayInsideCanvas) {
  // Each frame's mass never leaks off-canvas: the number of lit pixels stays within the glyph budget.
  MovingMnistConfig cfg;
  cfg.num_videos = 5;
  cfg.digits_per_video = 1;
  cfg.seed = 9;
  const auto set = generate_moving_mnist(cfg, glyphs());
  for (int64_t i = 0; i < set.size(); ++i) {
    const auto lit = (set.video(i) > 0).sum({0, 2, 3});
    const auto first = lit[0].item<int64_t>();
    EXPECT_GT(first, 0);
    EXPECT_TRUE(torch::equal(lit, torch::full_like(lit, first))) << "digit clipped in video " << i;
  }
}

TEST(MovingMnist, RejectsBadConfig) {
  MovingMnistConfig cfg;
  cfg.digits_per_video = 11;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.speed_min = 4;
  cfg.speed_max = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.canvas = 20;
  EXPECT_THROW(cfg.validate(), ValidationError);
}

TEST(Windowing, Counts) {
  SequenceWindowing w{6, 6, 12};
  EXPECT_EQ(w.count_for_length(36), 3);
  EXPECT_EQ(w.count_for_length(12), 1);
  EXPECT_EQ(w.count_for_length(11), 0);
  EXPECT_EQ((SequenceWindowing{6, 6, 1}).count_for_length(36), 25);

  const auto one = window_sequences(blank_videos({12}), w);
  EXPECT_EQ(one.size(), 1);
  const auto none = window_sequences(blank_videos({11}), w);
  EXPECT_EQ(none.size(), 0);
  EXPECT_EQ(none.skipped, 1);
  const auto mixed = window_sequences(blank_videos({36, 11, 24}), w);
  EXPECT_EQ(mixed.size(), 5);
  EXPECT_EQ(mixed.skipped, 1);
}

TEST(Windowing, FullMnistTrainSplitCount) {
  std::vector<int64_t> lengths(4500, 36);
  EXPECT_EQ(window_sequences(blank_videos(lengths, 4), {6, 6, 12}).size(), 13500);
}

TEST(Windowing, GatherSplitsInputAndTarget) {
  auto v = torch::arange(24, torch::kUInt8).view({1, 24, 1, 1}).expand({1, 24, 4, 4}).contiguous();
  VideoSet set({v}, 1, 4);
  const auto w = window_sequences(set, {3, 2, 0});
  ASSERT_EQ(w.size(), 4);
  const std::vector<int64_t> idx = {1};
  const auto b = gather(set, w, idx);
  EXPECT_EQ(b.input.sizes(), torch::IntArrayRef({1, 1, 3, 4, 4}));
  EXPECT_EQ(b.target.sizes(), torch::IntArrayRef({1, 1, 2, 4, 4}));
  EXPECT_NEAR(b.input[0][0][0][0][0].item<float>(), 5 / 127.5 - 1, 1e-6);
  EXPECT_NEAR(b.target[0][0][1][0][0].item<float>(), 9 / 127.5 - 1, 1e-6);
}

TEST(EpochOrder, PermutationDependingOnSeedAndEpoch) {
  const auto a = epoch_order(50, 1, 0);
  EXPECT_EQ(std::set<int64_t>(a.begin(), a.end()).size(), 50u);
  EXPECT_EQ(a, epoch_order(50, 1, 0));
  EXPECT_NE(a, epoch_order(50, 1, 1));
  EXPECT_NE(a, epoch_order(50, 2, 0));
}

TEST(Resampling, DownsampleHandValues) {
  const auto x = torch::randn({2, 1, 3, 64, 64});
  EXPECT_TRUE(torch::equal(downsample_to_resolution(x, 64), x));
  const auto c = torch::full({1, 1, 1, 4, 4}, 0.3f);
  EXPECT_TRUE(torch::equal(downsample_to_resolution(c, 2), torch::full({1, 1, 1, 2, 2}, 0.3f)));
  const auto checker = (torch::arange(4).view({4, 1}) + torch::arange(4).view({1, 4})).remainder(2).to(torch::kFloat32);
  const auto d = downsample_to_resolution(checker.view({1, 1, 1, 4, 4}), 2).view({2, 2});
  // index map floor(i * 4 / 2) selects rows/cols {0, 2}
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_EQ(d[i][j].item<float>(), checker[2 * i][2 * j].item<float>());
  EXPECT_THROW(downsample_to_resolution(x, 3), ValidationError);
  EXPECT_THROW(downsample_to_resolution(x, 128), ValidationError);
}

TEST(Resampling, UpsampleIsBlockReplication) {
  const auto x = torch::arange(4, torch::kFloat32).view({1, 1, 1, 2, 2});
  const auto u = upsample_to_resolution(x, 4).view({4, 4});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_EQ(u[i][j].item<float>(), x.view({2, 2})[i / 2][j / 2].item<float>());
  EXPECT_TRUE(torch::equal(downsample_to_resolution(upsample_to_resolution(x, 8), 2), x));
}

TEST(Resampling, BlendEndpoints) {
  const auto x = torch::randn({2, 1, 3, 8, 8});
  EXPECT_TRUE(torch::equal(blend_transition_input(x, 1.0), x));
  const auto blocky = upsample_to_resolution(downsample_to_resolution(x, 4), 8);
  EXPECT_TRUE(torch::allclose(blend_transition_input(x, 0.0), blocky));
  const auto c = torch::full({1, 1, 2, 8, 8}, -0.25f);
  EXPECT_TRUE(torch::allclose(blend_transition_input(c, 0.5), c));
  EXPECT_THROW(blend_transition_input(x, 1.5), ValidationError);
}

TEST(Container, RoundTripAndChecksum) {
  MovingMnistConfig cfg;
  cfg.num_videos = 3;
  cfg.video_length = 14;
  cfg.seed = 7;
  const auto set = generate_moving_mnist(cfg, glyphs());
  const auto dir = scratch("container");
  set.save(dir / "a.fgv");
  const auto back = VideoSet::load(dir / "a.fgv");
  ASSERT_EQ(back.size(), 3);
  for (int64_t i = 0; i < 3; ++i) EXPECT_TRUE(torch::equal(back.video(i), set.video(i)));
  EXPECT_EQ(back.meta(), set.meta());
  back.save(dir / "b.fgv");
  EXPECT_EQ(fileio::read_file(dir / "a.fgv"), fileio::read_file(dir / "b.fgv"));
}

TEST(Container, RejectsCorruptFiles) {
  const auto dir = scratch("container_bad");
  fileio::atomic_write(dir / "junk.fgv", "not a dataset at all");
  EXPECT_THROW(VideoSet::load(dir / "junk.fgv"), IoError);
  const auto set = blank_videos({12, 12});
  set.save(dir / "ok.fgv");
  auto bytes = fileio::read_file(dir / "ok.fgv");
  fileio::atomic_write(dir / "short.fgv", bytes.substr(0, bytes.size() - 10));
  EXPECT_THROW(VideoSet::load(dir / "short.fgv"), IoError);
  EXPECT_THROW(VideoSet::load(dir / "missing.fgv"), IoError);
}

TEST(FolderLoader, ResizesAndNormalizes) {
  const auto root = scratch("folder");
  fs::create_directories(root / "clip_a");
  fs::create_directories(root / "clip_b");
  for (int t = 0; t < 12; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "f%02d.png", t);
    cv::imwrite((root / "clip_a" / name).string(), cv::Mat(120, 160, CV_8UC1, cv::Scalar(0)));
    cv::imwrite((root / "clip_b" / name).string(), cv::Mat(120, 160, CV_8UC1, cv::Scalar(255)));
  }
  const auto r = load_video_folder(root, {128, 1});
  ASSERT_EQ(r.videos.size(), 2);
  EXPECT_TRUE(r.diagnostics.empty());
  EXPECT_EQ(r.videos.video(0).sizes(), torch::IntArrayRef({1, 12, 128, 128}));
  EXPECT_EQ(r.videos.frames(0, 0, 12).max().item<float>(), -1.0f);
  EXPECT_EQ(r.videos.frames(1, 0, 12).min().item<float>(), 1.0f);
}

TEST(FolderLoader, RejectsUnreadableVideosAndEmptyRoots) {
  const auto root = scratch("folder_bad");
  fs::create_directories(root / "good");
  fs::create_directories(root / "bad");
  cv::imwrite((root / "good" / "0.png").string(), cv::Mat(8, 8, CV_8UC1, cv::Scalar(10)));
  cv::imwrite((root / "bad" / "0.png").string(), cv::Mat(8, 8, CV_8UC1, cv::Scalar(10)));
  fileio::atomic_write(root / "bad" / "1.png", "garbage");
  const auto r = load_video_folder(root, {8, 1});
  EXPECT_EQ(r.videos.size(), 1);
  EXPECT_EQ(r.diagnostics.size(), 1u);
  EXPECT_THROW(load_video_folder(scratch("folder_empty"), {8, 1}), IoError);
}
