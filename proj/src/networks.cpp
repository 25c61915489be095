#include "futuregan/networks.hpp"

#include <algorithm>
#include <sstream>

#include "futuregan/error.hpp"
#include "futuregan/videodata.hpp"

namespace futuregan::networks {

using layers::ConvSpec;
using layers::Extent3;
using layers::ScaledConv3d;

namespace {

bool is_power_of_two(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int64_t log2_exact(int64_t v) {
  int64_t n = 0;
  while ((int64_t{1} << n) < v) ++n;
  return n;
}

std::string level_name(int64_t level, const char* what) { return "level" + std::to_string(level) + "_" + what; }

int64_t count_params(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters(/*recurse=*/true)) n += p.numel();
  return n;
}

void check_video(const torch::Tensor& x, int64_t channels, int64_t frames, int64_t resolution, const char* who) {
  std::ostringstream msg;
  msg << who << ": ";
  if (x.dim() != 5) {
    msg << "expected a 5-D (batch, channel, time, height, width) tensor";
    throw DimensionError(msg.str());
  }
  if (x.size(1) != channels) {
    msg << "channel axis: expected " << channels << ", got " << x.size(1);
    throw DimensionError(msg.str());
  }
  if (x.size(2) != frames) {
    msg << "time axis: expected " << frames << " frames, got " << x.size(2);
    throw DimensionError(msg.str());
  }
  if (x.size(3) != resolution || x.size(4) != resolution) {
    msg << "height/width axes: expected " << resolution << "x" << resolution << ", got " << x.size(3) << "x"
        << x.size(4);
    throw DimensionError(msg.str());
  }
}

// Tracks the (C, T, H, W) extent while listing layers.
struct ListingCursor {
  std::vector<LayerInfo>& out;
  int64_t maps;
  Extent3 extent;

  void conv(const std::string& name, const ScaledConv3d& m, const std::string& suffix = "") {
    const auto& s = m->spec();
    extent = s.output_extent(extent);
    maps = s.out_maps;
    out.push_back({name, layers::to_string(s.role) + suffix, s.in_maps, s.out_maps,
                   {maps, extent.t, extent.h, extent.w}, count_params(*m)});
  }
  void stddev() {
    out.push_back({"minibatch_stddev", "minibatch_stddev", maps, maps + 1, {maps + 1, extent.t, extent.h, extent.w}, 0});
    ++maps;
  }
};

}  // namespace

void NetworkSpec::validate() const {
  if (!is_power_of_two(base_resolution) || !is_power_of_two(final_resolution))
    throw ValidationError("base and final resolutions must be powers of two");
  if (final_resolution < base_resolution) throw ValidationError("final_resolution must be >= base_resolution");
  if (!is_power_of_two(halve_from_resolution)) throw ValidationError("halve_from_resolution must be a power of two");
  if (base_feature_maps < 1) throw ValidationError("base_feature_maps must be >= 1");
  if (t_in < 1 || t_out < 1) throw ValidationError("t_in and t_out must be >= 1");
  if (channels != 1 && channels != 3) throw ValidationError("channels must be 1 or 3");
  if (!(lrelu_slope >= 0.0 && lrelu_slope < 1.0)) throw ValidationError("lrelu_slope must lie in [0, 1)");
}

int64_t NetworkSpec::num_levels() const { return log2_exact(final_resolution / base_resolution) + 1; }

int64_t NetworkSpec::resolution_at(int64_t level) const {
  if (level < 0 || level >= num_levels()) throw ValidationError("level out of range");
  return base_resolution << level;
}

int64_t NetworkSpec::level_of(int64_t resolution) const {
  if (!is_power_of_two(resolution) || resolution < base_resolution || resolution > final_resolution)
    throw ValidationError("resolution " + std::to_string(resolution) + " is not a level of this network");
  return log2_exact(resolution / base_resolution);
}

int64_t NetworkSpec::maps_at(int64_t resolution) const {
  if (resolution < halve_from_resolution) return base_feature_maps;
  const int64_t halvings = log2_exact(resolution / halve_from_resolution);
  return std::max<int64_t>(1, base_feature_maps >> halvings);
}

nlohmann::json NetworkSpec::to_json() const {
  return {{"base_resolution", base_resolution},
          {"final_resolution", final_resolution},
          {"base_feature_maps", base_feature_maps},
          {"halve_from_resolution", halve_from_resolution},
          {"t_in", t_in},
          {"t_out", t_out},
          {"channels", channels},
          {"lrelu_slope", lrelu_slope}};
}

NetworkSpec NetworkSpec::from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.base_resolution = j.at("base_resolution");
  s.final_resolution = j.at("final_resolution");
  s.base_feature_maps = j.at("base_feature_maps");
  s.halve_from_resolution = j.at("halve_from_resolution");
  s.t_in = j.at("t_in");
  s.t_out = j.at("t_out");
  s.channels = j.at("channels");
  s.lrelu_slope = j.at("lrelu_slope");
  return s;
}

std::string to_string(PhaseKind kind) {
  switch (kind) {
    case PhaseKind::transition: return "transition";
    case PhaseKind::stabilization: return "stabilization";
    case PhaseKind::final: return "final";
  }
  return "unknown";
}

PhaseKind phase_kind_from_string(const std::string& s) {
  if (s == "transition") return PhaseKind::transition;
  if (s == "stabilization") return PhaseKind::stabilization;
  if (s == "final") return PhaseKind::final;
  throw ValidationError("unknown phase kind: " + s);
}

void PhaseState::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  if (kind != PhaseKind::transition && alpha != 1.0)
    throw ValidationError("alpha must be 1 outside transition phases");
}

// ---------------------------------------------------------------------------------------------
// Generator

GeneratorImpl::GeneratorImpl(NetworkSpec spec, at::Generator init) : spec_(std::move(spec)) {
  spec_.validate();
  add_level(0, init);
}

void GeneratorImpl::add_level(int64_t level, at::Generator& init) {
  const int64_t r = spec_.resolution_at(level);
  const int64_t nf = spec_.maps_at(r);
  const int64_t c = spec_.channels;
  auto make = [&](const std::string& name, ConvSpec s) { return register_module(name, ScaledConv3d(s, init)); };

  from_frame_.push_back(make(level_name(level, "from_frame"), ConvSpec::projection(c, nf)));
  if (level == 0) {
    enc_conv_.emplace_back(nullptr);
    enc_down_.emplace_back(nullptr);
    dec_up_.emplace_back(nullptr);
    dec_conv_.emplace_back(nullptr);
    base_enc1_ = make("base_enc_conv1", ConvSpec::within_block(nf, nf));
    base_enc2_ = make("base_enc_conv2", ConvSpec::within_block(nf, nf));
    temporal_down_ = make("base_temporal_down", ConvSpec::temporal_down(nf, nf, spec_.t_in));
    temporal_up_ = make("base_temporal_up", ConvSpec::temporal_up(nf, nf, spec_.t_out));
    base_dec1_ = make("base_dec_conv1", ConvSpec::within_block(nf, nf));
    base_dec2_ = make("base_dec_conv2", ConvSpec::within_block(nf, nf));
  } else {
    const int64_t nf_prev = spec_.maps_at(spec_.resolution_at(level - 1));
    enc_conv_.push_back(make(level_name(level, "enc_conv"), ConvSpec::within_block(nf, nf)));
    enc_down_.push_back(make(level_name(level, "enc_down"), ConvSpec::spatial_down(nf, nf_prev)));
    dec_up_.push_back(make(level_name(level, "dec_up"), ConvSpec::spatial_up(nf_prev, nf)));
    dec_conv_.push_back(make(level_name(level, "dec_conv"), ConvSpec::within_block(nf, nf)));
  }
  to_frame_.push_back(make(level_name(level, "to_frame"), ConvSpec::projection(nf, c)));
}

void GeneratorImpl::grow(at::Generator init) {
  if (level_ + 1 >= spec_.num_levels())
    throw ValidationError("cannot grow past final resolution " + std::to_string(spec_.final_resolution));
  add_level(level_ + 1, init);
  ++level_;
}

torch::Tensor GeneratorImpl::act(const torch::Tensor& x) const {
  return layers::pixelwise_feature_norm(layers::leaky_relu(x, spec_.lrelu_slope));
}

torch::Tensor GeneratorImpl::path(const torch::Tensor& z, int64_t level) {
  if (level < 0 || level > level_) throw ValidationError("generator level out of range");
  check_video(z, spec_.channels, spec_.t_in, spec_.resolution_at(level), "generator input");
  auto h = act(from_frame_[level]->forward(z));
  for (int64_t l = level; l >= 1; --l) {
    h = act(enc_conv_[l]->forward(h));
    h = act(enc_down_[l]->forward(h));
  }
  h = act(base_enc1_->forward(h));
  h = act(base_enc2_->forward(h));
  h = act(temporal_down_->forward(h));
  h = act(temporal_up_->forward(h));
  h = act(base_dec1_->forward(h));
  h = act(base_dec2_->forward(h));
  for (int64_t l = 1; l <= level; ++l) {
    h = act(dec_up_[l]->forward(h));
    h = act(dec_conv_[l]->forward(h));
  }
  return to_frame_[level]->forward(h);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const PhaseState& phase) {
  phase.validate();
  if (phase.resolution != resolution())
    throw DimensionError("generator: phase resolution " + std::to_string(phase.resolution) +
                         " does not match network resolution " + std::to_string(resolution()));
  if (!phase.fading() || level_ == 0) return path(z, level_);
  const int64_t r = resolution();
  auto fresh = path(z, level_);
  auto old = videodata::upsample_to_resolution(path(videodata::downsample_to_resolution(z, r / 2), level_ - 1), r);
  return fresh * phase.alpha + old * (1.0 - phase.alpha);
}

std::vector<LayerInfo> GeneratorImpl::layers() const {
  std::vector<LayerInfo> out;
  const int64_t r = resolution();
  ListingCursor cur{out, spec_.channels, {spec_.t_in, r, r}};
  const char* pn = "+lrelu+pixelnorm";
  cur.conv(level_name(level_, "from_frame"), from_frame_[level_], pn);
  for (int64_t l = level_; l >= 1; --l) {
    cur.conv(level_name(l, "enc_conv"), enc_conv_[l], pn);
    cur.conv(level_name(l, "enc_down"), enc_down_[l], pn);
  }
  cur.conv("base_enc_conv1", base_enc1_, pn);
  cur.conv("base_enc_conv2", base_enc2_, pn);
  cur.conv("base_temporal_down", temporal_down_, pn);
  cur.conv("base_temporal_up", temporal_up_, pn);
  cur.conv("base_dec_conv1", base_dec1_, pn);
  cur.conv("base_dec_conv2", base_dec2_, pn);
  for (int64_t l = 1; l <= level_; ++l) {
    cur.conv(level_name(l, "dec_up"), dec_up_[l], pn);
    cur.conv(level_name(l, "dec_conv"), dec_conv_[l], pn);
  }
  cur.conv(level_name(level_, "to_frame"), to_frame_[level_], "+linear");
  return out;
}

std::vector<std::string> GeneratorImpl::active_parameter_names(const PhaseState& phase) const {
  std::vector<std::string> modules = {"base_enc_conv1",     "base_enc_conv2", "base_temporal_down",
                                      "base_temporal_up",   "base_dec_conv1", "base_dec_conv2"};
  const int64_t lowest = (phase.fading() && level_ > 0) ? level_ - 1 : level_;
  for (int64_t l = 1; l <= level_; ++l)
    for (const char* m : {"enc_conv", "enc_down", "dec_up", "dec_conv"}) modules.push_back(level_name(l, m));
  for (int64_t l = lowest; l <= level_; ++l)
    for (const char* m : {"from_frame", "to_frame"}) modules.push_back(level_name(l, m));
  std::vector<std::string> names;
  for (const auto& m : modules) {
    names.push_back(m + ".weight");
    names.push_back(m + ".bias");
  }
  return names;
}

// ---------------------------------------------------------------------------------------------
// Discriminator

DiscriminatorImpl::DiscriminatorImpl(NetworkSpec spec, at::Generator init) : spec_(std::move(spec)) {
  spec_.validate();
  add_level(0, init);
}

void DiscriminatorImpl::add_level(int64_t level, at::Generator& init) {
  const int64_t r = spec_.resolution_at(level);
  const int64_t nf = spec_.maps_at(r);
  auto make = [&](const std::string& name, ConvSpec s) { return register_module(name, ScaledConv3d(s, init)); };

  from_frame_.push_back(make(level_name(level, "from_frame"), ConvSpec::projection(spec_.channels, nf)));
  if (level == 0) {
    conv_.emplace_back(nullptr);
    down_.emplace_back(nullptr);
    base_conv1_ = make("base_conv1", ConvSpec::within_block(nf + 1, nf));
    base_conv2_ = make("base_conv2", ConvSpec::within_block(nf, nf));
    const int64_t frames = spec_.t_in + spec_.t_out;
    fc_ = register_module("base_fc", layers::ScaledLinear(nf * frames * r * r, 1, init));
  } else {
    const int64_t nf_prev = spec_.maps_at(spec_.resolution_at(level - 1));
    conv_.push_back(make(level_name(level, "conv"), ConvSpec::within_block(nf, nf)));
    down_.push_back(make(level_name(level, "down"), ConvSpec::spatial_down(nf, nf_prev)));
  }
}

void DiscriminatorImpl::grow(at::Generator init) {
  if (level_ + 1 >= spec_.num_levels())
    throw ValidationError("cannot grow past final resolution " + std::to_string(spec_.final_resolution));
  add_level(level_ + 1, init);
  ++level_;
}

torch::Tensor DiscriminatorImpl::path(const torch::Tensor& x, int64_t level) {
  if (level < 0 || level > level_) throw ValidationError("discriminator level out of range");
  check_video(x, spec_.channels, spec_.t_in + spec_.t_out, spec_.resolution_at(level), "discriminator input");
  const double slope = spec_.lrelu_slope;
  auto h = layers::leaky_relu(from_frame_[level]->forward(x), slope);
  for (int64_t l = level; l >= 1; --l) {
    h = layers::leaky_relu(conv_[l]->forward(h), slope);
    h = layers::leaky_relu(down_[l]->forward(h), slope);
  }
  const auto s = layers::minibatch_stddev_value(h);
  if (stddev_hook) stddev_hook(s);
  const auto sz = h.sizes();
  h = torch::cat({h, s.expand({sz[0], 1, sz[2], sz[3], sz[4]})}, 1);
  h = layers::leaky_relu(base_conv1_->forward(h), slope);
  h = layers::leaky_relu(base_conv2_->forward(h), slope);
  return fc_->forward(h.flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x, const PhaseState& phase) {
  phase.validate();
  if (phase.resolution != resolution())
    throw DimensionError("discriminator: phase resolution " + std::to_string(phase.resolution) +
                         " does not match network resolution " + std::to_string(resolution()));
  if (!phase.fading() || level_ == 0) return path(x, level_);
  const int64_t r = resolution();
  auto fresh = path(x, level_);
  auto old = path(videodata::downsample_to_resolution(x, r / 2), level_ - 1);
  return fresh * phase.alpha + old * (1.0 - phase.alpha);
}

std::vector<LayerInfo> DiscriminatorImpl::layers() const {
  std::vector<LayerInfo> out;
  const int64_t r = resolution();
  ListingCursor cur{out, spec_.channels, {spec_.t_in + spec_.t_out, r, r}};
  cur.conv(level_name(level_, "from_frame"), from_frame_[level_], "+lrelu");
  for (int64_t l = level_; l >= 1; --l) {
    cur.conv(level_name(l, "conv"), conv_[l], "+lrelu");
    cur.conv(level_name(l, "down"), down_[l], "+lrelu");
  }
  cur.stddev();
  cur.conv("base_conv1", base_conv1_, "+lrelu");
  cur.conv("base_conv2", base_conv2_, "+lrelu");
  out.push_back({"base_fc", "fully_connected+linear", fc_->in_features(), 1, {1}, count_params(*fc_)});
  return out;
}

std::vector<std::string> DiscriminatorImpl::active_parameter_names(const PhaseState& phase) const {
  std::vector<std::string> modules = {"base_conv1", "base_conv2", "base_fc"};
  const int64_t lowest = (phase.fading() && level_ > 0) ? level_ - 1 : level_;
  for (int64_t l = 1; l <= level_; ++l)
    for (const char* m : {"conv", "down"}) modules.push_back(level_name(l, m));
  for (int64_t l = lowest; l <= level_; ++l) modules.push_back(level_name(l, "from_frame"));
  std::vector<std::string> names;
  for (const auto& m : modules) {
    names.push_back(m + ".weight");
    names.push_back(m + ".bias");
  }
  return names;
}

nlohmann::json architecture_summary(const GeneratorImpl& g, const DiscriminatorImpl& d) {
  auto describe = [](const std::vector<LayerInfo>& ls, const torch::nn::Module& m, int64_t level, int64_t res) {
    nlohmann::json layers = nlohmann::json::array();
    int64_t active = 0;
    for (const auto& l : ls) {
      layers.push_back({{"name", l.name},
                        {"kind", l.kind},
                        {"in_maps", l.in_maps},
                        {"out_maps", l.out_maps},
                        {"output_shape", l.output_shape},
                        {"parameters", l.parameters}});
      active += l.parameters;
    }
    return nlohmann::json{{"level", level},
                          {"resolution", res},
                          {"active_parameters", active},
                          {"total_parameters", count_params(m)},
                          {"layers", layers}};
  };
  return {{"spec", g.spec().to_json()},
          {"generator", describe(g.layers(), g, g.level(), g.resolution())},
          {"discriminator", describe(d.layers(), d, d.level(), d.resolution())}};
}

}  // namespace futuregan::networks
