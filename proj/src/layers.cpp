#include "futuregan/layers.hpp"

#include <sstream>

#include "futuregan/error.hpp"

namespace futuregan::layers {

namespace {

const char* axis_name(int i) {
  switch (i) {
    case 0: return "time";
    case 1: return "height";
    default: return "width";
  }
}

int64_t get(const Extent3& e, int i) { return i == 0 ? e.t : (i == 1 ? e.h : e.w); }

torch::Tensor randn_like_shape(at::IntArrayRef shape, const std::optional<at::Generator>& gen) {
  return gen ? torch::randn(shape, *gen, torch::kFloat32) : torch::randn(shape, torch::kFloat32);
}

}  // namespace

std::string to_string(ConvRole role) {
  switch (role) {
    case ConvRole::block: return "conv3d";
    case ConvRole::projection: return "projection";
    case ConvRole::spatial_down: return "spatial_down";
    case ConvRole::spatial_up: return "spatial_up";
    case ConvRole::temporal_down: return "temporal_down";
    case ConvRole::temporal_up: return "temporal_up";
    case ConvRole::generic: return "conv3d_generic";
  }
  return "unknown";
}

void ConvSpec::validate() const {
  if (in_maps < 1 || out_maps < 1) throw ValidationError("feature map counts must be >= 1");
  for (int i = 0; i < 3; ++i) {
    if (get(kernel, i) < 1 || get(stride, i) < 1)
      throw ValidationError(std::string("kernel and stride must be >= 1 on the ") + axis_name(i) + " axis");
    if (get(padding, i) < 0) throw ValidationError(std::string("negative padding on the ") + axis_name(i) + " axis");
  }
}

Extent3 ConvSpec::output_extent(Extent3 in) const {
  int64_t out[3];
  for (int i = 0; i < 3; ++i) {
    const int64_t n = get(in, i);
    const int64_t k = get(kernel, i);
    const int64_t s = get(stride, i);
    const int64_t p = get(padding, i);
    out[i] = transposed ? (n - 1) * s - 2 * p + k : (n + 2 * p - k) / s + 1;
    if (n < 1 || out[i] < 1 || (!transposed && n + 2 * p < k)) {
      std::ostringstream msg;
      msg << axis_name(i) << " axis: input extent " << n << " is incompatible with kernel " << k << ", stride " << s
          << ", padding " << p;
      throw DimensionError(msg.str());
    }
  }
  return {out[0], out[1], out[2]};
}

ConvSpec ConvSpec::within_block(int64_t in, int64_t out) {
  return {in, out, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}, false, ConvRole::block};
}
ConvSpec ConvSpec::projection(int64_t in, int64_t out) {
  return {in, out, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, false, ConvRole::projection};
}
ConvSpec ConvSpec::spatial_down(int64_t in, int64_t out) {
  return {in, out, {1, 4, 4}, {1, 2, 2}, {0, 1, 1}, false, ConvRole::spatial_down};
}
ConvSpec ConvSpec::spatial_up(int64_t in, int64_t out) {
  return {in, out, {1, 4, 4}, {1, 2, 2}, {0, 1, 1}, true, ConvRole::spatial_up};
}
ConvSpec ConvSpec::temporal_down(int64_t in, int64_t out, int64_t t_in) {
  return {in, out, {t_in, 1, 1}, {1, 1, 1}, {0, 0, 0}, false, ConvRole::temporal_down};
}
ConvSpec ConvSpec::temporal_up(int64_t in, int64_t out, int64_t t_out) {
  return {in, out, {t_out, 1, 1}, {1, 1, 1}, {0, 0, 0}, true, ConvRole::temporal_up};
}

ScaledConv3dImpl::ScaledConv3dImpl(ConvSpec spec, std::optional<at::Generator> gen)
    : spec_(spec), scale_(he_constant(spec.fan_in())) {
  spec_.validate();
  const auto& k = spec_.kernel;
  // torch weight layouts: conv (out, in, k...), transposed conv (in, out, k...)
  std::vector<int64_t> shape = spec_.transposed
                                   ? std::vector<int64_t>{spec_.in_maps, spec_.out_maps, k.t, k.h, k.w}
                                   : std::vector<int64_t>{spec_.out_maps, spec_.in_maps, k.t, k.h, k.w};
  weight = register_parameter("weight", randn_like_shape(shape, gen));
  bias = register_parameter("bias", torch::zeros({spec_.out_maps}));
}

void ScaledConv3dImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 5) throw DimensionError("expected a 5-D (batch, channel, time, height, width) tensor");
  if (x.size(1) != spec_.in_maps) {
    std::ostringstream msg;
    msg << "channel axis: expected " << spec_.in_maps << " feature maps, got " << x.size(1);
    throw DimensionError(msg.str());
  }
  switch (spec_.role) {
    case ConvRole::spatial_down:
      if (x.size(3) % 2 != 0) throw DimensionError("height axis: spatial downsampling needs an even resolution");
      if (x.size(4) % 2 != 0) throw DimensionError("width axis: spatial downsampling needs an even resolution");
      break;
    case ConvRole::temporal_down:
      if (x.size(2) != spec_.kernel.t) {
        std::ostringstream msg;
        msg << "time axis: encoder bottleneck expects T == " << spec_.kernel.t << ", got " << x.size(2);
        throw DimensionError(msg.str());
      }
      break;
    case ConvRole::temporal_up:
      if (x.size(2) != 1) {
        std::ostringstream msg;
        msg << "time axis: decoder bottleneck expects T == 1, got " << x.size(2);
        throw DimensionError(msg.str());
      }
      break;
    default:
      break;
  }
  spec_.output_extent({x.size(2), x.size(3), x.size(4)});
}

torch::Tensor ScaledConv3dImpl::forward(const torch::Tensor& x) const {
  check_input(x);
  const auto& s = spec_.stride;
  const auto& p = spec_.padding;
  const auto w = effective_weight();
  if (spec_.transposed)
    return torch::conv_transpose3d(x, w, bias, {s.t, s.h, s.w}, {p.t, p.h, p.w});
  return torch::conv3d(x, w, bias, {s.t, s.h, s.w}, {p.t, p.h, p.w});
}

ScaledLinearImpl::ScaledLinearImpl(int64_t in_features, int64_t out_features, std::optional<at::Generator> gen)
    : in_(in_features), out_(out_features) {
  if (in_ < 1 || out_ < 1) throw ValidationError("linear layer sizes must be >= 1");
  scale_ = he_constant(in_);
  weight = register_parameter("weight", randn_like_shape({out_, in_}, gen));
  bias = register_parameter("bias", torch::zeros({out_}));
}

torch::Tensor ScaledLinearImpl::forward(const torch::Tensor& x) const {
  if (x.dim() != 2 || x.size(1) != in_) {
    std::ostringstream msg;
    msg << "feature axis: expected (batch, " << in_ << ") input";
    throw DimensionError(msg.str());
  }
  return torch::linear(x, weight * scale_, bias);
}

torch::Tensor pixelwise_feature_norm(const torch::Tensor& a, double eps) {
  if (a.dim() < 2 || a.size(1) < 1) throw DimensionError("channel axis: need at least one feature map");
  return a * torch::rsqrt(a.pow(2).mean(1, /*keepdim=*/true) + eps);
}

torch::Tensor minibatch_stddev_value(const torch::Tensor& features) {
  if (features.dim() < 2 || features.size(0) < 1) throw DimensionError("batch axis: need at least one sample");
  const auto centered = features - features.mean(0, /*keepdim=*/true);
  const auto var = centered.pow(2).mean(0);
  const auto positive = var > 0;
  const auto stddev = torch::where(positive, torch::sqrt(torch::where(positive, var, torch::ones_like(var))),
                                   torch::zeros_like(var));
  return stddev.mean();
}

torch::Tensor minibatch_stddev(const torch::Tensor& features) {
  if (features.dim() != 5) throw DimensionError("expected a 5-D (batch, feature, time, height, width) tensor");
  const auto s = minibatch_stddev_value(features);
  const auto sizes = features.sizes();
  auto map = s.expand({sizes[0], 1, sizes[2], sizes[3], sizes[4]});
  return torch::cat({features, map}, 1);
}

}  // namespace futuregan::layers
