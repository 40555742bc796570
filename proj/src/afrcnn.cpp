#include "avlit/afrcnn.hpp"

#include "avlit/errors.hpp"

namespace avlit {

void BlockConfig::validate() const {
  if (stages < 1) throw ConfigError("block: stages must be >= 1");
  if (stages > 16) throw ConfigError("block: stages must be <= 16");
  if (bottleneck < 1) throw ConfigError("block: bottleneck must be >= 1");
  if (io_channels < 1) throw ConfigError("block: io_channels must be >= 1");
  if (stage_channels < bottleneck) throw ConfigError("block: stage_channels must be >= bottleneck");
  if (down_kernel < 1 || down_kernel % 2 == 0) throw ConfigError("block: down_kernel must be odd");
}

std::vector<std::size_t> pyramid_lengths(std::size_t len, std::size_t stages) {
  std::vector<std::size_t> out{len};
  for (std::size_t s = 1; s < stages; ++s) out.push_back((out.back() + 1) / 2);
  return out;
}

std::size_t fusion_fan_in(std::size_t level, std::size_t stages) {
  return 1 + (level + 1 < stages ? 1 : 0) + (level > 0 ? 1 : 0);
}

std::size_t block_param_count(const BlockConfig& c) {
  c.validate();
  const std::size_t io = c.io_channels, b = c.bottleneck, ch = c.stage_channels, s = c.stages, k = c.down_kernel;
  const std::size_t norm = 2 * ch, act = 1;
  std::size_t n = 0;
  n += io * b + b;                            // entry
  n += b * ch + ch + norm + act;              // expand
  n += (s - 1) * (ch * k + ch + norm + act);  // pyramid
  n += (s - 1) * (ch * k + ch);               // fusion downsamplers
  for (std::size_t l = 0; l < s; ++l) n += fusion_fan_in(l, s) * ch * ch + ch + norm + act;
  n += s * ch * ch + ch + norm + act;  // global fusion
  n += ch * b + b + act;               // squeeze
  n += b * io + io;                    // exit
  return n;
}

template <typename T>
void BlockWeights<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  entry.collect(prefix + ".entry", out);
  expand.collect(prefix + ".expand", out);
  expand_norm.collect(prefix + ".expand_norm", out);
  expand_act.collect(prefix + ".expand_act", out);
  for (std::size_t i = 0; i < down.size(); ++i) {
    const auto tag = std::to_string(i + 1);
    down[i].collect(prefix + ".down" + tag, out);
    down_norm[i].collect(prefix + ".down_norm" + tag, out);
    down_act[i].collect(prefix + ".down_act" + tag, out);
  }
  for (std::size_t i = 0; i < fuse_down.size(); ++i) fuse_down[i].collect(prefix + ".fuse_down" + std::to_string(i + 1), out);
  for (std::size_t i = 0; i < fuse_proj.size(); ++i) {
    const auto tag = std::to_string(i);
    fuse_proj[i].collect(prefix + ".fuse_proj" + tag, out);
    fuse_norm[i].collect(prefix + ".fuse_norm" + tag, out);
    fuse_act[i].collect(prefix + ".fuse_act" + tag, out);
  }
  global_proj.collect(prefix + ".global_proj", out);
  global_norm.collect(prefix + ".global_norm", out);
  global_act.collect(prefix + ".global_act", out);
  squeeze.collect(prefix + ".squeeze", out);
  squeeze_act.collect(prefix + ".squeeze_act", out);
  exit.collect(prefix + ".exit", out);
}

template <typename T>
AfrcnnBlock<T>::AfrcnnBlock(const BlockConfig& config, std::mt19937_64& rng) : config_(config) {
  config_.validate();
  const std::size_t io = config_.io_channels, b = config_.bottleneck, c = config_.stage_channels;
  const std::size_t s = config_.stages, k = config_.down_kernel;
  const Conv1dOptions pointwise{};
  const Conv1dOptions depthwise{.stride = BlockConfig::kDownStride, .padding = (k - 1) / 2, .groups = c};
  auto& w = weights_;
  w.entry = Conv1dLayer<T>::create(io, b, 1, pointwise, rng);
  w.expand = Conv1dLayer<T>::create(b, c, 1, pointwise, rng);
  w.expand_norm = NormLayer<T>::create(c);
  w.expand_act = PReluLayer<T>::create();
  for (std::size_t i = 1; i < s; ++i) {
    w.down.push_back(Conv1dLayer<T>::create(c, c, k, depthwise, rng));
    w.down_norm.push_back(NormLayer<T>::create(c));
    w.down_act.push_back(PReluLayer<T>::create());
  }
  for (std::size_t i = 1; i < s; ++i) w.fuse_down.push_back(Conv1dLayer<T>::create(c, c, k, depthwise, rng));
  for (std::size_t l = 0; l < s; ++l) {
    w.fuse_proj.push_back(Conv1dLayer<T>::create(fusion_fan_in(l, s) * c, c, 1, pointwise, rng));
    w.fuse_norm.push_back(NormLayer<T>::create(c));
    w.fuse_act.push_back(PReluLayer<T>::create());
  }
  w.global_proj = Conv1dLayer<T>::create(s * c, c, 1, pointwise, rng);
  w.global_norm = NormLayer<T>::create(c);
  w.global_act = PReluLayer<T>::create();
  w.squeeze = Conv1dLayer<T>::create(c, b, 1, pointwise, rng);
  w.squeeze_act = PReluLayer<T>::create();
  w.exit = Conv1dLayer<T>::create(b, io, 1, pointwise, rng);
}

template <typename T>
Tensor<T> AfrcnnBlock<T>::forward(const Tensor<T>& x, std::vector<std::size_t>* level_lengths) const {
  if (x.rank() != 2 || x.dim(0) != config_.io_channels) {
    throw DimensionError("afrcnn", "channels",
                         "expected [" + std::to_string(config_.io_channels) + ", T], got " + to_string(x.shape()));
  }
  const std::size_t len = x.dim(1), s = config_.stages;
  if (len < config_.min_length()) {
    throw ConfigError("afrcnn: input length " + std::to_string(len) + " is shorter than 2^(S-1) = " +
                      std::to_string(config_.min_length()));
  }
  const auto& w = weights_;

  std::vector<Tensor<T>> levels;
  levels.reserve(s);
  levels.push_back(w.expand_act(w.expand_norm(w.expand(w.entry(x)))));
  for (std::size_t i = 1; i < s; ++i) levels.push_back(w.down_act[i - 1](w.down_norm[i - 1](w.down[i - 1](levels.back()))));
  if (level_lengths) {
    level_lengths->clear();
    for (const auto& l : levels) level_lengths->push_back(l.dim(1));
  }

  std::vector<Tensor<T>> fused;
  fused.reserve(s);
  for (std::size_t i = 0; i < s; ++i) {
    std::vector<Tensor<T>> parts{levels[i]};
    if (i + 1 < s) parts.push_back(nearest_interp1d(levels[i + 1], levels[i].dim(1)));
    if (i > 0) parts.push_back(w.fuse_down[i - 1](levels[i - 1]));
    auto cat = parts.size() == 1 ? parts[0] : concat(parts, 0);
    fused.push_back(w.fuse_act[i](w.fuse_norm[i](w.fuse_proj[i](cat))));
  }

  std::vector<Tensor<T>> gathered;
  gathered.reserve(s);
  for (std::size_t i = 0; i < s; ++i) gathered.push_back(i == 0 ? fused[0] : nearest_interp1d(fused[i], len));
  auto global = w.global_act(w.global_norm(w.global_proj(s == 1 ? gathered[0] : concat(gathered, 0))));
  auto residual = w.exit(w.squeeze_act(w.squeeze(global)));
  return add(x, residual);
}

template <typename T>
ParamList<T> AfrcnnBlock<T>::parameters(const std::string& prefix) const {
  ParamList<T> out;
  weights_.collect(prefix, out);
  return out;
}

template <typename T>
AfrcnnBlock<T> AfrcnnBlock<T>::clone() const {
  std::mt19937_64 rng(0);
  AfrcnnBlock copy(config_, rng);
  auto dst = copy.parameters("");
  assign_values(parameters(""), dst);
  return copy;
}

template class AfrcnnBlock<float>;
template class AfrcnnBlock<double>;
template struct BlockWeights<float>;
template struct BlockWeights<double>;

}  // namespace avlit
