#include "tristream/backbone.hpp"

#include <cmath>

namespace tristream {

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "none") return HeadKind::none;
  if (s == "bilstm") return HeadKind::bilstm;
  if (s == "attention") return HeadKind::attention;
  throw ValueError("unknown head kind '" + s + "' (expected none|bilstm|attention)");
}

std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::none: return "none";
    case HeadKind::bilstm: return "bilstm";
    case HeadKind::attention: return "attention";
  }
  return "?";
}

PathwaySet pathway_set_from_string(const std::string& s) {
  if (s == "all") return PathwaySet::all;
  if (s == "single") return PathwaySet::single_only;
  throw ValueError("unknown pathway set '" + s + "' (expected all|single)");
}

std::string to_string(PathwaySet p) {
  return p == PathwaySet::all ? "all" : "single";
}

PathwayConfig NetworkConfig::single_config() const {
  return {strides.theta1, stem_width, slow_widths, blocks};
}

PathwayConfig NetworkConfig::slow_config() const {
  return {strides.theta2, stem_width, slow_widths, blocks};
}

PathwayConfig NetworkConfig::fast_config() const {
  PathwayConfig pc;
  pc.theta = strides.theta3;
  pc.blocks = blocks;
  auto scaled = [this](int w) {
    const double exact = beta * w;
    const int rounded = static_cast<int>(std::llround(exact));
    if (rounded < 1 || std::abs(exact - rounded) > 1e-9)
      throw ValueError("fast pathway width beta*" + std::to_string(w) + " = " +
                       std::to_string(exact) + " is not a positive integer");
    return rounded;
  };
  pc.stem_width = scaled(stem_width);
  for (size_t i = 0; i < slow_widths.size(); ++i)
    pc.stage_widths[i] = scaled(slow_widths[i]);
  return pc;
}

int64_t NetworkConfig::feature_dim() const {
  if (pathways == PathwaySet::single_only) return slow_widths[3];
  return static_cast<int64_t>(slow_widths[3]) + slow_widths[3] +
         fast_config().stage_widths[3];
}

void NetworkConfig::validate() const {
  strides.validate();
  if (beta <= 0.0 || beta > 1.0)
    throw ValueError("beta must be in (0,1], got " + std::to_string(beta));
  if (in_channels != 1 && in_channels != 3)
    throw ValueError("in_channels must be 1 or 3");
  if (frames < 1) throw ValueError("frames must be >= 1");
  if (crop < 32)
    throw ValueError("crop must be >= 32 (five spatial halvings), got " +
                     std::to_string(crop));
  if (num_classes < 2) throw ValueError("num_classes must be >= 2");
  if (stem_width < 1) throw ValueError("stem width must be positive");
  for (int w : slow_widths)
    if (w < 1) throw ValueError("stage widths must be positive");
  for (int b : blocks)
    if (b < 1) throw ValueError("block counts must be >= 1");
  fast_config();  // beta * widths must be exact
  if (pathways == PathwaySet::all) {
    if (t_fast() % t_slow() != 0)
      throw ValueError("fast pathway length " + std::to_string(t_fast()) +
                       " is not an integer multiple of slow length " +
                       std::to_string(t_slow()));
    if (t_slow() % t_single() != 0)
      throw ValueError("slow pathway length " + std::to_string(t_slow()) +
                       " is not an integer multiple of single length " +
                       std::to_string(t_single()));
  }
  if (head == HeadKind::attention) {
    if (attn_heads < 1 || feature_dim() % attn_heads != 0)
      throw ValueError("feature dim " + std::to_string(feature_dim()) +
                       " not divisible by attention head count " +
                       std::to_string(attn_heads));
  }
  if (head == HeadKind::bilstm && lstm_hidden < 1)
    throw ValueError("lstm_hidden must be positive");
}

ResidualBlock ResidualBlock::make(int64_t cin, int64_t cout, bool downsample,
                                  bool dilated, Rng& rng) {
  ResidualBlock block;
  const Triple stride = downsample ? Triple{1, 2, 2} : Triple{1, 1, 1};
  const Triple dil = dilated ? Triple{1, 2, 2} : Triple{1, 1, 1};
  const Triple pad = dilated ? Triple{1, 2, 2} : Triple{1, 1, 1};
  block.conv1 = Conv3dLayer::make(cin, cout, {3, 3, 3}, stride, pad, dil, rng);
  block.conv2 = Conv3dLayer::make(cout, cout, {3, 3, 3}, {1, 1, 1}, pad, dil, rng);
  block.norm1 = NormLayer::make(cout);
  block.norm2 = NormLayer::make(cout);
  if (downsample || cin != cout)
    block.proj = Conv3dLayer::make(cin, cout, {1, 1, 1}, stride, {0, 0, 0}, {1, 1, 1}, rng);
  return block;
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  Tensor h = relu(norm1.forward(conv1.forward(x)));
  h = norm2.forward(conv2.forward(h));
  const Tensor shortcut = proj ? proj->forward(x) : x;
  return relu(add(h, shortcut));
}

void ResidualBlock::collect(const std::string& prefix, ParamList& out) const {
  conv1.collect(prefix + ".conv1", out);
  norm1.collect(prefix + ".norm1", out);
  conv2.collect(prefix + ".conv2", out);
  norm2.collect(prefix + ".norm2", out);
  if (proj) proj->collect(prefix + ".proj", out);
}

Shape ResidualBlock::output_shape(const Shape& in) const {
  return conv3d_output_shape(in, conv1.w.shape(), conv1.stride, conv1.pad, conv1.dil);
}

int64_t ResidualBlock::count_macs(const Shape& in) const {
  const Shape mid = output_shape(in);
  int64_t macs = numel_of(mid) * conv1.macs_per_output_element();
  const Shape out =
      conv3d_output_shape(mid, conv2.w.shape(), conv2.stride, conv2.pad, conv2.dil);
  macs += numel_of(out) * conv2.macs_per_output_element();
  if (proj) macs += numel_of(out) * proj->macs_per_output_element();
  return macs;
}

Pathway Pathway::make(const PathwayConfig& cfg, int in_channels, bool dilated_res5,
                      Rng& rng) {
  Pathway p;
  p.stem = Conv3dLayer::make(in_channels, cfg.stem_width, {3, 3, 3}, {1, 2, 2},
                             {1, 1, 1}, {1, 1, 1}, rng);
  p.stem_norm = NormLayer::make(cfg.stem_width);
  int64_t cin = cfg.stem_width;
  for (int stage = 0; stage < 4; ++stage) {
    const int64_t cout = cfg.stage_widths[static_cast<size_t>(stage)];
    const bool dilated = dilated_res5 && stage == 3;
    std::vector<ResidualBlock> blocks;
    for (int b = 0; b < cfg.blocks[static_cast<size_t>(stage)]; ++b) {
      const bool downsample = b == 0 && !dilated;
      blocks.push_back(ResidualBlock::make(b == 0 ? cin : cout, cout, downsample,
                                           dilated, rng));
    }
    p.stages.push_back(std::move(blocks));
    cin = cout;
  }
  return p;
}

Tensor Pathway::forward_stem(const Tensor& x) const {
  const Shape& s = x.shape();
  // five halvings stem..res5; reject inputs the geometry cannot carry
  if (s.size() != 5 || s[3] < 32 || s[4] < 32)
    throw ValueError("pathway input " + shape_str(s) +
                     " smaller than the total downsample factor (32)");
  return relu(stem_norm.forward(stem.forward(x)));
}

Tensor Pathway::forward_stage(int stage, const Tensor& x) const {
  Tensor h = x;
  for (const auto& block : stages[static_cast<size_t>(stage)]) h = block.forward(h);
  return h;
}

std::vector<Tensor> Pathway::run(const Tensor& x) const {
  std::vector<Tensor> features;
  features.push_back(forward_stem(x));
  for (int stage = 0; stage < 4; ++stage)
    features.push_back(forward_stage(stage, features.back()));
  return features;
}

void Pathway::collect(const std::string& prefix, ParamList& out) const {
  stem.collect(prefix + ".stem.conv", out);
  stem_norm.collect(prefix + ".stem.norm", out);
  for (size_t s = 0; s < stages.size(); ++s)
    for (size_t b = 0; b < stages[s].size(); ++b)
      stages[s][b].collect(prefix + ".res" + std::to_string(s + 2) + ".b" +
                               std::to_string(b),
                           out);
}

int64_t Pathway::count_macs(const Shape& input) const {
  Shape shape = conv3d_output_shape(input, stem.w.shape(), stem.stride, stem.pad, stem.dil);
  int64_t macs = numel_of(shape) * stem.macs_per_output_element();
  for (const auto& stage : stages)
    for (const auto& block : stage) {
      macs += block.count_macs(shape);
      shape = conv3d_output_shape(shape, block.conv1.w.shape(), block.conv1.stride,
                                  block.conv1.pad, block.conv1.dil);
      shape[1] = block.conv2.w.dim(0);
    }
  return macs;
}

LateralLink LateralLink::make(int64_t donor_channels, int64_t receiver_channels,
                              int64_t t_ratio, Rng& rng) {
  if (t_ratio < 1)
    throw ValueError("lateral link: donor frames must be at least receiver frames");
  LateralLink link;
  link.tconv = Conv3dLayer::make(donor_channels, donor_channels, {5, 1, 1},
                                 {t_ratio, 1, 1}, {2, 0, 0}, {1, 1, 1}, rng);
  link.proj = Conv3dLayer::make(donor_channels, receiver_channels, {1, 1, 1},
                                {1, 1, 1}, {0, 0, 0}, {1, 1, 1}, rng);
  // zero-init the projection so fusion starts as the identity on the
  // receiver; a randomly initialized transform drowns the receiving
  // pathway's signal at alpha = 1
  std::fill(link.proj.w.mut_data().begin(), link.proj.w.mut_data().end(), 0.0f);
  link.alpha = Tensor::full({}, 1.0f, true);
  return link;
}

Tensor LateralLink::fuse(const Tensor& donor, const Tensor& receiver) const {
  Tensor transformed = proj.forward(tconv.forward(donor));
  if (transformed.shape() != receiver.shape())
    throw ShapeError("lateral_fuse: transformed donor " +
                     shape_str(transformed.shape()) + " does not match receiver " +
                     shape_str(receiver.shape()) +
                     " (donor frames must be an integer multiple of receiver frames)");
  return add(receiver, scale(transformed, alpha));
}

void LateralLink::collect(const std::string& prefix, ParamList& out) const {
  tconv.collect(prefix + ".tconv", out);
  proj.collect(prefix + ".proj", out);
  out.push_back({prefix + ".alpha", alpha});
}

int64_t LateralLink::count_macs(const Shape& donor) const {
  const Shape mid =
      conv3d_output_shape(donor, tconv.w.shape(), tconv.stride, tconv.pad, tconv.dil);
  int64_t macs = numel_of(mid) * tconv.macs_per_output_element();
  const Shape out =
      conv3d_output_shape(mid, proj.w.shape(), proj.stride, proj.pad, proj.dil);
  macs += numel_of(out) * proj.macs_per_output_element();
  return macs;
}

Backbone Backbone::make(const NetworkConfig& cfg, bool dilated_res5, Rng& rng) {
  cfg.validate();
  Backbone b;
  b.cfg_ = cfg;
  b.dilated_ = dilated_res5;
  b.single_ = Pathway::make(cfg.single_config(), cfg.in_channels, dilated_res5, rng);
  if (cfg.pathways == PathwaySet::all) {
    b.slow_ = Pathway::make(cfg.slow_config(), cfg.in_channels, dilated_res5, rng);
    b.fast_ = Pathway::make(cfg.fast_config(), cfg.in_channels, dilated_res5, rng);
    const PathwayConfig fast_cfg = cfg.fast_config();
    const PathwayConfig slow_cfg = cfg.slow_config();
    const int64_t fs_ratio = cfg.t_fast() / cfg.t_slow();
    const int64_t ss_ratio = cfg.t_slow() / cfg.t_single();
    // channel widths at the four link points: after pool1, res2, res3, res4
    const std::array<int64_t, 4> fast_c{fast_cfg.stem_width, fast_cfg.stage_widths[0],
                                        fast_cfg.stage_widths[1], fast_cfg.stage_widths[2]};
    const std::array<int64_t, 4> slow_c{slow_cfg.stem_width, slow_cfg.stage_widths[0],
                                        slow_cfg.stage_widths[1], slow_cfg.stage_widths[2]};
    for (int i = 0; i < 4; ++i) {
      b.fast_to_slow_.push_back(
          LateralLink::make(fast_c[static_cast<size_t>(i)],
                            slow_c[static_cast<size_t>(i)], fs_ratio, rng));
      b.slow_to_single_.push_back(
          LateralLink::make(slow_c[static_cast<size_t>(i)],
                            slow_c[static_cast<size_t>(i)], ss_ratio, rng));
    }
  }
  return b;
}

std::vector<Tensor> Backbone::forward_res5(const PathwayInputs& in) const {
  if (cfg_.pathways == PathwaySet::single_only) {
    Tensor x = single_.forward_stem(in.single);
    for (int stage = 0; stage < 4; ++stage) x = single_.forward_stage(stage, x);
    return {x};
  }
  Tensor x_single = single_.forward_stem(in.single);
  Tensor x_slow = slow_.forward_stem(in.slow);
  Tensor x_fast = fast_.forward_stem(in.fast);
  // fuse after pool1, then after res2..res4; fast feeds slow first, the
  // updated slow feeds single
  x_slow = fast_to_slow_[0].fuse(x_fast, x_slow);
  x_single = slow_to_single_[0].fuse(x_slow, x_single);
  for (int stage = 0; stage < 4; ++stage) {
    x_single = single_.forward_stage(stage, x_single);
    x_slow = slow_.forward_stage(stage, x_slow);
    x_fast = fast_.forward_stage(stage, x_fast);
    if (stage < 3) {
      x_slow = fast_to_slow_[static_cast<size_t>(stage + 1)].fuse(x_fast, x_slow);
      x_single = slow_to_single_[static_cast<size_t>(stage + 1)].fuse(x_slow, x_single);
    }
  }
  return {x_single, x_slow, x_fast};
}

Tensor Backbone::forward_sequence(const PathwayInputs& in) const {
  const std::vector<Tensor> res5 = forward_res5(in);
  const int64_t t_ref = cfg_.sequence_len();
  std::vector<Tensor> pooled;
  pooled.reserve(res5.size());
  for (const Tensor& f : res5) {
    Tensor g = mean_axes(f, {3, 4});  // [N,C,T]
    const int64_t t = g.dim(2);
    if (t_ref % t != 0)
      throw ShapeError("pathway sequence length " + std::to_string(t) +
                       " does not divide reference length " + std::to_string(t_ref));
    if (t != t_ref) g = repeat_interleave(g, t_ref / t, 2);
    pooled.push_back(g);
  }
  Tensor fused = pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
  return transpose_last2(fused);  // [N,T,D]
}

Tensor Backbone::forward_fused_map(const PathwayInputs& in) const {
  const std::vector<Tensor> res5 = forward_res5(in);
  const int64_t t_ref = cfg_.sequence_len();
  std::vector<Tensor> aligned;
  aligned.reserve(res5.size());
  for (const Tensor& f : res5) {
    const int64_t t = f.dim(2);
    aligned.push_back(t == t_ref ? f : repeat_interleave(f, t_ref / t, 2));
  }
  return aligned.size() == 1 ? aligned[0] : concat(aligned, 1);
}

void Backbone::collect(ParamList& out) const {
  single_.collect("single", out);
  if (cfg_.pathways == PathwaySet::all) {
    slow_.collect("slow", out);
    fast_.collect("fast", out);
    static const char* kLinkNames[4] = {"pool1", "res2", "res3", "res4"};
    for (int i = 0; i < 4; ++i) {
      fast_to_slow_[static_cast<size_t>(i)].collect(
          std::string("fuse.fast_slow.") + kLinkNames[i], out);
      slow_to_single_[static_cast<size_t>(i)].collect(
          std::string("fuse.slow_single.") + kLinkNames[i], out);
    }
  }
}

int64_t Backbone::single_macs() const {
  return single_.count_macs({1, cfg_.in_channels, cfg_.t_single(), cfg_.crop, cfg_.crop});
}

int64_t Backbone::slow_macs() const {
  if (cfg_.pathways == PathwaySet::single_only) return 0;
  return slow_.count_macs({1, cfg_.in_channels, cfg_.t_slow(), cfg_.crop, cfg_.crop});
}

int64_t Backbone::fast_macs() const {
  if (cfg_.pathways == PathwaySet::single_only) return 0;
  return fast_.count_macs({1, cfg_.in_channels, cfg_.t_fast(), cfg_.crop, cfg_.crop});
}

Backbone::PathwayInputs prepare_pathway_inputs(const std::vector<Tensor>& clip_frames,
                                               const NetworkConfig& cfg, int fps) {
  Backbone::PathwayInputs inputs;
  std::vector<Tensor> single, slow, fast;
  for (const Tensor& frames : clip_frames) {
    VideoClip clip{frames, fps};
    single.push_back(clip_to_input(sample_pathway(clip, cfg.strides.theta1)));
    if (cfg.pathways == PathwaySet::all) {
      slow.push_back(clip_to_input(sample_pathway(clip, cfg.strides.theta2)));
      fast.push_back(clip_to_input(sample_pathway(clip, cfg.strides.theta3)));
    }
  }
  inputs.single = stack_batch(single);
  if (cfg.pathways == PathwaySet::all) {
    inputs.slow = stack_batch(slow);
    inputs.fast = stack_batch(fast);
  }
  return inputs;
}

}  // namespace tristream
