#pragma once

#include <array>
#include <optional>
#include <vector>

#include "tristream/layers.hpp"
#include "tristream/sampler.hpp"

namespace tristream {

enum class HeadKind { none, bilstm, attention };
enum class PathwaySet { all, single_only };

HeadKind head_kind_from_string(const std::string& s);
std::string to_string(HeadKind k);
PathwaySet pathway_set_from_string(const std::string& s);
std::string to_string(PathwaySet p);

// One pathway's geometry: temporal stride, stem width, residual stage
// widths (res2..res5) and block counts.
struct PathwayConfig {
  int theta = 1;
  int stem_width = 8;
  std::array<int, 4> stage_widths{8, 16, 16, 32};
  std::array<int, 4> blocks{1, 1, 1, 1};
};

// Full model description; fast widths are derived as beta * slow widths
// (must be exact positive integers).
struct NetworkConfig {
  StrideTriple strides{8, 4, 2};
  double beta = 0.125;
  int in_channels = 1;
  int frames = 8;
  int crop = 32;
  int stem_width = 8;
  std::array<int, 4> slow_widths{8, 16, 32, 64};
  std::array<int, 4> blocks{2, 2, 2, 2};
  HeadKind head = HeadKind::attention;
  PathwaySet pathways = PathwaySet::all;
  int num_classes = 4;
  int attn_heads = 4;
  int lstm_hidden = 32;
  int roi_size = 7;

  int t_single() const { return (frames + strides.theta1 - 1) / strides.theta1; }
  int t_slow() const { return (frames + strides.theta2 - 1) / strides.theta2; }
  int t_fast() const { return (frames + strides.theta3 - 1) / strides.theta3; }
  // temporal length of the feature sequence handed to the head
  int sequence_len() const {
    return pathways == PathwaySet::single_only ? t_single() : t_fast();
  }

  PathwayConfig single_config() const;
  PathwayConfig slow_config() const;
  PathwayConfig fast_config() const;

  // channel width of the concatenated res5 features
  int64_t feature_dim() const;
  void validate() const;
};

struct ResidualBlock {
  Conv3dLayer conv1, conv2;
  NormLayer norm1, norm2;
  std::optional<Conv3dLayer> proj;

  // downsample halves H,W at stage entry; dilated runs stride 1 with
  // spatial dilation 2 (detection-mode res5)
  static ResidualBlock make(int64_t cin, int64_t cout, bool downsample, bool dilated,
                            Rng& rng);
  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  Shape output_shape(const Shape& in) const;
  int64_t count_macs(const Shape& in) const;
};

// Stem plus four residual stages; produces the five stage features
// [after pool1, res2, res3, res4, res5].
struct Pathway {
  Conv3dLayer stem;
  NormLayer stem_norm;
  std::vector<std::vector<ResidualBlock>> stages;

  static Pathway make(const PathwayConfig& cfg, int in_channels, bool dilated_res5,
                      Rng& rng);
  Tensor forward_stem(const Tensor& x) const;
  Tensor forward_stage(int stage, const Tensor& x) const;
  std::vector<Tensor> run(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t count_macs(const Shape& input) const;
};

// Learned unidirectional fusion: donor is temporally downsampled by a
// strided conv (kernel 5 along T), projected to the receiver's channels by
// a 1x1x1 conv, scaled by alpha and added.
struct LateralLink {
  Conv3dLayer tconv;
  Conv3dLayer proj;
  Tensor alpha;

  static LateralLink make(int64_t donor_channels, int64_t receiver_channels,
                          int64_t t_ratio, Rng& rng);
  Tensor fuse(const Tensor& donor, const Tensor& receiver) const;
  void collect(const std::string& prefix, ParamList& out) const;
  int64_t count_macs(const Shape& donor) const;
};

class Backbone {
 public:
  struct PathwayInputs {
    Tensor single;  // [N,C,T1,H,W]
    Tensor slow;    // [N,C,T2,H,W] (undefined in single_only mode)
    Tensor fast;    // [N,C,T3,H,W] (undefined in single_only mode)
  };

  static Backbone make(const NetworkConfig& cfg, bool dilated_res5, Rng& rng);

  // Per-pathway res5 features after lateral fusion, order single/slow/fast.
  std::vector<Tensor> forward_res5(const PathwayInputs& in) const;
  // Spatially pooled, temporally aligned, channel-concatenated sequence
  // [N, sequence_len, feature_dim] for the heads.
  Tensor forward_sequence(const PathwayInputs& in) const;
  // Aligned channel-concatenated res5 maps [N, D, T, H5, W5] for detection.
  Tensor forward_fused_map(const PathwayInputs& in) const;

  void collect(ParamList& out) const;
  const NetworkConfig& config() const { return cfg_; }
  const Pathway& single_pathway() const { return single_; }
  const Pathway& slow_pathway() const { return slow_; }
  const Pathway& fast_pathway() const { return fast_; }
  LateralLink& fast_to_slow(int i) { return fast_to_slow_[static_cast<size_t>(i)]; }
  LateralLink& slow_to_single(int i) { return slow_to_single_[static_cast<size_t>(i)]; }

  // Analytic multiply-accumulate counts at the configured input geometry.
  int64_t single_macs() const;
  int64_t slow_macs() const;
  int64_t fast_macs() const;

 private:
  NetworkConfig cfg_;
  bool dilated_ = false;
  Pathway single_, slow_, fast_;
  std::vector<LateralLink> fast_to_slow_, slow_to_single_;
};

// Builds [N,C,T_p,H,W] batches for each enabled pathway from raw clips.
Backbone::PathwayInputs prepare_pathway_inputs(const std::vector<Tensor>& clip_frames,
                                               const NetworkConfig& cfg, int fps);

}  // namespace tristream
