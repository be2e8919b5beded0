#pragma once

#include <optional>

#include "tristream/backbone.hpp"
#include "tristream/heads.hpp"

namespace tristream {

// Backbone + configured temporal head + classifier.
class ClassificationModel {
 public:
  static ClassificationModel make(const NetworkConfig& cfg, uint64_t seed);

  Tensor forward(const Backbone::PathwayInputs& in, const ForwardCtx& ctx) const;
  Tensor forward_clips(const std::vector<Tensor>& clip_frames, int fps,
                       const ForwardCtx& ctx) const;

  ParamList parameters() const;
  const NetworkConfig& config() const { return cfg_; }
  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }

 private:
  NetworkConfig cfg_;
  Backbone backbone_;
  std::optional<AttentionHead> attention_;
  std::optional<BiLstmHead> bilstm_;
  Classifier classifier_;
};

}  // namespace tristream
