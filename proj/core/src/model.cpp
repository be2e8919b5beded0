#include "tristream/model.hpp"

namespace tristream {

ClassificationModel ClassificationModel::make(const NetworkConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ClassificationModel m;
  m.cfg_ = cfg;
  m.backbone_ = Backbone::make(cfg, /*dilated_res5=*/false, rng);
  int64_t classifier_in = cfg.feature_dim();
  switch (cfg.head) {
    case HeadKind::attention:
      m.attention_ = AttentionHead::make(cfg.feature_dim(), cfg.attn_heads, rng);
      break;
    case HeadKind::bilstm:
      m.bilstm_ = BiLstmHead::make(cfg.feature_dim(), cfg.lstm_hidden, rng);
      classifier_in = m.bilstm_->output_dim();
      break;
    case HeadKind::none:
      break;
  }
  m.classifier_ = Classifier::make(classifier_in, cfg.num_classes, rng);
  return m;
}

Tensor ClassificationModel::forward(const Backbone::PathwayInputs& in,
                                    const ForwardCtx& ctx) const {
  Tensor seq = backbone_.forward_sequence(in);
  if (attention_) seq = attention_->forward(seq);
  if (bilstm_) seq = bilstm_->forward(seq);
  return classifier_.forward(seq, ctx);
}

Tensor ClassificationModel::forward_clips(const std::vector<Tensor>& clip_frames,
                                          int fps, const ForwardCtx& ctx) const {
  return forward(prepare_pathway_inputs(clip_frames, cfg_, fps), ctx);
}

ParamList ClassificationModel::parameters() const {
  ParamList params;
  backbone_.collect(params);
  if (attention_) attention_->collect("head.attn", params);
  if (bilstm_) bilstm_->collect("head.bilstm", params);
  classifier_.collect("classifier", params);
  return params;
}

}  // namespace tristream
