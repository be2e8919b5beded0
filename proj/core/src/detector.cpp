#include "tristream/detector.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tristream {

namespace {
std::atomic<int64_t> g_roi_clamp_count{0};

struct RoiGrid {
  // per-cell corner indices and lerp weights
  std::vector<int64_t> y0, y1, x0, x1;
  std::vector<float> wy, wx;
};

// Half-pixel sampling: cell centers in box space, borders clamped.
void fill_axis(double lo, double hi, int64_t extent, int cells,
               std::vector<int64_t>& c0, std::vector<int64_t>& c1,
               std::vector<float>& w) {
  double span = hi - lo;
  if (span < 1.0) {  // degenerate after mapping: clamp to one cell
    const double center = 0.5 * (lo + hi);
    lo = std::clamp(center - 0.5, 0.0, static_cast<double>(extent - 1));
    hi = lo + 1.0;
    span = 1.0;
    g_roi_clamp_count.fetch_add(1, std::memory_order_relaxed);
  }
  const double bin = span / cells;
  for (int i = 0; i < cells; ++i) {
    double p = lo + (i + 0.5) * bin - 0.5;
    p = std::clamp(p, 0.0, static_cast<double>(extent - 1));
    const int64_t lo_idx = static_cast<int64_t>(p);
    c0.push_back(lo_idx);
    c1.push_back(std::min(lo_idx + 1, extent - 1));
    w.push_back(static_cast<float>(p - lo_idx));
  }
}

}  // namespace

int64_t roi_degenerate_clamp_count() { return g_roi_clamp_count.load(); }
void reset_roi_degenerate_clamp_count() { g_roi_clamp_count.store(0); }

Tensor roi_extract(const Tensor& feat, const Box& box, int out_h, int out_w,
                   int64_t batch_index) {
  const Shape& s = feat.shape();
  if (s.size() != 5)
    throw ShapeError("roi_extract: features must be [N,C,T,H,W], got " + shape_str(s));
  if (out_h < 1 || out_w < 1) throw ValueError("roi_extract: output grid must be >= 1x1");
  if (!box.valid())
    throw ValueError("roi_extract: invalid box (x1<x2 and y1<y2 required)");
  if (batch_index < 0 || batch_index >= s[0])
    throw ValueError("roi_extract: batch index out of range");
  const int64_t c = s[1], t = s[2], h = s[3], w = s[4];

  auto grid = std::make_shared<RoiGrid>();
  fill_axis(box.y1 * static_cast<double>(h), box.y2 * static_cast<double>(h), h, out_h,
            grid->y0, grid->y1, grid->wy);
  fill_axis(box.x1 * static_cast<double>(w), box.x2 * static_cast<double>(w), w, out_w,
            grid->x0, grid->x1, grid->wx);

  const int64_t plane = h * w;
  const int64_t base = batch_index * c * t * plane;

  Tensor out = detail::make_op_output(
      {c, t, out_h, out_w}, "roi_extract", {feat},
      [feat, grid, base, c, t, plane, w, out_h, out_w](const TensorImpl& self) {
        if (!feat.impl()->requires_grad) return;
        auto& dx = feat.impl()->ensure_grad();
        const float* g = self.grad.data();
        int64_t idx = 0;
        for (int64_t ci = 0; ci < c; ++ci)
          for (int64_t ti = 0; ti < t; ++ti) {
            float* pl = dx.data() + base + (ci * t + ti) * plane;
            for (int i = 0; i < out_h; ++i) {
              const float wy = grid->wy[static_cast<size_t>(i)];
              const int64_t y0 = grid->y0[static_cast<size_t>(i)];
              const int64_t y1 = grid->y1[static_cast<size_t>(i)];
              for (int j = 0; j < out_w; ++j, ++idx) {
                const float wx = grid->wx[static_cast<size_t>(j)];
                const int64_t x0 = grid->x0[static_cast<size_t>(j)];
                const int64_t x1 = grid->x1[static_cast<size_t>(j)];
                const float gv = g[idx];
                pl[y0 * w + x0] += gv * (1 - wy) * (1 - wx);
                pl[y0 * w + x1] += gv * (1 - wy) * wx;
                pl[y1 * w + x0] += gv * wy * (1 - wx);
                pl[y1 * w + x1] += gv * wy * wx;
              }
            }
          }
      });

  const float* x = feat.data().data();
  float* y = out.mut_data().data();
  int64_t idx = 0;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int64_t ti = 0; ti < t; ++ti) {
      const float* pl = x + base + (ci * t + ti) * plane;
      for (int i = 0; i < out_h; ++i) {
        const float wy = grid->wy[static_cast<size_t>(i)];
        const int64_t y0 = grid->y0[static_cast<size_t>(i)];
        const int64_t y1 = grid->y1[static_cast<size_t>(i)];
        for (int j = 0; j < out_w; ++j, ++idx) {
          const float wx = grid->wx[static_cast<size_t>(j)];
          const int64_t x0 = grid->x0[static_cast<size_t>(j)];
          const int64_t x1 = grid->x1[static_cast<size_t>(j)];
          y[idx] = (1 - wy) * ((1 - wx) * pl[y0 * w + x0] + wx * pl[y0 * w + x1]) +
                   wy * ((1 - wx) * pl[y1 * w + x0] + wx * pl[y1 * w + x1]);
        }
      }
    }
  return out;
}

DetectionModel DetectionModel::make(const NetworkConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  DetectionModel m;
  m.cfg_ = cfg;
  m.backbone_ = Backbone::make(cfg, /*dilated_res5=*/true, rng);
  m.roi_fc_ = LinearLayer::make(cfg.feature_dim(), cfg.num_classes, rng);
  return m;
}

Tensor DetectionModel::box_logits(const std::vector<Tensor>& clip_frames,
                                  const std::vector<std::vector<Box>>& boxes_per_clip,
                                  int fps, const ForwardCtx& ctx) const {
  if (clip_frames.size() != boxes_per_clip.size())
    throw ValueError("box_logits: one box list per clip required");
  const auto inputs = prepare_pathway_inputs(clip_frames, cfg_, fps);
  Tensor fused = backbone_.forward_fused_map(inputs);  // [N,D,T,H,W]
  std::vector<Tensor> pooled;
  for (size_t n = 0; n < boxes_per_clip.size(); ++n) {
    for (const Box& box : boxes_per_clip[n]) {
      Tensor roi = roi_extract(fused, box, cfg_.roi_size, cfg_.roi_size,
                               static_cast<int64_t>(n));
      Tensor vec = reduce_max_tail(roi, 3);  // [D]
      pooled.push_back(reshape(vec, {1, vec.dim(0)}));
    }
  }
  if (pooled.empty()) throw ValueError("box_logits: no boxes in batch");
  Tensor features = pooled.size() == 1 ? pooled[0] : concat(pooled, 0);
  if (ctx.training && ctx.dropout_p > 0.0f) {
    if (!ctx.rng) throw ValueError("box_logits: training forward needs an rng");
    features = dropout(features, ctx.dropout_p, true, *ctx.rng);
  }
  return roi_fc_.forward(features);
}

std::vector<Detection> DetectionModel::detect(
    const VideoClip& clip, const std::vector<BoxAnnotation>& proposals) const {
  NoGradGuard no_grad;
  std::vector<std::vector<Box>> boxes(1);
  for (const auto& p : proposals) boxes[0].push_back(p.box);
  if (boxes[0].empty()) return {};
  Tensor logits = box_logits({clip.frames}, boxes, clip.fps, ForwardCtx{});
  Tensor scores = sigmoid(logits);
  std::vector<Detection> out;
  const int64_t k = scores.dim(1);
  for (size_t i = 0; i < proposals.size(); ++i) {
    Detection det;
    det.box = proposals[i].box;
    det.keyframe_time = proposals[i].keyframe_time;
    det.group = proposals[i].group;
    det.scores.resize(static_cast<size_t>(k));
    for (int64_t j = 0; j < k; ++j)
      det.scores[static_cast<size_t>(j)] = scores.at({static_cast<int64_t>(i), j});
    out.push_back(std::move(det));
  }
  return out;
}

ParamList DetectionModel::parameters() const {
  ParamList params;
  backbone_.collect(params);
  roi_fc_.collect("roi_head.fc", params);
  return params;
}

std::vector<DetManifestRecord> read_detection_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValueError("read_detection_manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  std::vector<DetManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw ValueError("read_detection_manifest: expected 8 fields on line " +
                       std::to_string(line_no));
    DetManifestRecord r;
    try {
      r.path = (base / fields[0]).string();
      r.fps = std::stoi(fields[1]);
      r.keyframe = std::stod(fields[2]);
      r.box = {std::stod(fields[3]), std::stod(fields[4]), std::stod(fields[5]),
               std::stod(fields[6])};
      std::istringstream tail(fields[7]);
      std::string tok;
      while (std::getline(tail, tok, ';')) {
        if (tok.empty()) continue;
        if (tok.find('.') != std::string::npos || tok.find('e') != std::string::npos)
          r.scores.push_back(std::stod(tok));
        else
          r.class_ids.push_back(std::stoi(tok));
      }
    } catch (const ValueError&) {
      throw;
    } catch (const std::exception&) {
      throw ValueError("read_detection_manifest: bad value on line " +
                       std::to_string(line_no));
    }
    if (!r.box.valid())
      throw ValueError("read_detection_manifest: invalid box on line " +
                       std::to_string(line_no));
    records.push_back(std::move(r));
  }
  return records;
}

void write_detection_manifest(const std::filesystem::path& path,
                              const std::vector<DetManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValueError("write_detection_manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  out << std::fixed;  // scores always carry a '.', keeping them distinct from ids
  out.precision(9);
  for (const auto& r : records) {
    const auto rel = std::filesystem::proximate(r.path, base);
    out << rel.generic_string() << ',' << r.fps << ',' << r.keyframe << ',' << r.box.x1
        << ',' << r.box.y1 << ',' << r.box.x2 << ',' << r.box.y2 << ',';
    if (!r.scores.empty()) {
      for (size_t i = 0; i < r.scores.size(); ++i)
        out << (i ? ";" : "") << r.scores[i];
    } else {
      for (size_t i = 0; i < r.class_ids.size(); ++i)
        out << (i ? ";" : "") << r.class_ids[i];
    }
    out << '\n';
  }
}

}  // namespace tristream
