#include "gundet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gundet/checkpoint.hpp"
#include "gundet/errors.hpp"
#include "gundet/kernels.hpp"
#include "json.hpp"

using nlohmann::json;

namespace gundet {

namespace {

constexpr double kBoxLossWeight = 5.0;
constexpr double kNoObjectWeight = 0.5;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_int(int v) {
  int e = 0;
  while ((1 << e) < v) ++e;
  return e;
}

struct DetectorTrace {
  std::vector<Tensor> stage_pre;    // pre-ReLU conv outputs per stage
  std::vector<Tensor> stage_post;   // post-ReLU
  std::vector<Tensor> head_logits;  // per configured scale [5,S,S]
};

int stage_count(const DetectorConfig& cfg) {
  return log2_int(*std::max_element(cfg.strides.begin(), cfg.strides.end()));
}

kernels::Conv2dShape shape_for(const Tensor& in, const Tensor& w, int stride,
                               int pad) {
  kernels::Conv2dShape s;
  s.in_channels = in.dim(0);
  s.height = in.dim(1);
  s.width = in.dim(2);
  s.out_channels = w.dim(0);
  s.kernel = w.dim(2);
  s.stride = stride;
  s.pad = pad;
  return s;
}

DetectorTrace forward_trace(const DetectorState& state, const Tensor& canvas) {
  if (canvas.dim(0) != state.input_channels)
    throw ValidationError("detector expects " +
                          std::to_string(state.input_channels) +
                          " input channels");
  if (canvas.dim(1) != state.config.input_size ||
      canvas.dim(2) != state.config.input_size)
    throw ValidationError("detector input must be a letterboxed canvas of size " +
                          std::to_string(state.config.input_size));

  DetectorTrace tr;
  const int stages = stage_count(state.config);
  const Tensor* cur = &canvas;
  for (int k = 1; k <= stages; ++k) {
    const Tensor& w = state.params.at("trunk" + std::to_string(k) + ".weight");
    const Tensor& b = state.params.at("trunk" + std::to_string(k) + ".bias");
    const auto s = shape_for(*cur, w, 2, 1);
    Tensor pre({s.out_channels, s.out_height(), s.out_width()});
    kernels::conv2d_forward(s, cur->data(), w.data(), b.data(), pre.data());
    Tensor post = pre;
    for (int64_t i = 0; i < post.size(); ++i) post[i] = std::max(0.0, post[i]);
    tr.stage_pre.push_back(std::move(pre));
    tr.stage_post.push_back(std::move(post));
    cur = &tr.stage_post.back();
  }
  for (int stride : state.config.strides) {
    const int stage = log2_int(stride);
    const Tensor& feat = tr.stage_post[static_cast<size_t>(stage - 1)];
    const Tensor& w = state.params.at("head" + std::to_string(stride) + ".weight");
    const Tensor& b = state.params.at("head" + std::to_string(stride) + ".bias");
    const auto s = shape_for(feat, w, 1, 0);
    Tensor logits({5, s.out_height(), s.out_width()});
    kernels::conv2d_forward(s, feat.data(), w.data(), b.data(), logits.data());
    tr.head_logits.push_back(std::move(logits));
  }
  return tr;
}

double giou_loss_corners(double x1, double y1, double x2, double y2, double g1x,
                         double g1y, double g2x, double g2y, double d[4]) {
  const double iw = std::min(x2, g2x) - std::max(x1, g1x);
  const double ih = std::min(y2, g2y) - std::max(y1, g1y);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double area_p = (x2 - x1) * (y2 - y1);
  const double area_g = (g2x - g1x) * (g2y - g1y);
  const double uni = area_p + area_g - inter;
  const double iou_v = inter / uni;

  const double cw = std::max(x2, g2x) - std::min(x1, g1x);
  const double ch = std::max(y2, g2y) - std::min(y1, g1y);
  const double carea = cw * ch;
  const double giou = iou_v - (carea - uni) / carea;

  // partials wrt (x1, y1, x2, y2)
  double d_inter[4] = {0, 0, 0, 0};
  if (overlap) {
    d_inter[0] = x1 >= g1x ? -ih : 0.0;
    d_inter[1] = y1 >= g1y ? -iw : 0.0;
    d_inter[2] = x2 <= g2x ? ih : 0.0;
    d_inter[3] = y2 <= g2y ? iw : 0.0;
  }
  const double d_area[4] = {-(y2 - y1), -(x2 - x1), (y2 - y1), (x2 - x1)};
  const double d_cw[4] = {x1 <= g1x ? -1.0 : 0.0, 0.0, x2 >= g2x ? 1.0 : 0.0, 0.0};
  const double d_ch[4] = {0.0, y1 <= g1y ? -1.0 : 0.0, 0.0, y2 >= g2y ? 1.0 : 0.0};

  for (int t = 0; t < 4; ++t) {
    const double d_uni = d_area[t] - d_inter[t];
    const double d_iou = (d_inter[t] * uni - inter * d_uni) / (uni * uni);
    const double d_carea = d_cw[t] * ch + cw * d_ch[t];
    // penalty = 1 - uni/carea
    const double d_pen = -(d_uni * carea - uni * d_carea) / (carea * carea);
    d[t] = -(d_iou - d_pen);  // d(1 - giou)
  }
  return 1.0 - giou;
}

Tensor frame_to_canvas_chw(const FrameTensor& canvas) {
  Tensor chw({canvas.channels, canvas.height, canvas.width});
  for (int c = 0; c < canvas.channels; ++c)
    for (int y = 0; y < canvas.height; ++y)
      for (int x = 0; x < canvas.width; ++x)
        chw.at3(c, y, x) = canvas.at(y, x, c);
  return chw;
}

}  // namespace

void validate_detector_config(const DetectorConfig& cfg) {
  if (cfg.input_size <= 0) throw ValidationError("input_size must be positive");
  if (cfg.strides.empty()) throw ValidationError("at least one stride required");
  for (int s : cfg.strides) {
    if (s <= 1 || !is_power_of_two(s))
      throw ValidationError("strides must be powers of two > 1");
    if (cfg.input_size % s != 0)
      throw ValidationError("input_size must be divisible by every stride");
  }
  if (!std::is_sorted(cfg.strides.begin(), cfg.strides.end()) ||
      std::adjacent_find(cfg.strides.begin(), cfg.strides.end()) !=
          cfg.strides.end())
    throw ValidationError("strides must be strictly increasing");
  if (cfg.confidence_threshold < 0.0 || cfg.confidence_threshold > 1.0 ||
      cfg.nms_iou_threshold < 0.0 || cfg.nms_iou_threshold > 1.0)
    throw ValidationError("thresholds must lie in [0,1]");
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0)
    throw ValidationError("iou: boxes must have positive size");
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return inter / uni;
}

std::vector<BoundingBox> decode_predictions(const RawGridPrediction& raw,
                                            const DetectorConfig& cfg) {
  validate_detector_config(cfg);
  if (raw.scales.size() != cfg.strides.size())
    throw ValidationError("raw prediction scale count mismatch");
  std::vector<BoundingBox> boxes;
  for (size_t k = 0; k < raw.scales.size(); ++k) {
    const Tensor& grid = raw.scales[k];
    const int s = cfg.strides[k];
    const int size = cfg.grid_size(k);
    if (grid.ndim() != 3 || grid.dim(0) != 5 || grid.dim(1) != size ||
        grid.dim(2) != size)
      throw ValidationError("raw prediction shape mismatch at stride " +
                            std::to_string(s));
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const double objectness = grid.at3(4, i, j);
        if (objectness < cfg.confidence_threshold) continue;
        const double cx = (j + grid.at3(0, i, j)) * s;
        const double cy = (i + grid.at3(1, i, j)) * s;
        const double w = grid.at3(2, i, j) * cfg.input_size;
        const double h = grid.at3(3, i, j) * cfg.input_size;
        BoundingBox box;
        box.x = cx - w / 2.0;
        box.y = cy - h / 2.0;
        box.w = w;
        box.h = h;
        box.confidence = objectness;
        box.cls = 1;
        boxes.push_back(box);
      }
    }
  }
  return boxes;
}

EncodedBox encode_box(const BoundingBox& canvas_box, const DetectorConfig& cfg) {
  validate_detector_config(cfg);
  if (canvas_box.w <= 0 || canvas_box.h <= 0)
    throw ValidationError("encode_box: box must have positive size");
  const double cx = canvas_box.x + canvas_box.w / 2.0;
  const double cy = canvas_box.y + canvas_box.h / 2.0;
  const double largest = std::max(canvas_box.w, canvas_box.h);

  EncodedBox enc;
  double best = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < cfg.strides.size(); ++k) {
    const double fit = std::abs(largest / cfg.strides[k] - 8.0);
    if (fit < best) {
      best = fit;
      enc.scale = static_cast<int>(k);
    }
  }
  const int s = cfg.strides[static_cast<size_t>(enc.scale)];
  const int size = cfg.grid_size(static_cast<size_t>(enc.scale));
  enc.cell_col = std::clamp(static_cast<int>(cx / s), 0, size - 1);
  enc.cell_row = std::clamp(static_cast<int>(cy / s), 0, size - 1);
  enc.dx = cx / s - enc.cell_col;
  enc.dy = cy / s - enc.cell_row;
  enc.w_rel = canvas_box.w / cfg.input_size;
  enc.h_rel = canvas_box.h / cfg.input_size;
  return enc;
}

std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes,
                             double iou_threshold) {
  std::sort(boxes.begin(), boxes.end(),
            [](const BoundingBox& a, const BoundingBox& b) {
              if (a.confidence != b.confidence) return a.confidence > b.confidence;
              if (a.x != b.x) return a.x < b.x;
              return a.y < b.y;
            });
  std::vector<BoundingBox> kept;
  std::vector<bool> removed(boxes.size(), false);
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(boxes[i]);
    for (size_t j = i + 1; j < boxes.size(); ++j) {
      if (removed[j] || boxes[j].cls != boxes[i].cls) continue;
      if (iou(boxes[i], boxes[j]) > iou_threshold) removed[j] = true;
    }
  }
  return kept;
}

DetectorState make_small_grid_detector(const DetectorConfig& cfg,
                                       int input_channels, uint64_t seed,
                                       int base_width) {
  validate_detector_config(cfg);
  if (input_channels <= 0 || base_width <= 0)
    throw ValidationError("detector widths must be positive");
  DetectorState state;
  state.architecture = "small-grid";
  state.config = cfg;
  state.input_channels = input_channels;
  state.seed = seed;

  Rng rng = Rng::from(seed, 31);
  const int stages = stage_count(cfg);
  int in_c = input_channels;
  for (int k = 1; k <= stages; ++k) {
    const int out_c = base_width * k;
    state.params["trunk" + std::to_string(k) + ".weight"] =
        nn::glorot_uniform({out_c, in_c, 3, 3}, in_c * 9, out_c * 9, rng);
    state.params["trunk" + std::to_string(k) + ".bias"] = Tensor({out_c});
    in_c = out_c;
  }
  for (int stride : cfg.strides) {
    const int stage = log2_int(stride);
    const int feat_c = base_width * stage;
    state.params["head" + std::to_string(stride) + ".weight"] =
        nn::glorot_uniform({5, feat_c, 1, 1}, feat_c, 5, rng);
    state.params["head" + std::to_string(stride) + ".bias"] = Tensor({5});
  }
  return state;
}

RawGridPrediction detector_forward(const DetectorState& state,
                                   const Tensor& canvas_chw) {
  const DetectorTrace tr = forward_trace(state, canvas_chw);
  RawGridPrediction raw;
  for (const Tensor& logits : tr.head_logits) {
    Tensor squashed = logits;
    for (int64_t i = 0; i < squashed.size(); ++i)
      squashed[i] = nn::sigmoid(squashed[i]);
    raw.scales.push_back(std::move(squashed));
  }
  return raw;
}

std::vector<BoundingBox> gt_to_canvas(const std::vector<GroundTruthBox>& gt,
                                      int frame_width, int frame_height,
                                      const DetectorConfig& cfg) {
  const double scale =
      std::min(static_cast<double>(cfg.input_size) / frame_width,
               static_cast<double>(cfg.input_size) / frame_height);
  const int new_w = std::max(1, static_cast<int>(std::round(frame_width * scale)));
  const int new_h = std::max(1, static_cast<int>(std::round(frame_height * scale)));
  const double pad_x = (cfg.input_size - new_w) / 2;
  const double pad_y = (cfg.input_size - new_h) / 2;

  std::vector<BoundingBox> out;
  out.reserve(gt.size());
  for (const auto& g : gt) {
    BoundingBox box;
    const double w = g.w * frame_width * scale;
    const double h = g.h * frame_height * scale;
    box.x = g.cx * frame_width * scale + pad_x - w / 2.0;
    box.y = g.cy * frame_height * scale + pad_y - h / 2.0;
    box.w = w;
    box.h = h;
    box.confidence = 1.0;
    box.cls = 1;
    out.push_back(box);
  }
  return out;
}

std::vector<FrameDetections> detect_frames(const DetectorState& state,
                                           const std::vector<FrameTensor>& frames) {
  std::vector<FrameDetections> all(frames.size());
#pragma omp parallel for schedule(static)
  for (int64_t idx = 0; idx < static_cast<int64_t>(frames.size()); ++idx) {
    const FrameTensor& frame = frames[static_cast<size_t>(idx)];
    LetterboxMap map;
    const FrameTensor canvas = letterbox(frame, state.config.input_size, &map);
    const Tensor chw = frame_to_canvas_chw(canvas);

    const RawGridPrediction raw = detector_forward(state, chw);
    std::vector<BoundingBox> boxes = decode_predictions(raw, state.config);
    boxes = nms(std::move(boxes), state.config.nms_iou_threshold);

    FrameDetections det;
    det.frame_index = static_cast<int>(idx);
    for (BoundingBox box : boxes) {
      // canvas -> original frame coordinates, clamped to frame bounds
      const double x0 = std::clamp((box.x - map.pad_x) / map.scale, 0.0,
                                   static_cast<double>(frame.width));
      const double y0 = std::clamp((box.y - map.pad_y) / map.scale, 0.0,
                                   static_cast<double>(frame.height));
      const double x1 = std::clamp((box.x + box.w - map.pad_x) / map.scale, 0.0,
                                   static_cast<double>(frame.width));
      const double y1 = std::clamp((box.y + box.h - map.pad_y) / map.scale, 0.0,
                                   static_cast<double>(frame.height));
      if (x1 - x0 <= 0.0 || y1 - y0 <= 0.0) continue;
      box.x = x0;
      box.y = y0;
      box.w = x1 - x0;
      box.h = y1 - y0;
      det.boxes.push_back(box);
    }
    all[static_cast<size_t>(idx)] = std::move(det);
  }
  return all;
}

double detector_loss_grads(const DetectorState& state, const Tensor& canvas_chw,
                           const std::vector<BoundingBox>& canvas_gt,
                           nn::ParamMap& grads) {
  const DetectorConfig& cfg = state.config;
  DetectorTrace tr = forward_trace(state, canvas_chw);

  // positive assignment: responsible cell per GT box at its best-fit scale
  struct Target {
    double g1x, g1y, g2x, g2y;
  };
  std::vector<std::map<std::pair<int, int>, Target>> positives(cfg.strides.size());
  for (const auto& gt : canvas_gt) {
    const EncodedBox enc = encode_box(gt, cfg);
    positives[static_cast<size_t>(enc.scale)].try_emplace(
        std::pair{enc.cell_row, enc.cell_col},
        Target{gt.x, gt.y, gt.x + gt.w, gt.y + gt.h});
  }

  int64_t total_cells = 0;
  int64_t total_pos = 0;
  for (size_t k = 0; k < cfg.strides.size(); ++k) {
    const int size = cfg.grid_size(k);
    total_cells += static_cast<int64_t>(size) * size;
    total_pos += static_cast<int64_t>(positives[k].size());
  }
  const double obj_norm = 1.0 / static_cast<double>(total_cells);
  const double box_norm =
      kBoxLossWeight / static_cast<double>(std::max<int64_t>(1, total_pos));

  double loss = 0.0;
  std::vector<Tensor> dlogits;
  for (size_t k = 0; k < cfg.strides.size(); ++k) {
    const Tensor& logits = tr.head_logits[k];
    const int size = cfg.grid_size(k);
    const int stride = cfg.strides[k];
    Tensor dl({5, size, size});
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const auto pos_it = positives[k].find({i, j});
        const bool is_pos = pos_it != positives[k].end();
        double grad_obj = 0.0;
        loss += obj_norm * nn::bce_with_logit(logits.at3(4, i, j),
                                              is_pos ? 1.0 : 0.0, &grad_obj,
                                              is_pos ? 1.0 : kNoObjectWeight);
        dl.at3(4, i, j) = obj_norm * grad_obj;
        if (!is_pos) continue;

        const Target& t = pos_it->second;
        const double sa = nn::sigmoid(logits.at3(0, i, j));
        const double sb = nn::sigmoid(logits.at3(1, i, j));
        const double sc = nn::sigmoid(logits.at3(2, i, j));
        const double sd = nn::sigmoid(logits.at3(3, i, j));
        const double cx = (j + sa) * stride;
        const double cy = (i + sb) * stride;
        const double w = sc * cfg.input_size;
        const double h = sd * cfg.input_size;

        double d_corner[4];  // d loss / d (x1, y1, x2, y2)
        loss += box_norm * giou_loss_corners(cx - w / 2, cy - h / 2, cx + w / 2,
                                             cy + h / 2, t.g1x, t.g1y, t.g2x,
                                             t.g2y, d_corner);
        const double d_cx = d_corner[0] + d_corner[2];
        const double d_cy = d_corner[1] + d_corner[3];
        const double d_w = (d_corner[2] - d_corner[0]) / 2.0;
        const double d_h = (d_corner[3] - d_corner[1]) / 2.0;
        dl.at3(0, i, j) = box_norm * d_cx * stride * sa * (1.0 - sa);
        dl.at3(1, i, j) = box_norm * d_cy * stride * sb * (1.0 - sb);
        dl.at3(2, i, j) = box_norm * d_w * cfg.input_size * sc * (1.0 - sc);
        dl.at3(3, i, j) = box_norm * d_h * cfg.input_size * sd * (1.0 - sd);
      }
    }
    dlogits.push_back(std::move(dl));
  }

  // backward through heads and trunk
  const int stages = stage_count(cfg);
  std::vector<Tensor> stage_grad(static_cast<size_t>(stages));
  for (size_t k = 0; k < cfg.strides.size(); ++k) {
    const int stage = log2_int(cfg.strides[k]);
    const Tensor& feat = tr.stage_post[static_cast<size_t>(stage - 1)];
    const std::string head = "head" + std::to_string(cfg.strides[k]);
    const Tensor& w = state.params.at(head + ".weight");
    const auto s = shape_for(feat, w, 1, 0);

    Tensor& gw = grads[head + ".weight"];
    if (gw.empty()) gw = Tensor(w.shape());
    Tensor& gb = grads[head + ".bias"];
    if (gb.empty()) gb = Tensor({5});
    Tensor gw_local(w.shape());
    Tensor gb_local({5});
    kernels::conv2d_backward_params(s, feat.data(), dlogits[k].data(),
                                    gw_local.data(), gb_local.data());
    for (int64_t i = 0; i < gw.size(); ++i) gw[i] += gw_local[i];
    for (int64_t i = 0; i < gb.size(); ++i) gb[i] += gb_local[i];

    Tensor dfeat(feat.shape());
    kernels::conv2d_backward_input(s, dlogits[k].data(), w.data(), dfeat.data());
    Tensor& acc = stage_grad[static_cast<size_t>(stage - 1)];
    if (acc.empty())
      acc = std::move(dfeat);
    else
      for (int64_t i = 0; i < acc.size(); ++i) acc[i] += dfeat[i];
  }

  for (int k = stages; k >= 1; --k) {
    Tensor& grad_post = stage_grad[static_cast<size_t>(k - 1)];
    if (grad_post.empty())
      grad_post = Tensor(tr.stage_post[static_cast<size_t>(k - 1)].shape());
    const Tensor& pre = tr.stage_pre[static_cast<size_t>(k - 1)];
    for (int64_t i = 0; i < grad_post.size(); ++i)
      if (pre[i] <= 0.0) grad_post[i] = 0.0;

    const std::string trunk = "trunk" + std::to_string(k);
    const Tensor& w = state.params.at(trunk + ".weight");
    const Tensor& in =
        k == 1 ? canvas_chw : tr.stage_post[static_cast<size_t>(k - 2)];
    const auto s = shape_for(in, w, 2, 1);

    Tensor& gw = grads[trunk + ".weight"];
    if (gw.empty()) gw = Tensor(w.shape());
    Tensor& gb = grads[trunk + ".bias"];
    if (gb.empty()) gb = Tensor({w.dim(0)});
    Tensor gw_local(w.shape());
    Tensor gb_local({w.dim(0)});
    kernels::conv2d_backward_params(s, in.data(), grad_post.data(),
                                    gw_local.data(), gb_local.data());
    for (int64_t i = 0; i < gw.size(); ++i) gw[i] += gw_local[i];
    for (int64_t i = 0; i < gb.size(); ++i) gb[i] += gb_local[i];

    if (k > 1) {
      Tensor din(in.shape());
      kernels::conv2d_backward_input(s, grad_post.data(), w.data(), din.data());
      Tensor& acc = stage_grad[static_cast<size_t>(k - 2)];
      if (acc.empty())
        acc = std::move(din);
      else
        for (int64_t i = 0; i < acc.size(); ++i) acc[i] += din[i];
    }
  }
  return loss;
}

FinetuneDetectorResult finetune_detector(
    const DetectorState& state, const std::vector<FrameTensor>& images,
    const std::vector<std::vector<GroundTruthBox>>& labels,
    const nn::TrainConfig& cfg, const std::vector<FrameTensor>* val_images,
    const std::vector<std::vector<GroundTruthBox>>* val_labels) {
  nn::validate_train_config(cfg);
  if (images.empty()) throw ValidationError("finetune_detector: empty image set");
  if (images.size() != labels.size())
    throw ValidationError("finetune_detector: image/label count mismatch");
  if ((val_images == nullptr) != (val_labels == nullptr) ||
      (val_images && val_images->size() != val_labels->size()))
    throw ValidationError("finetune_detector: val image/label count mismatch");

  FinetuneDetectorResult result{state, {}};
  DetectorState& model = result.state;

  auto to_canvas = [&](const std::vector<FrameTensor>& imgs,
                       const std::vector<std::vector<GroundTruthBox>>& lbls) {
    std::vector<Tensor> canvases(imgs.size());
    std::vector<std::vector<BoundingBox>> gts(imgs.size());
    for (size_t i = 0; i < imgs.size(); ++i) {
      const FrameTensor canvas = letterbox(imgs[i], model.config.input_size, nullptr);
      canvases[i] = frame_to_canvas_chw(canvas);
      gts[i] = gt_to_canvas(lbls[i], imgs[i].width, imgs[i].height, model.config);
    }
    return std::pair(std::move(canvases), std::move(gts));
  };
  auto [train_canvas, train_gt] = to_canvas(images, labels);
  std::vector<Tensor> val_canvas;
  std::vector<std::vector<BoundingBox>> val_gt;
  if (val_images) std::tie(val_canvas, val_gt) = to_canvas(*val_images, *val_labels);

  nn::Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  nn::EarlyStopper stopper(cfg.early_stop_patience);
  nn::ParamMap best_params = model.params;
  int best_epoch = 0;
  Rng shuffle_rng = Rng::from(cfg.seed, 4);

  auto eval_loss = [&](const std::vector<Tensor>& canvases,
                       const std::vector<std::vector<BoundingBox>>& gts) {
    double sum = 0.0;
    for (size_t i = 0; i < canvases.size(); ++i) {
      nn::ParamMap scratch;
      sum += detector_loss_grads(model, canvases[i], gts[i], scratch);
    }
    return sum / canvases.size();
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(train_canvas.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      nn::ParamMap grads;
      for (size_t i = start; i < end; ++i) {
        const auto idx = static_cast<size_t>(order[i]);
        loss_sum +=
            detector_loss_grads(model, train_canvas[idx], train_gt[idx], grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, g] : grads)
        for (int64_t i = 0; i < g.size(); ++i) g[i] *= inv;
      optimizer.step(model.params, grads, {});
    }

    nn::EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / train_canvas.size();
    stats.val_loss =
        val_canvas.empty() ? stats.train_loss : eval_loss(val_canvas, val_gt);
    result.history.epochs.push_back(stats);
    result.history.stopped_epoch = epoch;

    if (std::isnan(stats.train_loss) || std::isnan(stats.val_loss))
      throw TrainingError("detector training diverged (NaN loss) at epoch " +
                          std::to_string(epoch));

    const bool stop = stopper.observe(epoch, stats.val_loss);
    if (stopper.is_best(epoch)) {
      best_params = model.params;
      best_epoch = epoch;
    }
    if (stop) break;
  }

  model.params = std::move(best_params);
  result.history.best_epoch = best_epoch;
  return result;
}

void save_detector(const std::string& path, const DetectorState& state,
                   const nn::TrainingHistory* history) {
  save_tensors(path, state.params);
  json j;
  j["kind"] = "detector";
  j["architecture"] = state.architecture;
  j["input_channels"] = state.input_channels;
  j["seed"] = state.seed;
  j["config"] = {{"input_size", state.config.input_size},
                 {"strides", state.config.strides},
                 {"confidence_threshold", state.config.confidence_threshold},
                 {"nms_iou_threshold", state.config.nms_iou_threshold}};
  if (history) j["history"] = json::parse(history_to_json(*history));
  save_sidecar(path, j.dump(2));
}

DetectorState load_detector(const std::string& path) {
  DetectorState state;
  state.params = load_tensors(path);
  json j;
  try {
    j = json::parse(load_sidecar(path));
  } catch (const json::exception& e) {
    throw DataError("detector sidecar parse error: " + std::string(e.what()));
  }
  state.architecture = j.value("architecture", std::string("small-grid"));
  state.input_channels = j.value("input_channels", 1);
  state.seed = j.value("seed", 0ULL);
  const json jc = j.at("config");
  state.config.input_size = jc.value("input_size", 640);
  state.config.strides = jc.value("strides", std::vector<int>{8, 16, 32});
  state.config.confidence_threshold = jc.value("confidence_threshold", 0.25);
  state.config.nms_iou_threshold = jc.value("nms_iou_threshold", 0.45);
  validate_detector_config(state.config);
  if (!state.params.count("trunk1.weight"))
    throw DataError("detector checkpoint missing trunk parameters");
  if (state.params.at("trunk1.weight").dim(1) != state.input_channels)
    throw DataError("detector checkpoint channel mismatch");
  return state;
}

}  // namespace gundet
