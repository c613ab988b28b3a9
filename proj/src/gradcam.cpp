#include "gundet/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gundet/errors.hpp"

namespace gundet {

Heatmap gradcam_map(const ActivationCapture& capture) {
  const Tensor& a = capture.activations;
  const Tensor& g = capture.gradients;
  if (a.ndim() != 3 || !a.same_shape(g))
    throw ValidationError("gradcam: activation/gradient shape mismatch");

  const int k_channels = a.dim(0);
  const int h = a.dim(1);
  const int w = a.dim(2);
  const int hw = h * w;

  Heatmap hm;
  hm.values = Tensor({h, w});
  for (int k = 0; k < k_channels; ++k) {
    const double* gk = g.data() + static_cast<size_t>(k) * hw;
    double alpha = 0.0;
    for (int i = 0; i < hw; ++i) alpha += gk[i];
    alpha /= hw;
    const double* ak = a.data() + static_cast<size_t>(k) * hw;
    for (int i = 0; i < hw; ++i) hm.values[i] += alpha * ak[i];
  }
  double max_v = 0.0;
  for (int64_t i = 0; i < hm.values.size(); ++i) {
    hm.values[i] = std::max(0.0, hm.values[i]);
    max_v = std::max(max_v, hm.values[i]);
  }
  hm.normalized_values = hm.values;
  if (max_v > 0.0)
    for (int64_t i = 0; i < hm.normalized_values.size(); ++i)
      hm.normalized_values[i] /= max_v;
  return hm;
}

ActivationCapture capture_activations(const BackboneState& backbone,
                                      const FrameTensor& frame, int class_id) {
  if (class_id != 0 && class_id != 1)
    throw ValidationError("gradcam: class id must be 0 or 1");
  ActivationCapture cap;
  cap.class_id = class_id;
  BackboneTrace trace;
  cap.gradients = backbone_class_activation_grads(backbone, frame_to_chw(frame),
                                                  class_id, &trace);
  cap.activations = std::move(trace.final_activations);
  return cap;
}

ActivationCapture capture_activations(const ClassifierModel& model,
                                      const FrameTensor& frame, int class_id) {
  // frame-wise maps go through the backbone path only
  return capture_activations(model.backbone, frame, class_id);
}

std::array<double, 3> colormap_jet(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ramp = [](double x) { return std::clamp(x, 0.0, 1.0); };
  return {ramp(1.5 - std::abs(4.0 * v - 3.0)),
          ramp(1.5 - std::abs(4.0 * v - 2.0)),
          ramp(1.5 - std::abs(4.0 * v - 1.0))};
}

FrameTensor overlay(const Heatmap& heatmap, const FrameTensor& frame,
                    double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ValidationError("overlay: alpha must lie in [0,1]");
  validate_frame(frame);

  // heatmap as a 1-channel frame, upsampled to the frame size
  const int hh = heatmap.normalized_values.dim(0);
  const int hw = heatmap.normalized_values.dim(1);
  FrameTensor heat_small(hh, hw, 1);
  for (int64_t i = 0; i < heatmap.normalized_values.size(); ++i)
    heat_small.values[static_cast<size_t>(i)] = heatmap.normalized_values[i];
  const FrameTensor heat = resize_bilinear(heat_small, frame.height, frame.width);

  FrameTensor out(frame.height, frame.width, 3);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double h = std::clamp(heat.at(y, x, 0), 0.0, 1.0);
      const double blend = alpha * h;  // zero heat keeps the frame pixel
      const auto color = colormap_jet(h);
      for (int c = 0; c < 3; ++c) {
        const double base =
            frame.channels == 3 ? frame.at(y, x, c) : frame.at(y, x, 0);
        out.at(y, x, c) =
            std::clamp((1.0 - blend) * base + blend * color[static_cast<size_t>(c)],
                       0.0, 1.0);
      }
    }
  }
  return out;
}

void save_heatmap_csv(const std::string& path, const Heatmap& heatmap) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write heatmap csv: " + path);
  f.precision(17);
  const int h = heatmap.values.dim(0);
  const int w = heatmap.values.dim(1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x) f << ",";
      f << heatmap.values.at2(y, x);
    }
    f << "\n";
  }
}

}  // namespace gundet
