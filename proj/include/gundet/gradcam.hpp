#pragma once

#include <array>
#include <string>

#include "gundet/backbone.hpp"
#include "gundet/classifier.hpp"

namespace gundet {

/// Final-conv feature maps A (K x H x W) and the gradients of the chosen
/// class's pre-softmax logit with respect to them.
struct ActivationCapture {
  Tensor activations;
  Tensor gradients;
  int class_id = 1;
};

/// Non-negative class activation map plus its max-normalized form.
struct Heatmap {
  Tensor values;            // H x W, >= 0
  Tensor normalized_values; // H x W in [0,1]; all-zero map stays all-zero
};

/// Per-channel weights are the spatial mean of the gradients; the map is
/// ReLU of the weighted activation sum.
Heatmap gradcam_map(const ActivationCapture& capture);

ActivationCapture capture_activations(const BackboneState& backbone,
                                      const FrameTensor& frame, int class_id);
ActivationCapture capture_activations(const ClassifierModel& model,
                                      const FrameTensor& frame, int class_id);

/// Heatmap colorization ramp; `overlay` uses it and blends with weight
/// alpha * heatmap value, so zero heat leaves the frame untouched.
std::array<double, 3> colormap_jet(double v);

FrameTensor overlay(const Heatmap& heatmap, const FrameTensor& frame,
                    double alpha);

/// Raw map values as CSV rows, for offline inspection.
void save_heatmap_csv(const std::string& path, const Heatmap& heatmap);

}  // namespace gundet
