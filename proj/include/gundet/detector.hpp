#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gundet/dataset.hpp"
#include "gundet/image.hpp"
#include "gundet/nn.hpp"

namespace gundet {

/// Top-left anchored pixel box with a confidence and the binary class flag.
struct BoundingBox {
  double x = 0, y = 0;
  double w = 0, h = 0;
  double confidence = 0.0;
  int cls = 1;
};

/// Multi-scale grid settings. Grid size per scale is input_size / stride.
struct DetectorConfig {
  int input_size = 640;
  std::vector<int> strides{8, 16, 32};
  double confidence_threshold = 0.25;
  double nms_iou_threshold = 0.45;

  int grid_size(size_t scale) const { return input_size / strides[scale]; }
};

void validate_detector_config(const DetectorConfig& cfg);

/// One [5, S, S] tensor per scale holding (dx, dy, w_rel, h_rel, objectness),
/// all squashed to [0,1].
struct RawGridPrediction {
  std::vector<Tensor> scales;
};

struct FrameDetections {
  int frame_index = 0;
  std::vector<BoundingBox> boxes;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// Cell (i,j) at stride s decodes to center ((j+dx)*s, (i+dy)*s) and size
/// (w_rel*input, h_rel*input); sub-threshold cells are dropped and all scales
/// concatenate.
std::vector<BoundingBox> decode_predictions(const RawGridPrediction& raw,
                                            const DetectorConfig& cfg);

/// Inverse of decode for one canvas-space box: responsible scale (largest
/// side / stride closest to 8), owning cell, and in-cell offsets.
struct EncodedBox {
  int scale = 0;
  int cell_row = 0, cell_col = 0;
  double dx = 0, dy = 0;       // offsets within the cell
  double w_rel = 0, h_rel = 0; // relative to input_size
};
EncodedBox encode_box(const BoundingBox& canvas_box, const DetectorConfig& cfg);

/// Greedy NMS; ties break by (confidence desc, x asc, y asc). Output is
/// sorted by descending confidence.
std::vector<BoundingBox> nms(std::vector<BoundingBox> boxes,
                             double iou_threshold);

/// Stage-2 detector state. The built-in "small-grid" net downsamples with
/// stride-2 convs and taps a 1x1 prediction head at each configured stride.
struct DetectorState {
  std::string architecture = "small-grid";
  DetectorConfig config;
  int input_channels = 1;
  uint64_t seed = 0;
  nn::ParamMap params;
};

DetectorState make_small_grid_detector(const DetectorConfig& cfg,
                                       int input_channels, uint64_t seed,
                                       int base_width = 8);

/// Forward pass on a letterboxed canvas; returns squashed predictions.
RawGridPrediction detector_forward(const DetectorState& state,
                                   const Tensor& canvas_chw);

/// Letterbox + forward + decode + NMS per frame, detections mapped back to
/// frame coordinates.
std::vector<FrameDetections> detect_frames(const DetectorState& state,
                                           const std::vector<FrameTensor>& frames);

/// Composite loss for one image: GIoU box regression on responsible cells
/// plus objectness BCE (no-object cells weighted 0.5). Gradients accumulate.
double detector_loss_grads(const DetectorState& state, const Tensor& canvas_chw,
                           const std::vector<BoundingBox>& canvas_gt,
                           nn::ParamMap& grads);

struct FinetuneDetectorResult {
  DetectorState state;
  nn::TrainingHistory history;
};

/// Fine-tunes on labeled images (normalized-center GT per image). Early
/// stopping watches validation loss when a val set is given, else train loss.
FinetuneDetectorResult finetune_detector(
    const DetectorState& state, const std::vector<FrameTensor>& images,
    const std::vector<std::vector<GroundTruthBox>>& labels,
    const nn::TrainConfig& cfg,
    const std::vector<FrameTensor>* val_images = nullptr,
    const std::vector<std::vector<GroundTruthBox>>* val_labels = nullptr);

/// Maps normalized-center GT onto the letterbox canvas of a frame.
std::vector<BoundingBox> gt_to_canvas(const std::vector<GroundTruthBox>& gt,
                                      int frame_width, int frame_height,
                                      const DetectorConfig& cfg);

void save_detector(const std::string& path, const DetectorState& state,
                   const nn::TrainingHistory* history = nullptr);
DetectorState load_detector(const std::string& path);

}  // namespace gundet
