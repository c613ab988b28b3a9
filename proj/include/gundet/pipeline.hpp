#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gundet/classifier.hpp"
#include "gundet/detector.hpp"
#include "gundet/metrics.hpp"

namespace gundet {

using ClassifyFn = std::function<ClassifyResult(const VideoSample&)>;
using DetectFn =
    std::function<std::vector<FrameDetections>(const std::vector<FrameTensor>&)>;

struct RoutingRecord {
  std::string video_id;
  int true_label = 0;
  int predicted_label = 0;
  double p_gun = 0.0;
  bool routed_to_detector = false;
  std::vector<FrameDetections> detections;  // empty unless routed
  double stage1_time_s = 0.0;
  double stage2_time_s = 0.0;
  int frames_detected_on = 0;
};

enum class PipelineMode { two_stage, detection_only };

std::string to_string(PipelineMode mode);

struct PipelineReport {
  PipelineMode mode = PipelineMode::two_stage;
  std::vector<RoutingRecord> records;
  std::optional<ConfusionCounts> confusion;  // absent in detection-only mode
  int64_t detector_frame_invocations = 0;
  double total_time_s = 0.0;       // sum of per-video measured intervals
  double batch_wall_time_s = 0.0;  // wall clock of the run as a whole
  std::optional<int64_t> model_size_bytes;
  std::optional<double> ap;  // filled by evaluation when GT is available
};

/// Stage 1 on every video; stage 2 exactly on the predicted-Gun subset.
PipelineReport run_two_stage(const std::vector<VideoSample>& videos,
                             const ClassifyFn& classify, const DetectFn& detect,
                             bool parallel = false);
PipelineReport run_two_stage(const std::vector<VideoSample>& videos,
                             const ClassifierModel& classifier,
                             const DetectorState& detector,
                             bool parallel = false);

/// Detector on every frame of every video; no confusion accounting.
PipelineReport run_detection_only(const std::vector<VideoSample>& videos,
                                  const DetectFn& detect, bool parallel = false);
PipelineReport run_detection_only(const std::vector<VideoSample>& videos,
                                  const DetectorState& detector,
                                  bool parallel = false);

struct ComparisonReport {
  double invocation_ratio = 1.0;  // two-stage / detection-only
  double time_ratio = 1.0;
  std::optional<double> ap_delta;  // two-stage AP minus detection-only AP
  std::vector<std::string> false_negative_videos;
};

/// Both reports must cover the same video ids.
ComparisonReport compare_modes(const PipelineReport& two_stage,
                               const PipelineReport& detection_only);

/// Report serialization. `include_timing`=false produces the byte-stable
/// metric view (no wall-clock fields).
std::string report_to_json(const PipelineReport& report, bool include_timing,
                           const std::string& provenance_json = "");
std::string comparison_to_json(const ComparisonReport& comparison,
                               const std::string& provenance_json = "");

}  // namespace gundet
