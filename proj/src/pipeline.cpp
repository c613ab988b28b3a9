#include "gundet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include "gundet/errors.hpp"
#include "json.hpp"

using nlohmann::json;

namespace gundet {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void finalize(PipelineReport& report) {
  for (const auto& r : report.records) {
    report.detector_frame_invocations += r.frames_detected_on;
    report.total_time_s += r.stage1_time_s + r.stage2_time_s;
  }
}

template <typename Fn>
void for_each_video(const std::vector<VideoSample>& videos, bool parallel,
                    std::vector<RoutingRecord>& records, const Fn& fn) {
  records.resize(videos.size());
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < static_cast<int64_t>(videos.size()); ++i)
      records[static_cast<size_t>(i)] = fn(videos[static_cast<size_t>(i)]);
  } else {
    for (size_t i = 0; i < videos.size(); ++i) records[i] = fn(videos[i]);
  }
}

}  // namespace

std::string to_string(PipelineMode mode) {
  return mode == PipelineMode::two_stage ? "two-stage" : "detection-only";
}

PipelineReport run_two_stage(const std::vector<VideoSample>& videos,
                             const ClassifyFn& classify, const DetectFn& detect,
                             bool parallel) {
  PipelineReport report;
  report.mode = PipelineMode::two_stage;
  const auto batch_start = Clock::now();

  for_each_video(videos, parallel, report.records,
                 [&](const VideoSample& video) {
    RoutingRecord rec;
    rec.video_id = video.source_id;
    rec.true_label = video.label;

    const auto t0 = Clock::now();
    const ClassifyResult cls = classify(video);
    rec.stage1_time_s = seconds_since(t0);
    rec.predicted_label = cls.label;
    rec.p_gun = cls.p_gun;
    rec.routed_to_detector = cls.label == 1;

    if (rec.routed_to_detector) {
      const auto t1 = Clock::now();
      rec.detections = detect(video.frames);
      rec.stage2_time_s = seconds_since(t1);
      rec.frames_detected_on = static_cast<int>(video.frames.size());
    }
    return rec;
  });

  ConfusionCounts confusion;
  std::vector<int> preds, truths;
  preds.reserve(report.records.size());
  truths.reserve(report.records.size());
  for (const auto& r : report.records) {
    preds.push_back(r.predicted_label);
    truths.push_back(r.true_label);
  }
  if (!report.records.empty()) confusion = confusion_counts(preds, truths);
  report.confusion = confusion;

  finalize(report);
  report.batch_wall_time_s = seconds_since(batch_start);
  return report;
}

PipelineReport run_two_stage(const std::vector<VideoSample>& videos,
                             const ClassifierModel& classifier,
                             const DetectorState& detector, bool parallel) {
  if (!videos.empty()) {
    const auto& f = videos.front().frames;
    if (!f.empty() && f.front().channels != classifier.backbone.input_channels)
      throw ConfigError("classifier expects " +
                        std::to_string(classifier.backbone.input_channels) +
                        "-channel frames");
    if (!f.empty() && f.front().channels != detector.input_channels)
      throw ConfigError("detector expects " +
                        std::to_string(detector.input_channels) +
                        "-channel frames");
  }
  return run_two_stage(
      videos,
      [&](const VideoSample& v) { return classify_video(classifier, v); },
      [&](const std::vector<FrameTensor>& frames) {
        return detect_frames(detector, frames);
      },
      parallel);
}

PipelineReport run_detection_only(const std::vector<VideoSample>& videos,
                                  const DetectFn& detect, bool parallel) {
  PipelineReport report;
  report.mode = PipelineMode::detection_only;
  const auto batch_start = Clock::now();

  for_each_video(videos, parallel, report.records,
                 [&](const VideoSample& video) {
    RoutingRecord rec;
    rec.video_id = video.source_id;
    rec.true_label = video.label;
    rec.predicted_label = 1;  // every video reaches the detector
    rec.routed_to_detector = true;
    const auto t0 = Clock::now();
    rec.detections = detect(video.frames);
    rec.stage2_time_s = seconds_since(t0);
    rec.frames_detected_on = static_cast<int>(video.frames.size());
    return rec;
  });

  finalize(report);
  report.batch_wall_time_s = seconds_since(batch_start);
  return report;
}

PipelineReport run_detection_only(const std::vector<VideoSample>& videos,
                                  const DetectorState& detector, bool parallel) {
  return run_detection_only(
      videos,
      [&](const std::vector<FrameTensor>& frames) {
        return detect_frames(detector, frames);
      },
      parallel);
}

ComparisonReport compare_modes(const PipelineReport& two_stage,
                               const PipelineReport& detection_only) {
  std::multiset<std::string> a, b;
  for (const auto& r : two_stage.records) a.insert(r.video_id);
  for (const auto& r : detection_only.records) b.insert(r.video_id);
  if (a != b)
    throw ValidationError("compare_modes: reports cover different video sets");

  ComparisonReport cmp;
  cmp.invocation_ratio =
      detection_only.detector_frame_invocations == 0
          ? 1.0
          : static_cast<double>(two_stage.detector_frame_invocations) /
                static_cast<double>(detection_only.detector_frame_invocations);
  cmp.time_ratio = detection_only.total_time_s == 0.0
                       ? 1.0
                       : two_stage.total_time_s / detection_only.total_time_s;
  if (two_stage.ap && detection_only.ap)
    cmp.ap_delta = *two_stage.ap - *detection_only.ap;
  for (const auto& r : two_stage.records)
    if (r.true_label == 1 && r.predicted_label == 0)
      cmp.false_negative_videos.push_back(r.video_id);
  std::sort(cmp.false_negative_videos.begin(), cmp.false_negative_videos.end());
  return cmp;
}

namespace {

json box_to_json(const BoundingBox& b) {
  return {{"x", b.x},   {"y", b.y},       {"w", b.w},
          {"h", b.h},   {"conf", b.confidence}, {"class", b.cls}};
}

}  // namespace

std::string report_to_json(const PipelineReport& report, bool include_timing,
                           const std::string& provenance_json) {
  json j;
  if (!provenance_json.empty()) j["provenance"] = json::parse(provenance_json);
  j["mode"] = to_string(report.mode);
  j["detector_frame_invocations"] = report.detector_frame_invocations;
  if (report.confusion)
    j["confusion"] = {{"tp", report.confusion->tp},
                      {"fp", report.confusion->fp},
                      {"fn", report.confusion->fn},
                      {"tn", report.confusion->tn}};
  if (report.ap) j["ap"] = *report.ap;
  if (report.model_size_bytes) j["model_size_bytes"] = *report.model_size_bytes;
  if (include_timing) {
    j["total_time_s"] = report.total_time_s;
    j["batch_wall_time_s"] = report.batch_wall_time_s;
  }
  j["records"] = json::array();
  for (const auto& r : report.records) {
    json rec;
    rec["video_id"] = r.video_id;
    rec["true_label"] = r.true_label;
    rec["predicted_label"] = r.predicted_label;
    rec["p_gun"] = r.p_gun;
    rec["routed_to_detector"] = r.routed_to_detector;
    rec["frames_detected_on"] = r.frames_detected_on;
    if (include_timing) {
      rec["stage1_time_s"] = r.stage1_time_s;
      rec["stage2_time_s"] = r.stage2_time_s;
    }
    rec["detections"] = json::array();
    for (const auto& fd : r.detections) {
      json frame;
      frame["index"] = fd.frame_index;
      frame["boxes"] = json::array();
      for (const auto& b : fd.boxes) frame["boxes"].push_back(box_to_json(b));
      rec["detections"].push_back(frame);
    }
    j["records"].push_back(rec);
  }
  return j.dump(2);
}

std::string comparison_to_json(const ComparisonReport& comparison,
                               const std::string& provenance_json) {
  json j;
  if (!provenance_json.empty()) j["provenance"] = json::parse(provenance_json);
  j["invocation_ratio"] = comparison.invocation_ratio;
  j["time_ratio"] = comparison.time_ratio;
  if (comparison.ap_delta) j["ap_delta"] = *comparison.ap_delta;
  j["false_negative_videos"] = comparison.false_negative_videos;
  return j.dump(2);
}

}  // namespace gundet
