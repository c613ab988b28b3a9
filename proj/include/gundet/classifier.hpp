#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gundet/backbone.hpp"
#include "gundet/dataset.hpp"
#include "gundet/heads.hpp"

namespace gundet {

/// Stage-1 video classifier: time-distributed backbone features feeding a
/// sequence head with a two-way softmax.
struct ClassifierModel {
  BackboneState backbone;
  HeadState head;
  double decision_threshold = 0.5;
  int frames_per_video = 8;
};

struct ClassifyResult {
  int label = 0;      // 1 iff p_gun >= decision_threshold (ties -> 1)
  double p_gun = 0.0;
};

/// Softmax prediction for one video. Frame counts other than the trained T
/// are resampled with the uniform-index rule before feature extraction.
ClassifyResult classify_video(const ClassifierModel& model,
                              const VideoSample& sample);

ClassifyResult classify_features(const ClassifierModel& model,
                                 const Tensor& features);

struct TrainClassifierResult {
  ClassifierModel model;
  nn::TrainingHistory history;
};

/// Trains the sequence head on features extracted by the (frozen) backbone,
/// with the same early-stopping contract as backbone fine-tuning.
TrainClassifierResult train_classifier(const ClassifierModel& model,
                                       const std::vector<VideoSample>& train,
                                       const std::vector<VideoSample>& val,
                                       const nn::TrainConfig& cfg);

/// Resamples an in-memory frame sequence to `target` frames with the
/// uniform-index rule.
std::vector<FrameTensor> resample_frames(const std::vector<FrameTensor>& frames,
                                         int target);

void save_classifier(const std::string& path, const ClassifierModel& model,
                     const nn::TrainingHistory* history = nullptr);
ClassifierModel load_classifier(const std::string& path);

}  // namespace gundet
