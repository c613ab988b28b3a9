#pragma once

#include <array>
#include <string>
#include <vector>

#include "gundet/augment.hpp"
#include "gundet/detector.hpp"
#include "gundet/heads.hpp"
#include "gundet/nn.hpp"

namespace gundet {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// One experiment = one JSON config file. Seeds and the config hash are
/// embedded in every output for provenance.
struct ExperimentConfig {
  uint64_t seed = 7;
  std::string out_dir = "out";

  struct Data {
    std::string image_root;
    std::string video_root;
    std::string video_label_root;  // optional, per-frame GT for AP evaluation
    std::string detection_image_root;
    std::string detection_label_root;
    std::string positive_class = "Gun";
    std::array<double, 3> ratios{0.7, 0.15, 0.15};
    int frames_per_video = 8;
    int frame_height = 32;
    int frame_width = 32;
  } data;

  AugmentPolicy augment;

  struct Backbone {
    std::string architecture = "small-conv";
    int feature_dim = 32;
    int width1 = 8;
    int width2 = 16;
    int input_channels = 1;
    std::vector<std::string> frozen_prefix;
    std::string pretrained;  // optional checkpoint to start from
  } backbone;

  HeadConfig head;
  double decision_threshold = 0.5;

  DetectorConfig detector;
  int detector_base_width = 8;
  std::string detector_pretrained;

  nn::TrainConfig train_backbone;
  nn::TrainConfig train_classifier;
  nn::TrainConfig train_detector;

  struct Eval {
    double ap_iou_threshold = 0.5;
    bool ap_eleven_point = false;
    bool parallel_videos = false;
  } eval;

  struct Compute {
    std::string backend = "openmp";  // openmp | serial
    int threads = 0;                 // 0 = library default
  } compute;

  struct Sweep {
    // label -> (feature_dim,width1,width2) variants; heads as kind strings
    std::vector<std::pair<std::string, std::array<int, 3>>> backbones;
    std::vector<std::string> heads{"lstm", "gru", "transformer"};
  } sweep;
};

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);
void save_config(const std::string& path, const ExperimentConfig& cfg);

/// FNV-1a over the canonical JSON dump; stable across platforms.
std::string config_hash(const ExperimentConfig& cfg);

/// {config_hash, seed, artifact_version} blob embedded in outputs.
std::string provenance_json(const ExperimentConfig& cfg);

void apply_compute_settings(const ExperimentConfig& cfg);

}  // namespace gundet
