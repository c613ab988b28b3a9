#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gundet/image.hpp"

namespace gundet {

enum class MediaKind { image, video };

struct DatasetEntry {
  std::string path;
  int label = 0;  // Gun = 1, NoGun = 0
};

/// Index over a two-class corpus laid out as <root>/<ClassName>/<media>.
/// Image entries are files; video entries are subdirectories of numbered
/// frame images.
struct DatasetIndex {
  MediaKind kind = MediaKind::image;
  std::vector<DatasetEntry> entries;
  std::map<int, int> class_counts;
};

struct SplitAssignment {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
  uint64_t seed = 0;
  std::array<double, 3> ratios{};
};

struct VideoSample {
  std::vector<FrameTensor> frames;
  int label = 0;
  std::string source_id;
  std::vector<std::string> frame_paths;  // source file per sampled frame
};

struct GroundTruthBox {
  int class_id = 0;      // always 0 (Gun) in this artifact
  double cx = 0, cy = 0; // normalized center
  double w = 0, h = 0;   // normalized size
};

/// Scans <root>/<ClassName>/... and labels entries by class folder. Exactly
/// two class folders are required; `positive_class` (case-insensitive) gets
/// label 1.
DatasetIndex discover_dataset(const std::string& root, MediaKind kind,
                              const std::string& positive_class = "Gun");

/// Stratified split: per class, indices are shuffled with `seed` and cut at
/// floor(r_train*n) and floor((r_train+r_val)*n); the remainder is test.
SplitAssignment split_dataset(const DatasetIndex& index,
                              std::array<double, 3> ratios, uint64_t seed);

/// Uniformly spaced frame sampling: indices round(k*(F-1)/(T-1)), clamped,
/// each frame resized to (height, width). `source` is a directory of frames.
VideoSample sample_frames(const std::string& source, int target_count,
                          int height, int width);

/// Enumerates a video source's frame files in lexicographic order.
std::vector<std::string> list_video_frames(const std::string& source);

/// Parses `class cx cy w h` lines (normalized center format).
std::vector<GroundTruthBox> load_detection_labels(const std::string& path);
void save_detection_labels(const std::string& path,
                           const std::vector<GroundTruthBox>& boxes);

/// Split manifest JSON: {seed, ratios, train, val, test} as file paths.
void save_split_manifest(const std::string& path, const DatasetIndex& index,
                         const SplitAssignment& split,
                         const std::string& provenance_json = "");
SplitAssignment load_split_manifest(const std::string& path,
                                    const DatasetIndex& index);

}  // namespace gundet
