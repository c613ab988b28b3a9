#include "gundet/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gundet/errors.hpp"
#include "gundet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gundet {

namespace {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_media_file(const fs::path& p) {
  const std::string ext = to_lower(p.extension().string());
  return ext == ".ppm" || ext == ".pgm" || ext == ".png";
}

}  // namespace

DatasetIndex discover_dataset(const std::string& root, MediaKind kind,
                              const std::string& positive_class) {
  if (!fs::exists(root) || !fs::is_directory(root))
    throw ConfigError("dataset root does not exist: " + root);

  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() != 2)
    throw DataError("dataset layout requires exactly two class folders, found " +
                    std::to_string(class_dirs.size()) + " under " + root);

  const std::string want = to_lower(positive_class);
  int positive_dir = -1;
  for (size_t i = 0; i < class_dirs.size(); ++i)
    if (to_lower(class_dirs[i].filename().string()) == want)
      positive_dir = static_cast<int>(i);
  if (positive_dir < 0)
    throw DataError("no class folder named '" + positive_class + "' under " + root);

  DatasetIndex index;
  index.kind = kind;
  for (size_t i = 0; i < class_dirs.size(); ++i) {
    const int label = static_cast<int>(i) == positive_dir ? 1 : 0;
    std::vector<std::string> found;
    for (const auto& e : fs::directory_iterator(class_dirs[i])) {
      if (kind == MediaKind::image && e.is_regular_file() && is_media_file(e.path()))
        found.push_back(e.path().string());
      if (kind == MediaKind::video && e.is_directory())
        found.push_back(e.path().string());
    }
    std::sort(found.begin(), found.end());
    for (auto& p : found) index.entries.push_back({std::move(p), label});
  }
  std::sort(index.entries.begin(), index.entries.end(),
            [](const DatasetEntry& a, const DatasetEntry& b) { return a.path < b.path; });
  if (index.entries.empty())
    throw DataError("dataset is empty under " + root);
  for (const auto& e : index.entries) index.class_counts[e.label]++;
  return index;
}

SplitAssignment split_dataset(const DatasetIndex& index,
                              std::array<double, 3> ratios, uint64_t seed) {
  if (index.entries.empty()) throw ValidationError("cannot split an empty index");
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw ValidationError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("split ratios must sum to 1");

  SplitAssignment split;
  split.seed = seed;
  split.ratios = ratios;

  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < index.entries.size(); ++i)
    by_class[index.entries[i].label].push_back(static_cast<int>(i));

  for (auto& [label, ids] : by_class) {
    Rng rng = Rng::from(seed, static_cast<uint64_t>(label));
    rng.shuffle(ids);
    const auto n = static_cast<double>(ids.size());
    const size_t cut1 = static_cast<size_t>(std::floor(ratios[0] * n));
    const size_t cut2 = static_cast<size_t>(std::floor((ratios[0] + ratios[1]) * n));
    for (size_t i = 0; i < ids.size(); ++i) {
      if (i < cut1)
        split.train.push_back(ids[i]);
      else if (i < cut2)
        split.val.push_back(ids[i]);
      else
        split.test.push_back(ids[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::string> list_video_frames(const std::string& source) {
  if (!fs::exists(source) || !fs::is_directory(source))
    throw DataError("video source is not a frame directory: " + source);
  std::vector<std::string> frames;
  for (const auto& e : fs::directory_iterator(source))
    if (e.is_regular_file() && is_media_file(e.path()))
      frames.push_back(e.path().string());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw DataError("video source has no frames: " + source);
  return frames;
}

VideoSample sample_frames(const std::string& source, int target_count,
                          int height, int width) {
  if (target_count < 1) throw ValidationError("frame count must be >= 1");
  const std::vector<std::string> files = list_video_frames(source);
  const int total = static_cast<int>(files.size());

  std::vector<int> picks(static_cast<size_t>(target_count), 0);
  if (target_count > 1 && total > 1) {
    for (int k = 0; k < target_count; ++k) {
      const double pos = static_cast<double>(k) *
                         static_cast<double>(total - 1) /
                         static_cast<double>(target_count - 1);
      picks[static_cast<size_t>(k)] =
          std::clamp(static_cast<int>(std::lround(pos)), 0, total - 1);
    }
  }

  VideoSample sample;
  sample.source_id = source;
  sample.frames.reserve(picks.size());
  sample.frame_paths.reserve(picks.size());
  int last = -1;
  FrameTensor cached;
  for (int idx : picks) {
    if (idx != last) {
      cached = resize_bilinear(read_image(files[static_cast<size_t>(idx)]),
                               height, width);
      last = idx;
    }
    sample.frames.push_back(cached);
    sample.frame_paths.push_back(files[static_cast<size_t>(idx)]);
  }
  return sample;
}

std::vector<GroundTruthBox> load_detection_labels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open label file: " + path);
  std::vector<GroundTruthBox> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream is(line);
    GroundTruthBox box;
    if (!(is >> box.class_id >> box.cx >> box.cy >> box.w >> box.h))
      throw DataError("label parse error at " + path + ":" +
                      std::to_string(line_no));
    std::string extra;
    if (is >> extra)
      throw DataError("label parse error (trailing fields) at " + path + ":" +
                      std::to_string(line_no));
    if (box.cx < 0 || box.cx > 1 || box.cy < 0 || box.cy > 1 || box.w <= 0 ||
        box.w > 1 || box.h <= 0 || box.h > 1)
      throw ValidationError("label out of range at " + path + ":" +
                            std::to_string(line_no));
    boxes.push_back(box);
  }
  return boxes;
}

void save_detection_labels(const std::string& path,
                           const std::vector<GroundTruthBox>& boxes) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open label file for write: " + path);
  f.precision(17);
  for (const auto& b : boxes)
    f << b.class_id << " " << b.cx << " " << b.cy << " " << b.w << " " << b.h
      << "\n";
}

void save_split_manifest(const std::string& path, const DatasetIndex& index,
                         const SplitAssignment& split,
                         const std::string& provenance_json) {
  json j;
  j["seed"] = split.seed;
  j["ratios"] = split.ratios;
  auto paths_of = [&](const std::vector<int>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(index.entries[static_cast<size_t>(i)].path);
    return out;
  };
  j["train"] = paths_of(split.train);
  j["val"] = paths_of(split.val);
  j["test"] = paths_of(split.test);
  if (!provenance_json.empty()) j["provenance"] = json::parse(provenance_json);
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

SplitAssignment load_split_manifest(const std::string& path,
                                    const DatasetIndex& index) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error: " + std::string(e.what()));
  }
  std::map<std::string, int> lookup;
  for (size_t i = 0; i < index.entries.size(); ++i)
    lookup[index.entries[i].path] = static_cast<int>(i);

  SplitAssignment split;
  split.seed = j.value("seed", 0ULL);
  if (j.contains("ratios")) {
    auto r = j["ratios"];
    for (size_t i = 0; i < 3 && i < r.size(); ++i) split.ratios[i] = r[i];
  }
  auto ids_of = [&](const char* key) {
    std::vector<int> out;
    for (const auto& p : j.at(key)) {
      auto it = lookup.find(p.get<std::string>());
      if (it == lookup.end())
        throw DataError("manifest path not present in dataset: " +
                        p.get<std::string>());
      out.push_back(it->second);
    }
    return out;
  };
  split.train = ids_of("train");
  split.val = ids_of("val");
  split.test = ids_of("test");
  return split;
}

}  // namespace gundet
