#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gundet/dataset.hpp"
#include "gundet/image.hpp"
#include "gundet/nn.hpp"
#include "gundet/rng.hpp"

namespace testing {

using namespace gundet;

/// Self-cleaning temp directory for filesystem-facing tests.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("gundet_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

struct SquareSpec {
  int x = 0, y = 0, size = 0;  // top-left + side, in pixels
};

/// Noise background; bright square when `square` is set.
inline FrameTensor synth_frame(int height, int width, Rng& rng,
                               const SquareSpec* square) {
  FrameTensor f(height, width, 1);
  for (auto& v : f.values) v = rng.uniform(0.0, 0.25);
  if (square) {
    for (int y = square->y; y < square->y + square->size && y < height; ++y)
      for (int x = square->x; x < square->x + square->size && x < width; ++x)
        f.at(y, x, 0) = rng.uniform(0.85, 1.0);
  }
  return f;
}

struct SynthImageCorpus {
  std::vector<FrameTensor> images;
  std::vector<int> labels;
  std::vector<SquareSpec> squares;  // valid where labels == 1
};

inline SynthImageCorpus synth_images(int per_class, int height, int width,
                                     uint64_t seed) {
  SynthImageCorpus corpus;
  Rng rng(seed);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    SquareSpec sq;
    if (label == 1) {
      sq.size = 4 + static_cast<int>(rng.uniform_index(
                        static_cast<uint64_t>(std::max(2, width / 3))));
      sq.x = static_cast<int>(rng.uniform_index(
          static_cast<uint64_t>(std::max(1, width - sq.size))));
      sq.y = static_cast<int>(rng.uniform_index(
          static_cast<uint64_t>(std::max(1, height - sq.size))));
    }
    corpus.images.push_back(
        synth_frame(height, width, rng, label == 1 ? &sq : nullptr));
    corpus.labels.push_back(label);
    corpus.squares.push_back(sq);
  }
  return corpus;
}

/// Gun videos contain a square drifting across frames; NoGun videos are noise.
inline std::vector<VideoSample> synth_videos(int per_class, int frames,
                                             int height, int width,
                                             uint64_t seed) {
  std::vector<VideoSample> videos;
  Rng rng(seed);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int label = i % 2;
    VideoSample v;
    v.label = label;
    v.source_id = "synth_video_" + std::to_string(i);
    const int size = 5 + static_cast<int>(rng.uniform_index(4));
    int x = static_cast<int>(rng.uniform_index(
        static_cast<uint64_t>(std::max(1, width - size - frames))));
    int y = static_cast<int>(rng.uniform_index(
        static_cast<uint64_t>(std::max(1, height - size))));
    for (int t = 0; t < frames; ++t) {
      SquareSpec sq{x + t, y, size};
      v.frames.push_back(synth_frame(height, width, rng, label == 1 ? &sq : nullptr));
      v.frame_paths.push_back(v.source_id + "/f" + std::to_string(t));
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

/// Central finite differences on randomly sampled parameters; returns the
/// max relative error against the analytic gradient.
inline double grad_check(nn::ParamMap& params, const nn::ParamMap& analytic,
                         const std::function<double()>& loss_fn,
                         int samples_per_tensor, Rng& rng, double eps = 1e-6) {
  double worst = 0.0;
  for (auto& [name, grad] : analytic) {
    auto it = params.find(name);
    if (it == params.end()) continue;
    Tensor& p = it->second;
    for (int s = 0; s < samples_per_tensor; ++s) {
      const int64_t idx =
          static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(p.size())));
      const double saved = p[idx];
      p[idx] = saved + eps;
      const double up = loss_fn();
      p[idx] = saved - eps;
      const double down = loss_fn();
      p[idx] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double an = grad[idx];
      const double denom = std::max({1e-6, std::abs(fd), std::abs(an)});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  return worst;
}

}  // namespace testing
