#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gundet/image.hpp"

namespace gundet {

enum class FillMode { reflect, constant_zero };

/// Label-preserving augmentation policy used for image-augmented fine-tuning.
struct AugmentPolicy {
  double horizontal_flip_prob = 0.5;
  double rotation_max_degrees = 15.0;
  std::pair<double, double> zoom_range{0.85, 1.15};
  FillMode fill_mode = FillMode::reflect;
};

void validate_policy(const AugmentPolicy& policy);

/// Applies flip/rotate/zoom drawn from `seed`. Identity policy returns the
/// input bit-exactly; output keeps the input's shape and [0,1] range.
FrameTensor augment_image(const FrameTensor& frame, const AugmentPolicy& policy,
                          uint64_t seed);

/// Per-image seeds are derived as seed + i; labels pass through untouched.
std::pair<std::vector<FrameTensor>, std::vector<int>> augment_batch(
    const std::vector<FrameTensor>& frames, const std::vector<int>& labels,
    const AugmentPolicy& policy, uint64_t seed);

}  // namespace gundet
