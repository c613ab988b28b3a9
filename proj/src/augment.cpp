#include "gundet/augment.hpp"

#include <algorithm>
#include <cmath>

#include "gundet/errors.hpp"
#include "gundet/rng.hpp"

namespace gundet {

namespace {

// Symmetric reflection (edge included): ... 2 1 0 | 0 1 2 ... n-1 | n-1 ...
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

double sample_at(const FrameTensor& frame, double y, double x, int c,
                 FillMode fill) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double wy = y - y0;
  const double wx = x - x0;

  auto pixel = [&](int yy, int xx) -> double {
    if (yy >= 0 && yy < frame.height && xx >= 0 && xx < frame.width)
      return frame.at(yy, xx, c);
    if (fill == FillMode::constant_zero) return 0.0;
    return frame.at(reflect_index(yy, frame.height),
                    reflect_index(xx, frame.width), c);
  };

  const double top = pixel(y0, x0) * (1.0 - wx) + pixel(y0, x0 + 1) * wx;
  const double bot = pixel(y0 + 1, x0) * (1.0 - wx) + pixel(y0 + 1, x0 + 1) * wx;
  return top * (1.0 - wy) + bot * wy;
}

}  // namespace

void validate_policy(const AugmentPolicy& policy) {
  if (policy.horizontal_flip_prob < 0.0 || policy.horizontal_flip_prob > 1.0)
    throw ValidationError("flip probability must lie in [0,1]");
  if (policy.rotation_max_degrees < 0.0 || policy.rotation_max_degrees > 180.0)
    throw ValidationError("rotation_max_degrees must lie in [0,180]");
  const auto [lo, hi] = policy.zoom_range;
  if (!(lo > 0.0 && lo <= 1.0 && hi >= 1.0))
    throw ValidationError("zoom range must satisfy 0 < lo <= 1 <= hi");
}

FrameTensor augment_image(const FrameTensor& frame, const AugmentPolicy& policy,
                          uint64_t seed) {
  validate_policy(policy);
  Rng rng(seed);
  // Fixed draw order keeps a seed's transform stable regardless of which
  // components end up active.
  const bool flip = rng.uniform() < policy.horizontal_flip_prob;
  const double angle_deg =
      rng.uniform(-policy.rotation_max_degrees, policy.rotation_max_degrees);
  const double zoom = rng.uniform(policy.zoom_range.first, policy.zoom_range.second);

  const bool identity_warp = policy.rotation_max_degrees == 0.0 &&
                             policy.zoom_range.first == 1.0 &&
                             policy.zoom_range.second == 1.0;
  if (identity_warp && !flip) return frame;

  FrameTensor out(frame.height, frame.width, frame.channels);
  if (identity_warp) {  // pure horizontal flip: exact index reversal
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x)
        for (int c = 0; c < frame.channels; ++c)
          out.at(y, x, c) = frame.at(y, frame.width - 1 - x, c);
    return out;
  }

  const double cy = (frame.height - 1) / 2.0;
  const double cx = (frame.width - 1) / 2.0;
  const double rad = angle_deg * M_PI / 180.0;
  const double cos_a = std::cos(rad);
  const double sin_a = std::sin(rad);
  const double inv_zoom = 1.0 / zoom;

  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      double u = x - cx;
      const double v = y - cy;
      if (flip) u = -u;
      // inverse map: un-zoom then un-rotate around the center
      const double ur = (cos_a * u + sin_a * v) * inv_zoom;
      const double vr = (-sin_a * u + cos_a * v) * inv_zoom;
      for (int c = 0; c < frame.channels; ++c)
        out.at(y, x, c) = std::clamp(
            sample_at(frame, cy + vr, cx + ur, c, policy.fill_mode), 0.0, 1.0);
    }
  }
  return out;
}

std::pair<std::vector<FrameTensor>, std::vector<int>> augment_batch(
    const std::vector<FrameTensor>& frames, const std::vector<int>& labels,
    const AugmentPolicy& policy, uint64_t seed) {
  if (frames.size() != labels.size())
    throw ValidationError("augment_batch: frames/labels length mismatch");
  std::vector<FrameTensor> out;
  out.reserve(frames.size());
  for (size_t i = 0; i < frames.size(); ++i)
    out.push_back(augment_image(frames[i], policy, seed + i));
  return {std::move(out), labels};
}

}  // namespace gundet
