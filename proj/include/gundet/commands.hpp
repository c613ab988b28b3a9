#pragma once

#include <string>
#include <vector>

#include "gundet/config.hpp"

namespace gundet {

/// CLI verbs as library calls (the binary wraps these and maps exceptions to
/// exit codes). All outputs land under cfg.out_dir.

/// Discovers the configured corpora and writes split manifests.
void cmd_prepare(const ExperimentConfig& cfg);

/// target: backbone | classifier | detector. Writes checkpoint + sidecar.
void cmd_train(const ExperimentConfig& cfg, const std::string& target);

/// mode: two-stage | detection-only | both. Writes report/metrics JSON,
/// summary CSV, ROC CSV/PNG and annotated frames for routed videos.
void cmd_evaluate(const ExperimentConfig& cfg, const std::string& mode);

/// Grad-CAM overlays for the chosen video and frame indices.
void cmd_explain(const ExperimentConfig& cfg, const std::string& video_id,
                 const std::vector<int>& frame_indices, double alpha);

/// Expands the backbone x head grid into per-run config files.
void cmd_sweep(const ExperimentConfig& cfg);

}  // namespace gundet
