#pragma once

#include <array>
#include <string>
#include <vector>

#include "gundet/augment.hpp"
#include "gundet/image.hpp"
#include "gundet/nn.hpp"

namespace gundet {

/// Frame-level feature extractor. The built-in "small-conv" architecture is a
/// three-block conv net ending in global average pooling, with a two-way
/// softmax layer used only while fine-tuning on still images. Externally
/// trained parameter files load through the same state contract.
struct BackboneState {
  std::string architecture = "small-conv";
  int input_channels = 1;
  int feature_dim = 32;
  std::vector<std::string> frozen_prefix;
  uint64_t seed = 0;
  nn::ParamMap params;
};

/// Fresh small-conv backbone. `width1`/`width2` are the two hidden conv
/// widths; `feature_dim` is the final conv width and the extracted vector
/// length.
BackboneState make_small_conv_backbone(int input_channels, int feature_dim,
                                       uint64_t seed, int width1 = 8,
                                       int width2 = 16);

/// Parameter transplant: the returned state's tensors equal the source's
/// exactly.
BackboneState init_from_pretrained(const BackboneState& source);

/// Forward cache. `final_activations` holds the post-ReLU feature maps of the
/// last conv layer (what Grad-CAM consumes).
struct BackboneTrace {
  Tensor input;  // [C,H,W]
  Tensor c1_pre, p1;
  std::vector<uint8_t> p1_arg;
  Tensor c2_pre, p2;
  std::vector<uint8_t> p2_arg;
  Tensor c3_pre;
  Tensor final_activations;  // [d, h, w]
  std::vector<double> features;
  std::array<double, 2> logits{};
};

Tensor frame_to_chw(const FrameTensor& frame);

BackboneTrace backbone_forward(const BackboneState& state, const Tensor& chw);

/// Feature sequence: one row per frame, `feature_dim` columns.
Tensor extract_features(const BackboneState& state,
                        const std::vector<FrameTensor>& frames);

/// Classification logits recomputed from a (possibly perturbed) final
/// activation tensor; the finite-difference oracle for activation gradients
/// drives the forward tail through this.
std::array<double, 2> logits_from_activations(const BackboneState& state,
                                              const Tensor& activations);

/// Cross-entropy loss for one image; accumulates parameter gradients into
/// `grads`. Optional outputs: the forward trace and d(loss)/d(final
/// activations).
double backbone_loss_grads(const BackboneState& state, const Tensor& chw,
                           int label, nn::ParamMap& grads,
                           BackboneTrace* trace_out = nullptr);

/// d(logit[class_id]) / d(final activations), plus the trace it was computed
/// from.
Tensor backbone_class_activation_grads(const BackboneState& state,
                                       const Tensor& chw, int class_id,
                                       BackboneTrace* trace_out = nullptr);

struct FinetuneResult {
  BackboneState state;
  nn::TrainingHistory history;
};

/// Image-augmented fine-tuning with early stopping on validation loss.
/// `update_log` (optional) accumulates every applied parameter delta so the
/// final-equals-initial-plus-updates decomposition can be asserted.
FinetuneResult finetune_backbone(const BackboneState& state,
                                 const std::vector<FrameTensor>& train_images,
                                 const std::vector<int>& train_labels,
                                 const std::vector<FrameTensor>& val_images,
                                 const std::vector<int>& val_labels,
                                 const AugmentPolicy& policy,
                                 const nn::TrainConfig& cfg,
                                 nn::ParamMap* update_log = nullptr);

void save_backbone(const std::string& path, const BackboneState& state,
                   const nn::TrainingHistory* history = nullptr);
BackboneState load_backbone(const std::string& path);

}  // namespace gundet
