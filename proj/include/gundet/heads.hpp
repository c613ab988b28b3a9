#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gundet/nn.hpp"

namespace gundet {

enum class HeadKind { lstm, gru, transformer };

HeadKind head_kind_from_string(const std::string& s);
std::string to_string(HeadKind kind);

/// Sequence-head hyperparameters. Defaults follow the reference training
/// setup: 512 LSTM units, 256 GRU units, 50% dropout after the recurrent
/// block; transformer with 4 heads over a 256-wide model, 512-wide FFN and
/// 10% dropout.
struct HeadConfig {
  HeadKind kind = HeadKind::gru;
  int lstm_units = 512;
  int gru_units = 256;
  double recurrent_dropout = 0.5;
  int tf_heads = 4;
  int tf_model_dim = 256;
  int tf_ffn_dim = 512;
  double tf_dropout = 0.1;
};

void validate_head_config(const HeadConfig& cfg);

struct HeadState {
  HeadConfig config;
  int feature_dim = 0;
  nn::ParamMap params;
};

/// Deterministically initialized head for the given seed.
HeadState build_head(const HeadConfig& cfg, int feature_dim, uint64_t seed);

/// Opaque forward cache consumed by head_backward.
struct HeadTrace;

struct HeadForward {
  std::array<double, 2> logits{};
  std::shared_ptr<HeadTrace> trace;
};

/// Forward over a T x d feature sequence. When `training` is set the
/// post-block dropout draws its mask from `rng`; inference is deterministic.
HeadForward head_forward(const HeadState& state, const Tensor& features,
                         bool training = false, Rng* rng = nullptr);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
void head_backward(const HeadState& state, const HeadForward& forward,
                   const std::array<double, 2>& dlogits, nn::ParamMap& grads);

}  // namespace gundet
