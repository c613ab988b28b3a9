#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gundet/rng.hpp"
#include "gundet/tensor.hpp"

namespace gundet::nn {

/// Named parameter collection. std::map keeps iteration order deterministic,
/// which the optimizers and checkpoints rely on.
using ParamMap = std::map<std::string, Tensor>;

struct TrainConfig {
  int epochs = 200;
  int early_stop_patience = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  std::string optimizer = "adam";  // adam | sgd
};

void validate_train_config(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;     // epoch whose parameters were restored
  int stopped_epoch = 0;  // last epoch that ran
};

/// Patience rule: stop once val loss has not improved (strictly) for
/// `patience` consecutive epochs; the best-loss epoch is what gets restored.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Returns true when training should halt after this epoch.
  bool observe(int epoch, double val_loss) {
    if (val_loss < best_loss_) {
      best_loss_ = val_loss;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    ++stale_;
    return stale_ >= patience_;
  }

  bool is_best(int epoch) const { return epoch == best_epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

bool is_frozen(const std::string& name,
               const std::vector<std::string>& frozen_prefixes);

/// SGD / Adam over a ParamMap. When `update_log` is given, the actually
/// applied per-parameter deltas are accumulated into it (new - old), which is
/// what makes the theta_t = theta_s + sum(updates) decomposition checkable.
class Optimizer {
 public:
  Optimizer(std::string kind, double learning_rate);

  void step(ParamMap& params, const ParamMap& grads,
            const std::vector<std::string>& frozen_prefixes,
            ParamMap* update_log = nullptr);

 private:
  std::string kind_;
  double lr_;
  int64_t t_ = 0;
  ParamMap m_, v_;  // adam moments
};

/// Glorot-uniform initialization; fan values from the tensor's use.
Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out,
                      Rng& rng);

/// Softmax cross-entropy on a logit row; writes dL/dlogits when grad != null.
double softmax_cross_entropy(const double* logits, int n, int label,
                             double* grad);

/// Numerically stable softmax of a logit row.
std::vector<double> softmax(const double* logits, int n);

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

/// Binary cross-entropy on a sigmoid probability, with d/dlogit gradient.
double bce_with_logit(double logit, double target, double* grad_logit,
                      double weight = 1.0);

/// Inverted dropout mask values (0 or 1/keep) for `n` elements.
std::vector<double> dropout_mask(int n, double rate, Rng& rng);

}  // namespace gundet::nn
