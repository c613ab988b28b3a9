#include "gundet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "gundet/errors.hpp"

namespace gundet::nn {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs <= 0) throw ValidationError("epochs must be positive");
  if (cfg.early_stop_patience <= 0)
    throw ValidationError("early_stop_patience must be positive");
  if (cfg.batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (cfg.learning_rate <= 0) throw ValidationError("learning_rate must be positive");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd")
    throw ValidationError("optimizer must be adam or sgd");
}

bool is_frozen(const std::string& name,
               const std::vector<std::string>& frozen_prefixes) {
  for (const auto& prefix : frozen_prefixes)
    if (!prefix.empty() && name.rfind(prefix, 0) == 0) return true;
  return false;
}

Optimizer::Optimizer(std::string kind, double learning_rate)
    : kind_(std::move(kind)), lr_(learning_rate) {}

void Optimizer::step(ParamMap& params, const ParamMap& grads,
                     const std::vector<std::string>& frozen_prefixes,
                     ParamMap* update_log) {
  ++t_;
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));

  for (auto& [name, p] : params) {
    if (is_frozen(name, frozen_prefixes)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;

    Tensor* log = nullptr;
    if (update_log) {
      auto [it, inserted] = update_log->try_emplace(name, p.shape());
      log = &it->second;
    }

    if (kind_ == "sgd") {
      for (int64_t i = 0; i < p.size(); ++i) {
        const double delta = -lr_ * g[i];
        p[i] += delta;
        if (log) (*log)[i] += delta;
      }
    } else {  // adam
      auto [mit, m_new] = m_.try_emplace(name, p.shape());
      auto [vit, v_new] = v_.try_emplace(name, p.shape());
      Tensor& m = mit->second;
      Tensor& v = vit->second;
      for (int64_t i = 0; i < p.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double delta = -lr_ * mhat / (std::sqrt(vhat) + eps);
        p[i] += delta;
        if (log) (*log)[i] += delta;
      }
    }
  }
}

Tensor glorot_uniform(const std::vector<int>& shape, int fan_in, int fan_out,
                      Rng& rng) {
  Tensor t(shape);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

std::vector<double> softmax(const double* logits, int n) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> out(static_cast<size_t>(n));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] = std::exp(logits[i] - mx);
    sum += out[static_cast<size_t>(i)];
  }
  for (auto& v : out) v /= sum;
  return out;
}

double softmax_cross_entropy(const double* logits, int n, int label,
                             double* grad) {
  const std::vector<double> probs = softmax(logits, n);
  const double p = std::max(probs[static_cast<size_t>(label)], 1e-300);
  if (grad)
    for (int i = 0; i < n; ++i)
      grad[i] = probs[static_cast<size_t>(i)] - (i == label ? 1.0 : 0.0);
  return -std::log(p);
}

double bce_with_logit(double logit, double target, double* grad_logit,
                      double weight) {
  const double p = sigmoid(logit);
  const double eps = 1e-12;
  const double loss =
      -weight * (target * std::log(p + eps) + (1.0 - target) * std::log(1.0 - p + eps));
  if (grad_logit) *grad_logit = weight * (p - target);
  return loss;
}

std::vector<double> dropout_mask(int n, double rate, Rng& rng) {
  std::vector<double> mask(static_cast<size_t>(n), 1.0);
  if (rate <= 0.0) return mask;
  if (rate >= 1.0) throw ValidationError("dropout rate must lie in [0,1)");
  const double keep = 1.0 - rate;
  for (auto& v : mask) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace gundet::nn
