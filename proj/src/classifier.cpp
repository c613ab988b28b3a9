#include "gundet/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "gundet/checkpoint.hpp"
#include "gundet/errors.hpp"
#include "json.hpp"

using nlohmann::json;

namespace gundet {

std::vector<FrameTensor> resample_frames(const std::vector<FrameTensor>& frames,
                                         int target) {
  if (frames.empty()) throw ValidationError("cannot resample an empty sequence");
  if (target < 1) throw ValidationError("target frame count must be >= 1");
  const int total = static_cast<int>(frames.size());
  if (total == target) return frames;
  std::vector<FrameTensor> out;
  out.reserve(static_cast<size_t>(target));
  for (int k = 0; k < target; ++k) {
    int idx = 0;
    if (target > 1 && total > 1) {
      const double pos = static_cast<double>(k) * (total - 1) / (target - 1);
      idx = std::clamp(static_cast<int>(std::lround(pos)), 0, total - 1);
    }
    out.push_back(frames[static_cast<size_t>(idx)]);
  }
  return out;
}

ClassifyResult classify_features(const ClassifierModel& model,
                                 const Tensor& features) {
  const HeadForward fwd = head_forward(model.head, features, false, nullptr);
  const std::vector<double> probs = nn::softmax(fwd.logits.data(), 2);
  ClassifyResult result;
  result.p_gun = probs[1];
  result.label = result.p_gun >= model.decision_threshold ? 1 : 0;
  return result;
}

ClassifyResult classify_video(const ClassifierModel& model,
                              const VideoSample& sample) {
  if (sample.frames.empty())
    throw ValidationError("video sample has no frames");
  const std::vector<FrameTensor>* frames = &sample.frames;
  std::vector<FrameTensor> resampled;
  if (static_cast<int>(sample.frames.size()) != model.frames_per_video) {
    resampled = resample_frames(sample.frames, model.frames_per_video);
    frames = &resampled;
  }
  const Tensor features = extract_features(model.backbone, *frames);
  return classify_features(model, features);
}

TrainClassifierResult train_classifier(const ClassifierModel& model,
                                       const std::vector<VideoSample>& train,
                                       const std::vector<VideoSample>& val,
                                       const nn::TrainConfig& cfg) {
  nn::validate_train_config(cfg);
  if (train.empty() || val.empty())
    throw ValidationError("train_classifier requires non-empty train and val sets");
  for (const auto& v : train)
    if (v.label != 0 && v.label != 1)
      throw ValidationError("video labels must be binary");

  TrainClassifierResult result{model, {}};
  ClassifierModel& m = result.model;

  // The backbone stays frozen here; features are extracted once per video.
  auto featurize = [&](const std::vector<VideoSample>& videos) {
    std::vector<Tensor> features(videos.size());
    std::vector<int> labels(videos.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(videos.size()); ++i) {
      const auto& v = videos[static_cast<size_t>(i)];
      const auto frames =
          static_cast<int>(v.frames.size()) == m.frames_per_video
              ? v.frames
              : resample_frames(v.frames, m.frames_per_video);
      features[static_cast<size_t>(i)] = extract_features(m.backbone, frames);
      labels[static_cast<size_t>(i)] = v.label;
    }
    return std::pair(std::move(features), std::move(labels));
  };
  auto [train_features, train_labels] = featurize(train);
  auto [val_features, val_labels] = featurize(val);

  nn::Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  nn::EarlyStopper stopper(cfg.early_stop_patience);
  nn::ParamMap best_params = m.head.params;
  int best_epoch = 0;
  Rng shuffle_rng = Rng::from(cfg.seed, 2);
  Rng dropout_rng = Rng::from(cfg.seed, 3);

  auto evaluate = [&](const std::vector<Tensor>& features,
                      const std::vector<int>& labels) {
    double loss_sum = 0.0;
    int correct = 0;
    for (size_t i = 0; i < features.size(); ++i) {
      const HeadForward fwd = head_forward(m.head, features[i], false, nullptr);
      loss_sum += nn::softmax_cross_entropy(fwd.logits.data(), 2, labels[i], nullptr);
      if ((fwd.logits[1] >= fwd.logits[0] ? 1 : 0) == labels[i]) ++correct;
    }
    return std::pair<double, double>(loss_sum / features.size(),
                                     static_cast<double>(correct) / features.size());
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(train_features.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int correct = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      nn::ParamMap grads;
      for (size_t i = start; i < end; ++i) {
        const auto idx = static_cast<size_t>(order[i]);
        const HeadForward fwd =
            head_forward(m.head, train_features[idx], true, &dropout_rng);
        std::array<double, 2> dlogits{};
        loss_sum += nn::softmax_cross_entropy(fwd.logits.data(), 2,
                                              train_labels[idx], dlogits.data());
        if ((fwd.logits[1] >= fwd.logits[0] ? 1 : 0) == train_labels[idx])
          ++correct;
        head_backward(m.head, fwd, dlogits, grads);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, g] : grads)
        for (int64_t i = 0; i < g.size(); ++i) g[i] *= inv;
      optimizer.step(m.head.params, grads, {});
    }

    nn::EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / train_features.size();
    stats.train_accuracy = static_cast<double>(correct) / train_features.size();
    std::tie(stats.val_loss, stats.val_accuracy) =
        evaluate(val_features, val_labels);
    result.history.epochs.push_back(stats);
    result.history.stopped_epoch = epoch;

    if (std::isnan(stats.train_loss) || std::isnan(stats.val_loss))
      throw TrainingError("classifier training diverged (NaN loss) at epoch " +
                          std::to_string(epoch));

    const bool stop = stopper.observe(epoch, stats.val_loss);
    if (stopper.is_best(epoch)) {
      best_params = m.head.params;
      best_epoch = epoch;
    }
    if (stop) break;
  }

  m.head.params = std::move(best_params);
  result.history.best_epoch = best_epoch;
  return result;
}

void save_classifier(const std::string& path, const ClassifierModel& model,
                     const nn::TrainingHistory* history) {
  // Single container: backbone tensors prefixed backbone., head tensors head.
  nn::ParamMap merged;
  for (const auto& [name, t] : model.backbone.params)
    merged["backbone." + name] = t;
  for (const auto& [name, t] : model.head.params) merged["head." + name] = t;
  save_tensors(path, merged);

  json j;
  j["kind"] = "classifier";
  j["decision_threshold"] = model.decision_threshold;
  j["frames_per_video"] = model.frames_per_video;
  j["backbone"] = {{"architecture", model.backbone.architecture},
                   {"input_channels", model.backbone.input_channels},
                   {"feature_dim", model.backbone.feature_dim},
                   {"frozen_prefix", model.backbone.frozen_prefix},
                   {"seed", model.backbone.seed}};
  j["head"] = {{"kind", to_string(model.head.config.kind)},
               {"lstm_units", model.head.config.lstm_units},
               {"gru_units", model.head.config.gru_units},
               {"recurrent_dropout", model.head.config.recurrent_dropout},
               {"tf_heads", model.head.config.tf_heads},
               {"tf_model_dim", model.head.config.tf_model_dim},
               {"tf_ffn_dim", model.head.config.tf_ffn_dim},
               {"tf_dropout", model.head.config.tf_dropout},
               {"feature_dim", model.head.feature_dim}};
  if (history) j["history"] = json::parse(history_to_json(*history));
  save_sidecar(path, j.dump(2));
}

ClassifierModel load_classifier(const std::string& path) {
  const nn::ParamMap merged = load_tensors(path);
  json j;
  try {
    j = json::parse(load_sidecar(path));
  } catch (const json::exception& e) {
    throw DataError("classifier sidecar parse error: " + std::string(e.what()));
  }

  ClassifierModel model;
  model.decision_threshold = j.value("decision_threshold", 0.5);
  model.frames_per_video = j.value("frames_per_video", 8);

  const json jb = j.at("backbone");
  model.backbone.architecture = jb.value("architecture", std::string("small-conv"));
  model.backbone.input_channels = jb.value("input_channels", 1);
  model.backbone.feature_dim = jb.value("feature_dim", 0);
  model.backbone.frozen_prefix =
      jb.value("frozen_prefix", std::vector<std::string>{});
  model.backbone.seed = jb.value("seed", 0ULL);

  const json jh = j.at("head");
  model.head.config.kind = head_kind_from_string(jh.value("kind", std::string("gru")));
  model.head.config.lstm_units = jh.value("lstm_units", 512);
  model.head.config.gru_units = jh.value("gru_units", 256);
  model.head.config.recurrent_dropout = jh.value("recurrent_dropout", 0.5);
  model.head.config.tf_heads = jh.value("tf_heads", 4);
  model.head.config.tf_model_dim = jh.value("tf_model_dim", 256);
  model.head.config.tf_ffn_dim = jh.value("tf_ffn_dim", 512);
  model.head.config.tf_dropout = jh.value("tf_dropout", 0.1);
  model.head.feature_dim = jh.value("feature_dim", 0);

  for (const auto& [name, t] : merged) {
    if (name.rfind("backbone.", 0) == 0)
      model.backbone.params[name.substr(9)] = t;
    else if (name.rfind("head.", 0) == 0)
      model.head.params[name.substr(5)] = t;
  }
  if (model.backbone.feature_dim != model.head.feature_dim)
    throw DataError("classifier checkpoint: backbone/head feature dim mismatch");
  return model;
}

}  // namespace gundet
