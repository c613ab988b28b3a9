#include "gundet/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "gundet/checkpoint.hpp"
#include "gundet/errors.hpp"
#include "gundet/kernels.hpp"
#include "json.hpp"

using nlohmann::json;

namespace gundet {

namespace {

kernels::Conv2dShape conv_shape(const Tensor& in, const Tensor& w, int stride,
                                int pad) {
  kernels::Conv2dShape s;
  s.in_channels = in.dim(0);
  s.height = in.dim(1);
  s.width = in.dim(2);
  s.out_channels = w.dim(0);
  s.kernel = w.dim(2);
  s.stride = stride;
  s.pad = pad;
  return s;
}

Tensor conv_relu(const Tensor& in, const Tensor& w, const Tensor& b,
                 Tensor* pre_out) {
  const auto s = conv_shape(in, w, 1, 1);
  Tensor pre({s.out_channels, s.out_height(), s.out_width()});
  kernels::conv2d_forward(s, in.data(), w.data(), b.data(), pre.data());
  Tensor post = pre;
  for (int64_t i = 0; i < post.size(); ++i) post[i] = std::max(0.0, post[i]);
  if (pre_out) *pre_out = std::move(pre);
  return post;
}

Tensor pool(const Tensor& in, std::vector<uint8_t>* argmax) {
  const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
  Tensor out({c, h / 2, w / 2});
  argmax->assign(static_cast<size_t>(out.size()), 0);
  kernels::maxpool2_forward(c, h, w, in.data(), out.data(), argmax->data());
  return out;
}

void relu_backward_inplace(const Tensor& pre, Tensor& grad) {
  for (int64_t i = 0; i < grad.size(); ++i)
    if (pre[i] <= 0.0) grad[i] = 0.0;
}

void check_small_conv(const BackboneState& state) {
  if (state.architecture != "small-conv")
    throw ValidationError("unknown backbone architecture: " + state.architecture);
  for (const char* name : {"conv1.weight", "conv1.bias", "conv2.weight",
                           "conv2.bias", "conv3.weight", "conv3.bias",
                           "fc.weight", "fc.bias"})
    if (!state.params.count(name))
      throw ValidationError(std::string("backbone parameter missing: ") + name);
}

}  // namespace

BackboneState make_small_conv_backbone(int input_channels, int feature_dim,
                                       uint64_t seed, int width1, int width2) {
  if (input_channels <= 0 || feature_dim <= 0 || width1 <= 0 || width2 <= 0)
    throw ValidationError("backbone widths must be positive");
  BackboneState state;
  state.architecture = "small-conv";
  state.input_channels = input_channels;
  state.feature_dim = feature_dim;
  state.seed = seed;
  Rng rng = Rng::from(seed, 17);
  auto conv = [&](const std::string& name, int out_c, int in_c) {
    state.params[name + ".weight"] = nn::glorot_uniform(
        {out_c, in_c, 3, 3}, in_c * 9, out_c * 9, rng);
    state.params[name + ".bias"] = Tensor({out_c});
  };
  conv("conv1", width1, input_channels);
  conv("conv2", width2, width1);
  conv("conv3", feature_dim, width2);
  state.params["fc.weight"] =
      nn::glorot_uniform({2, feature_dim}, feature_dim, 2, rng);
  state.params["fc.bias"] = Tensor({2});
  return state;
}

BackboneState init_from_pretrained(const BackboneState& source) {
  check_small_conv(source);
  return source;  // deep copy by value; theta_t starts equal to theta_s
}

Tensor frame_to_chw(const FrameTensor& frame) {
  Tensor chw({frame.channels, frame.height, frame.width});
  for (int c = 0; c < frame.channels; ++c)
    for (int y = 0; y < frame.height; ++y)
      for (int x = 0; x < frame.width; ++x)
        chw.at3(c, y, x) = frame.at(y, x, c);
  return chw;
}

BackboneTrace backbone_forward(const BackboneState& state, const Tensor& chw) {
  check_small_conv(state);
  if (chw.dim(0) != state.input_channels)
    throw ValidationError("backbone expects " +
                          std::to_string(state.input_channels) +
                          " input channels, got " + std::to_string(chw.dim(0)));
  if (chw.dim(1) < 8 || chw.dim(2) < 8)
    throw ValidationError("backbone input must be at least 8x8");

  BackboneTrace t;
  t.input = chw;
  const Tensor c1 = conv_relu(chw, state.params.at("conv1.weight"),
                              state.params.at("conv1.bias"), &t.c1_pre);
  t.p1 = pool(c1, &t.p1_arg);
  const Tensor c2 = conv_relu(t.p1, state.params.at("conv2.weight"),
                              state.params.at("conv2.bias"), &t.c2_pre);
  t.p2 = pool(c2, &t.p2_arg);
  t.final_activations = conv_relu(t.p2, state.params.at("conv3.weight"),
                                  state.params.at("conv3.bias"), &t.c3_pre);

  const int d = t.final_activations.dim(0);
  const int hw = t.final_activations.dim(1) * t.final_activations.dim(2);
  t.features.assign(static_cast<size_t>(d), 0.0);
  for (int k = 0; k < d; ++k) {
    double sum = 0.0;
    const double* a = t.final_activations.data() + static_cast<size_t>(k) * hw;
    for (int i = 0; i < hw; ++i) sum += a[i];
    t.features[static_cast<size_t>(k)] = sum / hw;
  }

  const Tensor& fw = state.params.at("fc.weight");
  const Tensor& fb = state.params.at("fc.bias");
  for (int j = 0; j < 2; ++j) {
    double acc = fb[j];
    for (int k = 0; k < d; ++k) acc += fw.at2(j, k) * t.features[static_cast<size_t>(k)];
    t.logits[static_cast<size_t>(j)] = acc;
  }
  return t;
}

Tensor extract_features(const BackboneState& state,
                        const std::vector<FrameTensor>& frames) {
  if (frames.empty()) throw ValidationError("extract_features: no frames");
  for (const auto& f : frames)
    if (!f.same_shape(frames.front()))
      throw ValidationError("extract_features: frames must share one shape");
  Tensor out({static_cast<int>(frames.size()), state.feature_dim});
  for (size_t i = 0; i < frames.size(); ++i) {
    const BackboneTrace t = backbone_forward(state, frame_to_chw(frames[i]));
    for (int k = 0; k < state.feature_dim; ++k)
      out.at2(static_cast<int>(i), k) = t.features[static_cast<size_t>(k)];
  }
  return out;
}

std::array<double, 2> logits_from_activations(const BackboneState& state,
                                              const Tensor& activations) {
  const int d = activations.dim(0);
  if (d != state.feature_dim)
    throw ValidationError("activation channel count mismatch");
  const int hw = activations.dim(1) * activations.dim(2);
  const Tensor& fw = state.params.at("fc.weight");
  const Tensor& fb = state.params.at("fc.bias");
  std::array<double, 2> logits{};
  for (int j = 0; j < 2; ++j) {
    double acc = fb[j];
    for (int k = 0; k < d; ++k) {
      double sum = 0.0;
      const double* a = activations.data() + static_cast<size_t>(k) * hw;
      for (int i = 0; i < hw; ++i) sum += a[i];
      acc += fw.at2(j, k) * (sum / hw);
    }
    logits[static_cast<size_t>(j)] = acc;
  }
  return logits;
}

namespace {

// Shared tail: given d(loss or logit)/d(final activations) in grad_a and
// optionally d/dlogits for the fc layer, accumulate parameter grads.
void backbone_backward(const BackboneState& state, const BackboneTrace& t,
                       const std::array<double, 2>* dlogits, Tensor grad_a,
                       nn::ParamMap* grads) {
  const int d = t.final_activations.dim(0);
  const int hw = t.final_activations.dim(1) * t.final_activations.dim(2);

  if (dlogits) {
    const Tensor& fw = state.params.at("fc.weight");
    if (grads) {
      Tensor& gw = (*grads)["fc.weight"];
      if (gw.empty()) gw = Tensor(fw.shape());
      Tensor& gb = (*grads)["fc.bias"];
      if (gb.empty()) gb = Tensor({2});
      for (int j = 0; j < 2; ++j) {
        gb[j] += (*dlogits)[static_cast<size_t>(j)];
        for (int k = 0; k < d; ++k)
          gw.at2(j, k) += (*dlogits)[static_cast<size_t>(j)] *
                          t.features[static_cast<size_t>(k)];
      }
    }
    // GAP backward: gradient spread uniformly over spatial positions
    for (int k = 0; k < d; ++k) {
      double dfeat = 0.0;
      for (int j = 0; j < 2; ++j)
        dfeat += (*dlogits)[static_cast<size_t>(j)] * fw.at2(j, k);
      double* ga = grad_a.data() + static_cast<size_t>(k) * hw;
      const double v = dfeat / hw;
      for (int i = 0; i < hw; ++i) ga[i] += v;
    }
  }
  if (!grads) return;

  auto conv_back = [&](const std::string& name, const Tensor& in,
                       const Tensor& pre, Tensor& grad_post,
                       bool need_input_grad) -> Tensor {
    relu_backward_inplace(pre, grad_post);
    const Tensor& w = state.params.at(name + ".weight");
    const auto s = conv_shape(in, w, 1, 1);
    Tensor& gw = (*grads)[name + ".weight"];
    if (gw.empty()) gw = Tensor(w.shape());
    Tensor& gb = (*grads)[name + ".bias"];
    if (gb.empty()) gb = Tensor({s.out_channels});
    Tensor gw_local(w.shape());
    Tensor gb_local({s.out_channels});
    kernels::conv2d_backward_params(s, in.data(), grad_post.data(),
                                    gw_local.data(), gb_local.data());
    for (int64_t i = 0; i < gw.size(); ++i) gw[i] += gw_local[i];
    for (int64_t i = 0; i < gb.size(); ++i) gb[i] += gb_local[i];
    if (!need_input_grad) return {};
    Tensor grad_in(in.shape());
    kernels::conv2d_backward_input(s, grad_post.data(), w.data(), grad_in.data());
    return grad_in;
  };

  Tensor grad_p2 = conv_back("conv3", t.p2, t.c3_pre, grad_a, true);

  const int c2c = t.c2_pre.dim(0), c2h = t.c2_pre.dim(1), c2w = t.c2_pre.dim(2);
  Tensor grad_c2(t.c2_pre.shape());
  kernels::maxpool2_backward(c2c, c2h, c2w, grad_p2.data(), t.p2_arg.data(),
                             grad_c2.data());
  Tensor grad_p1 = conv_back("conv2", t.p1, t.c2_pre, grad_c2, true);

  const int c1c = t.c1_pre.dim(0), c1h = t.c1_pre.dim(1), c1w = t.c1_pre.dim(2);
  Tensor grad_c1(t.c1_pre.shape());
  kernels::maxpool2_backward(c1c, c1h, c1w, grad_p1.data(), t.p1_arg.data(),
                             grad_c1.data());
  conv_back("conv1", t.input, t.c1_pre, grad_c1, false);
}

}  // namespace

double backbone_loss_grads(const BackboneState& state, const Tensor& chw,
                           int label, nn::ParamMap& grads,
                           BackboneTrace* trace_out) {
  BackboneTrace t = backbone_forward(state, chw);
  std::array<double, 2> dlogits{};
  const double loss =
      nn::softmax_cross_entropy(t.logits.data(), 2, label, dlogits.data());
  Tensor grad_a(t.final_activations.shape());
  backbone_backward(state, t, &dlogits, std::move(grad_a), &grads);
  if (trace_out) *trace_out = std::move(t);
  return loss;
}

Tensor backbone_class_activation_grads(const BackboneState& state,
                                       const Tensor& chw, int class_id,
                                       BackboneTrace* trace_out) {
  if (class_id != 0 && class_id != 1)
    throw ValidationError("class id must be 0 or 1");
  BackboneTrace t = backbone_forward(state, chw);
  const int d = t.final_activations.dim(0);
  const int hw = t.final_activations.dim(1) * t.final_activations.dim(2);
  const Tensor& fw = state.params.at("fc.weight");
  Tensor grad_a(t.final_activations.shape());
  for (int k = 0; k < d; ++k) {
    const double v = fw.at2(class_id, k) / hw;
    double* ga = grad_a.data() + static_cast<size_t>(k) * hw;
    for (int i = 0; i < hw; ++i) ga[i] = v;
  }
  if (trace_out) *trace_out = std::move(t);
  return grad_a;
}

FinetuneResult finetune_backbone(const BackboneState& state,
                                 const std::vector<FrameTensor>& train_images,
                                 const std::vector<int>& train_labels,
                                 const std::vector<FrameTensor>& val_images,
                                 const std::vector<int>& val_labels,
                                 const AugmentPolicy& policy,
                                 const nn::TrainConfig& cfg,
                                 nn::ParamMap* update_log) {
  nn::validate_train_config(cfg);
  validate_policy(policy);
  if (train_images.empty() || val_images.empty())
    throw ValidationError("finetune requires non-empty train and val sets");
  if (train_images.size() != train_labels.size() ||
      val_images.size() != val_labels.size())
    throw ValidationError("image/label count mismatch");
  for (int l : train_labels)
    if (l != 0 && l != 1) throw ValidationError("labels must be binary");

  BackboneState model = state;
  check_small_conv(model);
  nn::Optimizer optimizer(cfg.optimizer, cfg.learning_rate);
  nn::EarlyStopper stopper(cfg.early_stop_patience);
  nn::TrainingHistory history;
  nn::ParamMap best_params = model.params;
  int best_epoch = 0;

  Rng shuffle_rng = Rng::from(cfg.seed, 1);

  auto evaluate = [&](const std::vector<FrameTensor>& images,
                      const std::vector<int>& labels) {
    double loss_sum = 0.0;
    int correct = 0;
    for (size_t i = 0; i < images.size(); ++i) {
      const BackboneTrace t = backbone_forward(model, frame_to_chw(images[i]));
      loss_sum += nn::softmax_cross_entropy(t.logits.data(), 2, labels[i], nullptr);
      const int pred = t.logits[1] >= t.logits[0] ? 1 : 0;
      if (pred == labels[i]) ++correct;
    }
    return std::pair<double, double>(loss_sum / images.size(),
                                     static_cast<double>(correct) / images.size());
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const uint64_t epoch_seed = cfg.seed + 1000003ULL * static_cast<uint64_t>(epoch);
    auto [aug_images, aug_labels] =
        augment_batch(train_images, train_labels, policy, epoch_seed);

    std::vector<int> order(train_images.size());
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
        const int idx = order[i];
        BackboneTrace t;
        loss_sum += backbone_loss_grads(
            model, frame_to_chw(aug_images[static_cast<size_t>(idx)]),
            aug_labels[static_cast<size_t>(idx)], grads, &t);
        const int pred = t.logits[1] >= t.logits[0] ? 1 : 0;
        if (pred == aug_labels[static_cast<size_t>(idx)]) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& [name, g] : grads)
        for (int64_t i = 0; i < g.size(); ++i) g[i] *= inv;
      optimizer.step(model.params, grads, model.frozen_prefix, update_log);
    }

    nn::EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / train_images.size();
    stats.train_accuracy = static_cast<double>(correct) / train_images.size();
    std::tie(stats.val_loss, stats.val_accuracy) = evaluate(val_images, val_labels);
    history.epochs.push_back(stats);
    history.stopped_epoch = epoch;

    if (std::isnan(stats.train_loss) || std::isnan(stats.val_loss))
      throw TrainingError("training diverged (NaN loss) at epoch " +
                          std::to_string(epoch));

    const bool stop = stopper.observe(epoch, stats.val_loss);
    if (stopper.is_best(epoch)) {
      best_params = model.params;
      best_epoch = epoch;
    }
    if (stop) break;
  }

  model.params = std::move(best_params);
  history.best_epoch = best_epoch;
  return {std::move(model), std::move(history)};
}

void save_backbone(const std::string& path, const BackboneState& state,
                   const nn::TrainingHistory* history) {
  save_tensors(path, state.params);
  json j;
  j["kind"] = "backbone";
  j["architecture"] = state.architecture;
  j["input_channels"] = state.input_channels;
  j["feature_dim"] = state.feature_dim;
  j["frozen_prefix"] = state.frozen_prefix;
  j["seed"] = state.seed;
  if (history) j["history"] = json::parse(history_to_json(*history));
  save_sidecar(path, j.dump(2));
}

BackboneState load_backbone(const std::string& path) {
  BackboneState state;
  state.params = load_tensors(path);
  json j;
  try {
    j = json::parse(load_sidecar(path));
  } catch (const json::exception& e) {
    throw DataError("backbone sidecar parse error: " + std::string(e.what()));
  }
  state.architecture = j.value("architecture", std::string("small-conv"));
  state.input_channels = j.value("input_channels", 1);
  state.feature_dim = j.value("feature_dim", 0);
  state.frozen_prefix = j.value("frozen_prefix", std::vector<std::string>{});
  state.seed = j.value("seed", 0ULL);
  check_small_conv(state);
  const Tensor& c3 = state.params.at("conv3.weight");
  if (c3.dim(0) != state.feature_dim)
    throw DataError("backbone checkpoint feature_dim mismatch");
  const Tensor& c1 = state.params.at("conv1.weight");
  if (c1.dim(1) != state.input_channels)
    throw DataError("backbone checkpoint channel mismatch");
  return state;
}

}  // namespace gundet
