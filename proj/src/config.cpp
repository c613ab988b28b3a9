#include "gundet/config.hpp"

#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gundet/errors.hpp"
#include "gundet/kernels.hpp"
#include "json.hpp"

using nlohmann::json;

namespace gundet {

namespace {

nn::TrainConfig train_from_json(const json& j, uint64_t default_seed) {
  nn::TrainConfig cfg;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.early_stop_patience = j.value("early_stop_patience", cfg.early_stop_patience);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.optimizer = j.value("optimizer", cfg.optimizer);
  cfg.seed = j.value("seed", default_seed);
  return cfg;
}

json train_to_json(const nn::TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"early_stop_patience", cfg.early_stop_patience},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", cfg.optimizer},
          {"seed", cfg.seed}};
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);

  if (j.contains("data")) {
    const json& d = j["data"];
    cfg.data.image_root = d.value("image_root", "");
    cfg.data.video_root = d.value("video_root", "");
    cfg.data.video_label_root = d.value("video_label_root", "");
    cfg.data.detection_image_root = d.value("detection_image_root", "");
    cfg.data.detection_label_root = d.value("detection_label_root", "");
    cfg.data.positive_class = d.value("positive_class", cfg.data.positive_class);
    if (d.contains("ratios")) {
      const auto r = d["ratios"];
      if (r.size() != 3) throw ConfigError("data.ratios must have 3 entries");
      for (size_t i = 0; i < 3; ++i) cfg.data.ratios[i] = r[i];
    }
    cfg.data.frames_per_video = d.value("frames_per_video", cfg.data.frames_per_video);
    cfg.data.frame_height = d.value("frame_height", cfg.data.frame_height);
    cfg.data.frame_width = d.value("frame_width", cfg.data.frame_width);
  }

  if (j.contains("augment")) {
    const json& a = j["augment"];
    cfg.augment.horizontal_flip_prob =
        a.value("horizontal_flip_prob", cfg.augment.horizontal_flip_prob);
    cfg.augment.rotation_max_degrees =
        a.value("rotation_max_degrees", cfg.augment.rotation_max_degrees);
    if (a.contains("zoom_range")) {
      const auto z = a["zoom_range"];
      if (z.size() != 2) throw ConfigError("augment.zoom_range must have 2 entries");
      cfg.augment.zoom_range = {z[0], z[1]};
    }
    const std::string fill = a.value("fill_mode", std::string("reflect"));
    if (fill == "reflect")
      cfg.augment.fill_mode = FillMode::reflect;
    else if (fill == "constant-zero")
      cfg.augment.fill_mode = FillMode::constant_zero;
    else
      throw ConfigError("augment.fill_mode must be reflect or constant-zero");
  }

  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    cfg.backbone.architecture = b.value("architecture", cfg.backbone.architecture);
    cfg.backbone.feature_dim = b.value("feature_dim", cfg.backbone.feature_dim);
    cfg.backbone.width1 = b.value("width1", cfg.backbone.width1);
    cfg.backbone.width2 = b.value("width2", cfg.backbone.width2);
    cfg.backbone.input_channels =
        b.value("input_channels", cfg.backbone.input_channels);
    cfg.backbone.frozen_prefix =
        b.value("frozen_prefix", cfg.backbone.frozen_prefix);
    cfg.backbone.pretrained = b.value("pretrained", "");
  }

  if (j.contains("head")) {
    const json& h = j["head"];
    cfg.head.kind = head_kind_from_string(h.value("kind", std::string("gru")));
    cfg.head.lstm_units = h.value("lstm_units", cfg.head.lstm_units);
    cfg.head.gru_units = h.value("gru_units", cfg.head.gru_units);
    cfg.head.recurrent_dropout =
        h.value("recurrent_dropout", cfg.head.recurrent_dropout);
    cfg.head.tf_heads = h.value("tf_heads", cfg.head.tf_heads);
    cfg.head.tf_model_dim = h.value("tf_model_dim", cfg.head.tf_model_dim);
    cfg.head.tf_ffn_dim = h.value("tf_ffn_dim", cfg.head.tf_ffn_dim);
    cfg.head.tf_dropout = h.value("tf_dropout", cfg.head.tf_dropout);
    cfg.decision_threshold = h.value("decision_threshold", cfg.decision_threshold);
  }
  if (cfg.decision_threshold <= 0.0 || cfg.decision_threshold >= 1.0)
    throw ConfigError("decision_threshold must lie in (0,1)");

  if (j.contains("detector")) {
    const json& d = j["detector"];
    cfg.detector.input_size = d.value("input_size", cfg.detector.input_size);
    cfg.detector.strides = d.value("strides", cfg.detector.strides);
    cfg.detector.confidence_threshold =
        d.value("confidence_threshold", cfg.detector.confidence_threshold);
    cfg.detector.nms_iou_threshold =
        d.value("nms_iou_threshold", cfg.detector.nms_iou_threshold);
    cfg.detector_base_width = d.value("base_width", cfg.detector_base_width);
    cfg.detector_pretrained = d.value("pretrained", "");
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("backbone"))
      cfg.train_backbone = train_from_json(t["backbone"], cfg.seed);
    if (t.contains("classifier"))
      cfg.train_classifier = train_from_json(t["classifier"], cfg.seed);
    if (t.contains("detector"))
      cfg.train_detector = train_from_json(t["detector"], cfg.seed);
  }
  if (!j.contains("train") || !j["train"].contains("backbone"))
    cfg.train_backbone.seed = cfg.seed;
  if (!j.contains("train") || !j["train"].contains("classifier"))
    cfg.train_classifier.seed = cfg.seed;
  if (!j.contains("train") || !j["train"].contains("detector"))
    cfg.train_detector.seed = cfg.seed;

  if (j.contains("eval")) {
    const json& e = j["eval"];
    cfg.eval.ap_iou_threshold = e.value("ap_iou_threshold", cfg.eval.ap_iou_threshold);
    cfg.eval.ap_eleven_point = e.value("ap_eleven_point", cfg.eval.ap_eleven_point);
    cfg.eval.parallel_videos = e.value("parallel_videos", cfg.eval.parallel_videos);
  }

  if (j.contains("compute")) {
    const json& c = j["compute"];
    cfg.compute.backend = c.value("backend", cfg.compute.backend);
    cfg.compute.threads = c.value("threads", cfg.compute.threads);
    if (cfg.compute.backend != "openmp" && cfg.compute.backend != "serial")
      throw ConfigError("compute.backend must be openmp or serial");
  }

  if (j.contains("sweep")) {
    const json& s = j["sweep"];
    cfg.sweep.backbones.clear();
    for (const auto& b : s.value("backbones", json::array())) {
      std::array<int, 3> dims{b.value("feature_dim", cfg.backbone.feature_dim),
                              b.value("width1", cfg.backbone.width1),
                              b.value("width2", cfg.backbone.width2)};
      cfg.sweep.backbones.emplace_back(b.at("label").get<std::string>(), dims);
    }
    if (s.contains("heads"))
      cfg.sweep.heads = s["heads"].get<std::vector<std::string>>();
  }

  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["data"] = {{"image_root", cfg.data.image_root},
               {"video_root", cfg.data.video_root},
               {"video_label_root", cfg.data.video_label_root},
               {"detection_image_root", cfg.data.detection_image_root},
               {"detection_label_root", cfg.data.detection_label_root},
               {"positive_class", cfg.data.positive_class},
               {"ratios", cfg.data.ratios},
               {"frames_per_video", cfg.data.frames_per_video},
               {"frame_height", cfg.data.frame_height},
               {"frame_width", cfg.data.frame_width}};
  j["augment"] = {
      {"horizontal_flip_prob", cfg.augment.horizontal_flip_prob},
      {"rotation_max_degrees", cfg.augment.rotation_max_degrees},
      {"zoom_range", {cfg.augment.zoom_range.first, cfg.augment.zoom_range.second}},
      {"fill_mode",
       cfg.augment.fill_mode == FillMode::reflect ? "reflect" : "constant-zero"}};
  j["backbone"] = {{"architecture", cfg.backbone.architecture},
                   {"feature_dim", cfg.backbone.feature_dim},
                   {"width1", cfg.backbone.width1},
                   {"width2", cfg.backbone.width2},
                   {"input_channels", cfg.backbone.input_channels},
                   {"frozen_prefix", cfg.backbone.frozen_prefix},
                   {"pretrained", cfg.backbone.pretrained}};
  j["head"] = {{"kind", to_string(cfg.head.kind)},
               {"lstm_units", cfg.head.lstm_units},
               {"gru_units", cfg.head.gru_units},
               {"recurrent_dropout", cfg.head.recurrent_dropout},
               {"tf_heads", cfg.head.tf_heads},
               {"tf_model_dim", cfg.head.tf_model_dim},
               {"tf_ffn_dim", cfg.head.tf_ffn_dim},
               {"tf_dropout", cfg.head.tf_dropout},
               {"decision_threshold", cfg.decision_threshold}};
  j["detector"] = {{"input_size", cfg.detector.input_size},
                   {"strides", cfg.detector.strides},
                   {"confidence_threshold", cfg.detector.confidence_threshold},
                   {"nms_iou_threshold", cfg.detector.nms_iou_threshold},
                   {"base_width", cfg.detector_base_width},
                   {"pretrained", cfg.detector_pretrained}};
  j["train"] = {{"backbone", train_to_json(cfg.train_backbone)},
                {"classifier", train_to_json(cfg.train_classifier)},
                {"detector", train_to_json(cfg.train_detector)}};
  j["eval"] = {{"ap_iou_threshold", cfg.eval.ap_iou_threshold},
               {"ap_eleven_point", cfg.eval.ap_eleven_point},
               {"parallel_videos", cfg.eval.parallel_videos}};
  j["compute"] = {{"backend", cfg.compute.backend},
                  {"threads", cfg.compute.threads}};
  if (!cfg.sweep.backbones.empty()) {
    json backbones = json::array();
    for (const auto& [label, dims] : cfg.sweep.backbones)
      backbones.push_back({{"label", label},
                           {"feature_dim", dims[0]},
                           {"width1", dims[1]},
                           {"width2", dims[2]}});
    j["sweep"] = {{"backbones", backbones}, {"heads", cfg.sweep.heads}};
  }
  return j.dump(2);
}

void save_config(const std::string& path, const ExperimentConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write config: " + path);
  f << config_to_json(cfg) << "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = config_to_json(cfg);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string provenance_json(const ExperimentConfig& cfg) {
  json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["artifact_version"] = kArtifactVersion;
  return j.dump();
}

void apply_compute_settings(const ExperimentConfig& cfg) {
  kernels::set_backend(cfg.compute.backend == "serial"
                           ? kernels::Backend::serial
                           : kernels::Backend::openmp);
#ifdef _OPENMP
  if (cfg.compute.threads > 0) omp_set_num_threads(cfg.compute.threads);
#endif
}

}  // namespace gundet
