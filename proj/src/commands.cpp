#include "gundet/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gundet/dataset.hpp"
#include "gundet/errors.hpp"
#include "gundet/gradcam.hpp"
#include "gundet/metrics.hpp"
#include "gundet/pipeline.hpp"
#include "gundet/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gundet {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory: " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write: " + path);
  f << text;
  if (text.empty() || text.back() != '\n') f << "\n";
}

FrameTensor load_sized_image(const std::string& path, int height, int width) {
  return resize_bilinear(read_image(path), height, width);
}

struct LabeledImages {
  std::vector<FrameTensor> images;
  std::vector<int> labels;
};

LabeledImages load_image_subset(const ExperimentConfig& cfg,
                                const DatasetIndex& index,
                                const std::vector<int>& ids) {
  LabeledImages out;
  out.images.reserve(ids.size());
  out.labels.reserve(ids.size());
  for (int i : ids) {
    const auto& entry = index.entries[static_cast<size_t>(i)];
    out.images.push_back(
        load_sized_image(entry.path, cfg.data.frame_height, cfg.data.frame_width));
    out.labels.push_back(entry.label);
  }
  return out;
}

std::vector<VideoSample> load_video_subset(const ExperimentConfig& cfg,
                                           const DatasetIndex& index,
                                           const std::vector<int>& ids) {
  std::vector<VideoSample> out(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (int64_t k = 0; k < static_cast<int64_t>(ids.size()); ++k) {
    const auto& entry = index.entries[static_cast<size_t>(ids[static_cast<size_t>(k)])];
    VideoSample sample =
        sample_frames(entry.path, cfg.data.frames_per_video,
                      cfg.data.frame_height, cfg.data.frame_width);
    sample.label = entry.label;
    out[static_cast<size_t>(k)] = std::move(sample);
  }
  return out;
}

std::string image_manifest_path(const ExperimentConfig& cfg) {
  return join(cfg.out_dir, "image_split.json");
}
std::string video_manifest_path(const ExperimentConfig& cfg) {
  return join(cfg.out_dir, "video_split.json");
}
std::string backbone_ckpt(const ExperimentConfig& cfg) {
  return join(cfg.out_dir, "backbone.ckpt");
}
std::string classifier_ckpt(const ExperimentConfig& cfg) {
  return join(cfg.out_dir, "classifier.ckpt");
}
std::string detector_ckpt(const ExperimentConfig& cfg) {
  return join(cfg.out_dir, "detector.ckpt");
}

SplitAssignment require_manifest(const std::string& path,
                                 const DatasetIndex& index,
                                 const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string("missing ") + what +
                      " split manifest (run `prepare` first): " + path);
  return load_split_manifest(path, index);
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path))
    throw ConfigError(std::string("missing ") + what +
                      " checkpoint (train it first): " + path);
}

// ---------------------------------------------------------- detector corpus

struct DetectionCorpus {
  std::vector<FrameTensor> images;
  std::vector<std::vector<GroundTruthBox>> labels;
};

DetectionCorpus load_detection_corpus(const ExperimentConfig& cfg) {
  if (cfg.data.detection_image_root.empty() ||
      cfg.data.detection_label_root.empty())
    throw ConfigError("detector training needs detection_image_root and "
                      "detection_label_root");
  if (!fs::is_directory(cfg.data.detection_image_root))
    throw ConfigError("detection_image_root does not exist: " +
                      cfg.data.detection_image_root);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(cfg.data.detection_image_root))
    if (e.is_regular_file()) files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw DataError("detection image corpus is empty: " +
                    cfg.data.detection_image_root);

  DetectionCorpus corpus;
  for (const auto& path : files) {
    corpus.images.push_back(read_image(path));
    const std::string stem = fs::path(path).stem().string();
    const std::string label_path =
        join(cfg.data.detection_label_root, stem + ".txt");
    if (!fs::exists(label_path))
      throw DataError("missing detection label file: " + label_path);
    corpus.labels.push_back(load_detection_labels(label_path));
  }
  return corpus;
}

// ---------------------------------------------------------- drawing helpers

void draw_box(FrameTensor& rgb, const BoundingBox& box) {
  const int x0 = std::clamp(static_cast<int>(std::lround(box.x)), 0, rgb.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(box.y)), 0, rgb.height - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround(box.x + box.w)), 0, rgb.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::lround(box.y + box.h)), 0, rgb.height - 1);
  auto mark = [&](int y, int x) {
    rgb.at(y, x, 0) = 1.0;
    rgb.at(y, x, 1) = 0.0;
    rgb.at(y, x, 2) = 0.0;
  };
  for (int x = x0; x <= x1; ++x) {
    mark(y0, x);
    mark(y1, x);
  }
  for (int y = y0; y <= y1; ++y) {
    mark(y, x0);
    mark(y, x1);
  }
}

FrameTensor to_rgb(const FrameTensor& frame) {
  if (frame.channels == 3) return frame;
  FrameTensor rgb(frame.height, frame.width, 3);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = frame.at(y, x, 0);
  return rgb;
}

void write_png_with_provenance(const std::string& path, const FrameTensor& frame,
                               const std::string& provenance) {
  PngImage img;
  img.width = frame.width;
  img.height = frame.height;
  img.channels = frame.channels;
  img.pixels.resize(frame.values.size());
  for (size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<uint8_t>(
        std::lround(std::clamp(frame.values[i], 0.0, 1.0) * 255.0));
  png_write(path, img, {{"provenance", provenance}});
}

void render_roc_png(const std::string& path, const RocCurve& curve,
                    const std::string& provenance) {
  const int size = 320, margin = 24;
  FrameTensor canvas(size, size, 3, 1.0);
  auto px = [&](double fpr) {
    return margin + static_cast<int>(std::lround(fpr * (size - 2 * margin)));
  };
  auto py = [&](double tpr) {
    return size - margin - static_cast<int>(std::lround(tpr * (size - 2 * margin)));
  };
  auto plot = [&](int y, int x, double r, double g, double b) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    canvas.at(y, x, 0) = r;
    canvas.at(y, x, 1) = g;
    canvas.at(y, x, 2) = b;
  };
  auto line = [&](int y0, int x0, int y1, int x1, double r, double g, double b) {
    const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      plot(static_cast<int>(std::lround(y0 + t * (y1 - y0))),
           static_cast<int>(std::lround(x0 + t * (x1 - x0))), r, g, b);
    }
  };
  line(py(0), px(0), py(0), px(1), 0, 0, 0);      // x axis
  line(py(0), px(0), py(1), px(0), 0, 0, 0);      // y axis
  line(py(0), px(0), py(1), px(1), 0.8, 0.8, 0.8);  // chance diagonal
  for (size_t i = 1; i < curve.points.size(); ++i)
    line(py(curve.points[i - 1].second), px(curve.points[i - 1].first),
         py(curve.points[i].second), px(curve.points[i].first), 0.1, 0.2, 0.9);
  write_png_with_provenance(path, canvas, provenance);
}

// GT units for AP: one unit per (video, sampled frame), keyed id#index.
std::string unit_key(const std::string& video_id, int frame_index) {
  return video_id + "#" + std::to_string(frame_index);
}

std::map<std::string, std::vector<BoundingBox>> video_ground_truth(
    const ExperimentConfig& cfg, const std::vector<VideoSample>& videos) {
  std::map<std::string, std::vector<BoundingBox>> gt;
  if (cfg.data.video_label_root.empty()) return gt;
  for (const auto& video : videos) {
    // label files mirror the video tree: <root>/<class>/<video>/<frame>.txt
    const fs::path source(video.source_id);
    const fs::path label_dir = fs::path(cfg.data.video_label_root) /
                               source.parent_path().filename() /
                               source.filename();
    for (size_t k = 0; k < video.frame_paths.size(); ++k) {
      const std::string stem = fs::path(video.frame_paths[k]).stem().string();
      const fs::path label_path = label_dir / (stem + ".txt");
      std::vector<BoundingBox> boxes;
      if (fs::exists(label_path)) {
        const auto raw = load_detection_labels(label_path.string());
        const auto& frame = video.frames[k];
        for (const auto& g : raw) {
          BoundingBox b;
          b.w = g.w * frame.width;
          b.h = g.h * frame.height;
          b.x = g.cx * frame.width - b.w / 2.0;
          b.y = g.cy * frame.height - b.h / 2.0;
          b.confidence = 1.0;
          b.cls = 1;
          boxes.push_back(b);
        }
      }
      gt[unit_key(video.source_id, static_cast<int>(k))] = std::move(boxes);
    }
  }
  return gt;
}

std::map<std::string, std::vector<BoundingBox>> report_detections(
    const PipelineReport& report) {
  std::map<std::string, std::vector<BoundingBox>> det;
  for (const auto& rec : report.records)
    for (const auto& fd : rec.detections)
      det[unit_key(rec.video_id, fd.frame_index)] = fd.boxes;
  return det;
}

std::optional<double> report_ap(const ExperimentConfig& cfg,
                                const PipelineReport& report,
                                const std::map<std::string, std::vector<BoundingBox>>& gt,
                                const std::vector<VideoSample>& videos) {
  if (gt.empty()) return std::nullopt;
  int64_t total_gt = 0;
  for (const auto& [_, boxes] : gt) total_gt += static_cast<int64_t>(boxes.size());
  if (total_gt == 0) return std::nullopt;

  std::set<std::string> excluded;
  for (const auto& rec : report.records) {
    if (rec.routed_to_detector) continue;
    const auto it = std::find_if(
        videos.begin(), videos.end(),
        [&](const VideoSample& v) { return v.source_id == rec.video_id; });
    if (it == videos.end()) continue;
    for (size_t k = 0; k < it->frame_paths.size(); ++k)
      excluded.insert(unit_key(rec.video_id, static_cast<int>(k)));
  }
  const ApResult ap =
      average_precision(report_detections(report), gt, cfg.eval.ap_iou_threshold,
                        excluded, cfg.eval.ap_eleven_point);
  return ap.ap;
}

std::string csv_field(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

void append_summary_csv(const std::string& path, const std::string& provenance,
                        const std::string& configuration,
                        const PipelineReport& report) {
  const bool fresh = !fs::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw DataError("cannot write: " + path);
  if (fresh) {
    f << "# provenance " << provenance << "\n";
    f << "configuration,TP,FP,FN,TN,AP,detector_frame_invocations,time_s,"
         "model_size_bytes\n";
  }
  f << configuration << ",";
  if (report.confusion)
    f << report.confusion->tp << "," << report.confusion->fp << ","
      << report.confusion->fn << "," << report.confusion->tn << ",";
  else
    f << "NA,NA,NA,NA,";
  f << csv_field(report.ap) << "," << report.detector_frame_invocations << ","
    << report.total_time_s << ",";
  if (report.model_size_bytes)
    f << *report.model_size_bytes;
  else
    f << "NA";
  f << "\n";
}

}  // namespace

void cmd_prepare(const ExperimentConfig& cfg) {
  apply_compute_settings(cfg);
  if (cfg.data.image_root.empty() && cfg.data.video_root.empty())
    throw ConfigError("prepare: config names neither image_root nor video_root");
  ensure_dir(cfg.out_dir);
  const std::string prov = provenance_json(cfg);

  if (!cfg.data.image_root.empty()) {
    const DatasetIndex index = discover_dataset(
        cfg.data.image_root, MediaKind::image, cfg.data.positive_class);
    const SplitAssignment split = split_dataset(index, cfg.data.ratios, cfg.seed);
    save_split_manifest(image_manifest_path(cfg), index, split, prov);
  }
  if (!cfg.data.video_root.empty()) {
    const DatasetIndex index = discover_dataset(
        cfg.data.video_root, MediaKind::video, cfg.data.positive_class);
    const SplitAssignment split = split_dataset(index, cfg.data.ratios, cfg.seed);
    save_split_manifest(video_manifest_path(cfg), index, split, prov);
  }
}

void cmd_train(const ExperimentConfig& cfg, const std::string& target) {
  apply_compute_settings(cfg);
  ensure_dir(cfg.out_dir);

  if (target == "backbone") {
    if (cfg.data.image_root.empty())
      throw ConfigError("backbone training needs data.image_root");
    const DatasetIndex index = discover_dataset(
        cfg.data.image_root, MediaKind::image, cfg.data.positive_class);
    const SplitAssignment split =
        require_manifest(image_manifest_path(cfg), index, "image");
    const LabeledImages train = load_image_subset(cfg, index, split.train);
    const LabeledImages val = load_image_subset(cfg, index, split.val);

    BackboneState state =
        cfg.backbone.pretrained.empty()
            ? make_small_conv_backbone(cfg.backbone.input_channels,
                                       cfg.backbone.feature_dim, cfg.seed,
                                       cfg.backbone.width1, cfg.backbone.width2)
            : init_from_pretrained(load_backbone(cfg.backbone.pretrained));
    state.frozen_prefix = cfg.backbone.frozen_prefix;

    const FinetuneResult result =
        finetune_backbone(state, train.images, train.labels, val.images,
                          val.labels, cfg.augment, cfg.train_backbone);
    save_backbone(backbone_ckpt(cfg), result.state, &result.history);
    return;
  }

  if (target == "classifier") {
    require_file(backbone_ckpt(cfg), "backbone");
    if (cfg.data.video_root.empty())
      throw ConfigError("classifier training needs data.video_root");
    const DatasetIndex index = discover_dataset(
        cfg.data.video_root, MediaKind::video, cfg.data.positive_class);
    const SplitAssignment split =
        require_manifest(video_manifest_path(cfg), index, "video");
    const std::vector<VideoSample> train = load_video_subset(cfg, index, split.train);
    const std::vector<VideoSample> val = load_video_subset(cfg, index, split.val);

    ClassifierModel model;
    model.backbone = load_backbone(backbone_ckpt(cfg));
    model.head = build_head(cfg.head, model.backbone.feature_dim, cfg.seed);
    model.decision_threshold = cfg.decision_threshold;
    model.frames_per_video = cfg.data.frames_per_video;

    const TrainClassifierResult result =
        train_classifier(model, train, val, cfg.train_classifier);
    save_classifier(classifier_ckpt(cfg), result.model, &result.history);
    return;
  }

  if (target == "detector") {
    const DetectionCorpus corpus = load_detection_corpus(cfg);
    // seeded shuffle, ratio cut: train / val (test unused for detector)
    std::vector<int> order(corpus.images.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng = Rng::from(cfg.seed, 5);
    rng.shuffle(order);
    const size_t cut = static_cast<size_t>(
        std::floor(cfg.data.ratios[0] * static_cast<double>(order.size())));
    std::vector<FrameTensor> train_images, val_images;
    std::vector<std::vector<GroundTruthBox>> train_labels, val_labels;
    for (size_t i = 0; i < order.size(); ++i) {
      const auto idx = static_cast<size_t>(order[i]);
      if (i < cut || order.size() == 1) {
        train_images.push_back(corpus.images[idx]);
        train_labels.push_back(corpus.labels[idx]);
      } else {
        val_images.push_back(corpus.images[idx]);
        val_labels.push_back(corpus.labels[idx]);
      }
    }
    if (val_images.empty()) {
      val_images = train_images;
      val_labels = train_labels;
    }

    DetectorState state =
        cfg.detector_pretrained.empty()
            ? make_small_grid_detector(cfg.detector, cfg.backbone.input_channels,
                                       cfg.seed, cfg.detector_base_width)
            : load_detector(cfg.detector_pretrained);
    const FinetuneDetectorResult result =
        finetune_detector(state, train_images, train_labels, cfg.train_detector,
                          &val_images, &val_labels);
    save_detector(detector_ckpt(cfg), result.state, &result.history);
    return;
  }

  throw ConfigError("unknown train target: " + target +
                    " (want backbone|classifier|detector)");
}

void cmd_evaluate(const ExperimentConfig& cfg, const std::string& mode) {
  apply_compute_settings(cfg);
  if (mode != "two-stage" && mode != "detection-only" && mode != "both")
    throw ConfigError("unknown evaluate mode: " + mode);
  ensure_dir(cfg.out_dir);
  const std::string prov = provenance_json(cfg);

  if (cfg.data.video_root.empty())
    throw ConfigError("evaluate needs data.video_root");
  const DatasetIndex index = discover_dataset(
      cfg.data.video_root, MediaKind::video, cfg.data.positive_class);
  const SplitAssignment split =
      require_manifest(video_manifest_path(cfg), index, "video");
  if (split.test.empty()) throw ValidationError("evaluate: empty test split");
  const std::vector<VideoSample> videos = load_video_subset(cfg, index, split.test);
  const auto gt = video_ground_truth(cfg, videos);

  const bool want_two_stage = mode != "detection-only";
  const bool want_detection_only = mode != "two-stage";

  DetectorState detector = [&] {
    require_file(detector_ckpt(cfg), "detector");
    return load_detector(detector_ckpt(cfg));
  }();

  json metrics;
  metrics["provenance"] = json::parse(prov);
  const std::string csv_path = join(cfg.out_dir, "summary.csv");
  if (fs::exists(csv_path)) fs::remove(csv_path);

  std::optional<PipelineReport> two_stage, detection_only;

  if (want_two_stage) {
    require_file(classifier_ckpt(cfg), "classifier");
    const ClassifierModel classifier = load_classifier(classifier_ckpt(cfg));
    if (classifier.backbone.input_channels != detector.input_channels)
      throw ConfigError("classifier/detector channel mismatch");

    // classifier-only metrics over the test split
    std::vector<double> scores;
    std::vector<int> labels, preds;
    for (const auto& v : videos) {
      const ClassifyResult r = classify_video(classifier, v);
      scores.push_back(r.p_gun);
      labels.push_back(v.label);
      preds.push_back(r.label);
    }
    const ConfusionCounts confusion = confusion_counts(preds, labels);
    const ClassificationMetrics cm = classification_metrics(confusion);
    json jc;
    jc["confusion"] = {{"tp", confusion.tp},
                       {"fp", confusion.fp},
                       {"fn", confusion.fn},
                       {"tn", confusion.tn}};
    jc["accuracy"] = cm.accuracy;
    jc["precision"] = cm.precision ? json(*cm.precision) : json();
    jc["recall"] = cm.recall ? json(*cm.recall) : json();
    jc["f1"] = cm.f1 ? json(*cm.f1) : json();
    const bool both_classes =
        std::count(labels.begin(), labels.end(), 1) > 0 &&
        std::count(labels.begin(), labels.end(), 0) > 0;
    if (both_classes) {
      const RocCurve roc = roc_auc(scores, labels);
      jc["auc"] = roc.auc;
      std::string roc_csv = "# provenance " + prov + "\nfpr,tpr\n";
      for (const auto& [fpr, tpr] : roc.points)
        roc_csv += std::to_string(fpr) + "," + std::to_string(tpr) + "\n";
      write_text(join(cfg.out_dir, "roc.csv"), roc_csv);
      render_roc_png(join(cfg.out_dir, "roc.png"), roc, prov);
    } else {
      jc["auc"] = json();
    }
    metrics["classifier"] = jc;

    PipelineReport report =
        run_two_stage(videos, classifier, detector, cfg.eval.parallel_videos);
    report.model_size_bytes =
        static_cast<int64_t>(fs::file_size(classifier_ckpt(cfg))) +
        static_cast<int64_t>(fs::file_size(detector_ckpt(cfg)));
    report.ap = report_ap(cfg, report, gt, videos);
    two_stage = std::move(report);

    write_text(join(cfg.out_dir, "report_two_stage.json"),
               report_to_json(*two_stage, true, prov));
    append_summary_csv(csv_path, prov, "two-stage", *two_stage);

    // annotated frames for routed videos
    const std::string annotated_dir = join(cfg.out_dir, "annotated");
    for (const auto& rec : two_stage->records) {
      if (!rec.routed_to_detector) continue;
      const auto vid = std::find_if(
          videos.begin(), videos.end(),
          [&](const VideoSample& v) { return v.source_id == rec.video_id; });
      if (vid == videos.end()) continue;
      const std::string dir =
          join(annotated_dir, fs::path(rec.video_id).filename().string());
      ensure_dir(dir);
      for (const auto& fd : rec.detections) {
        FrameTensor rgb = to_rgb(vid->frames[static_cast<size_t>(fd.frame_index)]);
        for (const auto& box : fd.boxes) draw_box(rgb, box);
        write_png_with_provenance(
            join(dir, "frame" + std::to_string(fd.frame_index) + ".png"), rgb,
            prov);
      }
    }
  }

  if (want_detection_only) {
    PipelineReport report =
        run_detection_only(videos, detector, cfg.eval.parallel_videos);
    report.model_size_bytes =
        static_cast<int64_t>(fs::file_size(detector_ckpt(cfg)));
    report.ap = report_ap(cfg, report, gt, videos);
    detection_only = std::move(report);
    write_text(join(cfg.out_dir, "report_detection_only.json"),
               report_to_json(*detection_only, true, prov));
    append_summary_csv(csv_path, prov, "detection-only", *detection_only);
  }

  if (two_stage) {
    json jt;
    jt["mode"] = to_string(two_stage->mode);
    jt["confusion"] = {{"tp", two_stage->confusion->tp},
                       {"fp", two_stage->confusion->fp},
                       {"fn", two_stage->confusion->fn},
                       {"tn", two_stage->confusion->tn}};
    jt["detector_frame_invocations"] = two_stage->detector_frame_invocations;
    if (two_stage->ap) jt["ap"] = *two_stage->ap;
    metrics["two_stage"] = jt;
  }
  if (detection_only) {
    json jd;
    jd["mode"] = to_string(detection_only->mode);
    jd["detector_frame_invocations"] = detection_only->detector_frame_invocations;
    if (detection_only->ap) jd["ap"] = *detection_only->ap;
    metrics["detection_only"] = jd;
  }
  if (two_stage && detection_only) {
    const ComparisonReport cmp = compare_modes(*two_stage, *detection_only);
    write_text(join(cfg.out_dir, "comparison.json"),
               comparison_to_json(cmp, prov));
    metrics["comparison"] = {{"invocation_ratio", cmp.invocation_ratio},
                             {"false_negative_videos", cmp.false_negative_videos}};
    if (cmp.ap_delta) metrics["comparison"]["ap_delta"] = *cmp.ap_delta;
  }

  write_text(join(cfg.out_dir, "metrics.json"), metrics.dump(2));
}

void cmd_explain(const ExperimentConfig& cfg, const std::string& video_id,
                 const std::vector<int>& frame_indices, double alpha) {
  apply_compute_settings(cfg);
  ensure_dir(cfg.out_dir);
  const std::string prov = provenance_json(cfg);

  BackboneState backbone = [&]() -> BackboneState {
    if (fs::exists(classifier_ckpt(cfg)))
      return load_classifier(classifier_ckpt(cfg)).backbone;
    require_file(backbone_ckpt(cfg), "backbone (or classifier)");
    return load_backbone(backbone_ckpt(cfg));
  }();

  if (cfg.data.video_root.empty())
    throw ConfigError("explain needs data.video_root");
  const DatasetIndex index = discover_dataset(
      cfg.data.video_root, MediaKind::video, cfg.data.positive_class);
  const auto entry = std::find_if(
      index.entries.begin(), index.entries.end(), [&](const DatasetEntry& e) {
        return e.path == video_id ||
               fs::path(e.path).filename().string() == video_id;
      });
  if (entry == index.entries.end())
    throw DataError("unknown video id: " + video_id);

  const VideoSample sample =
      sample_frames(entry->path, cfg.data.frames_per_video,
                    cfg.data.frame_height, cfg.data.frame_width);
  const std::string dir = join(cfg.out_dir, "explain");
  ensure_dir(dir);
  const std::string base = fs::path(entry->path).filename().string();

  for (int k : frame_indices) {
    if (k < 0 || k >= static_cast<int>(sample.frames.size()))
      throw DataError("frame index out of range: " + std::to_string(k));
    const ActivationCapture cap =
        capture_activations(backbone, sample.frames[static_cast<size_t>(k)], 1);
    const Heatmap hm = gradcam_map(cap);
    const FrameTensor blended =
        overlay(hm, sample.frames[static_cast<size_t>(k)], alpha);
    const std::string stem = base + "_frame" + std::to_string(k);
    write_png_with_provenance(join(dir, stem + ".png"), blended, prov);
    save_heatmap_csv(join(dir, stem + ".csv"), hm);
  }
}

void cmd_sweep(const ExperimentConfig& cfg) {
  ensure_dir(join(cfg.out_dir, "sweep"));
  auto backbones = cfg.sweep.backbones;
  if (backbones.empty()) {
    // default 3-wide grid over backbone capacity
    backbones = {{"small16", {16, 8, 12}},
                 {"small32", {32, 8, 16}},
                 {"small48", {48, 12, 24}}};
  }
  std::vector<std::string> written;
  for (const auto& [label, dims] : backbones) {
    for (const auto& head : cfg.sweep.heads) {
      ExperimentConfig run = cfg;
      run.sweep = {};
      run.backbone.feature_dim = dims[0];
      run.backbone.width1 = dims[1];
      run.backbone.width2 = dims[2];
      run.head.kind = head_kind_from_string(head);
      run.out_dir = join(join(cfg.out_dir, "sweep"), label + "_" + head);
      const std::string path =
          join(join(cfg.out_dir, "sweep"), label + "_" + head + ".json");
      save_config(path, run);
      written.push_back(path);
    }
  }
  std::string list;
  for (const auto& p : written) list += p + "\n";
  write_text(join(join(cfg.out_dir, "sweep"), "configs.txt"), list);
}

}  // namespace gundet
