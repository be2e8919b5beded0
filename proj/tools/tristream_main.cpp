#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "tristream/checkpoint.hpp"
#include "tristream/config.hpp"
#include "tristream/gradcheck.hpp"
#include "tristream/io.hpp"
#include "tristream/trainer.hpp"

namespace fs = std::filesystem;
using namespace tristream;

namespace {

struct RunSpec {
  std::string config_path;
  std::string out_dir;
  uint64_t seed = 0;
  std::vector<std::string> overrides;
};

void add_common_flags(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--config", spec.config_path, "key = value config file");
  cmd->add_option("--out", spec.out_dir, "output directory")->required();
  cmd->add_option("--seed", spec.seed, "run seed (default 0)");
  cmd->add_option("--set", spec.overrides, "override, dotted key=value (repeatable)");
}

Config load_config(const RunSpec& spec) {
  Config cfg = Config::defaults();
  if (!spec.config_path.empty()) cfg.load_file(spec.config_path);
  for (const auto& o : spec.overrides) cfg.apply_override(o);
  return cfg;
}

fs::path prepare_out_dir(const RunSpec& spec) {
  fs::path out(spec.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ValueError("cannot create output directory " + out.string());
  return out;
}

std::vector<LabeledClip> load_class_dataset(const std::string& manifest) {
  if (manifest.empty()) throw ValueError("manifest path not set in config");
  std::vector<LabeledClip> data;
  for (const auto& rec : read_class_manifest(manifest)) {
    LabeledClip item;
    item.clip = VideoClip{read_tensor(rec.path), rec.fps};
    item.clip.validate();
    item.label = rec.label;
    data.push_back(std::move(item));
  }
  if (data.empty()) throw ValueError("manifest " + manifest + " lists no clips");
  return data;
}

std::vector<DetectionClip> load_detection_dataset(const std::string& manifest) {
  if (manifest.empty()) throw ValueError("detection manifest path not set in config");
  std::vector<DetectionClip> clips;
  std::map<std::string, size_t> index;
  for (const auto& rec : read_detection_manifest(manifest)) {
    auto [it, fresh] = index.try_emplace(rec.path, clips.size());
    if (fresh) {
      DetectionClip clip;
      clip.clip = VideoClip{read_tensor(rec.path), rec.fps};
      clip.clip.validate();
      clips.push_back(std::move(clip));
    }
    BoxAnnotation ann;
    ann.box = rec.box;
    ann.class_ids = rec.class_ids;
    ann.keyframe_time = rec.keyframe;
    ann.group = static_cast<int>(it->second);
    clips[it->second].boxes.push_back(std::move(ann));
  }
  if (clips.empty()) throw ValueError("manifest " + manifest + " lists no clips");
  return clips;
}

int cmd_gen_data(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  const fs::path out = prepare_out_dir(spec);
  const SyntheticSpec synth = cfg.synthetic();
  const int n_train = cfg.get_int("synth.train");
  const int n_test = cfg.get_int("synth.test");
  const std::string mode = cfg.get("synth.mode");
  fs::create_directories(out / "clips");

  if (mode == "classification") {
    auto write_split = [&](const std::string& name, int count, uint64_t seed) {
      const auto data = gen_synthetic(synth, count, seed);
      std::vector<ClassSample> samples;
      for (size_t i = 0; i < data.size(); ++i) {
        const std::string rel = "clips/" + name + "_" + std::to_string(i) + ".t3sr";
        write_tensor(out / rel, data[i].clip.frames);
        samples.push_back({(out / rel).string(), data[i].clip.fps, data[i].label});
      }
      write_class_manifest(out / (name + "_manifest.csv"), samples);
    };
    write_split("train", n_train, spec.seed);
    write_split("test", n_test, spec.seed + 1);
    std::cout << "wrote " << n_train << " train / " << n_test << " test clips to "
              << out.string() << "\n";
  } else if (mode == "detection") {
    auto write_split = [&](const std::string& name, int count, uint64_t seed) {
      const auto data = gen_synthetic_detection(synth, count, seed);
      std::vector<DetManifestRecord> records;
      for (size_t i = 0; i < data.size(); ++i) {
        const std::string rel = "clips/" + name + "_" + std::to_string(i) + ".t3sr";
        write_tensor(out / rel, data[i].clip.frames);
        for (const auto& ann : data[i].boxes) {
          DetManifestRecord rec;
          rec.path = (out / rel).string();
          rec.fps = data[i].clip.fps;
          rec.keyframe = ann.keyframe_time;
          rec.box = ann.box;
          rec.class_ids = ann.class_ids;
          records.push_back(std::move(rec));
        }
      }
      write_detection_manifest(out / (name + "_boxes.csv"), records);
    };
    write_split("train", n_train, spec.seed);
    write_split("test", n_test, spec.seed + 1);
    std::cout << "wrote detection sets to " << out.string() << "\n";
  } else {
    throw ValueError("synth.mode must be classification or detection, got '" + mode + "'");
  }
  return 0;
}

int cmd_train(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  const fs::path out = prepare_out_dir(spec);
  const NetworkConfig net = cfg.network();
  const TrainConfig tc = cfg.train(spec.seed);
  auto data = load_class_dataset(cfg.get("data.train_manifest"));

  auto model = ClassificationModel::make(net, spec.seed);
  const TrainResult result = train_classification(model, data, tc);
  write_epoch_csv(out / "epochs.csv", result.epochs);
  save_checkpoint(out / "checkpoint", net, model.parameters());
  if (result.diverged) {
    std::cerr << "training diverged (non-finite loss); checkpoint holds the last "
                 "finite epoch\n";
    return 2;
  }
  std::cout << "trained " << tc.epochs << " epochs; final loss "
            << result.epochs.back().loss << ", train top1 "
            << result.epochs.back().top1 << "\n";
  return 0;
}

int cmd_eval(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  const fs::path out = prepare_out_dir(spec);
  const std::string ckpt = cfg.get("eval.checkpoint");
  if (ckpt.empty()) throw ValueError("eval.checkpoint not set");
  const NetworkConfig net = load_checkpoint_config(ckpt);
  auto model = ClassificationModel::make(net, spec.seed);
  ParamList params = model.parameters();
  load_checkpoint_params(ckpt, params);
  auto data = load_class_dataset(cfg.get("data.test_manifest"));

  const EvalResult result =
      evaluate_classification(model, data, cfg.get_int("eval.n_clips"), net.crop);
  write_metrics_json(out / "metrics.json", result.report);
  write_confusion_csv(out / "confusion.csv", result.report.confusion);
  std::cout << "top1 " << result.report.top1 << " top5 " << result.report.top5 << "\n";
  return 0;
}

int cmd_detect(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  const fs::path out = prepare_out_dir(spec);
  const NetworkConfig net = cfg.network();
  const TrainConfig tc = cfg.train(spec.seed);
  auto data = load_detection_dataset(cfg.get("data.detect_manifest"));

  auto model = DetectionModel::make(net, spec.seed);
  const TrainResult result = train_detection(model, data, tc);
  write_epoch_csv(out / "epochs.csv", result.epochs);
  save_checkpoint(out / "checkpoint", net, model.parameters());
  if (result.diverged) {
    std::cerr << "detection training diverged; checkpoint holds the last finite epoch\n";
    return 2;
  }

  const DetectionEval eval = evaluate_detection(model, data);
  std::vector<DetManifestRecord> records;
  for (const auto& det : eval.detections) {
    DetManifestRecord rec;
    rec.path = "group_" + std::to_string(det.group);
    rec.keyframe = det.keyframe_time;
    rec.box = det.box;
    rec.scores = det.scores;
    records.push_back(std::move(rec));
  }
  write_detection_manifest(out / "detections.csv", records);
  write_metrics_json(out / "metrics.json", eval.report);
  write_ap_csv(out / "ap_per_class.csv", eval.report.per_class_ap);
  if (roi_degenerate_clamp_count() > 0)
    std::cerr << "warning: " << roi_degenerate_clamp_count()
              << " ROI boxes were clamped to a 1x1 cell\n";
  std::cout << "train-split mAP " << *eval.report.map << "\n";
  return 0;
}

int cmd_gradcheck(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  (void)cfg;
  const fs::path out = prepare_out_dir(spec);
  const auto reports = run_gradcheck_suite(spec.seed, 20);
  std::ofstream csv(out / "gradcheck.csv");
  csv << "op,cases,failures,max_rel_err\n";
  bool all_pass = true;
  for (const auto& r : reports) {
    const bool pass = r.failures == 0;
    all_pass = all_pass && pass;
    std::cout << (pass ? "pass" : "FAIL") << "  " << r.op << "  (" << r.cases
              << " cases, max rel err " << r.max_rel_err << ")";
    if (!pass) std::cout << "  " << r.first_failure;
    std::cout << "\n";
    csv << r.op << ',' << r.cases << ',' << r.failures << ',' << r.max_rel_err << '\n';
  }
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

int cmd_ablate(const RunSpec& spec) {
  const Config cfg = load_config(spec);
  const fs::path out = prepare_out_dir(spec);
  const std::vector<int> theta2_grid = cfg.get_int_list("ablate.theta2");
  const std::vector<std::string> heads = cfg.get_string_list("ablate.heads");
  const std::vector<double> betas = cfg.get_double_list("ablate.betas");
  const int frames = cfg.get_int("ablate.frames");
  const int spatial = cfg.get_int("ablate.spatial");
  const int n_train = cfg.get_int("ablate.train");
  const int n_test = cfg.get_int("ablate.test");

  // long clips need a canvas the motion cannot leave
  SyntheticSpec synth = cfg.synthetic();
  synth.frames = frames;
  synth.spatial = spatial;
  synth.validate();
  const auto train_set = gen_synthetic(synth, n_train, spec.seed);
  const auto test_set = gen_synthetic(synth, n_test, spec.seed + 1);

  TrainConfig tc = cfg.train(spec.seed);
  tc.epochs = cfg.get_int("ablate.epochs");
  tc.hflip = false;  // horizontal flip would relabel left/right motion

  std::ofstream csv(out / "ablate.csv");
  csv << "theta2,head,beta,test_top1,train_loss,macs_single,macs_slow,macs_fast\n";
  csv.precision(6);

  for (int theta2 : theta2_grid) {
    for (const auto& head : heads) {
      for (double beta : betas) {
        NetworkConfig net = cfg.network(/*validated=*/false);
        net.frames = frames;
        net.crop = spatial;
        net.in_channels = synth.channels;
        net.num_classes = synth.num_classes;
        net.strides.theta1 = frames;  // single pathway ingests one frame
        net.strides.theta2 = theta2;
        net.head = head_kind_from_string(head);
        net.beta = beta;
        try {
          net.validate();
        } catch (const ValueError& e) {
          std::cerr << "skip theta2=" << theta2 << " head=" << head
                    << " beta=" << beta << ": " << e.what() << "\n";
          continue;
        }
        auto model = ClassificationModel::make(net, spec.seed);
        const TrainResult result = train_classification(model, train_set, tc);
        const EvalResult eval = evaluate_classification(model, test_set, 1, net.crop);
        csv << theta2 << ',' << head << ',' << beta << ',' << eval.report.top1 << ','
            << result.epochs.back().loss << ',' << model.backbone().single_macs()
            << ',' << model.backbone().slow_macs() << ','
            << model.backbone().fast_macs() << '\n';
        csv.flush();
        std::cout << "theta2=" << theta2 << " head=" << head << " beta=" << beta
                  << " top1=" << eval.report.top1 << "\n";
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"three-stream action recognition testbed"};
  app.require_subcommand(1);

  RunSpec spec;
  std::map<std::string, std::function<int(const RunSpec&)>> handlers;

  add_common_flags(app.add_subcommand("gen-data", "generate a synthetic dataset"), spec);
  handlers["gen-data"] = cmd_gen_data;
  add_common_flags(app.add_subcommand("train", "train a classification model"), spec);
  handlers["train"] = cmd_train;
  add_common_flags(app.add_subcommand("eval", "evaluate a checkpoint"), spec);
  handlers["eval"] = cmd_eval;
  add_common_flags(app.add_subcommand("detect", "train + evaluate the detection head"),
                   spec);
  handlers["detect"] = cmd_detect;
  add_common_flags(app.add_subcommand("gradcheck", "finite-difference gradient checks"),
                   spec);
  handlers["gradcheck"] = cmd_gradcheck;
  add_common_flags(app.add_subcommand("ablate", "theta2/head/beta sweep"), spec);
  handlers["ablate"] = cmd_ablate;

  try {
    app.parse(argc, argv);
    for (auto* sub : app.get_subcommands()) return handlers.at(sub->get_name())(spec);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ValueError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  }
}
