// magicvo command-line driver: synth, train, infer, eval, plot.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "magicvo/checkpoint.hpp"
#include "magicvo/config.hpp"
#include "magicvo/data.hpp"
#include "magicvo/errors.hpp"
#include "magicvo/evaluation.hpp"
#include "magicvo/synth.hpp"
#include "magicvo/training.hpp"

namespace fs = std::filesystem;
using namespace magicvo;

namespace {

// Flag values keyed by configuration key; only flags actually given are applied.
struct Flags {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(key, cmd->add_option(flag, values[key], help));
  }
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "key = value configuration file");
  f.add(cmd, "--out", "out", "output directory");
  f.add(cmd, "--seed", "seed", "random seed");
  cmd->add_option("--set", f.sets, "override any configuration key: --set key=value")->take_all();
}

config::RunConfig resolve(const Flags& f) {
  config::RunConfig cfg;
  if (!f.config_file.empty()) cfg.load_file(f.config_file);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, opt] : f.options) {
    if (opt->count() > 0) cfg.set(key, f.values.at(key));
  }
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

fs::path prepare_out(const config::RunConfig& cfg) {
  const fs::path out = cfg.get("out");
  if (out.empty()) throw ConfigError("out: output directory must not be empty");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) {
    throw std::runtime_error("cannot create output directory " + out.string());
  }
  write_file(out / "resolved_config.txt", cfg.resolved_text());
  return out;
}

std::string require(const config::RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw ConfigError(key + " is required");
  return v;
}

int cmd_synth(const config::RunConfig& cfg) {
  const auto specs = config::synth_specs(cfg);
  const fs::path out = prepare_out(cfg);
  std::string manifest;
  char id[16];
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::snprintf(id, sizeof id, "%02zu", i);
    const auto seq = synth::generate(specs[i]);
    data::write_sequence(out, {id, seq.frames, seq.poses});
    manifest += std::string("[") + id + "]\n" + synth::describe(specs[i]) + "\n";
    std::cout << "sequence " << id << ": " << synth::path_type_name(specs[i].path) << ", "
              << seq.frames.size() << " frames\n";
  }
  write_file(out / "manifest.txt", manifest);
  return 0;
}

std::vector<data::Sequence> load_training_sequences(const config::RunConfig& cfg) {
  const fs::path root = require(cfg, "data.dir");
  if (!fs::is_directory(root)) throw ConfigError("data.dir " + root.string() + " is not a directory");
  auto ids = cfg.get_strings("data.sequences");
  if (ids.empty()) ids = data::list_sequences(root);
  if (ids.empty()) throw ConfigError("no sequences with poses found under " + root.string());
  std::vector<data::Sequence> seqs;
  for (const auto& id : ids) {
    auto seq = data::load_sequence(root, id);
    if (seq.poses.empty()) throw ConfigError("sequence " + id + " has no pose file");
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

int cmd_train(const config::RunConfig& cfg) {
  const train::TrainConfig tcfg = config::train_config(cfg);
  const auto seqs = load_training_sequences(cfg);

  ckpt::Checkpoint ck;
  std::size_t epochs_before = 0;
  const std::string resume = cfg.get("train.resume");
  if (!resume.empty()) {
    ck = ckpt::load_checkpoint(resume);
    if (config::model_overridden(cfg)) ckpt::require_same_config(ck.params.config, config::model_config(cfg));
    if (auto it = ck.metadata.find("epochs_completed"); it != ck.metadata.end()) {
      epochs_before = std::stoul(it->second);
    }
  } else {
    std::vector<Image> frames;
    for (const auto& s : seqs) frames.insert(frames.end(), s.frames.begin(), s.frames.end());
    ck.stats = data::compute_stats(frames, config::scale_mode(cfg));
    ck.params = net::init_params(config::model_config(cfg), tcfg.seed);
  }
  const data::TargetSize target{ck.params.config.input_height, ck.params.config.input_width};
  const data::WindowedDataset dataset(seqs, ck.stats, target, tcfg.sequence_length);
  if (dataset.size() == 0) {
    throw ConfigError("no sequence has more than train.sequence_length = " +
                      std::to_string(tcfg.sequence_length) + " frames");
  }

  const fs::path out = prepare_out(cfg);
  std::ofstream log(out / "train_log.csv", std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + (out / "train_log.csv").string());
  log << train::epoch_log_csv_header() << "\n";
  std::cout << dataset.size() << " training windows from " << dataset.sequence_count()
            << " sequences; " << ck.params.parameter_count() << " parameters\n";

  train::TrainOptions options;
  options.resume = ck.optimizer;
  options.on_epoch = [&](const train::EpochLog& row, const net::ModelParams&) {
    log << train::epoch_log_csv_row(row) << "\n" << std::flush;
    std::printf("epoch %zu  loss %.6f  (translation %.6f, rotation %.6f)  grad norm %.4f  %.1fs\n",
                row.epoch, row.mean_loss, row.translation, row.rotation, row.grad_norm_pre_clip,
                row.wall_time_s);
    std::fflush(stdout);
  };
  auto result = train::train(ck.params, dataset, tcfg, options);

  ck.params = std::move(result.params);
  ck.optimizer = std::move(result.optimizer);
  ck.metadata["epochs_completed"] = std::to_string(epochs_before + tcfg.epochs);
  ck.metadata["train.sequence_length"] = std::to_string(tcfg.sequence_length);
  ckpt::save_checkpoint(out / "checkpoint.bin", ck);
  std::cout << "wrote " << (out / "checkpoint.bin").string() << "\n";
  return 0;
}

int cmd_infer(const config::RunConfig& cfg) {
  const auto ck = ckpt::load_checkpoint(require(cfg, "infer.checkpoint"));
  if (config::model_overridden(cfg)) ckpt::require_same_config(ck.params.config, config::model_config(cfg));

  std::vector<Image> frames;
  if (!cfg.get("infer.images").empty()) {
    frames = data::load_image_dir(cfg.get("infer.images"));
  } else if (!cfg.get("data.dir").empty() && !cfg.get("infer.sequence").empty()) {
    frames = data::load_image_dir(data::sequence_image_dir(cfg.get("data.dir"), cfg.get("infer.sequence")));
  } else {
    throw ConfigError("infer needs infer.images, or data.dir together with infer.sequence");
  }
  // The Bi-LSTM only ever saw windows of the training length, so inference
  // chunks to that length unless told otherwise.
  std::size_t window = 0;
  if (!cfg.get("infer.window").empty()) {
    window = cfg.get_size("infer.window");
  } else if (auto it = ck.metadata.find("train.sequence_length"); it != ck.metadata.end()) {
    window = std::stoul(it->second);
  }
  const auto result = train::infer_frames(ck.params, frames, ck.stats, window);

  const fs::path out = prepare_out(cfg);
  write_file(out / "trajectory.csv", data::trajectory_csv(result.trajectory));
  data::write_kitti_poses(out / "poses.txt", result.trajectory.poses);
  std::cout << "wrote " << result.trajectory.size() << " poses to " << (out / "trajectory.csv").string()
            << " and " << (out / "poses.txt").string() << "\n";
  return 0;
}

std::pair<geometry::Trajectory, geometry::Trajectory> load_pair(const config::RunConfig& cfg) {
  geometry::Trajectory pred, truth;
  pred.poses = data::read_kitti_poses(require(cfg, "eval.pred"));
  truth.poses = data::read_kitti_poses(require(cfg, "eval.truth"));
  if (pred.size() != truth.size()) {
    throw ContractError("pose count mismatch: predicted file has " + std::to_string(pred.size()) +
                        " poses, ground truth has " + std::to_string(truth.size()));
  }
  return {pred, truth};
}

int cmd_eval(const config::RunConfig& cfg) {
  const auto [pred, truth] = load_pair(cfg);
  const auto report = eval::segment_errors(pred, truth, cfg.get_doubles("eval.lengths"));
  const double ate = eval::ate_rmse(pred, truth);
  const fs::path out = prepare_out(cfg);
  write_file(out / "segment_errors.csv", eval::report_csv(report));
  const std::string table = eval::report_table(report, ate);
  write_file(out / "report.txt", table);
  write_file(out / "trajectory.svg", eval::trajectory_svg(pred, truth, fs::path(cfg.get("eval.pred")).filename().string()));
  std::cout << table;
  return 0;
}

int cmd_plot(const config::RunConfig& cfg) {
  const auto [pred, truth] = load_pair(cfg);
  const fs::path out = prepare_out(cfg);
  write_file(out / "trajectory.svg", eval::trajectory_svg(pred, truth, fs::path(cfg.get("eval.pred")).filename().string()));
  std::cout << "wrote " << (out / "trajectory.svg").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular visual odometry: synthetic data, training, inference and evaluation"};
  app.require_subcommand(1);

  Flags synth_f, train_f, infer_f, eval_f, plot_f;

  auto* synth_cmd = app.add_subcommand("synth", "render synthetic sequences with ground truth");
  add_common(synth_cmd, synth_f);
  synth_f.add(synth_cmd, "--path", "synth.path", "line, arc, figure-eight or mixed");
  synth_f.add(synth_cmd, "--frames", "synth.frames", "frames per sequence");
  synth_f.add(synth_cmd, "--count", "synth.count", "number of sequences");
  synth_f.add(synth_cmd, "--speed", "synth.speed", "meters per frame");
  synth_f.add(synth_cmd, "--yaw-rate", "synth.yaw_rate", "radians per frame on arcs");
  synth_f.add(synth_cmd, "--speed-variation", "synth.speed_variation", "relative speed modulation");

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
  add_common(train_cmd, train_f);
  train_f.add(train_cmd, "--data", "data.dir", "dataset root");
  train_f.add(train_cmd, "--sequences", "data.sequences", "comma-separated sequence ids");
  train_f.add(train_cmd, "--epochs", "train.epochs", "number of epochs");
  train_f.add(train_cmd, "--lr", "train.learning_rate", "learning rate");
  train_f.add(train_cmd, "--batch-size", "train.batch_size", "windows per step");
  train_f.add(train_cmd, "--sequence-length", "train.sequence_length", "pairs per window");
  train_f.add(train_cmd, "--dropout", "train.dropout", "dropout rate");
  train_f.add(train_cmd, "--resume", "train.resume", "checkpoint to continue from");
  train_f.add(train_cmd, "--preset", "model.preset", "tiny or full");

  auto* infer_cmd = app.add_subcommand("infer", "estimate a trajectory from frames");
  add_common(infer_cmd, infer_f);
  infer_f.add(infer_cmd, "--checkpoint", "infer.checkpoint", "checkpoint file");
  infer_f.add(infer_cmd, "--images", "infer.images", "directory of frame PNGs");
  infer_f.add(infer_cmd, "--data", "data.dir", "dataset root");
  infer_f.add(infer_cmd, "--sequence", "infer.sequence", "sequence id under --data");
  infer_f.add(infer_cmd, "--window", "infer.window", "pairs per inference chunk (0 = whole sequence; default: the training window)");

  auto* eval_cmd = app.add_subcommand("eval", "score a predicted pose file against ground truth");
  add_common(eval_cmd, eval_f);
  eval_f.add(eval_cmd, "--pred", "eval.pred", "predicted KITTI pose file");
  eval_f.add(eval_cmd, "--truth", "eval.truth", "ground-truth KITTI pose file");
  eval_f.add(eval_cmd, "--lengths", "eval.lengths", "comma-separated segment lengths in meters");

  auto* plot_cmd = app.add_subcommand("plot", "draw predicted and true paths as SVG");
  add_common(plot_cmd, plot_f);
  plot_f.add(plot_cmd, "--pred", "eval.pred", "predicted KITTI pose file");
  plot_f.add(plot_cmd, "--truth", "eval.truth", "ground-truth KITTI pose file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) return cmd_synth(resolve(synth_f));
    if (*train_cmd) return cmd_train(resolve(train_f));
    if (*infer_cmd) return cmd_infer(resolve(infer_f));
    if (*eval_cmd) return cmd_eval(resolve(eval_f));
    if (*plot_cmd) return cmd_plot(resolve(plot_f));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
