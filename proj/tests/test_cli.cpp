#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "magicvo/checkpoint.hpp"
#include "magicvo/config.hpp"
#include "magicvo/data.hpp"
#include "magicvo/errors.hpp"

using namespace magicvo;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "magicvo_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MAGICVO_CLI) + " " + args + " > " +
                          (work_dir() / "last_output.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

std::string p(const fs::path& sub) { return (work_dir() / sub).string(); }

// A small dataset shared by the train/infer/eval cases.
const fs::path& small_dataset() {
  static const fs::path ds = [] {
    const fs::path d = work_dir() / "small_ds";
    REQUIRE(run("synth --path arc --frames 10 --seed 3 --out " + d.string()) == 0);
    return d;
  }();
  return ds;
}

}  // namespace

TEST_CASE("config parsing, overrides and resolution") {
  config::RunConfig cfg;
  CHECK(cfg.get("train.learning_rate") == "0.001");
  CHECK_FALSE(cfg.is_set("train.learning_rate"));
  cfg.parse_text("# comment\ntrain.epochs = 3  # trailing\n\nseed=9\n", "test.cfg");
  CHECK(cfg.get_size("train.epochs") == 3);
  CHECK(cfg.get_u64("seed") == 9);
  CHECK(cfg.is_set("seed"));
  CHECK_THROWS_AS(cfg.parse_text("train.epoch = 3\n", "test.cfg"), ConfigError);
  try {
    cfg.parse_text("seed = 1\nnot a pair\n", "x.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.set("bogus", "1"), ConfigError);

  config::RunConfig again;
  again.parse_text(cfg.resolved_text(), "resolved");
  CHECK(again.resolved_text() == cfg.resolved_text());

  cfg.set("seed", "-1");
  CHECK_THROWS_AS(cfg.get_u64("seed"), ConfigError);
  cfg.set("eval.lengths", "1, 2.5,4");
  CHECK(cfg.get_doubles("eval.lengths") == std::vector<double>{1, 2.5, 4});
}

TEST_CASE("model and train configs from keys") {
  config::RunConfig cfg;
  const auto tiny = config::model_config(cfg);
  CHECK(tiny.feature_size() == net::ModelConfig::tiny().feature_size());
  CHECK_FALSE(config::model_overridden(cfg));
  cfg.set("model.hidden_size", "12");
  cfg.set("model.conv_channels", "4,8,8");
  const auto m = config::model_config(cfg);
  CHECK(m.hidden_size == 12);
  CHECK(m.conv.layers.size() == 3);
  CHECK(m.conv.layers[2].out_channels == 8);
  CHECK(config::model_overridden(cfg));
  cfg.set("model.preset", "huge");
  CHECK_THROWS_AS(config::model_config(cfg), ConfigError);

  config::RunConfig t;
  t.set("train.dropout", "1.5");
  CHECK_THROWS_AS(config::train_config(t), ConfigError);
  t.set("train.dropout", "0.2");
  CHECK(config::train_config(t).dropout_rate == 0.2);

  config::RunConfig s;
  s.set("synth.path", "mixed");
  s.set("synth.count", "4");
  const auto specs = config::synth_specs(s);
  REQUIRE(specs.size() == 4);
  CHECK(specs[1].path == synth::PathType::Arc);
}

TEST_CASE("synth writes frames and poses deterministically") {
  REQUIRE(run("synth --path arc --frames 120 --seed 7 --out " + p("arc_a")) == 0);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(work_dir() / "arc_a/sequences/00/image_2")) {
    pngs += e.path().extension() == ".png";
  }
  CHECK(pngs == 120);
  const std::string poses = slurp(work_dir() / "arc_a/poses/00.txt");
  CHECK(count_lines(poses) == 120);
  CHECK(fs::exists(work_dir() / "arc_a/manifest.txt"));
  CHECK(fs::exists(work_dir() / "arc_a/resolved_config.txt"));

  REQUIRE(run("synth --path arc --frames 120 --seed 7 --out " + p("arc_b")) == 0);
  CHECK(slurp(work_dir() / "arc_b/poses/00.txt") == poses);

  // Rerunning from the resolved snapshot reproduces the output.
  REQUIRE(run("synth --config " + p("arc_a/resolved_config.txt") + " --out " + p("arc_c")) == 0);
  CHECK(slurp(work_dir() / "arc_c/poses/00.txt") == poses);
  CHECK(slurp(work_dir() / "arc_c/sequences/00/image_2/000042.png") ==
        slurp(work_dir() / "arc_a/sequences/00/image_2/000042.png"));
}

TEST_CASE("synth rejects a single frame") {
  CHECK(run("synth --frames 1 --out " + p("one")) != 0);
  CHECK(slurp(work_dir() / "last_output.txt").find("at least 2") != std::string::npos);
}

TEST_CASE("train logs every epoch and zero epochs keeps the initialization") {
  const fs::path ds = small_dataset();
  REQUIRE(run("train --data " + ds.string() + " --epochs 2 --sequence-length 4 --batch-size 2 --seed 5 --out " + p("train_a")) == 0);
  const std::string log = slurp(work_dir() / "train_a/train_log.csv");
  CHECK(count_lines(log) == 3);
  CHECK(log.rfind("epoch,mean_loss,translation_component,rotation_component,grad_norm_pre_clip,wall_time_s", 0) == 0);

  REQUIRE(run("train --data " + ds.string() + " --epochs 0 --seed 5 --out " + p("train_0")) == 0);
  const auto ck = ckpt::load_checkpoint(work_dir() / "train_0/checkpoint.bin");
  const auto init = net::init_params(net::ModelConfig::tiny(), 5);
  const auto a = ck.params.named(), b = init.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
  }
  CHECK(count_lines(slurp(work_dir() / "train_0/train_log.csv")) == 1);
}

TEST_CASE("resuming for zero epochs reproduces the checkpoint") {
  const fs::path ds = small_dataset();
  REQUIRE(run("train --data " + ds.string() + " --epochs 1 --sequence-length 4 --out " + p("resume_a")) == 0);
  REQUIRE(run("train --data " + ds.string() + " --epochs 0 --sequence-length 4 --resume " +
              p("resume_a/checkpoint.bin") + " --out " + p("resume_b")) == 0);
  CHECK(slurp(work_dir() / "resume_a/checkpoint.bin") == slurp(work_dir() / "resume_b/checkpoint.bin"));
  // A conflicting model override is refused.
  CHECK(run("train --data " + ds.string() + " --epochs 0 --resume " + p("resume_a/checkpoint.bin") +
            " --set model.hidden_size=7 --out " + p("resume_c")) != 0);
  CHECK(slurp(work_dir() / "last_output.txt").find("model.hidden_size") != std::string::npos);
}

TEST_CASE("train fails before any step on a missing dataset") {
  CHECK(run("train --data " + p("does_not_exist") + " --out " + p("train_missing")) != 0);
  CHECK_FALSE(fs::exists(work_dir() / "train_missing/train_log.csv"));
}

TEST_CASE("infer writes one row per frame starting at the identity") {
  const fs::path ds = small_dataset();
  REQUIRE(run("train --data " + ds.string() + " --epochs 0 --out " + p("infer_ck")) == 0);
  const std::string ck = p("infer_ck/checkpoint.bin");
  REQUIRE(run("infer --checkpoint " + ck + " --data " + ds.string() + " --sequence 00 --out " + p("infer_a")) == 0);
  const std::string csv = slurp(work_dir() / "infer_a/trajectory.csv");
  CHECK(count_lines(csv) == 11);
  CHECK(csv.find("frame,tx,ty,tz,roll,pitch,yaw\n0,0,0,0,0,0,0\n") == 0);
  CHECK(count_lines(slurp(work_dir() / "infer_a/poses.txt")) == 10);

  REQUIRE(run("infer --checkpoint " + ck + " --images " + (ds / "sequences/00/image_2").string() + " --out " + p("infer_b")) == 0);
  CHECK(slurp(work_dir() / "infer_b/trajectory.csv") == csv);
  CHECK(slurp(work_dir() / "infer_b/poses.txt") == slurp(work_dir() / "infer_a/poses.txt"));

  // 9 pairs with an 8-pair training window: the default chunks, --window 0 does not.
  const std::string imgs = (ds / "sequences/00/image_2").string();
  REQUIRE(run("infer --checkpoint " + ck + " --images " + imgs + " --window 8 --out " + p("infer_w8")) == 0);
  CHECK(slurp(work_dir() / "infer_w8/trajectory.csv") == csv);
  REQUIRE(run("infer --checkpoint " + ck + " --images " + imgs + " --window 0 --out " + p("infer_w0")) == 0);
  CHECK(slurp(work_dir() / "infer_w0/trajectory.csv") != csv);

  CHECK(run("infer --checkpoint " + ck + " --images " + (ds / "sequences/00/image_2").string() +
            " --set model.preset=full --out " + p("infer_c")) != 0);
  CHECK(slurp(work_dir() / "last_output.txt").find("does not match the checkpoint") != std::string::npos);
}

TEST_CASE("eval of identical files and mismatched lengths") {
  const fs::path ds = small_dataset();
  const std::string truth = (ds / "poses/00.txt").string();
  REQUIRE(run("eval --pred " + truth + " --truth " + truth + " --lengths 1,2 --out " + p("eval_same")) == 0);
  const std::string csv = slurp(work_dir() / "eval_same/segment_errors.csv");
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    const auto fields = line.substr(line.find(',', line.find(',') + 1) + 1);
    CHECK(fields == "0,0");
  }
  const std::string svg = slurp(work_dir() / "eval_same/trajectory.svg");
  std::size_t polylines = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++polylines;
  CHECK(polylines == 2);

  std::ofstream(work_dir() / "short.txt") << "1 0 0 0 0 1 0 0 0 0 1 0\n";
  CHECK(run("eval --pred " + p("short.txt") + " --truth " + truth + " --out " + p("eval_bad")) != 0);
  const std::string msg = slurp(work_dir() / "last_output.txt");
  CHECK(msg.find("1 poses") != std::string::npos);
  CHECK(msg.find("10") != std::string::npos);

  REQUIRE(run("plot --pred " + truth + " --truth " + truth + " --out " + p("plot")) == 0);
  CHECK(fs::exists(work_dir() / "plot/trajectory.svg"));
}
