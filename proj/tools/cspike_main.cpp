#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "../src/checkpoint.hpp"
#include "../src/datasets.hpp"
#include "../src/experiment.hpp"
#include "../src/gradchecks.hpp"

namespace fs = std::filesystem;
using namespace cspike;

namespace {

struct Overrides {
  std::int64_t epochs = -1;
  std::int64_t batch_size = -1;
  double lr = -1;
  std::int64_t seed = -1;
  std::string output_dir;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--epochs", ov.epochs, "Override train.epochs");
  cmd->add_option("--batch-size", ov.batch_size, "Override train.batch_size");
  cmd->add_option("--lr", ov.lr, "Override train.lr");
  cmd->add_option("--seed", ov.seed, "Override the run seed");
  cmd->add_option("--output-dir", ov.output_dir, "Override output_dir");
}

ExperimentConfig load_with_overrides(const std::string& path,
                                     const Overrides& ov) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (ov.epochs >= 0) cfg.train.epochs = ov.epochs;
  if (ov.batch_size >= 0) cfg.train.batch_size = ov.batch_size;
  if (ov.lr >= 0) cfg.train.lr = ov.lr;
  if (ov.seed >= 0) cfg.seed = static_cast<std::uint64_t>(ov.seed);
  if (!ov.output_dir.empty()) cfg.output_dir = ov.output_dir;
  return cfg;
}

void write_pgm(const std::string& path, const float* pixels, std::int64_t h,
               std::int64_t w) {
  std::ofstream os(path, std::ios::binary);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (std::int64_t i = 0; i < h * w; ++i) {
    float v = pixels[i];
    if (v < 0) v = 0;
    if (v > 1) v = 1;
    os.put(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
  }
}

int cmd_train(const std::string& config_path, const Overrides& ov) {
  ExperimentConfig cfg = load_with_overrides(config_path, ov);
  TrainResult res = run_training(cfg, /*quiet=*/false);
  write_train_outputs(cfg, res, "train");
  std::printf("test_%s %.6f\n", res.metric_name.c_str(), res.test_metric);
  return 0;
}

int cmd_eval(const std::string& config_path, const Overrides& ov,
             const std::string& checkpoint) {
  ExperimentConfig cfg = load_with_overrides(config_path, ov);
  Network net = Network::build(cfg.network, cfg.seed);
  std::string ckpt = checkpoint;
  if (ckpt.empty())
    ckpt = (fs::path(cfg.output_dir) / cfg.train.checkpoint).string();
  apply_checkpoint(net, ckpt);
  const double metric = evaluate_network(
      cfg, net, cfg.diagnostic.shuffle || cfg.train.shuffle_eval);
  const char* name =
      cfg.task == TaskKind::TemporalOrder ? "accuracy" : "map50";
  fs::create_directories(cfg.output_dir);
  std::ofstream os(fs::path(cfg.output_dir) / "eval_metrics.csv");
  os << "metric,value\n" << name << "," << csv_number(metric) << "\n";
  std::printf("%s %.6f\n", name, metric);
  return 0;
}

int cmd_gradcheck(const std::string& target, double tolerance) {
  auto cases = run_gradcheck_suite(target);
  double worst = 0;
  for (const auto& c : cases) {
    std::printf("%-12s max_rel_err %.3e  (worst: %s)\n", c.name.c_str(),
                c.max_rel_err, c.worst.c_str());
    worst = std::max(worst, c.max_rel_err);
  }
  std::printf("max relative error %.3e (tolerance %.1e)\n", worst, tolerance);
  return worst < tolerance ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const Overrides& ov,
               const AblationAxes& axes, std::string out_csv) {
  ExperimentConfig cfg = load_with_overrides(config_path, ov);
  auto rows = run_ablation(cfg, axes, /*quiet=*/false);
  if (out_csv.empty())
    out_csv = (fs::path(cfg.output_dir) / "ablation.csv").string();
  fs::create_directories(fs::path(out_csv).parent_path().empty()
                             ? "."
                             : fs::path(out_csv).parent_path().string());
  write_ablation_csv(out_csv, rows);
  std::printf("wrote %s (%zu rows)\n", out_csv.c_str(), rows.size());
  return 0;
}

int cmd_shuffle_diag(const std::string& config_path, const Overrides& ov,
                     bool eval_only, std::string out_csv) {
  ExperimentConfig cfg = load_with_overrides(config_path, ov);
  ShuffleDiagnosticResult r =
      run_shuffle_diagnostic(cfg, eval_only, /*quiet=*/false);
  if (out_csv.empty())
    out_csv = (fs::path(cfg.output_dir) / "shuffle_diag.csv").string();
  fs::create_directories(fs::path(out_csv).parent_path().empty()
                             ? "."
                             : fs::path(out_csv).parent_path().string());
  write_shuffle_diag_csv(out_csv, cfg, r);
  std::printf(
      "ordered %.6f  shuffled %.6f  drop_abs %.6f  drop_rel %.6f\n",
      r.metric_ordered, r.metric_shuffled, r.drop_abs, r.drop_rel);
  return 0;
}

int cmd_gen_data(const std::string& task, std::int64_t n, std::int64_t size,
                 std::int64_t t_len, std::int64_t seed,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json manifest;
  manifest["task"] = task;
  manifest["n"] = n;
  manifest["size"] = size;
  manifest["seed"] = seed;
  if (task == "temporal_order") {
    auto ds = gen_temporal_order_dataset(n, t_len, size,
                                         static_cast<std::uint64_t>(seed));
    manifest["T"] = t_len;
    manifest["content_hash"] = ds.content_hash();
    nlohmann::json labels = nlohmann::json::array();
    for (std::int64_t i = 0; i < n; ++i) {
      labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
      for (std::int64_t t = 0; t < t_len; ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%04lld_t%02lld.pgm",
                      static_cast<long long>(i), static_cast<long long>(t));
        write_pgm((fs::path(out_dir) / name).string(),
                  ds.frames.data() + (i * t_len + t) * size * size, size,
                  size);
      }
    }
    manifest["labels"] = labels;
  } else if (task == "shapes") {
    auto ds = gen_shapes_dataset(n, size, static_cast<std::uint64_t>(seed));
    manifest["content_hash"] = ds.content_hash();
    nlohmann::json boxes = nlohmann::json::array();
    for (std::int64_t i = 0; i < n; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "sample_%04lld.pgm",
                    static_cast<long long>(i));
      write_pgm((fs::path(out_dir) / name).string(),
                ds.pixels.data() + i * size * size, size, size);
      nlohmann::json img = nlohmann::json::array();
      for (const auto& b : ds.boxes[static_cast<std::size_t>(i)])
        img.push_back({{"x_min", b.x_min},
                       {"y_min", b.y_min},
                       {"x_max", b.x_max},
                       {"y_max", b.y_max},
                       {"class_id", b.class_id}});
      boxes.push_back(img);
    }
    manifest["boxes"] = boxes;
  } else {
    fail("gen-data: unknown task '" + task +
         "' (expected temporal_order or shapes)");
  }
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
  std::printf("wrote %lld samples to %s\n", static_cast<long long>(n),
              out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cspike: spiking-network training and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_csv, gc_target = "all";
  std::string gen_task = "shapes", gen_out = "data";
  std::int64_t gen_n = 10, gen_size = 32, gen_t = 8, gen_seed = 1;
  double gc_tolerance = 1e-4;
  bool eval_only = false;
  Overrides ov;
  AblationAxes axes;

  auto* train = app.add_subcommand("train", "Train a network from a config");
  train->add_option("--config", config_path, "JSON experiment config")
      ->required();
  add_override_flags(train, ov);

  auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint");
  eval->add_option("--config", config_path, "JSON experiment config")
      ->required();
  eval->add_option("--checkpoint", checkpoint,
                   "CSPK checkpoint (default: <output_dir>/<train.checkpoint>)");
  add_override_flags(eval, ov);

  auto* gc = app.add_subcommand("gradcheck",
                                "Finite-difference gradient checks");
  gc->add_option("--target", gc_target, "Op to check (default all)");
  gc->add_option("--tolerance", gc_tolerance, "Pass threshold (default 1e-4)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation matrix");
  ablate->add_option("--config", config_path, "Base JSON experiment config")
      ->required();
  ablate->add_option("--conv-mode", axes.conv_mode,
                     "Axis values: conv3d shared2d")->delimiter(',');
  ablate->add_option("--recurrence", axes.recurrence, "Axis values: 0 1")
      ->delimiter(',');
  ablate->add_option("--neuron", axes.neuron,
                     "Axis values: if lif parametric")->delimiter(',');
  ablate->add_option("--coding", axes.coding,
                     "Axis values: direct ttfs hybrid")->delimiter(',');
  ablate->add_option("--T", axes.t_values, "Axis values: time steps")
      ->delimiter(',');
  ablate->add_option("--out", out_csv, "CSV output path");
  add_override_flags(ablate, ov);

  auto* diag = app.add_subcommand(
      "shuffle-diag", "Temporal-shuffle sensitivity diagnostic");
  diag->add_option("--config", config_path, "JSON experiment config")
      ->required();
  diag->add_flag("--eval-only", eval_only,
                 "Shuffle at evaluation only (skip the retrained arm)");
  diag->add_option("--out", out_csv, "CSV output path");
  add_override_flags(diag, ov);

  auto* gen = app.add_subcommand("gen-data",
                                 "Generate a dataset dump for inspection");
  gen->add_option("--task", gen_task, "temporal_order or shapes");
  gen->add_option("--n", gen_n, "Sample count");
  gen->add_option("--size", gen_size, "Image size");
  gen->add_option("--T", gen_t, "Time steps (temporal_order)");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, ov);
    if (eval->parsed()) return cmd_eval(config_path, ov, checkpoint);
    if (gc->parsed()) return cmd_gradcheck(gc_target, gc_tolerance);
    if (ablate->parsed()) return cmd_ablate(config_path, ov, axes, out_csv);
    if (diag->parsed())
      return cmd_shuffle_diag(config_path, ov, eval_only, out_csv);
    if (gen->parsed())
      return cmd_gen_data(gen_task, gen_n, gen_size, gen_t, gen_seed, gen_out);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
