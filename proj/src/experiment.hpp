#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cspike/network.hpp"
#include "cspike/training.hpp"
#include "datasets.hpp"

namespace cspike {

enum class TaskKind { TemporalOrder, ShapesDetection };

struct DatasetConfig {
  std::int64_t n_train = 2000;
  std::int64_t n_test = 400;
  std::int64_t size = 16;
  std::uint64_t seed = 7;
};

struct TrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 32;
  std::uint64_t seed = 1;
  double lr = 1e-3;
  double weight_decay = 1e-2;
  bool shuffle_eval = false;  // shuffle neuron inputs at evaluation only
  std::string checkpoint = "model.cspk";
};

struct DiagnosticConfig {
  bool shuffle = false;  // full shuffled arm: train and eval shuffled
  std::uint64_t shuffle_seed = 1234;
};

struct ExperimentConfig {
  TaskKind task = TaskKind::TemporalOrder;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  DatasetConfig dataset;
  NetworkSpec network;
  TrainConfig train;
  DiagnosticConfig diagnostic;
};

// Strict JSON codec: unknown keys are rejected (catches ablation typos).
ExperimentConfig parse_experiment_config_text(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Reasonable ready-made configurations for the two tasks; the acceptance
// suite and the CLI default to these.
ExperimentConfig default_temporal_order_config();
ExperimentConfig default_shapes_detection_config();

struct EpochRow {
  std::int64_t epoch = 0;
  double loss = 0;
  double train_metric = 0;
  double wall_s = 0;
};

struct TrainResult {
  std::vector<EpochRow> epochs;
  double test_metric = 0;
  std::string metric_name;  // "accuracy" or "map50"
  std::string train_hash, test_hash;
  std::string checkpoint_path;
  Network net;
};

// Trains per the config and evaluates on the held-out split. When quiet is
// false a one-line progress report per epoch goes to stdout. Writes no files;
// see write_train_outputs.
TrainResult run_training(const ExperimentConfig& cfg, bool quiet = true);

// Evaluation of an existing network on the config's test split.
double evaluate_network(const ExperimentConfig& cfg, Network& net,
                        bool shuffled_eval);

// CSV + checkpoint + manifest emission for a finished run.
void write_train_outputs(const ExperimentConfig& cfg, const TrainResult& res,
                         const std::string& subcommand);

struct ShuffleDiagnosticResult {
  double metric_ordered = 0;
  double metric_shuffled = 0;
  double drop_abs = 0;  // ordered - shuffled
  double drop_rel = 0;  // (ordered - shuffled) / ordered
};

// Trains and evaluates the config twice: once as-is and once with every
// neuron layer's input currents shuffled along time (train and eval). With
// eval_only the shuffled arm reuses the ordered parameters and shuffles at
// evaluation time only.
ShuffleDiagnosticResult run_shuffle_diagnostic(const ExperimentConfig& cfg,
                                               bool eval_only,
                                               bool quiet = true);

struct AblationAxes {
  std::vector<std::string> conv_mode;  // "conv3d", "shared2d"
  std::vector<int> recurrence;         // 0 / 1
  std::vector<std::string> neuron;     // "if", "lif", "parametric"
  std::vector<std::string> coding;     // "direct", "ttfs", "hybrid"
  std::vector<std::int64_t> t_values;
};

struct AblationRow {
  std::string conv_mode, neuron, coding, status;
  int recurrence = 0;
  std::int64_t t_len = 0;
  double metric = 0;
  double wall_s = 0;
};

// Cartesian product over the provided axes (empty axis = keep base value).
// A failing cell is recorded in its row; the remaining cells still run.
std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const AblationAxes& axes,
                                      bool quiet = true);

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows);
void write_shuffle_diag_csv(const std::string& path,
                            const ExperimentConfig& cfg,
                            const ShuffleDiagnosticResult& r);

// Full-precision decimal formatting used in all CSV output.
std::string csv_number(double v);

}  // namespace cspike
