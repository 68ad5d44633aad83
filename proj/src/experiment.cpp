#include "experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "checkpoint.hpp"
#include "detection.hpp"

namespace cspike {

using nlohmann::json;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) fail("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail("config: unknown key '" + item.key() + "' in " + where);
  }
}

TaskKind parse_task(const std::string& s) {
  if (s == "temporal_order") return TaskKind::TemporalOrder;
  if (s == "shapes_detection") return TaskKind::ShapesDetection;
  fail("config: unknown task '" + s + "'");
}

ConvMode parse_conv_mode(const std::string& s) {
  if (s == "conv3d") return ConvMode::Conv3D;
  if (s == "shared2d") return ConvMode::Shared2D;
  fail("config: unknown conv_mode '" + s + "'");
}

NeuronKind parse_neuron_kind(const std::string& s) {
  if (s == "if") return NeuronKind::IF;
  if (s == "lif") return NeuronKind::LIF;
  if (s == "parametric") return NeuronKind::Parametric;
  fail("config: unknown neuron kind '" + s + "'");
}

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "direct") return EncoderKind::Direct;
  if (s == "ttfs") return EncoderKind::TTFS;
  if (s == "hybrid") return EncoderKind::Hybrid;
  fail("config: unknown encoder kind '" + s + "'");
}

std::string conv_mode_name(ConvMode m) {
  return m == ConvMode::Conv3D ? "conv3d" : "shared2d";
}
std::string neuron_kind_name(NeuronKind k) {
  switch (k) {
    case NeuronKind::IF: return "if";
    case NeuronKind::LIF: return "lif";
    case NeuronKind::Parametric: return "parametric";
  }
  return "?";
}
std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::Direct: return "direct";
    case EncoderKind::TTFS: return "ttfs";
    case EncoderKind::Hybrid: return "hybrid";
  }
  return "?";
}

NetworkSpec parse_network(const json& j) {
  check_keys(j, {"conv_mode", "recurrence", "T", "encoder", "stem", "blocks",
                 "neuron", "head", "bias_init"},
             "network");
  NetworkSpec spec;
  if (j.contains("conv_mode"))
    spec.conv_mode = parse_conv_mode(j.at("conv_mode").get<std::string>());
  if (j.contains("recurrence")) spec.recurrence = j.at("recurrence").get<bool>();
  if (j.contains("T")) spec.t_len = j.at("T").get<std::int64_t>();
  if (j.contains("bias_init"))
    spec.bias_init = j.at("bias_init").get<double>();
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    check_keys(e, {"kind", "T_direct", "T_ttfs"}, "network.encoder");
    if (e.contains("kind"))
      spec.encoder.kind = parse_encoder_kind(e.at("kind").get<std::string>());
    if (spec.encoder.kind == EncoderKind::Hybrid) {
      if (e.contains("T_direct") != e.contains("T_ttfs"))
        fail("config: hybrid encoder needs both T_direct and T_ttfs (or "
             "neither for the default split)");
      if (e.contains("T_direct")) {
        spec.encoder.t_direct = e.at("T_direct").get<std::int64_t>();
        spec.encoder.t_ttfs = e.at("T_ttfs").get<std::int64_t>();
      } else {
        spec.encoder.t_direct = (spec.t_len + 1) / 2;
        spec.encoder.t_ttfs = spec.t_len / 2;
      }
    }
  }
  if (j.contains("stem")) {
    const json& s = j.at("stem");
    check_keys(s, {"out_channels", "kernel", "stride"}, "network.stem");
    if (s.contains("out_channels"))
      spec.stem.out_channels = s.at("out_channels").get<std::int64_t>();
    if (s.contains("kernel")) spec.stem.kernel = s.at("kernel").get<std::int64_t>();
    if (s.contains("stride")) spec.stem.stride = s.at("stride").get<std::int64_t>();
  }
  if (j.contains("blocks")) {
    spec.blocks.clear();
    for (const auto& b : j.at("blocks")) {
      check_keys(b, {"out_channels", "kt", "kh", "kw", "stride", "residual"},
                 "network.blocks[]");
      BlockSpec blk;
      if (b.contains("out_channels"))
        blk.out_channels = b.at("out_channels").get<std::int64_t>();
      if (b.contains("kt")) blk.kt = b.at("kt").get<std::int64_t>();
      if (b.contains("kh")) blk.kh = b.at("kh").get<std::int64_t>();
      if (b.contains("kw")) blk.kw = b.at("kw").get<std::int64_t>();
      if (b.contains("stride")) blk.stride = b.at("stride").get<std::int64_t>();
      if (b.contains("residual")) blk.residual = b.at("residual").get<bool>();
      spec.blocks.push_back(blk);
    }
  }
  if (j.contains("neuron")) {
    const json& n = j.at("neuron");
    check_keys(n, {"kind", "v_th", "v_reset", "tau", "surrogate", "alpha"},
               "network.neuron");
    if (n.contains("kind"))
      spec.neuron.kind = parse_neuron_kind(n.at("kind").get<std::string>());
    if (n.contains("v_th")) spec.neuron.v_th = n.at("v_th").get<double>();
    if (n.contains("v_reset")) spec.neuron.v_reset = n.at("v_reset").get<double>();
    if (n.contains("tau")) spec.neuron.tau = n.at("tau").get<double>();
    if (n.contains("surrogate")) {
      const std::string s = n.at("surrogate").get<std::string>();
      if (s == "rectangular")
        spec.neuron.surrogate = SurrogateKind::Rectangular;
      else if (s == "arctan")
        spec.neuron.surrogate = SurrogateKind::Arctan;
      else
        fail("config: unknown surrogate '" + s + "'");
    }
    if (n.contains("alpha")) spec.neuron.alpha = n.at("alpha").get<double>();
  }
  if (j.contains("head")) {
    const json& h = j.at("head");
    check_keys(h, {"kind", "num_classes", "grid"}, "network.head");
    if (h.contains("kind")) {
      const std::string s = h.at("kind").get<std::string>();
      if (s == "classification")
        spec.head.kind = HeadKind::Classification;
      else if (s == "detection")
        spec.head.kind = HeadKind::Detection;
      else
        fail("config: unknown head kind '" + s + "'");
    }
    if (h.contains("num_classes"))
      spec.head.num_classes = h.at("num_classes").get<std::int64_t>();
    if (h.contains("grid")) spec.head.grid = h.at("grid").get<std::int64_t>();
  }
  return spec;
}

json network_json(const NetworkSpec& spec) {
  json j;
  j["conv_mode"] = conv_mode_name(spec.conv_mode);
  j["recurrence"] = spec.recurrence;
  j["T"] = spec.t_len;
  j["bias_init"] = spec.bias_init;
  json enc;
  enc["kind"] = encoder_kind_name(spec.encoder.kind);
  if (spec.encoder.kind == EncoderKind::Hybrid) {
    enc["T_direct"] = spec.encoder.t_direct;
    enc["T_ttfs"] = spec.encoder.t_ttfs;
  }
  j["encoder"] = enc;
  j["stem"] = {{"out_channels", spec.stem.out_channels},
               {"kernel", spec.stem.kernel},
               {"stride", spec.stem.stride}};
  j["blocks"] = json::array();
  for (const auto& b : spec.blocks)
    j["blocks"].push_back({{"out_channels", b.out_channels},
                           {"kt", b.kt},
                           {"kh", b.kh},
                           {"kw", b.kw},
                           {"stride", b.stride},
                           {"residual", b.residual}});
  json n;
  n["kind"] = neuron_kind_name(spec.neuron.kind);
  n["v_th"] = spec.neuron.v_th;
  n["v_reset"] = spec.neuron.v_reset;
  n["tau"] = spec.neuron.tau;
  n["surrogate"] = spec.neuron.surrogate == SurrogateKind::Rectangular
                       ? "rectangular"
                       : "arctan";
  n["alpha"] = spec.neuron.alpha;
  j["neuron"] = n;
  json h;
  h["kind"] = spec.head.kind == HeadKind::Classification ? "classification"
                                                         : "detection";
  h["num_classes"] = spec.head.num_classes;
  if (spec.head.kind == HeadKind::Detection) h["grid"] = spec.head.grid;
  j["head"] = h;
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j, {"task", "seed", "output_dir", "dataset", "network", "train",
                 "diagnostic"},
             "config");
  ExperimentConfig cfg;
  if (!j.contains("task")) fail("config: missing required key 'task'");
  cfg.task = parse_task(j.at("task").get<std::string>());
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("output_dir"))
    cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, {"n_train", "n_test", "size", "seed"}, "dataset");
    if (d.contains("n_train")) cfg.dataset.n_train = d.at("n_train").get<std::int64_t>();
    if (d.contains("n_test")) cfg.dataset.n_test = d.at("n_test").get<std::int64_t>();
    if (d.contains("size")) cfg.dataset.size = d.at("size").get<std::int64_t>();
    if (d.contains("seed")) cfg.dataset.seed = d.at("seed").get<std::uint64_t>();
  }
  if (j.contains("network")) cfg.network = parse_network(j.at("network"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"epochs", "batch_size", "seed", "lr", "weight_decay",
                   "shuffle_eval", "checkpoint"},
               "train");
    if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<std::int64_t>();
    if (t.contains("batch_size"))
      cfg.train.batch_size = t.at("batch_size").get<std::int64_t>();
    if (t.contains("seed")) cfg.train.seed = t.at("seed").get<std::uint64_t>();
    if (t.contains("lr")) cfg.train.lr = t.at("lr").get<double>();
    if (t.contains("weight_decay"))
      cfg.train.weight_decay = t.at("weight_decay").get<double>();
    if (t.contains("shuffle_eval"))
      cfg.train.shuffle_eval = t.at("shuffle_eval").get<bool>();
    if (t.contains("checkpoint"))
      cfg.train.checkpoint = t.at("checkpoint").get<std::string>();
  }
  if (j.contains("diagnostic")) {
    const json& d = j.at("diagnostic");
    check_keys(d, {"shuffle", "shuffle_seed"}, "diagnostic");
    if (d.contains("shuffle")) cfg.diagnostic.shuffle = d.at("shuffle").get<bool>();
    if (d.contains("shuffle_seed"))
      cfg.diagnostic.shuffle_seed = d.at("shuffle_seed").get<std::uint64_t>();
  }
  if (cfg.train.epochs < 1) fail("config: epochs must be >= 1");
  if (cfg.train.batch_size < 1) fail("config: batch_size must be >= 1");
  // Input geometry follows the dataset.
  cfg.network.in_channels = 1;
  cfg.network.in_h = cfg.dataset.size;
  cfg.network.in_w = cfg.dataset.size;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail("config: cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_experiment_config_text(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["task"] = cfg.task == TaskKind::TemporalOrder ? "temporal_order"
                                                  : "shapes_detection";
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["dataset"] = {{"n_train", cfg.dataset.n_train},
                  {"n_test", cfg.dataset.n_test},
                  {"size", cfg.dataset.size},
                  {"seed", cfg.dataset.seed}};
  j["network"] = network_json(cfg.network);
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"seed", cfg.train.seed},
                {"lr", cfg.train.lr},
                {"weight_decay", cfg.train.weight_decay},
                {"shuffle_eval", cfg.train.shuffle_eval},
                {"checkpoint", cfg.train.checkpoint}};
  j["diagnostic"] = {{"shuffle", cfg.diagnostic.shuffle},
                     {"shuffle_seed", cfg.diagnostic.shuffle_seed}};
  return j.dump(2);
}

ExperimentConfig default_temporal_order_config() {
  ExperimentConfig cfg;
  cfg.task = TaskKind::TemporalOrder;
  cfg.dataset.n_train = 2000;
  cfg.dataset.n_test = 400;
  cfg.dataset.size = 16;
  cfg.dataset.seed = 7;
  cfg.network.t_len = 8;
  cfg.network.conv_mode = ConvMode::Conv3D;
  cfg.network.recurrence = true;
  cfg.network.neuron.kind = NeuronKind::Parametric;
  cfg.network.neuron.alpha = 2.0;  // wide window so silent units get gradient
  cfg.network.bias_init = 0.9;     // start just below threshold
  cfg.network.stem = {8, 4, 2};
  cfg.network.blocks = {{8, 3, 4, 4, 2, false}, {8, 3, 3, 3, 1, false}};
  cfg.network.head = {HeadKind::Classification, 2, 0};
  cfg.train.epochs = 30;
  cfg.train.batch_size = 32;
  cfg.train.lr = 2e-3;
  return cfg;
}

ExperimentConfig default_shapes_detection_config() {
  ExperimentConfig cfg;
  cfg.task = TaskKind::ShapesDetection;
  cfg.dataset.n_train = 500;
  cfg.dataset.n_test = 100;
  cfg.dataset.size = 32;
  cfg.dataset.seed = 11;
  cfg.network.t_len = 4;
  cfg.network.conv_mode = ConvMode::Conv3D;
  cfg.network.recurrence = true;
  cfg.network.neuron.kind = NeuronKind::Parametric;
  cfg.network.neuron.alpha = 2.0;
  cfg.network.bias_init = 0.9;
  cfg.network.stem = {8, 4, 2};
  cfg.network.blocks = {
      {16, 3, 4, 4, 2, false}, {16, 3, 3, 3, 1, false}, {16, 3, 3, 3, 1, true}};
  cfg.network.head = {HeadKind::Detection, 2, 4};
  cfg.train.epochs = 50;
  cfg.train.batch_size = 32;
  cfg.train.lr = 2e-3;
  return cfg;
}

namespace {

struct TaskData {
  TemporalOrderDataset seq_train, seq_test;
  ShapesDataset det_train, det_test;
  bool temporal = false;
};

TaskData build_datasets(const ExperimentConfig& cfg) {
  TaskData d;
  const std::uint64_t test_seed = Rng::mix(cfg.dataset.seed ^ 0x7e57da7aULL);
  if (cfg.task == TaskKind::TemporalOrder) {
    d.temporal = true;
    d.seq_train = gen_temporal_order_dataset(cfg.dataset.n_train,
                                             cfg.network.t_len,
                                             cfg.dataset.size,
                                             cfg.dataset.seed);
    d.seq_test = gen_temporal_order_dataset(cfg.dataset.n_test,
                                            cfg.network.t_len,
                                            cfg.dataset.size, test_seed);
  } else {
    d.det_train =
        gen_shapes_dataset(cfg.dataset.n_train, cfg.dataset.size,
                           cfg.dataset.seed);
    d.det_test = gen_shapes_dataset(cfg.dataset.n_test, cfg.dataset.size,
                                    test_seed);
  }
  return d;
}

DetectionTargets targets_for(const ShapesDataset& ds,
                             const std::vector<std::int64_t>& idx,
                             std::int64_t grid, int num_classes) {
  DetectionTargets t;
  t.grid = grid;
  t.num_classes = num_classes;
  for (std::int64_t i : idx) {
    std::vector<CellTarget> cells;
    std::vector<char> used(static_cast<std::size_t>(grid * grid), 0);
    for (const auto& b : ds.boxes[static_cast<std::size_t>(i)]) {
      validate_box(b);
      CellTarget ct;
      ct.gx = (b.x_min + b.x_max) / 2;
      ct.gy = (b.y_min + b.y_max) / 2;
      ct.gw = b.x_max - b.x_min;
      ct.gh = b.y_max - b.y_min;
      ct.cls = b.class_id;
      ct.cx = std::min<std::int64_t>(grid - 1,
                                     std::int64_t(ct.gx * double(grid)));
      ct.cy = std::min<std::int64_t>(grid - 1,
                                     std::int64_t(ct.gy * double(grid)));
      // First box wins when two centers land in one cell.
      const auto slot = static_cast<std::size_t>(ct.cy * grid + ct.cx);
      if (used[slot]) continue;
      used[slot] = 1;
      cells.push_back(ct);
    }
    t.per_image.push_back(std::move(cells));
  }
  return t;
}

std::vector<std::vector<std::int64_t>> make_batches(std::int64_t n,
                                                    std::int64_t batch,
                                                    Rng* shuffler) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (shuffler) shuffler->shuffle(idx);
  std::vector<std::vector<std::int64_t>> out;
  for (std::int64_t at = 0; at < n; at += batch) {
    const std::int64_t sz = std::min(batch, n - at);
    out.emplace_back(idx.begin() + at, idx.begin() + at + sz);
  }
  return out;
}

}  // namespace

double evaluate_network(const ExperimentConfig& cfg, Network& net,
                        bool shuffled_eval) {
  TaskData data = build_datasets(cfg);
  std::uint64_t salt = 1u << 20;  // distinct from training salts
  if (cfg.task == TaskKind::TemporalOrder) {
    const auto& ds = data.seq_test;
    std::int64_t correct = 0;
    for (const auto& batch_idx :
         make_batches(ds.n, cfg.train.batch_size, nullptr)) {
      Tape tape;
      tape.set_recording(false);
      Tensor x = ds.batch(batch_idx);
      ForwardOptions opt;
      opt.shuffle = shuffled_eval;
      opt.shuffle_seed = cfg.diagnostic.shuffle_seed;
      opt.shuffle_salt = salt++;
      Tensor logits = net.forward(tape, x, opt);
      const std::int64_t k = logits.dim(1);
      for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
        std::int64_t best = 0;
        for (std::int64_t j = 1; j < k; ++j)
          if (logits.at({std::int64_t(bi), j}) >
              logits.at({std::int64_t(bi), best}))
            best = j;
        if (static_cast<int>(best) ==
            ds.labels[static_cast<std::size_t>(batch_idx[bi])])
          ++correct;
      }
    }
    return double(correct) / double(ds.n);
  }
  const auto& ds = data.det_test;
  std::vector<std::vector<DetectionBox>> preds(
      static_cast<std::size_t>(ds.n)),
      gts(static_cast<std::size_t>(ds.n));
  for (std::int64_t i = 0; i < ds.n; ++i)
    gts[static_cast<std::size_t>(i)] = ds.boxes[static_cast<std::size_t>(i)];
  const int num_classes = static_cast<int>(cfg.network.head.num_classes);
  for (const auto& batch_idx :
       make_batches(ds.n, cfg.train.batch_size, nullptr)) {
    Tape tape;
    tape.set_recording(false);
    Tensor x = ds.batch(batch_idx);
    ForwardOptions opt;
    opt.shuffle = shuffled_eval;
    opt.shuffle_seed = cfg.diagnostic.shuffle_seed;
    opt.shuffle_salt = salt++;
    Tensor maps = net.forward(tape, x, opt);
    const std::int64_t ch = maps.dim(1), grid = maps.dim(2);
    for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
      Tensor one = Tensor::zeros({ch, grid, grid});
      std::copy_n(maps.data().data() + std::int64_t(bi) * ch * grid * grid,
                  ch * grid * grid, one.data().data());
      auto boxes = decode_head_maps(one, num_classes, 0.05);
      preds[static_cast<std::size_t>(batch_idx[bi])] = nms(boxes, 0.5);
    }
  }
  return map_at_50(preds, gts);
}

TrainResult run_training(const ExperimentConfig& cfg, bool quiet) {
  TaskData data = build_datasets(cfg);
  TrainResult res;
  if (cfg.task == TaskKind::TemporalOrder) {
    res.train_hash = data.seq_train.content_hash();
    res.test_hash = data.seq_test.content_hash();
    res.metric_name = "accuracy";
  } else {
    res.train_hash = data.det_train.content_hash();
    res.test_hash = data.det_test.content_hash();
    res.metric_name = "map50";
  }

  Network net = Network::build(cfg.network, cfg.seed);
  AdamWState opt_state;
  opt_state.cfg.lr = cfg.train.lr;
  opt_state.cfg.weight_decay = cfg.train.weight_decay;
  opt_state.init(net.params);

  const bool shuffle_arm = cfg.diagnostic.shuffle;
  std::uint64_t salt = 0;
  const std::int64_t n_train = cfg.task == TaskKind::TemporalOrder
                                   ? data.seq_train.n
                                   : data.det_train.n;

  for (std::int64_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const double t0 = now_s();
    Rng order_rng(cfg.train.seed, static_cast<std::uint64_t>(epoch));
    double loss_sum = 0;
    std::int64_t seen = 0, correct = 0;
    std::vector<std::vector<DetectionBox>> epoch_preds, epoch_gts;
    for (const auto& batch_idx :
         make_batches(n_train, cfg.train.batch_size, &order_rng)) {
      Tape tape;
      ForwardOptions opt;
      opt.shuffle = shuffle_arm;
      opt.shuffle_seed = cfg.diagnostic.shuffle_seed;
      opt.shuffle_salt = salt++;
      Tensor loss;
      if (cfg.task == TaskKind::TemporalOrder) {
        Tensor x = data.seq_train.batch(batch_idx);
        std::vector<int> labels;
        for (auto i : batch_idx)
          labels.push_back(
              data.seq_train.labels[static_cast<std::size_t>(i)]);
        Tensor logits = net.forward(tape, x, opt);
        loss = loss_classification(tape, logits, labels);
        const std::int64_t k = logits.dim(1);
        for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
          std::int64_t best = 0;
          for (std::int64_t j = 1; j < k; ++j)
            if (logits.at({std::int64_t(bi), j}) >
                logits.at({std::int64_t(bi), best}))
              best = j;
          if (static_cast<int>(best) == labels[bi]) ++correct;
        }
      } else {
        Tensor x = data.det_train.batch(batch_idx);
        DetectionTargets tgts =
            targets_for(data.det_train, batch_idx, cfg.network.head.grid,
                        static_cast<int>(cfg.network.head.num_classes));
        Tensor maps = net.forward(tape, x, opt);
        loss = loss_detection(tape, maps, tgts);
        const std::int64_t ch = maps.dim(1), grid = maps.dim(2);
        for (std::size_t bi = 0; bi < batch_idx.size(); ++bi) {
          Tensor one = Tensor::zeros({ch, grid, grid});
          std::copy_n(
              maps.data().data() + std::int64_t(bi) * ch * grid * grid,
              ch * grid * grid, one.data().data());
          epoch_preds.push_back(nms(
              decode_head_maps(one, static_cast<int>(
                                        cfg.network.head.num_classes), 0.05),
              0.5));
          epoch_gts.push_back(
              data.det_train.boxes[static_cast<std::size_t>(batch_idx[bi])]);
        }
      }
      tape.backward(loss);
      adamw_step(net.params, tape, opt_state);
      loss_sum += double(loss.data()[0]) * double(batch_idx.size());
      seen += static_cast<std::int64_t>(batch_idx.size());
    }
    EpochRow row;
    row.epoch = epoch;
    row.loss = loss_sum / double(seen);
    row.train_metric = cfg.task == TaskKind::TemporalOrder
                           ? double(correct) / double(seen)
                           : map_at_50(epoch_preds, epoch_gts);
    row.wall_s = now_s() - t0;
    res.epochs.push_back(row);
    if (!quiet)
      std::printf("epoch %3lld  loss %.5f  train_%s %.4f  (%.2fs)\n",
                  static_cast<long long>(epoch), row.loss,
                  res.metric_name.c_str(), row.train_metric, row.wall_s);
  }

  const bool eval_shuffled = shuffle_arm || cfg.train.shuffle_eval;
  res.test_metric = evaluate_network(cfg, net, eval_shuffled);
  res.net = std::move(net);
  return res;
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_train_outputs(const ExperimentConfig& cfg, const TrainResult& res,
                         const std::string& subcommand) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  {
    std::ofstream os(fs::path(cfg.output_dir) / "train_metrics.csv");
    os << "epoch,loss,train_" << res.metric_name << ",wall_s\n";
    for (const auto& row : res.epochs)
      os << row.epoch << "," << csv_number(row.loss) << ","
         << csv_number(row.train_metric) << "," << csv_number(row.wall_s)
         << "\n";
  }
  {
    std::ofstream os(fs::path(cfg.output_dir) / "test_metrics.csv");
    os << "metric,value\n";
    os << res.metric_name << "," << csv_number(res.test_metric) << "\n";
  }
  std::string ckpt;
  if (!cfg.train.checkpoint.empty()) {
    ckpt = (fs::path(cfg.output_dir) / cfg.train.checkpoint).string();
    save_checkpoint(ckpt, res.net.params);
  }
  json manifest;
  manifest["subcommand"] = subcommand;
  manifest["config"] = json::parse(experiment_config_to_json(cfg));
  manifest["seed"] = cfg.seed;
  manifest["dataset_hash"] = {{"train", res.train_hash},
                              {"test", res.test_hash}};
  manifest["checkpoint"] = ckpt;
  std::ofstream os(fs::path(cfg.output_dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
}

ShuffleDiagnosticResult run_shuffle_diagnostic(const ExperimentConfig& cfg,
                                               bool eval_only, bool quiet) {
  ExperimentConfig ordered = cfg;
  ordered.diagnostic.shuffle = false;
  ordered.train.shuffle_eval = false;
  TrainResult base = run_training(ordered, quiet);

  ShuffleDiagnosticResult r;
  r.metric_ordered = base.test_metric;
  if (eval_only) {
    r.metric_shuffled = evaluate_network(cfg, base.net, /*shuffled_eval=*/true);
  } else {
    ExperimentConfig shuffled = cfg;
    shuffled.diagnostic.shuffle = true;
    shuffled.train.shuffle_eval = false;
    TrainResult arm = run_training(shuffled, quiet);
    r.metric_shuffled = arm.test_metric;
  }
  r.drop_abs = r.metric_ordered - r.metric_shuffled;
  r.drop_rel = r.metric_ordered != 0 ? r.drop_abs / r.metric_ordered : 0.0;
  return r;
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base,
                                      const AblationAxes& axes, bool quiet) {
  auto or_default = [](auto vec, auto fallback) {
    if (vec.empty()) vec.push_back(fallback);
    return vec;
  };
  const auto conv_modes =
      or_default(axes.conv_mode, conv_mode_name(base.network.conv_mode));
  const auto recurrences =
      or_default(axes.recurrence, int(base.network.recurrence));
  const auto neurons =
      or_default(axes.neuron, neuron_kind_name(base.network.neuron.kind));
  const auto codings =
      or_default(axes.coding, encoder_kind_name(base.network.encoder.kind));
  const auto t_values = or_default(axes.t_values, base.network.t_len);

  std::vector<AblationRow> rows;
  for (const auto& cm : conv_modes)
    for (int rec : recurrences)
      for (const auto& nk : neurons)
        for (const auto& coding : codings)
          for (std::int64_t t : t_values) {
            AblationRow row;
            row.conv_mode = cm;
            row.recurrence = rec;
            row.neuron = nk;
            row.coding = coding;
            row.t_len = t;
            const double t0 = now_s();
            try {
              ExperimentConfig cfg = base;
              cfg.network.conv_mode = parse_conv_mode(cm);
              cfg.network.recurrence = rec != 0;
              cfg.network.neuron.kind = parse_neuron_kind(nk);
              cfg.network.encoder.kind = parse_encoder_kind(coding);
              cfg.network.t_len = t;
              if (cfg.network.encoder.kind == EncoderKind::Hybrid) {
                cfg.network.encoder.t_direct = (t + 1) / 2;
                cfg.network.encoder.t_ttfs = t / 2;
              }
              TrainResult res = run_training(cfg, quiet);
              row.metric = res.test_metric;
              row.status = "ok";
            } catch (const std::exception& e) {
              row.status = std::string("error: ") + e.what();
              row.metric = 0;
            }
            row.wall_s = now_s() - t0;
            rows.push_back(row);
            if (!quiet)
              std::printf("[ablate] %s rec=%d %s %s T=%lld -> %s %.4f\n",
                          row.conv_mode.c_str(), row.recurrence,
                          row.neuron.c_str(), row.coding.c_str(),
                          static_cast<long long>(row.t_len),
                          row.status.c_str(), row.metric);
          }
  return rows;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows) {
  std::ofstream os(path);
  os << "conv_mode,recurrence,neuron,coding,T,status,metric,wall_s\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (auto& c : status)
      if (c == ',' || c == '\n') c = ';';
    os << r.conv_mode << "," << r.recurrence << "," << r.neuron << ","
       << r.coding << "," << r.t_len << "," << status << ","
       << csv_number(r.metric) << "," << csv_number(r.wall_s) << "\n";
  }
}

void write_shuffle_diag_csv(const std::string& path,
                            const ExperimentConfig& cfg,
                            const ShuffleDiagnosticResult& r) {
  std::ofstream os(path);
  os << "conv_mode,recurrence,neuron,T,metric_ordered,metric_shuffled,"
        "drop_abs,drop_rel\n";
  os << conv_mode_name(cfg.network.conv_mode) << ","
     << int(cfg.network.recurrence) << ","
     << neuron_kind_name(cfg.network.neuron.kind) << "," << cfg.network.t_len
     << "," << csv_number(r.metric_ordered) << ","
     << csv_number(r.metric_shuffled) << "," << csv_number(r.drop_abs) << ","
     << csv_number(r.drop_rel) << "\n";
}

}  // namespace cspike
