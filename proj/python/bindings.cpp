#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cspike/conv.hpp"
#include "cspike/encoding.hpp"
#include "cspike/network.hpp"
#include "cspike/neuron.hpp"
#include "cspike/tensor.hpp"
#include "datasets.hpp"
#include "detection.hpp"
#include "experiment.hpp"
#include "gradchecks.hpp"
#include "sha1.hpp"

namespace py = pybind11;
using namespace cspike;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(a.shape(i));
  std::vector<float> data(a.data(), a.data() + a.size());
  return Tensor::from(std::move(shape), std::move(data));
}

py::array from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

NeuronParams make_params(const std::string& kind, double v_th, double v_reset,
                         double tau, std::int64_t t_len) {
  if (kind == "if") return NeuronParams::if_neuron(float(v_th), float(v_reset));
  if (kind == "lif")
    return NeuronParams::lif(float(tau), float(v_th), float(v_reset));
  if (kind == "parametric")
    return NeuronParams::parametric(t_len, float(v_th));
  fail("neuron kind must be if, lif or parametric");
}

DetectionBox tuple_to_box(const py::tuple& t) {
  if (t.size() != 6)
    fail("box must be (x_min, y_min, x_max, y_max, confidence, class_id)");
  DetectionBox b;
  b.x_min = t[0].cast<double>();
  b.y_min = t[1].cast<double>();
  b.x_max = t[2].cast<double>();
  b.y_max = t[3].cast<double>();
  b.confidence = t[4].cast<double>();
  b.class_id = t[5].cast<int>();
  return b;
}

std::vector<std::vector<DetectionBox>> nested_boxes(const py::list& images) {
  std::vector<std::vector<DetectionBox>> out;
  for (const auto& img : images) {
    std::vector<DetectionBox> boxes;
    for (const auto& item : img.cast<py::list>())
      boxes.push_back(tuple_to_box(item.cast<py::tuple>()));
    out.push_back(std::move(boxes));
  }
  return out;
}

py::tuple box_to_tuple(const DetectionBox& b) {
  return py::make_tuple(b.x_min, b.y_min, b.x_max, b.y_max, b.confidence,
                        b.class_id);
}

}  // namespace

PYBIND11_MODULE(_cspike, m) {
  m.doc() = "Spiking-network training core: tensors, 3D convolutions, "
            "parametric neurons, encoders and detection metrics.";

  m.def("conv2d",
        [](const Array& x, const Array& k, const Array& b, std::int64_t stride,
           std::int64_t pad) {
          Tape tp;
          tp.set_recording(false);
          return from_tensor(
              conv2d(tp, to_tensor(x), to_tensor(k), to_tensor(b), stride,
                     pad));
        },
        py::arg("input"), py::arg("kernel"), py::arg("bias"),
        py::arg("stride") = 1, py::arg("pad") = 0);

  m.def("conv3d",
        [](const Array& x, const Array& k, const Array& b,
           std::tuple<std::int64_t, std::int64_t, std::int64_t> stride,
           std::tuple<std::int64_t, std::int64_t, std::int64_t> pad) {
          Tape tp;
          tp.set_recording(false);
          return from_tensor(conv3d(tp, to_tensor(x), to_tensor(k),
                                    to_tensor(b), std::get<0>(stride),
                                    std::get<1>(stride), std::get<2>(stride),
                                    std::get<0>(pad), std::get<1>(pad),
                                    std::get<2>(pad)));
        },
        py::arg("input"), py::arg("kernel"), py::arg("bias"),
        py::arg("stride") = std::make_tuple(1, 1, 1),
        py::arg("pad") = std::make_tuple(0, 0, 0));

  m.def("transpose_time_channel", [](const Array& x) {
    Tape tp;
    tp.set_recording(false);
    return from_tensor(transpose_time_channel(tp, to_tensor(x)));
  });

  m.def("concat_time", [](const Array& a, const Array& b) {
    Tape tp;
    tp.set_recording(false);
    return from_tensor(concat_time(tp, to_tensor(a), to_tensor(b)));
  });

  m.def("neuron_forward",
        [](const Array& x, const std::string& kind, bool recurrence,
           double v_th, double v_reset, double tau, const std::string& surrogate,
           double alpha) {
          Tape tp;
          tp.set_recording(false);
          Tensor input = to_tensor(x);
          if (input.rank() < 2) fail("neuron_forward: need N x T x ...");
          NeuronParams p =
              make_params(kind, v_th, v_reset, tau, input.dim(1));
          SurrogateConfig sg;
          sg.kind = surrogate == "arctan" ? SurrogateKind::Arctan
                                          : SurrogateKind::Rectangular;
          sg.alpha = float(alpha);
          return from_tensor(neuron_forward(
              tp, input, p,
              recurrence ? InitMode::Recurrence : InitMode::Zero, sg));
        },
        py::arg("input"), py::arg("kind") = "lif",
        py::arg("recurrence") = false, py::arg("v_th") = 1.0,
        py::arg("v_reset") = 0.0, py::arg("tau") = 2.0,
        py::arg("surrogate") = "rectangular", py::arg("alpha") = 1.0);

  m.def("shuffle_time", [](const Array& x, std::uint64_t seed) {
    Tape tp;
    tp.set_recording(false);
    return from_tensor(shuffle_time(tp, to_tensor(x), seed));
  });

  m.def("direct_encode", [](const Array& features, std::int64_t t_len) {
    Tape tp;
    tp.set_recording(false);
    return from_tensor(direct_encode(tp, to_tensor(features), t_len));
  });

  m.def("ttfs_encode", [](const Array& image, std::int64_t t_len) {
    return from_tensor(ttfs_encode(to_tensor(image), t_len));
  });

  m.def("ttfs_spike_step", &ttfs_spike_step, py::arg("intensity"),
        py::arg("t_len"));

  m.def("iou", [](const py::tuple& a, const py::tuple& b) {
    return iou(tuple_to_box(a), tuple_to_box(b));
  });

  m.def("nms", [](const py::list& boxes, double threshold) {
    std::vector<DetectionBox> in;
    for (const auto& item : boxes)
      in.push_back(tuple_to_box(item.cast<py::tuple>()));
    py::list out;
    for (const auto& b : nms(in, threshold)) out.append(box_to_tuple(b));
    return out;
  }, py::arg("boxes"), py::arg("iou_threshold") = 0.5);

  m.def("map_at_50", [](const py::list& preds, const py::list& gts) {
    return map_at_50(nested_boxes(preds), nested_boxes(gts));
  });

  m.def("gen_temporal_order",
        [](std::int64_t n, std::int64_t t_len, std::int64_t size,
           std::uint64_t seed) {
          auto ds = gen_temporal_order_dataset(n, t_len, size, seed);
          std::vector<py::ssize_t> shape{py::ssize_t(n), py::ssize_t(t_len),
                                         py::ssize_t(size), py::ssize_t(size)};
          py::array_t<float> frames(shape);
          std::copy(ds.frames.begin(), ds.frames.end(),
                    frames.mutable_data());
          return py::make_tuple(frames, ds.labels, ds.content_hash());
        },
        py::arg("n"), py::arg("t_len"), py::arg("size"), py::arg("seed"));

  m.def("gen_shapes",
        [](std::int64_t n, std::int64_t size, std::uint64_t seed) {
          auto ds = gen_shapes_dataset(n, size, seed);
          std::vector<py::ssize_t> shape{py::ssize_t(n), py::ssize_t(size),
                                         py::ssize_t(size)};
          py::array_t<float> images(shape);
          std::copy(ds.pixels.begin(), ds.pixels.end(),
                    images.mutable_data());
          py::list boxes;
          for (const auto& img : ds.boxes) {
            py::list one;
            for (const auto& b : img) one.append(box_to_tuple(b));
            boxes.append(one);
          }
          return py::make_tuple(images, boxes, ds.content_hash());
        },
        py::arg("n"), py::arg("size"), py::arg("seed"));

  m.def("run_experiment", [](const std::string& config_json) {
    ExperimentConfig cfg = parse_experiment_config_text(config_json);
    TrainResult res = run_training(cfg);
    py::dict out;
    out["metric"] = res.test_metric;
    out["metric_name"] = res.metric_name;
    out["final_loss"] = res.epochs.empty() ? 0.0 : res.epochs.back().loss;
    out["train_hash"] = res.train_hash;
    return out;
  });

  m.def("gradcheck", [](const std::string& target) {
    double worst = 0;
    for (const auto& c : run_gradcheck_suite(target))
      worst = std::max(worst, c.max_rel_err);
    return worst;
  }, py::arg("target") = "all");

  m.def("sha1_hex", [](const py::bytes& data) {
    const std::string s = data;
    return Sha1::of(s.data(), s.size());
  });
}
