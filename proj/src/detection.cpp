#include "detection.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cspike/training.hpp"

namespace cspike {

void validate_box(const DetectionBox& b) {
  if (!(b.x_min < b.x_max) || !(b.y_min < b.y_max))
    fail("box: degenerate extent [" + std::to_string(b.x_min) + ", " +
         std::to_string(b.y_min) + ", " + std::to_string(b.x_max) + ", " +
         std::to_string(b.y_max) + "]");
  if (b.x_min < 0 || b.y_min < 0 || b.x_max > 1 || b.y_max > 1)
    fail("box: coordinates outside [0, 1]");
}

double iou(const DetectionBox& a, const DetectionBox& b) {
  const double ix = std::max(
      0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double iy = std::max(
      0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double inter = ix * iy;
  if (inter <= 0) return 0.0;
  const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (area_a + area_b - inter);
}

std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
    fail("nms: threshold must lie in (0, 1)");
  std::vector<std::size_t> order(boxes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (boxes[a].confidence != boxes[b].confidence)
      return boxes[a].confidence > boxes[b].confidence;
    if (boxes[a].class_id != boxes[b].class_id)
      return boxes[a].class_id < boxes[b].class_id;
    return a < b;
  });
  std::vector<DetectionBox> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(boxes[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j] || boxes[j].class_id != boxes[i].class_id) continue;
      if (iou(boxes[i], boxes[j]) > iou_threshold) suppressed[j] = 1;
    }
  }
  return kept;
}

double map_at_50(const std::vector<std::vector<DetectionBox>>& predictions,
                 const std::vector<std::vector<DetectionBox>>& ground_truth) {
  if (predictions.size() != ground_truth.size())
    fail("map_at_50: prediction/ground-truth image counts differ");
  std::set<int> classes;
  for (const auto& img : ground_truth)
    for (const auto& b : img) classes.insert(b.class_id);
  if (classes.empty())
    fail("map_at_50: no ground-truth boxes in any class; mAP is undefined");

  double ap_sum = 0.0;
  for (int cls : classes) {
    // All predictions of this class, ordered by confidence (ties: image
    // index, then input order, so the result is deterministic).
    struct Pred {
      std::size_t image;
      std::size_t index;
      const DetectionBox* box;
    };
    std::vector<Pred> preds;
    std::int64_t total_gt = 0;
    for (std::size_t im = 0; im < predictions.size(); ++im) {
      for (std::size_t i = 0; i < predictions[im].size(); ++i)
        if (predictions[im][i].class_id == cls)
          preds.push_back({im, i, &predictions[im][i]});
      for (const auto& g : ground_truth[im])
        if (g.class_id == cls) ++total_gt;
    }
    std::sort(preds.begin(), preds.end(), [](const Pred& a, const Pred& b) {
      if (a.box->confidence != b.box->confidence)
        return a.box->confidence > b.box->confidence;
      if (a.image != b.image) return a.image < b.image;
      return a.index < b.index;
    });

    std::vector<std::vector<char>> taken(ground_truth.size());
    for (std::size_t im = 0; im < ground_truth.size(); ++im)
      taken[im].assign(ground_truth[im].size(), 0);

    std::vector<char> is_tp(preds.size(), 0);
    for (std::size_t pi = 0; pi < preds.size(); ++pi) {
      const auto& p = preds[pi];
      double best = 0.0;
      std::ptrdiff_t best_gt = -1;
      const auto& gts = ground_truth[p.image];
      for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (gts[gi].class_id != cls || taken[p.image][gi]) continue;
        const double v = iou(*p.box, gts[gi]);
        if (v > best) {
          best = v;
          best_gt = static_cast<std::ptrdiff_t>(gi);
        }
      }
      if (best >= 0.5 && best_gt >= 0) {
        is_tp[pi] = 1;
        taken[p.image][static_cast<std::size_t>(best_gt)] = 1;
      }
    }

    // Area under the precision envelope over recall.
    double ap = 0.0;
    if (total_gt > 0 && !preds.empty()) {
      std::vector<double> precision(preds.size()), recall(preds.size());
      std::int64_t tp = 0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        tp += is_tp[i];
        precision[i] = double(tp) / double(i + 1);
        recall[i] = double(tp) / double(total_gt);
      }
      for (std::size_t i = preds.size() - 1; i-- > 0;)
        precision[i] = std::max(precision[i], precision[i + 1]);
      double prev_recall = 0.0;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
      }
    }
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(classes.size());
}

std::vector<DetectionBox> decode_head_maps(const Tensor& maps,
                                           int num_classes,
                                           double confidence_floor) {
  if (maps.rank() != 3 || maps.dim(0) != 5 + num_classes)
    fail("decode_head_maps: expected (5+K) x S x S maps, got " +
         shape_str(maps.shape));
  const std::int64_t s = maps.dim(1);
  if (maps.dim(2) != s) fail("decode_head_maps: non-square grid");
  std::vector<DetectionBox> out;
  auto at = [&](std::int64_t c, std::int64_t y, std::int64_t x) {
    return double(maps.data()[static_cast<std::size_t>((c * s + y) * s + x)]);
  };
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      const double obj = stable_sigmoid(at(4, y, x));
      double best_p = 0.0;
      int best_c = 0;
      double mx = at(5, y, x);
      for (int j = 1; j < num_classes; ++j)
        mx = std::max(mx, at(5 + j, y, x));
      double z = 0.0;
      for (int j = 0; j < num_classes; ++j) z += std::exp(at(5 + j, y, x) - mx);
      for (int j = 0; j < num_classes; ++j) {
        const double p = std::exp(at(5 + j, y, x) - mx) / z;
        if (p > best_p) {
          best_p = p;
          best_c = j;
        }
      }
      const double conf = obj * best_p;
      if (conf < confidence_floor) continue;
      const double cx = (double(x) + stable_sigmoid(at(0, y, x))) / double(s);
      const double cy = (double(y) + stable_sigmoid(at(1, y, x))) / double(s);
      const double w = stable_sigmoid(at(2, y, x));
      const double h = stable_sigmoid(at(3, y, x));
      DetectionBox b;
      b.x_min = std::max(0.0, cx - w / 2);
      b.y_min = std::max(0.0, cy - h / 2);
      b.x_max = std::min(1.0, cx + w / 2);
      b.y_max = std::min(1.0, cy + h / 2);
      b.confidence = conf;
      b.class_id = best_c;
      if (b.x_min < b.x_max && b.y_min < b.y_max) out.push_back(b);
    }
  return out;
}

}  // namespace cspike
