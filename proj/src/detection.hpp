#pragma once

#include <string>
#include <vector>

#include "cspike/tensor.hpp"

namespace cspike {

// Axis-aligned box in normalized image coordinates plus score and class.
struct DetectionBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  double confidence = 0;
  int class_id = 0;
};

// Throws when x_min >= x_max or y_min >= y_max or coordinates leave [0, 1].
void validate_box(const DetectionBox& b);

// area(a intersect b) / area(a union b); 0 for disjoint boxes.
double iou(const DetectionBox& a, const DetectionBox& b);

// Greedy class-aware non-maximum suppression. Candidates are visited in
// order of (confidence desc, class_id asc, input order); a kept box
// suppresses same-class boxes with IoU > threshold.
std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold);

// mAP at IoU 0.5 with all-point (precision envelope) interpolation.
// Predictions are matched per class, in confidence order, each to the
// unmatched same-image ground-truth box of highest IoU >= 0.5. Classes with
// no ground truth are skipped; if no class has any ground truth the value is
// undefined and an exception is thrown.
double map_at_50(const std::vector<std::vector<DetectionBox>>& predictions,
                 const std::vector<std::vector<DetectionBox>>& ground_truth);

// Decodes one image's rate-decoded head maps (5+K) x S x S into boxes:
// center = (cell + sigmoid(txy)) / S, size = sigmoid(twh), confidence =
// sigmoid(obj) * max class probability. Boxes are clipped to [0, 1].
std::vector<DetectionBox> decode_head_maps(const Tensor& maps,
                                           int num_classes,
                                           double confidence_floor);

}  // namespace cspike
