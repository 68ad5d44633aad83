// Test-only brute-force mAP@0.5 oracle: a direct transliteration of the
// definition with naive loops, independent of the production implementation.
// Ranks predictions by repeatedly scanning for the highest remaining
// confidence, matches against ground truth by exhaustive search, and
// integrates the precision envelope pointwise.
#pragma once

#include <cstddef>
#include <set>
#include <vector>

#include "detection.hpp"

namespace cspike_test {

inline double map_oracle(
    const std::vector<std::vector<cspike::DetectionBox>>& preds,
    const std::vector<std::vector<cspike::DetectionBox>>& gts) {
  using cspike::DetectionBox;
  std::set<int> classes;
  for (const auto& img : gts)
    for (const auto& g : img) classes.insert(g.class_id);
  if (classes.empty())
    throw std::invalid_argument("map_oracle: no ground truth");
  double ap_sum = 0;
  for (int cls : classes) {
    struct P {
      std::size_t im, idx;
      double conf;
      bool used = false;
    };
    std::vector<P> pool;
    std::size_t total_gt = 0;
    for (std::size_t im = 0; im < preds.size(); ++im) {
      for (std::size_t i = 0; i < preds[im].size(); ++i)
        if (preds[im][i].class_id == cls)
          pool.push_back({im, i, preds[im][i].confidence});
      for (const auto& g : gts[im])
        if (g.class_id == cls) ++total_gt;
    }
    std::vector<std::vector<bool>> taken(gts.size());
    for (std::size_t im = 0; im < gts.size(); ++im)
      taken[im].assign(gts[im].size(), false);

    std::vector<bool> tp_flags;
    for (std::size_t processed = 0; processed < pool.size(); ++processed) {
      std::size_t best = pool.size();
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].used) continue;
        if (best == pool.size() || pool[i].conf > pool[best].conf ||
            (pool[i].conf == pool[best].conf &&
             (pool[i].im < pool[best].im ||
              (pool[i].im == pool[best].im && pool[i].idx < pool[best].idx))))
          best = i;
      }
      P& p = pool[best];
      p.used = true;
      const DetectionBox& pb = preds[p.im][p.idx];
      double best_iou = 0;
      std::ptrdiff_t best_gt = -1;
      for (std::size_t gi = 0; gi < gts[p.im].size(); ++gi) {
        if (gts[p.im][gi].class_id != cls || taken[p.im][gi]) continue;
        const double v = cspike::iou(pb, gts[p.im][gi]);
        if (v > best_iou) {
          best_iou = v;
          best_gt = std::ptrdiff_t(gi);
        }
      }
      if (best_iou >= 0.5 && best_gt >= 0) {
        tp_flags.push_back(true);
        taken[p.im][std::size_t(best_gt)] = true;
      } else {
        tp_flags.push_back(false);
      }
    }

    double ap = 0;
    if (total_gt > 0) {
      std::size_t tp = 0;
      double prev_recall = 0;
      for (std::size_t i = 0; i < tp_flags.size(); ++i) {
        if (tp_flags[i]) ++tp;
        const double recall = double(tp) / double(total_gt);
        double envelope = 0;
        std::size_t tpj = tp;
        for (std::size_t j = i; j < tp_flags.size(); ++j) {
          if (j > i && tp_flags[j]) ++tpj;
          envelope = std::max(envelope, double(tpj) / double(j + 1));
        }
        ap += (recall - prev_recall) * envelope;
        prev_recall = recall;
      }
    }
    ap_sum += ap;
  }
  return ap_sum / double(classes.size());
}

}  // namespace cspike_test
