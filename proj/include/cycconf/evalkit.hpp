#ifndef CYCCONF_EVALKIT_HPP_
#define CYCCONF_EVALKIT_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cycconf/box.hpp"
#include "cycconf/datapipe.hpp"
#include "cycconf/detector.hpp"

namespace cycconf::evalkit {

// Intersection over union of two boxes.
double iou(const BBox& a, const BBox& b);

struct DetInstance {
  int image_id = 0;
  double score = 0.0;
  BBox box;
};

struct GtInstance {
  int image_id = 0;
  BBox box;
};

// Greedy matching in descending score (equal scores keep input order, IoU
// ties broken by ground-truth index), one detection per ground truth,
// all-point monotone interpolation of the precision/recall curve.
double average_precision(const std::vector<DetInstance>& dets,
                         const std::vector<GtInstance>& gts,
                         double iou_threshold);

struct ClassAP {
  std::string name;
  int gt_count = 0;
  double ap = 0.0;    // mean over IoU 0.50:0.05:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
};

// COCO-style summary. Size buckets partition ground truth by box area:
// small < 32^2, medium in [32^2, 96^2), large >= 96^2; bucketed metrics
// restrict both ground truth and detections to the bucket. Means run over
// classes with at least one ground-truth instance; a metric with no
// eligible class is reported as absent.
struct APReport {
  std::vector<ClassAP> per_class;
  std::optional<double> ap, ap50, ap75;
  std::optional<double> ap_small, ap_medium, ap_large;
  int num_images = 0;

  std::string to_json() const;
};

// Detections for one frame, aligned with the flattened frame order of a
// DatasetIndex (sequences in index order, frames in sequence order).
struct FrameDetections {
  std::vector<BBox> boxes;  // score + category set
};

// Metric computation over externally supplied detections (also the hook for
// oracle tests that feed ground truth back in as detections).
APReport compute_report(const std::vector<FrameDetections>& detections,
                        const datapipe::DatasetIndex& index);

// Runs inference over every frame of the index, then scores it.
APReport evaluate(const det::DetectorModel& model,
                  const datapipe::DatasetIndex& index);

struct OodReport {
  APReport in_domain;
  APReport out_domain;

  std::string to_json() const;    // both reports plus test-minus-train deltas
  std::string to_table() const;   // fixed-width text table
  std::string to_csv() const;     // per-category AP/AP50/AP75 rows
};

OodReport ood_report(const det::DetectorModel& model,
                     const datapipe::DatasetIndex& train_domain,
                     const datapipe::DatasetIndex& test_domain);

}  // namespace cycconf::evalkit

#endif  // CYCCONF_EVALKIT_HPP_
