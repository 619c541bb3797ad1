#include "cycconf/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cycconf/png_io.hpp"
#include "cycconf/util.hpp"

using json = nlohmann::json;

namespace cycconf::evalkit {

namespace {

constexpr double kAreaSmall = 32.0 * 32.0;
constexpr double kAreaMedium = 96.0 * 96.0;

const double kIouGrid[10] = {0.50, 0.55, 0.60, 0.65, 0.70,
                             0.75, 0.80, 0.85, 0.90, 0.95};

int size_bucket(double area) {
  if (area < kAreaSmall) return 0;
  if (area < kAreaMedium) return 1;
  return 2;
}

std::optional<double> mean_of(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / values.size();
}

json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::string fmt_cell(const std::optional<double>& v) {
  if (!v) return "    -  ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%7.4f", *v);
  return buf;
}

std::string fmt_cell(double v) { return fmt_cell(std::optional<double>(v)); }

}  // namespace

double iou(const BBox& a, const BBox& b) { return box_iou(a, b); }

double average_precision(const std::vector<DetInstance>& dets,
                         const std::vector<GtInstance>& gts,
                         double iou_threshold) {
  if (gts.empty()) return 0.0;

  std::vector<int> order(dets.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[a].score > dets[b].score;
  });

  std::vector<bool> gt_used(gts.size(), false);
  std::vector<int> tp;  // 1 true positive, 0 false positive, in rank order
  tp.reserve(dets.size());
  for (int idx : order) {
    const DetInstance& d = dets[idx];
    double best_iou = -1.0;
    int best_gt = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].image_id != d.image_id) continue;
      const double v = box_iou(d.box, gts[g].box);
      // strict > keeps the first (lowest-index) ground truth on IoU ties
      if (v >= iou_threshold && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      gt_used[best_gt] = true;
      tp.push_back(1);
    } else {
      tp.push_back(0);
    }
  }

  // precision at each rank, then the monotone envelope over recall
  const auto n = static_cast<int>(tp.size());
  std::vector<double> precision(n), recall(n);
  int tp_cum = 0;
  for (int i = 0; i < n; ++i) {
    tp_cum += tp[i];
    precision[i] = static_cast<double>(tp_cum) / (i + 1);
    recall[i] = static_cast<double>(tp_cum) / gts.size();
  }
  for (int i = n - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);

  double ap = 0.0;
  double prev_recall = 0.0;
  for (int i = 0; i < n; ++i) {
    if (tp[i]) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

APReport compute_report(const std::vector<FrameDetections>& detections,
                        const datapipe::DatasetIndex& index) {
  if (index.sequences.empty()) throw DataError("evaluate: empty dataset");
  if (detections.size() != index.total_frames())
    throw ContractError("compute_report: detection count != frame count");

  const int num_classes = synthvid::kNumCategories;
  // flatten per class; image ids follow the index's frame order
  std::vector<std::vector<DetInstance>> dets(num_classes);
  std::vector<std::vector<GtInstance>> gts(num_classes);
  int image_id = 0;
  size_t det_pos = 0;
  for (const auto& seq : index.sequences) {
    for (const auto& frame : seq.frames) {
      const auto& frame_dets = detections[det_pos++];
      for (const auto& b : frame_dets.boxes) {
        if (b.category < 0 || b.category >= num_classes)
          throw ContractError("compute_report: detection category out of range");
        dets[b.category].push_back({image_id, b.score, b});
      }
      for (const auto& b : frame.boxes)
        gts[b.category].push_back({image_id, b});
      ++image_id;
    }
  }

  APReport report;
  report.num_images = image_id;
  std::vector<double> means, means50, means75;
  std::vector<double> bucket_means[3];
  for (int c = 0; c < num_classes; ++c) {
    ClassAP cls;
    cls.name = synthvid::category_name(c);
    cls.gt_count = static_cast<int>(gts[c].size());
    if (cls.gt_count > 0) {
      double acc = 0.0;
      for (double thr : kIouGrid) acc += average_precision(dets[c], gts[c], thr);
      cls.ap = acc / 10.0;
      cls.ap50 = average_precision(dets[c], gts[c], 0.50);
      cls.ap75 = average_precision(dets[c], gts[c], 0.75);
      means.push_back(cls.ap);
      means50.push_back(cls.ap50);
      means75.push_back(cls.ap75);
    }
    report.per_class.push_back(cls);

    for (int bucket = 0; bucket < 3; ++bucket) {
      std::vector<GtInstance> bucket_gts;
      for (const auto& g : gts[c])
        if (size_bucket(g.box.area()) == bucket) bucket_gts.push_back(g);
      if (bucket_gts.empty()) continue;
      std::vector<DetInstance> bucket_dets;
      for (const auto& d : dets[c])
        if (size_bucket(d.box.area()) == bucket) bucket_dets.push_back(d);
      double acc = 0.0;
      for (double thr : kIouGrid)
        acc += average_precision(bucket_dets, bucket_gts, thr);
      bucket_means[bucket].push_back(acc / 10.0);
    }
  }
  report.ap = mean_of(means);
  report.ap50 = mean_of(means50);
  report.ap75 = mean_of(means75);
  report.ap_small = mean_of(bucket_means[0]);
  report.ap_medium = mean_of(bucket_means[1]);
  report.ap_large = mean_of(bucket_means[2]);
  return report;
}

APReport evaluate(const det::DetectorModel& model,
                  const datapipe::DatasetIndex& index) {
  if (index.sequences.empty()) throw DataError("evaluate: empty dataset");
  std::vector<FrameDetections> detections;
  detections.reserve(index.total_frames());
  for (const auto& seq : index.sequences) {
    for (const auto& frame : seq.frames) {
      const ImageU8 img = datapipe::load_frame(seq, frame.index);
      FrameDetections fd;
      fd.boxes = model.detect(image_to_tensor(img));
      detections.push_back(std::move(fd));
    }
  }
  return compute_report(detections, index);
}

std::string APReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["num_images"] = num_images;
  j["metrics"] = {{"ap", opt_json(ap)},           {"ap50", opt_json(ap50)},
                  {"ap75", opt_json(ap75)},       {"ap_small", opt_json(ap_small)},
                  {"ap_medium", opt_json(ap_medium)}, {"ap_large", opt_json(ap_large)}};
  j["per_class"] = json::array();
  for (const auto& c : per_class)
    j["per_class"].push_back({{"name", c.name},
                              {"gt_count", c.gt_count},
                              {"ap", c.ap},
                              {"ap50", c.ap50},
                              {"ap75", c.ap75}});
  return j.dump(2) + "\n";
}

namespace {

std::optional<double> opt_delta(const std::optional<double>& a,
                                const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *b - *a;
}

void table_row(std::ostringstream& out, const std::string& label,
               const APReport& r) {
  out << std::left;
  out.width(14);
  out << label;
  out << fmt_cell(r.ap) << fmt_cell(r.ap50) << fmt_cell(r.ap75)
      << fmt_cell(r.ap_small) << fmt_cell(r.ap_medium) << fmt_cell(r.ap_large)
      << "\n";
}

}  // namespace

std::string OodReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["train_domain"] = json::parse(in_domain.to_json());
  j["test_domain"] = json::parse(out_domain.to_json());
  j["deltas"] = {
      {"ap", opt_json(opt_delta(in_domain.ap, out_domain.ap))},
      {"ap50", opt_json(opt_delta(in_domain.ap50, out_domain.ap50))},
      {"ap75", opt_json(opt_delta(in_domain.ap75, out_domain.ap75))},
      {"ap_small", opt_json(opt_delta(in_domain.ap_small, out_domain.ap_small))},
      {"ap_medium", opt_json(opt_delta(in_domain.ap_medium, out_domain.ap_medium))},
      {"ap_large", opt_json(opt_delta(in_domain.ap_large, out_domain.ap_large))}};
  return j.dump(2) + "\n";
}

std::string OodReport::to_table() const {
  std::ostringstream out;
  out << std::left;
  out.width(14);
  out << "domain";
  out << "     AP    AP50    AP75     APs     APm     APl\n";
  table_row(out, "in-domain", in_domain);
  table_row(out, "out-of-domain", out_domain);

  APReport delta;
  delta.ap = opt_delta(in_domain.ap, out_domain.ap);
  delta.ap50 = opt_delta(in_domain.ap50, out_domain.ap50);
  delta.ap75 = opt_delta(in_domain.ap75, out_domain.ap75);
  delta.ap_small = opt_delta(in_domain.ap_small, out_domain.ap_small);
  delta.ap_medium = opt_delta(in_domain.ap_medium, out_domain.ap_medium);
  delta.ap_large = opt_delta(in_domain.ap_large, out_domain.ap_large);
  table_row(out, "delta", delta);
  return out.str();
}

std::string OodReport::to_csv() const {
  std::ostringstream out;
  out << "row,AP,AP50,AP75";
  for (const auto& c : in_domain.per_class) out << "," << c.name;
  out << "\n";
  auto write_row = [&out](const std::string& label, const APReport& r) {
    out << label << "," << (r.ap ? format_double(*r.ap) : "")
        << "," << (r.ap50 ? format_double(*r.ap50) : "")
        << "," << (r.ap75 ? format_double(*r.ap75) : "");
    for (const auto& c : r.per_class)
      out << "," << (c.gt_count > 0 ? format_double(c.ap) : "");
    out << "\n";
  };
  write_row("in_domain", in_domain);
  write_row("test_domain", out_domain);
  return out.str();
}

OodReport ood_report(const det::DetectorModel& model,
                     const datapipe::DatasetIndex& train_domain,
                     const datapipe::DatasetIndex& test_domain) {
  OodReport r;
  r.in_domain = evaluate(model, train_domain);
  r.out_domain = evaluate(model, test_domain);
  return r;
}

}  // namespace cycconf::evalkit
