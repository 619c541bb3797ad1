#ifndef CYCCONF_DETECTOR_HPP_
#define CYCCONF_DETECTOR_HPP_

#include <array>
#include <string>
#include <vector>

#include "cycconf/box.hpp"
#include "cycconf/kvconfig.hpp"
#include "cycconf/mat.hpp"
#include "cycconf/nn.hpp"
#include "cycconf/rng.hpp"
#include "cycconf/tensor.hpp"

namespace cycconf::det {

struct DetectorConfig {
  int image_size = 128;
  int in_channels = 3;
  // four conv blocks, strides 1/2/2/2 -> single stride-8 feature map
  std::array<int, 4> widths = {6, 10, 14, 16};
  int stride = 8;

  int rpn_channels = 16;
  double anchor_size = 24.0;  // one square anchor per cell
  int proposal_cap = 64;

  int roi_size = 7;
  int box_head_hidden = 64;
  int num_classes = 3;  // box head adds a background class

  int encoder_mid_channels = 8;
  int embedding_dim = 128;

  // training-time sampling
  int rpn_batch = 64;
  int rpn_fg_cap = 32;
  double rpn_pos_iou = 0.5;
  double rpn_neg_iou = 0.3;
  int roi_batch = 24;
  int roi_fg_cap = 8;
  double roi_fg_iou = 0.5;

  // inference
  double nms_iou = 0.5;
  double score_floor = 0.05;
  int max_detections = 50;

  int feature_size() const { return (image_size + stride - 1) / stride; }

  static DetectorConfig from_kv(const KvConfig& kv);  // "model." prefixed keys
  void to_kv(KvConfig* kv) const;
};

struct ProposalSet {
  std::vector<BBox> boxes;  // sorted by descending objectness score
  int frame_id = 0;
};

// Subset with score >= threshold, order preserved, capped at max_count.
ProposalSet select_proposals(const ProposalSet& proposals, double threshold,
                             int max_count);

struct DetectionLoss {
  double rpn_objectness = 0.0;
  double rpn_box = 0.0;
  double roi_cls = 0.0;
  double roi_box = 0.0;
  double total = 0.0;  // always the sum of the four components
};

// The anchor grid box for feature cell (iy, ix).
BBox anchor_box(int iy, int ix, const DetectorConfig& cfg);
// Standard delta decoding (dx, dy in units of the anchor size, dw/dh in
// log-space, clamped to |.| <= 4), clipped to the image.
BBox decode_box(const BBox& anchor, double dx, double dy, double dw, double dh,
                double img_w, double img_h);
std::array<double, 4> encode_box(const BBox& anchor, const BBox& target);

// Greedy NMS; boxes must be sorted by descending score. Returns kept indices.
std::vector<int> nms(const std::vector<BBox>& boxes, double iou_threshold);

struct BackboneTrace {
  Tensor x;                    // network input
  std::array<Tensor, 4> pre;   // pre-activation per block
  std::array<Tensor, 4> act;   // post-ReLU per block
  const Tensor& feature() const { return act[3]; }
};

struct RpnTrace {
  Tensor h_pre, h;    // 3x3 conv
  Tensor obj;         // 1 x Hf x Wf logits
  Tensor deltas;      // 4 x Hf x Wf
};

struct EncodeResult {
  Mat embeddings;  // N x D
  // per-box intermediates for the backward pass
  std::vector<Tensor> roi, c1_pre, c1, c2;
  std::vector<BBox> boxes;
};

// Sampled RPN targets for one frame.
struct RpnBatch {
  std::vector<int> sampled;                    // anchor flat indices
  std::vector<int> labels;                     // parallel: 1 fg / 0 bg
  std::vector<std::array<double, 4>> targets;  // valid where label == 1
};

struct RoiExample {
  BBox box;
  int label = 0;  // 0 = background, 1..num_classes = category + 1
  std::array<double, 4> target{};
};

struct Detection {
  BBox box;  // score and category filled in
};

class DetectorModel {
 public:
  DetectorModel(const DetectorConfig& cfg, uint64_t seed);

  const DetectorConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  void zero_grad();

  // ---- forward/backward pieces (trainer composes these) ----

  BackboneTrace backbone_forward(const Tensor& image) const;
  // Accumulates parameter gradients from d loss / d feature map.
  void backbone_backward(const BackboneTrace& trace, const Tensor& dfeat);

  RpnTrace rpn_forward(const Tensor& feat) const;
  ProposalSet propose(const RpnTrace& rpn) const;

  RpnBatch sample_rpn_batch(const std::vector<BBox>& gt, CounterRng& rng) const;
  // Returns (objectness, box) losses; accumulates head gradients and adds
  // the feature-map gradient into *dfeat, scaled by grad_scale.
  std::pair<double, double> rpn_loss_backward(const Tensor& feat,
                                              const RpnTrace& rpn,
                                              const RpnBatch& batch,
                                              double grad_scale, Tensor* dfeat);

  std::vector<RoiExample> sample_roi_batch(const ProposalSet& proposals,
                                           const std::vector<BBox>& gt,
                                           CounterRng& rng) const;
  std::pair<double, double> roi_loss_backward(const Tensor& feat,
                                              const std::vector<RoiExample>& rois,
                                              double grad_scale, Tensor* dfeat);

  // Fixed-size ROI features for a set of boxes (image coordinates).
  std::vector<Tensor> roi_features(const Tensor& feat,
                                   const std::vector<BBox>& boxes) const;
  // Two 3x3 convs (valid padding) + average pooling -> D-vector per box.
  std::vector<double> instance_encoder(const Tensor& roi) const;

  EncodeResult encode_instances(const Tensor& feat,
                                const std::vector<BBox>& boxes) const;
  void encode_backward(const EncodeResult& enc, const Mat& dembeddings,
                       double grad_scale, Tensor* dfeat);

  // Image-level auxiliary heads (rotation / jigsaw) on globally pooled
  // backbone features.
  std::vector<double> aux_head_forward(const Tensor& feat, bool jigsaw) const;
  void aux_head_backward(const Tensor& feat, const std::vector<double>& dlogits,
                         bool jigsaw, double grad_scale, Tensor* dfeat);

  // ---- inference ----
  std::vector<BBox> detect(const Tensor& image) const;

  // ---- checkpoints: JSON manifest + float32 little-endian blob ----
  void save(const std::string& path, const KvConfig& extra) const;
  static DetectorModel load(const std::string& path, KvConfig* extra);

 private:
  DetectorConfig cfg_;
  // backbone
  std::array<nn::Param, 4> bw_, bb_;
  // rpn
  nn::Param rpn_w_, rpn_b_, rpn_obj_w_, rpn_obj_b_, rpn_box_w_, rpn_box_b_;
  // box head
  nn::Param fc1_w_, fc1_b_, cls_w_, cls_b_, reg_w_, reg_b_;
  // instance encoder
  nn::Param enc1_w_, enc1_b_, enc2_w_, enc2_b_;
  // auxiliary heads
  nn::Param rot1_w_, rot1_b_, rot2_w_, rot2_b_;
  nn::Param jig1_w_, jig1_b_, jig2_w_, jig2_b_;

  struct RoiHeadTrace;
  RoiHeadTrace roi_head_forward(const Tensor& feat, const BBox& box) const;
};

}  // namespace cycconf::det

#endif  // CYCCONF_DETECTOR_HPP_
