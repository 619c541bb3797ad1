#include "cycconf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "cycconf/util.hpp"

using json = nlohmann::json;

namespace cycconf::det {

namespace {

constexpr int kBlockStrides[4] = {1, 2, 2, 2};
constexpr double kDeltaClamp = 4.0;

std::vector<double> flatten(const Tensor& t) {
  return std::vector<double>(t.data(), t.data() + t.size());
}

}  // namespace

DetectorConfig DetectorConfig::from_kv(const KvConfig& kv) {
  DetectorConfig c;
  c.image_size = static_cast<int>(kv.get_int("model.image_size", c.image_size));
  c.in_channels = static_cast<int>(kv.get_int("model.in_channels", c.in_channels));
  auto widths = kv.get_int_list("model.widths", {c.widths[0], c.widths[1], c.widths[2], c.widths[3]});
  if (widths.size() != 4) throw DataError("model.widths: expected 4 entries");
  for (int i = 0; i < 4; ++i) c.widths[i] = static_cast<int>(widths[i]);
  c.rpn_channels = static_cast<int>(kv.get_int("model.rpn_channels", c.rpn_channels));
  c.anchor_size = kv.get_double("model.anchor_size", c.anchor_size);
  c.proposal_cap = static_cast<int>(kv.get_int("model.proposal_cap", c.proposal_cap));
  c.box_head_hidden = static_cast<int>(kv.get_int("model.box_head_hidden", c.box_head_hidden));
  c.num_classes = static_cast<int>(kv.get_int("model.num_classes", c.num_classes));
  c.encoder_mid_channels =
      static_cast<int>(kv.get_int("model.encoder_mid_channels", c.encoder_mid_channels));
  c.embedding_dim = static_cast<int>(kv.get_int("model.embedding_dim", c.embedding_dim));
  c.rpn_batch = static_cast<int>(kv.get_int("model.rpn_batch", c.rpn_batch));
  c.roi_batch = static_cast<int>(kv.get_int("model.roi_batch", c.roi_batch));
  c.nms_iou = kv.get_double("model.nms_iou", c.nms_iou);
  c.score_floor = kv.get_double("model.score_floor", c.score_floor);
  c.max_detections = static_cast<int>(kv.get_int("model.max_detections", c.max_detections));
  return c;
}

void DetectorConfig::to_kv(KvConfig* kv) const {
  kv->set("model.image_size", std::to_string(image_size));
  kv->set("model.in_channels", std::to_string(in_channels));
  kv->set("model.widths", std::to_string(widths[0]) + "," + std::to_string(widths[1]) +
                              "," + std::to_string(widths[2]) + "," + std::to_string(widths[3]));
  kv->set("model.rpn_channels", std::to_string(rpn_channels));
  kv->set("model.anchor_size", format_double(anchor_size));
  kv->set("model.proposal_cap", std::to_string(proposal_cap));
  kv->set("model.box_head_hidden", std::to_string(box_head_hidden));
  kv->set("model.num_classes", std::to_string(num_classes));
  kv->set("model.encoder_mid_channels", std::to_string(encoder_mid_channels));
  kv->set("model.embedding_dim", std::to_string(embedding_dim));
  kv->set("model.rpn_batch", std::to_string(rpn_batch));
  kv->set("model.roi_batch", std::to_string(roi_batch));
  kv->set("model.nms_iou", format_double(nms_iou));
  kv->set("model.score_floor", format_double(score_floor));
  kv->set("model.max_detections", std::to_string(max_detections));
}

ProposalSet select_proposals(const ProposalSet& proposals, double threshold,
                             int max_count) {
  if (threshold < 0.0 || threshold > 1.0)
    throw ContractError("select_proposals: threshold out of [0,1]");
  ProposalSet out;
  out.frame_id = proposals.frame_id;
  for (const auto& b : proposals.boxes) {
    if (b.score < threshold) continue;
    out.boxes.push_back(b);
    if (static_cast<int>(out.boxes.size()) >= max_count) break;
  }
  return out;
}

BBox anchor_box(int iy, int ix, const DetectorConfig& cfg) {
  const double cx = (ix + 0.5) * cfg.stride;
  const double cy = (iy + 0.5) * cfg.stride;
  const double half = cfg.anchor_size / 2.0;
  return {cx - half, cy - half, cx + half, cy + half};
}

BBox decode_box(const BBox& anchor, double dx, double dy, double dw, double dh,
                double img_w, double img_h) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x1 + aw / 2.0, acy = anchor.y1 + ah / 2.0;
  dw = std::clamp(dw, -kDeltaClamp, kDeltaClamp);
  dh = std::clamp(dh, -kDeltaClamp, kDeltaClamp);
  const double cx = acx + dx * aw;
  const double cy = acy + dy * ah;
  const double w = aw * std::exp(dw);
  const double h = ah * std::exp(dh);
  BBox out{cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
  return clip_box(out, img_w, img_h);
}

std::array<double, 4> encode_box(const BBox& anchor, const BBox& target) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x1 + aw / 2.0, acy = anchor.y1 + ah / 2.0;
  const double tw = target.width(), th = target.height();
  const double tcx = target.x1 + tw / 2.0, tcy = target.y1 + th / 2.0;
  return {(tcx - acx) / aw, (tcy - acy) / ah, std::log(tw / aw), std::log(th / ah)};
}

std::vector<int> nms(const std::vector<BBox>& boxes, double iou_threshold) {
  std::vector<int> keep;
  std::vector<bool> removed(boxes.size(), false);
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (removed[i]) continue;
    keep.push_back(static_cast<int>(i));
    for (size_t j = i + 1; j < boxes.size(); ++j) {
      if (!removed[j] && box_iou(boxes[i], boxes[j]) > iou_threshold)
        removed[j] = true;
    }
  }
  return keep;
}

// ---- model ----

DetectorModel::DetectorModel(const DetectorConfig& cfg, uint64_t seed) : cfg_(cfg) {
  const auto& w = cfg.widths;
  int in_c = cfg.in_channels;
  for (int i = 0; i < 4; ++i) {
    bw_[i] = nn::Param("backbone.conv" + std::to_string(i + 1) + ".w",
                       {w[i], in_c, 3, 3});
    bb_[i] = nn::Param("backbone.conv" + std::to_string(i + 1) + ".b", {w[i]});
    in_c = w[i];
  }
  const int c4 = w[3];
  rpn_w_ = nn::Param("rpn.conv.w", {cfg.rpn_channels, c4, 3, 3});
  rpn_b_ = nn::Param("rpn.conv.b", {cfg.rpn_channels});
  rpn_obj_w_ = nn::Param("rpn.obj.w", {1, cfg.rpn_channels, 1, 1});
  rpn_obj_b_ = nn::Param("rpn.obj.b", {1});
  rpn_box_w_ = nn::Param("rpn.box.w", {4, cfg.rpn_channels, 1, 1});
  rpn_box_b_ = nn::Param("rpn.box.b", {4});

  const int roi_flat = c4 * cfg.roi_size * cfg.roi_size;
  fc1_w_ = nn::Param("box_head.fc1.w", {cfg.box_head_hidden, roi_flat});
  fc1_b_ = nn::Param("box_head.fc1.b", {cfg.box_head_hidden});
  cls_w_ = nn::Param("box_head.cls.w", {cfg.num_classes + 1, cfg.box_head_hidden});
  cls_b_ = nn::Param("box_head.cls.b", {cfg.num_classes + 1});
  reg_w_ = nn::Param("box_head.reg.w", {4, cfg.box_head_hidden});
  reg_b_ = nn::Param("box_head.reg.b", {4});

  enc1_w_ = nn::Param("encoder.conv1.w", {cfg.encoder_mid_channels, c4, 3, 3});
  enc1_b_ = nn::Param("encoder.conv1.b", {cfg.encoder_mid_channels});
  enc2_w_ = nn::Param("encoder.conv2.w", {cfg.embedding_dim, cfg.encoder_mid_channels, 3, 3});
  enc2_b_ = nn::Param("encoder.conv2.b", {cfg.embedding_dim});

  rot1_w_ = nn::Param("rot_head.fc1.w", {32, c4});
  rot1_b_ = nn::Param("rot_head.fc1.b", {32});
  rot2_w_ = nn::Param("rot_head.fc2.w", {4, 32});
  rot2_b_ = nn::Param("rot_head.fc2.b", {4});
  jig1_w_ = nn::Param("jig_head.fc1.w", {32, c4});
  jig1_b_ = nn::Param("jig_head.fc1.b", {32});
  jig2_w_ = nn::Param("jig_head.fc2.w", {24, 32});
  jig2_b_ = nn::Param("jig_head.fc2.b", {24});

  CounterRng rng(CounterRng::derive(seed, 0x6d6f64656c));  // "model"
  for (nn::Param* p : params()) {
    if (p->shape.size() == 1) continue;  // biases stay zero
    int fan_in = 1;
    for (size_t i = 1; i < p->shape.size(); ++i) fan_in *= p->shape[i];
    p->he_init(rng, fan_in);
  }
}

std::vector<nn::Param*> DetectorModel::params() {
  return {&bw_[0], &bb_[0], &bw_[1], &bb_[1], &bw_[2], &bb_[2], &bw_[3], &bb_[3],
          &rpn_w_, &rpn_b_, &rpn_obj_w_, &rpn_obj_b_, &rpn_box_w_, &rpn_box_b_,
          &fc1_w_, &fc1_b_, &cls_w_, &cls_b_, &reg_w_, &reg_b_,
          &enc1_w_, &enc1_b_, &enc2_w_, &enc2_b_,
          &rot1_w_, &rot1_b_, &rot2_w_, &rot2_b_,
          &jig1_w_, &jig1_b_, &jig2_w_, &jig2_b_};
}

std::vector<const nn::Param*> DetectorModel::params() const {
  auto* self = const_cast<DetectorModel*>(this);
  std::vector<const nn::Param*> out;
  for (nn::Param* p : self->params()) out.push_back(p);
  return out;
}

void DetectorModel::zero_grad() {
  for (nn::Param* p : params()) p->zero_grad();
}

BackboneTrace DetectorModel::backbone_forward(const Tensor& image) const {
  // fully convolutional: any spatial size >= the receptive stride works
  // (auxiliary tasks may feed crops); proposal decoding assumes image_size
  if (image.channels() != cfg_.in_channels || image.height() < cfg_.stride ||
      image.width() < cfg_.stride)
    throw ContractError("backbone_forward: image shape mismatch");
  BackboneTrace t;
  t.x = image;
  const Tensor* cur = &t.x;
  for (int i = 0; i < 4; ++i) {
    t.pre[i] = nn::conv2d_forward(*cur, bw_[i], bb_[i], kBlockStrides[i], 1);
    t.act[i] = nn::relu(t.pre[i]);
    cur = &t.act[i];
  }
  return t;
}

void DetectorModel::backbone_backward(const BackboneTrace& t, const Tensor& dfeat) {
  Tensor grad = nn::relu_backward(t.pre[3], dfeat);
  for (int i = 3; i >= 0; --i) {
    const Tensor& input = i == 0 ? t.x : t.act[i - 1];
    if (i == 0) {
      nn::conv2d_backward(input, bw_[0], bb_[0], grad, kBlockStrides[0], 1, nullptr);
    } else {
      Tensor dx(input.channels(), input.height(), input.width());
      nn::conv2d_backward(input, bw_[i], bb_[i], grad, kBlockStrides[i], 1, &dx);
      grad = nn::relu_backward(t.pre[i - 1], dx);
    }
  }
}

RpnTrace DetectorModel::rpn_forward(const Tensor& feat) const {
  RpnTrace t;
  t.h_pre = nn::conv2d_forward(feat, rpn_w_, rpn_b_, 1, 1);
  t.h = nn::relu(t.h_pre);
  t.obj = nn::conv2d_forward(t.h, rpn_obj_w_, rpn_obj_b_, 1, 0);
  t.deltas = nn::conv2d_forward(t.h, rpn_box_w_, rpn_box_b_, 1, 0);
  return t;
}

ProposalSet DetectorModel::propose(const RpnTrace& rpn) const {
  const int fs = cfg_.feature_size();
  const double img = cfg_.image_size;
  std::vector<BBox> boxes;
  boxes.reserve(static_cast<size_t>(fs) * fs);
  for (int iy = 0; iy < fs; ++iy) {
    for (int ix = 0; ix < fs; ++ix) {
      const BBox anchor = anchor_box(iy, ix, cfg_);
      BBox b = decode_box(anchor, rpn.deltas.at(0, iy, ix), rpn.deltas.at(1, iy, ix),
                          rpn.deltas.at(2, iy, ix), rpn.deltas.at(3, iy, ix), img, img);
      b.score = nn::sigmoid(rpn.obj.at(0, iy, ix));
      if (!b.valid()) continue;
      boxes.push_back(b);
    }
  }
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const BBox& a, const BBox& b) { return a.score > b.score; });
  if (static_cast<int>(boxes.size()) > cfg_.proposal_cap)
    boxes.resize(cfg_.proposal_cap);
  ProposalSet out;
  out.boxes = std::move(boxes);
  return out;
}

RpnBatch DetectorModel::sample_rpn_batch(const std::vector<BBox>& gt,
                                         CounterRng& rng) const {
  const int fs = cfg_.feature_size();
  const int n_anchors = fs * fs;
  std::vector<int> label(n_anchors, 0);        // 0 bg, 1 fg, -1 ignore
  std::vector<int> matched(n_anchors, -1);

  if (!gt.empty()) {
    for (int a = 0; a < n_anchors; ++a) {
      const BBox anchor = anchor_box(a / fs, a % fs, cfg_);
      double best = 0.0;
      int best_gt = -1;
      for (size_t g = 0; g < gt.size(); ++g) {
        const double v = box_iou(anchor, gt[g]);
        if (v > best) {
          best = v;
          best_gt = static_cast<int>(g);
        }
      }
      if (best >= cfg_.rpn_pos_iou) {
        label[a] = 1;
        matched[a] = best_gt;
      } else if (best >= cfg_.rpn_neg_iou) {
        label[a] = -1;
      }
    }
    // the best anchor for each ground-truth box is always positive
    for (size_t g = 0; g < gt.size(); ++g) {
      double best = 0.01;
      int best_a = -1;
      for (int a = 0; a < n_anchors; ++a) {
        const double v = box_iou(anchor_box(a / fs, a % fs, cfg_), gt[g]);
        if (v > best) {
          best = v;
          best_a = a;
        }
      }
      if (best_a >= 0) {
        label[best_a] = 1;
        matched[best_a] = static_cast<int>(g);
      }
    }
  }

  std::vector<int> fg, bg;
  for (int a = 0; a < n_anchors; ++a) {
    if (label[a] == 1) fg.push_back(a);
    else if (label[a] == 0) bg.push_back(a);
  }
  // random subsample without replacement
  auto take = [&rng](std::vector<int>& pool, int want) {
    std::vector<int> out;
    while (!pool.empty() && static_cast<int>(out.size()) < want) {
      const auto k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1));
      out.push_back(pool[k]);
      pool.erase(pool.begin() + static_cast<long>(k));
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  RpnBatch batch;
  std::vector<int> chosen_fg = take(fg, cfg_.rpn_fg_cap);
  std::vector<int> chosen_bg = take(bg, cfg_.rpn_batch - static_cast<int>(chosen_fg.size()));
  for (int a : chosen_fg) {
    batch.sampled.push_back(a);
    batch.labels.push_back(1);
    batch.targets.push_back(encode_box(anchor_box(a / fs, a % fs, cfg_), gt[matched[a]]));
  }
  for (int a : chosen_bg) {
    batch.sampled.push_back(a);
    batch.labels.push_back(0);
    batch.targets.push_back({0, 0, 0, 0});
  }
  return batch;
}

std::pair<double, double> DetectorModel::rpn_loss_backward(
    const Tensor& feat, const RpnTrace& rpn, const RpnBatch& batch,
    double grad_scale, Tensor* dfeat) {
  const int fs = cfg_.feature_size();
  Tensor dobj(1, fs, fs);
  Tensor ddeltas(4, fs, fs);

  const int n = static_cast<int>(batch.sampled.size());
  if (n == 0) return {0.0, 0.0};
  int n_fg = 0;
  for (int v : batch.labels) n_fg += v;

  double obj_loss = 0.0, box_loss = 0.0;
  for (int s = 0; s < n; ++s) {
    const int a = batch.sampled[s];
    const int iy = a / fs, ix = a % fs;
    const auto bce = nn::bce_with_logits(rpn.obj.at(0, iy, ix),
                                         batch.labels[s] ? 1.0 : 0.0);
    obj_loss += bce.loss / n;
    dobj.at(0, iy, ix) += bce.grad / n;
    if (batch.labels[s] == 1) {
      for (int c = 0; c < 4; ++c) {
        const auto sl = nn::smooth_l1(rpn.deltas.at(c, iy, ix), batch.targets[s][c]);
        box_loss += sl.loss / n_fg;
        ddeltas.at(c, iy, ix) += sl.grad / n_fg;
      }
    }
  }

  // scale and push through the two 1x1 convs and the shared 3x3 conv
  for (size_t i = 0; i < dobj.size(); ++i) dobj.data()[i] *= grad_scale;
  for (size_t i = 0; i < ddeltas.size(); ++i) ddeltas.data()[i] *= grad_scale;

  Tensor dh(cfg_.rpn_channels, fs, fs);
  nn::conv2d_backward(rpn.h, rpn_obj_w_, rpn_obj_b_, dobj, 1, 0, &dh);
  nn::conv2d_backward(rpn.h, rpn_box_w_, rpn_box_b_, ddeltas, 1, 0, &dh);
  Tensor dh_pre = nn::relu_backward(rpn.h_pre, dh);
  nn::conv2d_backward(feat, rpn_w_, rpn_b_, dh_pre, 1, 1, dfeat);
  return {obj_loss, box_loss};
}

std::vector<RoiExample> DetectorModel::sample_roi_batch(
    const ProposalSet& proposals, const std::vector<BBox>& gt,
    CounterRng& rng) const {
  std::vector<BBox> candidates = proposals.boxes;
  for (const auto& g : gt) candidates.push_back(g);  // guaranteed foreground

  std::vector<RoiExample> fg, bg;
  for (const auto& c : candidates) {
    if (!c.valid() || c.width() < 2.0 || c.height() < 2.0) continue;
    double best = 0.0;
    int best_gt = -1;
    for (size_t g = 0; g < gt.size(); ++g) {
      const double v = box_iou(c, gt[g]);
      if (v > best) {
        best = v;
        best_gt = static_cast<int>(g);
      }
    }
    RoiExample ex;
    ex.box = c;
    if (best >= cfg_.roi_fg_iou) {
      ex.label = gt[best_gt].category + 1;
      ex.target = encode_box(c, gt[best_gt]);
      fg.push_back(ex);
    } else {
      ex.label = 0;
      bg.push_back(ex);
    }
  }

  auto take = [&rng](std::vector<RoiExample>& pool, int want) {
    std::vector<RoiExample> out;
    while (!pool.empty() && static_cast<int>(out.size()) < want) {
      const auto k = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1));
      out.push_back(pool[k]);
      pool.erase(pool.begin() + static_cast<long>(k));
    }
    return out;
  };
  std::vector<RoiExample> batch = take(fg, cfg_.roi_fg_cap);
  auto bgs = take(bg, cfg_.roi_batch - static_cast<int>(batch.size()));
  batch.insert(batch.end(), bgs.begin(), bgs.end());
  return batch;
}

struct DetectorModel::RoiHeadTrace {
  Tensor roi;
  std::vector<double> flat, z1, a1, cls, reg;
};

DetectorModel::RoiHeadTrace DetectorModel::roi_head_forward(const Tensor& feat,
                                                            const BBox& box) const {
  RoiHeadTrace t;
  t.roi = nn::roi_align(feat, box.x1, box.y1, box.x2, box.y2, cfg_.roi_size,
                        cfg_.stride);
  t.flat = flatten(t.roi);
  t.z1 = nn::linear_forward(t.flat, fc1_w_, fc1_b_);
  t.a1 = nn::relu_vec(t.z1);
  t.cls = nn::linear_forward(t.a1, cls_w_, cls_b_);
  t.reg = nn::linear_forward(t.a1, reg_w_, reg_b_);
  return t;
}

std::pair<double, double> DetectorModel::roi_loss_backward(
    const Tensor& feat, const std::vector<RoiExample>& rois, double grad_scale,
    Tensor* dfeat) {
  if (rois.empty()) return {0.0, 0.0};
  const int n = static_cast<int>(rois.size());
  int n_fg = 0;
  for (const auto& r : rois) n_fg += r.label > 0 ? 1 : 0;

  double cls_loss = 0.0, box_loss = 0.0;
  for (const auto& r : rois) {
    RoiHeadTrace t = roi_head_forward(feat, r.box);
    const auto ce = nn::softmax_cross_entropy(t.cls, r.label);
    cls_loss += ce.loss / n;

    std::vector<double> dcls(ce.grad);
    for (double& v : dcls) v *= grad_scale / n;
    std::vector<double> dreg(4, 0.0);
    if (r.label > 0) {
      for (int c = 0; c < 4; ++c) {
        const auto sl = nn::smooth_l1(t.reg[c], r.target[c]);
        box_loss += sl.loss / n_fg;
        dreg[c] = sl.grad * grad_scale / n_fg;
      }
    }

    std::vector<double> da1 = nn::linear_backward(t.a1, cls_w_, cls_b_, dcls);
    std::vector<double> da1b = nn::linear_backward(t.a1, reg_w_, reg_b_, dreg);
    for (size_t i = 0; i < da1.size(); ++i) da1[i] += da1b[i];
    std::vector<double> dz1 = nn::relu_vec_backward(t.z1, da1);
    std::vector<double> dflat = nn::linear_backward(t.flat, fc1_w_, fc1_b_, dz1);

    Tensor droi(t.roi.channels(), t.roi.height(), t.roi.width());
    std::memcpy(droi.data(), dflat.data(), dflat.size() * sizeof(double));
    nn::roi_align_backward(droi, r.box.x1, r.box.y1, r.box.x2, r.box.y2,
                           cfg_.roi_size, cfg_.stride, dfeat);
  }
  return {cls_loss, box_loss};
}

std::vector<Tensor> DetectorModel::roi_features(
    const Tensor& feat, const std::vector<BBox>& boxes) const {
  std::vector<Tensor> out;
  out.reserve(boxes.size());
  for (const auto& b : boxes)
    out.push_back(nn::roi_align(feat, b.x1, b.y1, b.x2, b.y2, cfg_.roi_size,
                                cfg_.stride));
  return out;
}

std::vector<double> DetectorModel::instance_encoder(const Tensor& roi) const {
  if (roi.channels() != cfg_.widths[3] || roi.height() != cfg_.roi_size ||
      roi.width() != cfg_.roi_size)
    throw ContractError("instance_encoder: roi shape mismatch");
  Tensor c1 = nn::relu(nn::conv2d_forward(roi, enc1_w_, enc1_b_, 1, 0));
  Tensor c2 = nn::conv2d_forward(c1, enc2_w_, enc2_b_, 1, 0);
  return nn::global_avg_pool(c2);
}

EncodeResult DetectorModel::encode_instances(const Tensor& feat,
                                             const std::vector<BBox>& boxes) const {
  EncodeResult res;
  res.embeddings = Mat(static_cast<int>(boxes.size()), cfg_.embedding_dim);
  res.boxes = boxes;
  for (size_t i = 0; i < boxes.size(); ++i) {
    const BBox& b = boxes[i];
    Tensor roi = nn::roi_align(feat, b.x1, b.y1, b.x2, b.y2, cfg_.roi_size,
                               cfg_.stride);
    Tensor c1_pre = nn::conv2d_forward(roi, enc1_w_, enc1_b_, 1, 0);
    Tensor c1 = nn::relu(c1_pre);
    Tensor c2 = nn::conv2d_forward(c1, enc2_w_, enc2_b_, 1, 0);
    std::vector<double> emb = nn::global_avg_pool(c2);
    for (int d = 0; d < cfg_.embedding_dim; ++d)
      res.embeddings(static_cast<int>(i), d) = emb[d];
    res.roi.push_back(std::move(roi));
    res.c1_pre.push_back(std::move(c1_pre));
    res.c1.push_back(std::move(c1));
    res.c2.push_back(std::move(c2));
  }
  return res;
}

void DetectorModel::encode_backward(const EncodeResult& enc, const Mat& demb,
                                    double grad_scale, Tensor* dfeat) {
  for (int i = 0; i < demb.rows(); ++i) {
    std::vector<double> dpool(cfg_.embedding_dim);
    for (int d = 0; d < cfg_.embedding_dim; ++d)
      dpool[d] = demb(i, d) * grad_scale;
    const Tensor& c2 = enc.c2[i];
    Tensor dc2 = nn::global_avg_pool_backward(dpool, c2.channels(), c2.height(),
                                              c2.width());
    Tensor dc1(enc.c1[i].channels(), enc.c1[i].height(), enc.c1[i].width());
    nn::conv2d_backward(enc.c1[i], enc2_w_, enc2_b_, dc2, 1, 0, &dc1);
    Tensor dc1_pre = nn::relu_backward(enc.c1_pre[i], dc1);
    Tensor droi(enc.roi[i].channels(), enc.roi[i].height(), enc.roi[i].width());
    nn::conv2d_backward(enc.roi[i], enc1_w_, enc1_b_, dc1_pre, 1, 0, &droi);
    const BBox& b = enc.boxes[i];
    nn::roi_align_backward(droi, b.x1, b.y1, b.x2, b.y2, cfg_.roi_size,
                           cfg_.stride, dfeat);
  }
}

std::vector<double> DetectorModel::aux_head_forward(const Tensor& feat,
                                                    bool jigsaw) const {
  const std::vector<double> pooled = nn::global_avg_pool(feat);
  const nn::Param& w1 = jigsaw ? jig1_w_ : rot1_w_;
  const nn::Param& b1 = jigsaw ? jig1_b_ : rot1_b_;
  const nn::Param& w2 = jigsaw ? jig2_w_ : rot2_w_;
  const nn::Param& b2 = jigsaw ? jig2_b_ : rot2_b_;
  return nn::linear_forward(nn::relu_vec(nn::linear_forward(pooled, w1, b1)), w2, b2);
}

void DetectorModel::aux_head_backward(const Tensor& feat,
                                      const std::vector<double>& dlogits,
                                      bool jigsaw, double grad_scale,
                                      Tensor* dfeat) {
  nn::Param& w1 = jigsaw ? jig1_w_ : rot1_w_;
  nn::Param& b1 = jigsaw ? jig1_b_ : rot1_b_;
  nn::Param& w2 = jigsaw ? jig2_w_ : rot2_w_;
  nn::Param& b2 = jigsaw ? jig2_b_ : rot2_b_;

  const std::vector<double> pooled = nn::global_avg_pool(feat);
  const std::vector<double> z1 = nn::linear_forward(pooled, w1, b1);
  const std::vector<double> a1 = nn::relu_vec(z1);

  std::vector<double> dl(dlogits);
  for (double& v : dl) v *= grad_scale;
  std::vector<double> da1 = nn::linear_backward(a1, w2, b2, dl);
  std::vector<double> dz1 = nn::relu_vec_backward(z1, da1);
  std::vector<double> dpooled = nn::linear_backward(pooled, w1, b1, dz1);
  Tensor dgap = nn::global_avg_pool_backward(dpooled, feat.channels(),
                                             feat.height(), feat.width());
  for (size_t i = 0; i < dgap.size(); ++i) dfeat->data()[i] += dgap.data()[i];
}

std::vector<BBox> DetectorModel::detect(const Tensor& image) const {
  const BackboneTrace bt = backbone_forward(image);
  const RpnTrace rt = rpn_forward(bt.feature());
  const ProposalSet props = propose(rt);

  std::vector<BBox> all;
  for (const auto& p : props.boxes) {
    if (p.width() < 2.0 || p.height() < 2.0) continue;
    RoiHeadTrace t = roi_head_forward(bt.feature(), p);
    // softmax over background + classes
    double mx = *std::max_element(t.cls.begin(), t.cls.end());
    double z = 0.0;
    for (double v : t.cls) z += std::exp(v - mx);
    BBox refined = decode_box(p, t.reg[0], t.reg[1], t.reg[2], t.reg[3],
                              cfg_.image_size, cfg_.image_size);
    for (int c = 0; c < cfg_.num_classes; ++c) {
      const double score = std::exp(t.cls[c + 1] - mx) / z;
      if (score < cfg_.score_floor) continue;
      BBox b = refined;
      b.score = score;
      b.category = c;
      if (!b.valid()) continue;
      all.push_back(b);
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const BBox& a, const BBox& b) { return a.score > b.score; });
  // class-wise NMS
  std::vector<BBox> out;
  for (int c = 0; c < cfg_.num_classes; ++c) {
    std::vector<BBox> cls_boxes;
    for (const auto& b : all)
      if (b.category == c) cls_boxes.push_back(b);
    for (int k : nms(cls_boxes, cfg_.nms_iou)) out.push_back(cls_boxes[k]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const BBox& a, const BBox& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > cfg_.max_detections)
    out.resize(cfg_.max_detections);
  return out;
}

// ---- checkpoint ----

namespace {
constexpr char kCkptMagic[8] = {'C', 'C', 'F', 'C', 'K', 'P', 'T', '1'};
}

void DetectorModel::save(const std::string& path, const KvConfig& extra) const {
  KvConfig cfg_kv;
  cfg_.to_kv(&cfg_kv);

  json manifest;
  manifest["schema_version"] = 1;
  manifest["format"] = "cycconf-checkpoint";
  manifest["version"] = 1;
  json cfg_json = json::object();
  for (const auto& [k, v] : cfg_kv.entries()) cfg_json[k] = v;
  manifest["config"] = cfg_json;
  json extra_json = json::object();
  for (const auto& [k, v] : extra.entries()) extra_json[k] = v;
  manifest["extra"] = extra_json;

  json tensors = json::array();
  size_t offset = 0;
  std::vector<float> blob;
  for (const nn::Param* p : params()) {
    tensors.push_back({{"name", p->name}, {"shape", p->shape},
                       {"offset", offset}, {"size", p->size()}});
    for (double v : p->value) blob.push_back(static_cast<float>(v));
    offset += p->size();
  }
  manifest["tensors"] = tensors;

  const std::string mstr = manifest.dump();
  std::string out(kCkptMagic, 8);
  const auto mlen = static_cast<uint32_t>(mstr.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((mlen >> (8 * i)) & 0xff));
  out += mstr;
  out.append(reinterpret_cast<const char*>(blob.data()), blob.size() * sizeof(float));
  atomic_write_file(path, out);
}

DetectorModel DetectorModel::load(const std::string& path, KvConfig* extra) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCkptMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  uint32_t mlen = 0;
  for (int i = 0; i < 4; ++i)
    mlen |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  if (bytes.size() < 12 + mlen) throw DataError("truncated checkpoint: " + path);

  json manifest;
  try {
    manifest = json::parse(bytes.substr(12, mlen));
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest parse error (" + path + "): " + e.what());
  }

  KvConfig cfg_kv;
  for (auto& [k, v] : manifest.at("config").items())
    cfg_kv.set(k, v.get<std::string>());
  if (extra) {
    for (auto& [k, v] : manifest.at("extra").items())
      extra->set(k, v.get<std::string>());
  }
  DetectorModel model(DetectorConfig::from_kv(cfg_kv), 0);

  const char* blob = bytes.data() + 12 + mlen;
  const size_t blob_floats = (bytes.size() - 12 - mlen) / sizeof(float);
  auto params = model.params();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw DataError("checkpoint tensor count mismatch: " + path);
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i]->name ||
        t.at("size").get<size_t>() != params[i]->size())
      throw DataError("checkpoint tensor layout mismatch at " +
                      params[i]->name + ": " + path);
    const size_t off = t.at("offset").get<size_t>();
    if (off + params[i]->size() > blob_floats)
      throw DataError("checkpoint blob too short: " + path);
    for (size_t k = 0; k < params[i]->size(); ++k) {
      float f;
      std::memcpy(&f, blob + (off + k) * sizeof(float), sizeof(float));
      params[i]->value[k] = static_cast<double>(f);
    }
  }
  return model;
}

}  // namespace cycconf::det
