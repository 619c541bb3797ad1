#include "cycconf/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

#include <json.hpp>

#include "cycconf/cycmatch.hpp"
#include "cycconf/ssl_tasks.hpp"
#include "cycconf/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cycconf::trainer {

SslTask parse_task(const std::string& name) {
  if (name == "none") return SslTask::kNone;
  if (name == "cycconf") return SslTask::kCycConf;
  if (name == "cycle_consistency") return SslTask::kCycleConsistency;
  if (name == "rotation") return SslTask::kRotation;
  if (name == "jigsaw") return SslTask::kJigsaw;
  throw ContractError("unknown ssl task: " + name);
}

const char* task_name(SslTask task) {
  switch (task) {
    case SslTask::kNone: return "none";
    case SslTask::kCycConf: return "cycconf";
    case SslTask::kCycleConsistency: return "cycle_consistency";
    case SslTask::kRotation: return "rotation";
    case SslTask::kJigsaw: return "jigsaw";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (gamma < 0.0) throw ContractError("gamma must be >= 0");
  if (lambda_rot < 0.0) throw ContractError("lambda_rot must be >= 0");
  if (objectness_threshold < 0.0 || objectness_threshold > 1.0)
    throw ContractError("objectness_threshold must lie in [0,1]");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (total_iters < 0) throw ContractError("total_iters must be >= 0");
  if (pair_gap < 1) throw ContractError("pair_gap must be >= 1");
  if (temperature <= 0.0) throw ContractError("temperature must be positive");
  int prev = -1;
  for (int m : lr_milestones) {
    if (m <= prev) throw ContractError("lr_milestones must be strictly increasing");
    if (m >= total_iters && total_iters > 0)
      throw ContractError("lr_milestones must be < total_iters");
    prev = m;
  }
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.ssl_task = parse_task(kv.get_string("ssl_task", task_name(c.ssl_task)));
  c.gamma = kv.get_double("gamma", c.gamma);
  c.lambda_rot = kv.get_double("lambda_rot", c.lambda_rot);
  c.objectness_threshold =
      kv.get_double("objectness_threshold", c.objectness_threshold);
  c.lr = kv.get_double("lr", c.lr);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.total_iters = static_cast<int>(kv.get_int("total_iters", c.total_iters));
  std::vector<int64_t> ms_default(c.lr_milestones.begin(), c.lr_milestones.end());
  c.lr_milestones.clear();
  for (int64_t m : kv.get_int_list("lr_milestones", ms_default))
    c.lr_milestones.push_back(static_cast<int>(m));
  c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<int64_t>(c.seed)));
  c.pair_gap = static_cast<int>(kv.get_int("pair_gap", c.pair_gap));
  c.temperature = kv.get_double("temperature", c.temperature);
  c.symmetric_cycle = kv.get_bool("symmetric_cycle", c.symmetric_cycle);
  c.crop_size = static_cast<int>(kv.get_int("crop_size", c.crop_size));
  c.validate();
  return c;
}

void TrainConfig::to_kv(KvConfig* kv) const {
  kv->set("ssl_task", task_name(ssl_task));
  kv->set("gamma", format_double(gamma));
  kv->set("lambda_rot", format_double(lambda_rot));
  kv->set("objectness_threshold", format_double(objectness_threshold));
  kv->set("lr", format_double(lr));
  kv->set("momentum", format_double(momentum));
  kv->set("weight_decay", format_double(weight_decay));
  kv->set("batch_size", std::to_string(batch_size));
  kv->set("total_iters", std::to_string(total_iters));
  std::string ms;
  for (size_t i = 0; i < lr_milestones.size(); ++i)
    ms += (i ? "," : "") + std::to_string(lr_milestones[i]);
  kv->set("lr_milestones", ms);
  kv->set("seed", std::to_string(seed));
  kv->set("pair_gap", std::to_string(pair_gap));
  kv->set("temperature", format_double(temperature));
  kv->set("symmetric_cycle", symmetric_cycle ? "true" : "false");
  kv->set("crop_size", std::to_string(crop_size));
}

Trainer::Trainer(det::DetectorModel& model, const TrainConfig& cfg)
    : model_(model), cfg_(cfg), rng_(CounterRng::derive(cfg.seed, 13)) {
  cfg_.validate();
}

double Trainer::lr_at(int iteration) const {
  double lr = cfg_.lr;
  for (int m : cfg_.lr_milestones)
    if (iteration >= m) lr *= 0.1;
  return lr;
}

struct Trainer::PairResult {
  det::DetectionLoss det;   // mean of the two frames
  double ssl = 0.0;
  bool ssl_skipped = true;
  int n0 = 0, n1 = 0;
  double entropy = std::numeric_limits<double>::quiet_NaN();
};

// Detection losses for both frames plus, when requested, the instance-level
// matching loss between the two frames' selected proposals. Gradients are
// accumulated into the model scaled by det_scale / ssl_scale.
Trainer::PairResult Trainer::process_pair(const datapipe::FramePair& pair,
                                          bool with_ssl, double det_scale,
                                          double ssl_scale) {
  PairResult out;
  const auto& cfg = model_.config();
  const Tensor images[2] = {image_to_tensor(pair.image0),
                            image_to_tensor(pair.image1)};
  const std::vector<BBox>* gt[2] = {&pair.frame0->boxes, &pair.frame1->boxes};

  det::BackboneTrace traces[2];
  det::ProposalSet selected[2];
  det::EncodeResult enc[2];
  Tensor dfeat[2];

  for (int f = 0; f < 2; ++f) {
    traces[f] = model_.backbone_forward(images[f]);
    const Tensor& feat = traces[f].feature();
    dfeat[f] = Tensor(feat.channels(), feat.height(), feat.width());

    const det::RpnTrace rpn = model_.rpn_forward(feat);
    const det::RpnBatch rpn_batch = model_.sample_rpn_batch(*gt[f], rng_);
    const auto [obj_loss, box_loss] =
        model_.rpn_loss_backward(feat, rpn, rpn_batch, det_scale, &dfeat[f]);

    const det::ProposalSet proposals = model_.propose(rpn);
    const auto rois = model_.sample_roi_batch(proposals, *gt[f], rng_);
    const auto [cls_loss, roi_box_loss] =
        model_.roi_loss_backward(feat, rois, det_scale, &dfeat[f]);

    out.det.rpn_objectness += 0.5 * obj_loss;
    out.det.rpn_box += 0.5 * box_loss;
    out.det.roi_cls += 0.5 * cls_loss;
    out.det.roi_box += 0.5 * roi_box_loss;

    selected[f] = det::select_proposals(proposals, cfg_.objectness_threshold,
                                        cfg.proposal_cap);
  }
  out.det.total = out.det.rpn_objectness + out.det.rpn_box + out.det.roi_cls +
                  out.det.roi_box;
  out.n0 = static_cast<int>(selected[0].boxes.size());
  out.n1 = static_cast<int>(selected[1].boxes.size());

  if (with_ssl && out.n0 > 0 && out.n1 > 0) {
    for (int f = 0; f < 2; ++f)
      enc[f] = model_.encode_instances(traces[f].feature(), selected[f].boxes);

    const cycmatch::MatchConfig mcfg{cfg_.temperature, cfg_.symmetric_cycle};
    const bool confusion = cfg_.ssl_task == SslTask::kCycConf;
    const auto res =
        confusion
            ? cycmatch::cycle_confusion_loss(enc[0].embeddings, enc[1].embeddings, mcfg)
            : cycmatch::cycle_consistency_loss(enc[0].embeddings, enc[1].embeddings, mcfg);

    out.ssl = res.loss;
    out.ssl_skipped = false;
    model_.encode_backward(enc[0], res.grad_u, ssl_scale, &dfeat[0]);
    model_.encode_backward(enc[1], res.grad_v, ssl_scale, &dfeat[1]);

    const Mat alpha = cycmatch::forward_match_weights(
        cycmatch::pairwise_sq_dist(enc[0].embeddings, enc[1].embeddings),
        confusion ? cycmatch::MatchMode::kConfusion
                  : cycmatch::MatchMode::kConsistency,
        cfg_.temperature);
    out.entropy = cycmatch::matching_entropy(alpha);
  }

  for (int f = 0; f < 2; ++f) model_.backbone_backward(traces[f], dfeat[f]);
  return out;
}

double Trainer::aux_image_loss(const ImageU8& image, bool jigsaw,
                               double grad_scale) {
  const int crop = cfg_.crop_size > 0 ? cfg_.crop_size
                                      : std::min(image.width, image.height);
  ImageU8 input;
  int label = 0;
  if (jigsaw) {
    label = static_cast<int>(rng_.uniform_int(0, ssltask::kNumJigsawClasses - 1));
    input = ssltask::assemble_tiles(ssltask::jigsaw_shuffle(image, label, crop));
  } else {
    label = static_cast<int>(rng_.uniform_int(0, ssltask::kNumRotations - 1));
    input = ssltask::rotate_and_label(image, label, crop).image;
  }

  const Tensor x = image_to_tensor(input);
  const det::BackboneTrace bt = model_.backbone_forward(x);
  const std::vector<double> logits = model_.aux_head_forward(bt.feature(), jigsaw);
  const auto ce = jigsaw ? ssltask::jigsaw_loss(logits, label)
                         : ssltask::rotation_loss(logits, label);

  Tensor dfeat(bt.feature().channels(), bt.feature().height(),
               bt.feature().width());
  model_.aux_head_backward(bt.feature(), ce.grad, jigsaw, grad_scale, &dfeat);
  model_.backbone_backward(bt, dfeat);
  return ce.loss;
}

void Trainer::sgd_update(double lr) {
  for (nn::Param* p : model_.params()) {
    for (size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i] + cfg_.weight_decay * p->value[i];
      p->momentum[i] = cfg_.momentum * p->momentum[i] + g;
      p->value[i] -= lr * p->momentum[i];
    }
  }
}

LossBundle Trainer::finalize(LossBundle bundle, double ssl_weight) {
  bundle.total = bundle.skipped_ssl ? bundle.det.total
                                    : bundle.det.total + ssl_weight * bundle.ssl;
  if (!std::isfinite(bundle.det.total) || !std::isfinite(bundle.total) ||
      (!bundle.skipped_ssl && !std::isfinite(bundle.ssl)))
    throw NumericError("non-finite loss at iteration " +
                       std::to_string(bundle.iteration));
  const double lr = lr_at(iter_);
  bundle.lr = lr;
  bundle.iteration = iter_;
  sgd_update(lr);
  ++iter_;
  return bundle;
}

LossBundle Trainer::joint_step(const std::vector<datapipe::FramePair>& batch) {
  if (batch.empty()) throw ContractError("joint_step: empty batch");
  model_.zero_grad();
  const auto b = static_cast<double>(batch.size());
  const double det_scale = 0.5 / b;  // detection loss averaged over both frames
  const bool matching = cfg_.ssl_task == SslTask::kCycConf ||
                        cfg_.ssl_task == SslTask::kCycleConsistency;
  const bool image_task = cfg_.ssl_task == SslTask::kRotation ||
                          cfg_.ssl_task == SslTask::kJigsaw;

  LossBundle bundle;
  double entropy_sum = 0.0;
  int entropy_count = 0;
  for (const auto& pair : batch) {
    PairResult r = process_pair(pair, matching, det_scale, cfg_.gamma / b);
    bundle.det.rpn_objectness += r.det.rpn_objectness / b;
    bundle.det.rpn_box += r.det.rpn_box / b;
    bundle.det.roi_cls += r.det.roi_cls / b;
    bundle.det.roi_box += r.det.roi_box / b;
    bundle.n_proposals_t0 += r.n0 / b;
    bundle.n_proposals_t1 += r.n1 / b;
    if (matching && !r.ssl_skipped) {
      bundle.ssl += r.ssl / b;
      bundle.skipped_ssl = false;
      entropy_sum += r.entropy;
      ++entropy_count;
    }
    if (image_task) {
      bundle.ssl +=
          aux_image_loss(pair.image0, cfg_.ssl_task == SslTask::kJigsaw,
                         cfg_.gamma / b) / b;
      bundle.skipped_ssl = false;
    }
  }
  if (!matching && !image_task) bundle.skipped_ssl = true;
  else if (matching && entropy_count == 0) bundle.skipped_ssl = true;
  bundle.match_entropy = entropy_count > 0
                             ? entropy_sum / entropy_count
                             : std::numeric_limits<double>::quiet_NaN();
  bundle.det.total = bundle.det.rpn_objectness + bundle.det.rpn_box +
                     bundle.det.roi_cls + bundle.det.roi_box;
  return finalize(bundle, cfg_.gamma);
}

LossBundle Trainer::uda_step(const std::vector<datapipe::FramePair>& source,
                             const std::vector<ImageU8>& target_images) {
  if (source.empty()) throw ContractError("uda_step: empty source batch");
  if (cfg_.ssl_task != SslTask::kRotation && cfg_.ssl_task != SslTask::kJigsaw)
    throw ContractError("uda_step: requires an image-level task (rotation or jigsaw)");
  model_.zero_grad();
  const auto b = static_cast<double>(source.size());
  const double det_scale = 0.5 / b;
  const bool jigsaw = cfg_.ssl_task == SslTask::kJigsaw;

  LossBundle bundle;
  for (const auto& pair : source) {
    PairResult r = process_pair(pair, false, det_scale, 0.0);
    bundle.det.rpn_objectness += r.det.rpn_objectness / b;
    bundle.det.rpn_box += r.det.rpn_box / b;
    bundle.det.roi_cls += r.det.roi_cls / b;
    bundle.det.roi_box += r.det.roi_box / b;
    bundle.n_proposals_t0 += r.n0 / b;
    bundle.n_proposals_t1 += r.n1 / b;
  }
  // ssl = mean source rotation loss + mean target rotation loss
  for (const auto& pair : source)
    bundle.ssl += aux_image_loss(pair.image0, jigsaw, cfg_.lambda_rot / b) / b;
  const auto tb = static_cast<double>(target_images.size());
  for (const auto& img : target_images)
    bundle.ssl += aux_image_loss(img, jigsaw, cfg_.lambda_rot / tb) / tb;

  bundle.skipped_ssl = false;
  bundle.match_entropy = std::numeric_limits<double>::quiet_NaN();
  bundle.det.total = bundle.det.rpn_objectness + bundle.det.rpn_box +
                     bundle.det.roi_cls + bundle.det.roi_box;
  return finalize(bundle, cfg_.lambda_rot);
}

namespace {

std::string trace_header() {
  return "iteration,det_total,ssl,total,lr,n_proposals_t0,n_proposals_t1,"
         "match_entropy\n";
}

std::string trace_row(const LossBundle& b) {
  std::string row = std::to_string(b.iteration);
  row += "," + format_double(b.det.total);
  row += "," + format_double(b.ssl);
  row += "," + format_double(b.total);
  row += "," + format_double(b.lr);
  row += "," + format_double(b.n_proposals_t0);
  row += "," + format_double(b.n_proposals_t1);
  row += ",";
  row += std::isnan(b.match_entropy) ? "nan" : format_double(b.match_entropy);
  row += "\n";
  return row;
}

}  // namespace

TrainOutputs train(det::DetectorModel& model,
                   const datapipe::DatasetIndex& source,
                   const datapipe::DatasetIndex* uda_target,
                   const TrainConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  if (uda_target && cfg.ssl_task != SslTask::kRotation &&
      cfg.ssl_task != SslTask::kJigsaw)
    throw ContractError("UDA mode requires an image-level task");

  fs::create_directories(out_dir);
  TrainOutputs outputs;
  outputs.checkpoint_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
  outputs.trace_path = (fs::path(out_dir) / "trace.csv").string();
  outputs.manifest_path = (fs::path(out_dir) / "experiment.json").string();

  // experiment manifest goes first, before any training state exists
  KvConfig cfg_kv;
  cfg.to_kv(&cfg_kv);
  model.config().to_kv(&cfg_kv);
  json cfg_json = json::object();
  for (const auto& [k, v] : cfg_kv.entries()) cfg_json[k] = v;
  json manifest{
      {"schema_version", 1},
      {"format", "cycconf-experiment"},
      {"tool_version", "0.1.0"},
      {"seed", cfg.seed},
      {"mode", uda_target ? "uda" : "ood"},
      {"config", cfg_json},
      {"dataset",
       {{"root", source.root_dir}, {"manifest_hash", hex64(source.manifest_hash)}}},
      {"target_dataset",
       uda_target ? json{{"root", uda_target->root_dir},
                         {"manifest_hash", hex64(uda_target->manifest_hash)}}
                  : json(nullptr)},
      {"outputs",
       {{"checkpoint", "checkpoint.ckpt"}, {"trace", "trace.csv"}}}};
  atomic_write_file(outputs.manifest_path, manifest.dump(2) + "\n");

  Trainer trainer(model, cfg);
  CounterRng pair_rng(CounterRng::derive(cfg.seed, 11));
  CounterRng target_rng(CounterRng::derive(cfg.seed, 12));

  std::string trace = trace_header();
  for (int it = 0; it < cfg.total_iters; ++it) {
    std::vector<datapipe::FramePair> batch;
    batch.reserve(cfg.batch_size);
    for (int k = 0; k < cfg.batch_size; ++k)
      batch.push_back(datapipe::sample_frame_pair(source, pair_rng, cfg.pair_gap));

    LossBundle bundle;
    try {
      if (uda_target) {
        std::vector<ImageU8> target_images;
        target_images.reserve(cfg.batch_size);
        for (int k = 0; k < cfg.batch_size; ++k)
          target_images.push_back(datapipe::sample_frame(*uda_target, target_rng));
        bundle = trainer.uda_step(batch, target_images);
      } else {
        bundle = trainer.joint_step(batch);
      }
    } catch (const NumericError& e) {
      json dump{{"schema_version", 1},
                {"error", e.what()},
                {"iteration", it},
                {"trace_rows", it}};
      atomic_write_file((fs::path(out_dir) / "abort_dump.json").string(),
                        dump.dump(2) + "\n");
      atomic_write_file(outputs.trace_path, trace);
      throw;
    }
    trace += trace_row(bundle);
  }
  atomic_write_file(outputs.trace_path, trace);

  KvConfig extra;
  extra.set("trained_task", task_name(cfg.ssl_task));
  extra.set("seed", std::to_string(cfg.seed));
  extra.set("total_iters", std::to_string(cfg.total_iters));
  extra.set("objectness_threshold", format_double(cfg.objectness_threshold));
  extra.set("temperature", format_double(cfg.temperature));
  model.save(outputs.checkpoint_path, extra);
  return outputs;
}

}  // namespace cycconf::trainer
