#ifndef CYCCONF_TRAINER_HPP_
#define CYCCONF_TRAINER_HPP_

#include <string>
#include <vector>

#include "cycconf/datapipe.hpp"
#include "cycconf/detector.hpp"
#include "cycconf/kvconfig.hpp"

namespace cycconf::trainer {

enum class SslTask { kNone, kCycConf, kCycleConsistency, kRotation, kJigsaw };

SslTask parse_task(const std::string& name);
const char* task_name(SslTask task);

struct TrainConfig {
  SslTask ssl_task = SslTask::kCycConf;
  double gamma = 0.01;        // auxiliary loss weight, joint training
  double lambda_rot = 0.5;    // auxiliary loss weight, UDA mode
  double objectness_threshold = 0.8;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 4;         // frame pairs per step
  int total_iters = 2000;
  std::vector<int> lr_milestones = {1200, 1600};  // lr /= 10 at each
  uint64_t seed = 1;
  int pair_gap = 1;
  double temperature = 1.0;
  bool symmetric_cycle = false;
  int crop_size = 0;  // rotation/jigsaw crop; 0 = full frame

  void validate() const;
  static TrainConfig from_kv(const KvConfig& kv);
  void to_kv(KvConfig* kv) const;
};

struct LossBundle {
  det::DetectionLoss det;
  double ssl = 0.0;
  double total = 0.0;  // det.total + gamma * ssl (lambda_rot in UDA mode)
  int iteration = 0;
  bool skipped_ssl = false;
  double lr = 0.0;
  double n_proposals_t0 = 0.0;  // mean count above threshold, per batch
  double n_proposals_t1 = 0.0;
  double match_entropy = 0.0;   // NaN when the task has no matching step
};

// One optimizer around one model. Steps are deterministic given the config
// seed; the internal sampling stream advances with every call.
class Trainer {
 public:
  Trainer(det::DetectorModel& model, const TrainConfig& cfg);

  LossBundle joint_step(const std::vector<datapipe::FramePair>& batch);
  // Detection on labeled source pairs plus rotation on both domains; target
  // annotations are never touched.
  LossBundle uda_step(const std::vector<datapipe::FramePair>& source,
                      const std::vector<ImageU8>& target_images);

  double lr_at(int iteration) const;
  int iteration() const { return iter_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  struct PairResult;
  PairResult process_pair(const datapipe::FramePair& pair, bool with_ssl,
                          double det_scale, double ssl_scale);
  double aux_image_loss(const ImageU8& image, bool jigsaw, double grad_scale);
  void sgd_update(double lr);
  LossBundle finalize(LossBundle bundle, double ssl_weight);

  det::DetectorModel& model_;
  TrainConfig cfg_;
  CounterRng rng_;
  int iter_ = 0;
};

struct TrainOutputs {
  std::string checkpoint_path;
  std::string trace_path;
  std::string manifest_path;
};

// Full training run: experiment manifest (written before the loop), loss
// trace CSV, final checkpoint. `uda_target` switches the loop to UDA steps.
TrainOutputs train(det::DetectorModel& model,
                   const datapipe::DatasetIndex& source,
                   const datapipe::DatasetIndex* uda_target,
                   const TrainConfig& cfg, const std::string& out_dir);

}  // namespace cycconf::trainer

#endif  // CYCCONF_TRAINER_HPP_
