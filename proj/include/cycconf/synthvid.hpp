#ifndef CYCCONF_SYNTHVID_HPP_
#define CYCCONF_SYNTHVID_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cycconf/box.hpp"
#include "cycconf/kvconfig.hpp"
#include "cycconf/tensor.hpp"

namespace cycconf::synthvid {

constexpr int kNumCategories = 3;
const char* category_name(int id);  // circle, square, triangle

// Appearance knobs of one domain of the benchmark. Transforms are applied
// in a fixed order: brightness scale, fog blend toward mid gray, additive
// Gaussian pixel noise, clamp to [0, 255].
struct DomainConfig {
  std::string name = "day";
  std::string time_of_day = "day";  // "day" | "night"
  double fog_alpha = 0.0;           // [0,1], blend toward gray 160
  int camera_shift_px = 0;          // horizontal crop offset, >= 0
  double brightness_scale = 1.0;    // [0,1]
  double noise_sigma = 0.0;         // stddev in [0,1] pixel units

  // night requires brightness_scale <= 0.5 by convention of this generator
  void validate() const;
};

struct FrameRecord {
  int index = 0;
  std::string file;          // relative to the sequence directory
  std::vector<BBox> boxes;   // category set, score unused
};

struct SequenceRecord {
  std::string id;
  std::string dir;  // absolute or manifest-relative directory
  uint64_t seed = 0;
  DomainConfig domain;
  std::vector<FrameRecord> frames;
};

// Motion/content parameters. Defaults give CPU-trainable sequences with
// enough motion for the temporal matching task.
struct SequenceParams {
  int frame_size = 128;
  int min_frames = 8, max_frames = 40;
  int min_objects = 1, max_objects = 6;
  double min_half_extent = 7.0, max_half_extent = 16.0;
  double max_speed = 2.2;       // per-axis, pixels/frame
  double pos_jitter = 0.5;      // bounded uniform jitter, pixels/frame
};

struct GeneratedSequence {
  SequenceRecord record;        // frame files named frame_%03d.png
  std::vector<ImageU8> frames;  // rendered, same order as record.frames
};

// Deterministic given (domain, params, seed). Objects move with linear
// velocity plus bounded jitter, bounce off the canvas walls and swap
// velocities on near collision so boxes stay mostly disjoint.
GeneratedSequence generate_sequence(const DomainConfig& domain,
                                    const SequenceParams& params, uint64_t seed,
                                    const std::string& sequence_id);

struct DomainSplitSpec {
  DomainConfig domain;
  int train_sequences = 0;
  int val_sequences = 0;
};

struct BenchmarkSpec {
  SequenceParams params;
  std::vector<DomainSplitSpec> domains;

  // day / night / fog / shift domains with desk-scale sequence counts
  static BenchmarkSpec default_spec();
  // Flat key=value form, e.g. "domains = day,night", "day.train = 20",
  // "night.brightness_scale = 0.3". Unlisted fields keep their defaults.
  static BenchmarkSpec from_kv(const KvConfig& kv);
};

// Writes <out_dir>/manifest.json, one subtree per domain/split, each with
// its own manifest so any split directory is loadable as a dataset.
// Refuses a non-empty out_dir unless force is set.
void generate_benchmark(const BenchmarkSpec& spec, const std::string& out_dir,
                        uint64_t master_seed, bool force);

}  // namespace cycconf::synthvid

#endif  // CYCCONF_SYNTHVID_HPP_
