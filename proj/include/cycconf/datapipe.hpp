#ifndef CYCCONF_DATAPIPE_HPP_
#define CYCCONF_DATAPIPE_HPP_

#include <map>
#include <string>
#include <vector>

#include "cycconf/rng.hpp"
#include "cycconf/synthvid.hpp"

namespace cycconf::datapipe {

// Validated view over one benchmark directory (a split subtree or the root).
// Frames stay on disk; images are decoded on demand.
struct DatasetIndex {
  std::string root_dir;
  uint64_t manifest_hash = 0;
  int frame_size = 0;
  std::vector<synthvid::SequenceRecord> sequences;  // dir is absolute
  // attribute -> value -> positions into `sequences`
  std::map<std::string, std::map<std::string, std::vector<int>>> attributes;

  size_t total_frames() const;
};

// Loads and validates <dir>/manifest.json and every referenced sequence.
// Frames may omit boxes/categories entirely (unlabeled data); when present
// they must be consistent and within frame bounds.
DatasetIndex load_dataset(const std::string& dir);

// Filtered copy; the result is disjoint from the complementary value set.
DatasetIndex split_by_attribute(const DatasetIndex& index,
                                const std::string& attribute,
                                const std::string& value);

ImageU8 load_frame(const synthvid::SequenceRecord& seq, int frame_index);

struct FramePair {
  const synthvid::SequenceRecord* sequence = nullptr;  // borrowed from the index
  int t0 = 0;
  int gap = 1;
  ImageU8 image0, image1;
  const synthvid::FrameRecord* frame0 = nullptr;
  const synthvid::FrameRecord* frame1 = nullptr;
};

// Uniform over sequences with at least gap+1 frames, then uniform over valid
// start frames. Throws DataError when no sequence admits the gap.
FramePair sample_frame_pair(const DatasetIndex& index, CounterRng& rng, int gap);

// Uniform single-frame sample (used for unlabeled target batches).
ImageU8 sample_frame(const DatasetIndex& index, CounterRng& rng);

}  // namespace cycconf::datapipe

#endif  // CYCCONF_DATAPIPE_HPP_
