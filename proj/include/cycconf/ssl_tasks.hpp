#ifndef CYCCONF_SSL_TASKS_HPP_
#define CYCCONF_SSL_TASKS_HPP_

#include <array>
#include <vector>

#include "cycconf/tensor.hpp"

namespace cycconf::ssltask {

constexpr int kNumRotations = 4;        // 0, 90, 180, 270 degrees CCW
constexpr int kNumJigsawClasses = 24;   // 4! orderings of a 2x2 grid

struct RotationSample {
  ImageU8 image;
  int label = 0;  // multiples of 90 degrees, counterclockwise
};

struct JigsawSample {
  std::array<ImageU8, 4> tiles;  // reading order: TL, TR, BL, BR
  int label = 0;                 // index into jigsaw_permutations()
};

// All 24 permutations of {0,1,2,3} in lexicographic order; index 0 is the
// identity.
const std::array<std::array<int, 4>, 24>& jigsaw_permutations();
// Inverse lookup; -1 for arrays that are not a permutation of {0,1,2,3}.
int jigsaw_permutation_index(const std::array<int, 4>& perm);

ImageU8 rotate90ccw(const ImageU8& img, int quarter_turns);

// Center-crops to crop_size x crop_size, then rotates by 90 * angle_index
// degrees counterclockwise. label = angle_index.
RotationSample rotate_and_label(const ImageU8& image, int angle_index,
                                int crop_size);

// Center-crops (crop side must be even), splits into a 2x2 grid and reorders
// the tiles: output slot k holds the original tile perm[k]. label = perm_index.
JigsawSample jigsaw_shuffle(const ImageU8& image, int perm_index, int crop_size);

// Reassembles shuffled tiles into one image for a single backbone pass.
ImageU8 assemble_tiles(const JigsawSample& sample);

// Recovers the permutation index from shuffled tiles given the unshuffled
// crop, by exact tile comparison. Used to verify the label round-trip.
int decode_jigsaw(const JigsawSample& sample, const ImageU8& original_crop);

struct CeLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d logits
};

// Stabilized cross entropy of softmax(logits) against label.
CeLossResult rotation_loss(const std::vector<double>& logits, int label);
CeLossResult jigsaw_loss(const std::vector<double>& logits, int label);

}  // namespace cycconf::ssltask

#endif  // CYCCONF_SSL_TASKS_HPP_
