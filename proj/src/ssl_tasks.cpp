#include "cycconf/ssl_tasks.hpp"

#include <algorithm>
#include <cmath>

#include "cycconf/util.hpp"

namespace cycconf::ssltask {

namespace {

ImageU8 center_crop(const ImageU8& img, int crop_size) {
  if (crop_size <= 0 || crop_size > img.width || crop_size > img.height)
    throw ContractError("crop size " + std::to_string(crop_size) +
                        " does not fit image " + std::to_string(img.width) +
                        "x" + std::to_string(img.height));
  const int x0 = (img.width - crop_size) / 2;
  const int y0 = (img.height - crop_size) / 2;
  ImageU8 out(crop_size, crop_size, img.channels);
  for (int y = 0; y < crop_size; ++y)
    for (int x = 0; x < crop_size; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

CeLossResult cross_entropy(const std::vector<double>& logits, int label,
                           int expected_classes, const char* what) {
  if (static_cast<int>(logits.size()) != expected_classes)
    throw ContractError(std::string(what) + ": expected " +
                        std::to_string(expected_classes) + " logits, got " +
                        std::to_string(logits.size()));
  if (label < 0 || label >= expected_classes)
    throw ContractError(std::string(what) + ": label out of range");
  for (double z : logits)
    if (!std::isfinite(z))
      throw NumericError(std::string(what) + ": non-finite logit");

  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double logz = std::log(z) + mx;

  CeLossResult res;
  res.loss = logz - logits[label];
  res.grad.resize(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) {
    res.grad[k] = std::exp(logits[k] - logz);
    if (static_cast<int>(k) == label) res.grad[k] -= 1.0;
  }
  return res;
}

}  // namespace

const std::array<std::array<int, 4>, 24>& jigsaw_permutations() {
  static const auto table = [] {
    std::array<std::array<int, 4>, 24> t{};
    std::array<int, 4> p = {0, 1, 2, 3};
    int i = 0;
    do {
      t[i++] = p;
    } while (std::next_permutation(p.begin(), p.end()));
    return t;
  }();
  return table;
}

int jigsaw_permutation_index(const std::array<int, 4>& perm) {
  const auto& table = jigsaw_permutations();
  for (int i = 0; i < kNumJigsawClasses; ++i)
    if (table[i] == perm) return i;
  return -1;
}

ImageU8 rotate90ccw(const ImageU8& img, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  ImageU8 out = img;
  // One quarter turn CCW maps source pixel (x, y) to (y, W-1-x).
  while (q-- > 0) {
    ImageU8 next(out.width, out.height, out.channels);
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < out.channels; ++c)
          next.at(out.width - 1 - x, y, c) = out.at(y, x, c);
    out = std::move(next);
  }
  return out;
}

RotationSample rotate_and_label(const ImageU8& image, int angle_index,
                                int crop_size) {
  if (angle_index < 0 || angle_index >= kNumRotations)
    throw ContractError("rotate_and_label: angle index out of range");
  RotationSample s;
  s.image = rotate90ccw(center_crop(image, crop_size), angle_index);
  s.label = angle_index;
  return s;
}

JigsawSample jigsaw_shuffle(const ImageU8& image, int perm_index,
                            int crop_size) {
  if (perm_index < 0 || perm_index >= kNumJigsawClasses)
    throw ContractError("jigsaw_shuffle: permutation index out of range");
  if (crop_size % 2 != 0)
    throw ContractError("jigsaw_shuffle: crop side must be even");
  const ImageU8 crop = center_crop(image, crop_size);
  const int half = crop_size / 2;

  std::array<ImageU8, 4> grid;  // reading order
  for (int t = 0; t < 4; ++t) {
    const int ty = (t / 2) * half;
    const int tx = (t % 2) * half;
    ImageU8 tile(half, half, crop.channels);
    for (int y = 0; y < half; ++y)
      for (int x = 0; x < half; ++x)
        for (int c = 0; c < crop.channels; ++c)
          tile.at(y, x, c) = crop.at(ty + y, tx + x, c);
    grid[t] = std::move(tile);
  }

  JigsawSample s;
  const auto& perm = jigsaw_permutations()[perm_index];
  for (int k = 0; k < 4; ++k) s.tiles[k] = grid[perm[k]];
  s.label = perm_index;
  return s;
}

ImageU8 assemble_tiles(const JigsawSample& sample) {
  const ImageU8& t0 = sample.tiles[0];
  ImageU8 out(t0.height * 2, t0.width * 2, t0.channels);
  for (int k = 0; k < 4; ++k) {
    const ImageU8& tile = sample.tiles[k];
    const int oy = (k / 2) * t0.height;
    const int ox = (k % 2) * t0.width;
    for (int y = 0; y < tile.height; ++y)
      for (int x = 0; x < tile.width; ++x)
        for (int c = 0; c < tile.channels; ++c)
          out.at(oy + y, ox + x, c) = tile.at(y, x, c);
  }
  return out;
}

int decode_jigsaw(const JigsawSample& sample, const ImageU8& original_crop) {
  const int half = original_crop.width / 2;
  std::array<ImageU8, 4> grid;
  for (int t = 0; t < 4; ++t) {
    const int ty = (t / 2) * half;
    const int tx = (t % 2) * half;
    ImageU8 tile(half, half, original_crop.channels);
    for (int y = 0; y < half; ++y)
      for (int x = 0; x < half; ++x)
        for (int c = 0; c < original_crop.channels; ++c)
          tile.at(y, x, c) = original_crop.at(ty + y, tx + x, c);
    grid[t] = std::move(tile);
  }
  std::array<int, 4> perm{};
  for (int k = 0; k < 4; ++k) {
    perm[k] = -1;
    for (int t = 0; t < 4; ++t) {
      if (sample.tiles[k] == grid[t]) {
        perm[k] = t;
        break;
      }
    }
    if (perm[k] < 0) return -1;
  }
  return jigsaw_permutation_index(perm);
}

CeLossResult rotation_loss(const std::vector<double>& logits, int label) {
  return cross_entropy(logits, label, kNumRotations, "rotation_loss");
}

CeLossResult jigsaw_loss(const std::vector<double>& logits, int label) {
  return cross_entropy(logits, label, kNumJigsawClasses, "jigsaw_loss");
}

}  // namespace cycconf::ssltask
