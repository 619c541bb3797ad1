#include "cycconf/tensor.hpp"

namespace cycconf {

Tensor image_to_tensor(const ImageU8& img) {
  Tensor t(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c) {
    double* p = t.plane(c);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        p[y * img.width + x] = img.at(y, x, c) / 255.0 - 0.5;
  }
  return t;
}

}  // namespace cycconf
