#ifndef CYCCONF_TENSOR_HPP_
#define CYCCONF_TENSOR_HPP_

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cycconf {

// CHW double tensor used for images and feature maps.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0)
      : c_(channels), h_(height), w_(width),
        v_(static_cast<size_t>(channels) * height * width, fill) {
    if (channels < 0 || height < 0 || width < 0)
      throw std::invalid_argument("Tensor: negative shape");
  }

  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return v_.size(); }
  bool empty() const { return v_.empty(); }

  double& at(int c, int y, int x) {
    return v_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }
  double at(int c, int y, int x) const {
    return v_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }
  double* plane(int c) { return v_.data() + static_cast<size_t>(c) * h_ * w_; }
  const double* plane(int c) const { return v_.data() + static_cast<size_t>(c) * h_ * w_; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  void fill(double x) { v_.assign(v_.size(), x); }

  bool all_finite() const {
    for (double x : v_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<double> v_;
};

// 8-bit interleaved image (row-major, RGB). Storage format for frames on
// disk and in the dataset index; converted to Tensor at the model boundary.
struct ImageU8 {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;  // height*width*channels, interleaved

  ImageU8() = default;
  ImageU8(int h, int w, int c, uint8_t fill = 0)
      : height(h), width(w), channels(c),
        pixels(static_cast<size_t>(h) * w * c, fill) {}

  uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const ImageU8& o) const {
    return height == o.height && width == o.width && channels == o.channels &&
           pixels == o.pixels;
  }
};

// Maps [0,255] to [-0.5, 0.5]. Fixed affine mapping, no per-image statistics,
// so global brightness shifts stay visible to the network.
Tensor image_to_tensor(const ImageU8& img);

}  // namespace cycconf

#endif  // CYCCONF_TENSOR_HPP_
