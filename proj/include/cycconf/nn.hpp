#ifndef CYCCONF_NN_HPP_
#define CYCCONF_NN_HPP_

#include <string>
#include <vector>

#include "cycconf/rng.hpp"
#include "cycconf/tensor.hpp"

namespace cycconf::nn {

// A named parameter block with its gradient and momentum buffers. Layout of
// `value` depends on the owner (conv weights are [out][in][ky][kx], linear
// weights are [out][in]).
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> momentum;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  size_t size() const { return value.size(); }
  void zero_grad();
  void he_init(CounterRng& rng, int fan_in);
};

// ---- convolution ----

Tensor conv2d_forward(const Tensor& x, const Param& w, const Param& b,
                      int stride, int pad);
// Accumulates into w.grad / b.grad; writes input gradient into *dx when
// non-null (dx must be zero-initialized to x's shape by the caller).
void conv2d_backward(const Tensor& x, Param& w, Param& b, const Tensor& dy,
                     int stride, int pad, Tensor* dx);

// ---- pointwise / pooling ----

Tensor relu(const Tensor& x);
// dx = dy where x > 0. In-place friendly: returns a new tensor.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

std::vector<double> global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const std::vector<double>& dy, int c, int h, int w);

// ---- fully connected ----

std::vector<double> linear_forward(const std::vector<double>& x, const Param& w,
                                   const Param& b);
std::vector<double> linear_backward(const std::vector<double>& x, Param& w,
                                    Param& b, const std::vector<double>& dy);

std::vector<double> relu_vec(const std::vector<double>& x);
std::vector<double> relu_vec_backward(const std::vector<double>& x,
                                      const std::vector<double>& dy);

// ---- ROI Align ----
//
// Pools `out_size` x `out_size` bins from `feat` inside an image-space box.
// Continuous coordinates follow the half-pixel-aligned convention: image
// coordinate v maps to feature coordinate v / stride - 0.5, and each bin is
// averaged over a fixed 2x2 grid of bilinear samples.
Tensor roi_align(const Tensor& feat, double x1, double y1, double x2, double y2,
                 int out_size, double stride);
void roi_align_backward(const Tensor& dy, double x1, double y1, double x2,
                        double y2, int out_size, double stride, Tensor* dfeat);

// ---- losses ----

struct ScalarGrad {
  double loss = 0.0;
  double grad = 0.0;
};

// Numerically stable binary cross entropy on a logit.
ScalarGrad bce_with_logits(double logit, double target);

struct VecGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

VecGrad softmax_cross_entropy(const std::vector<double>& logits, int label);

// Elementwise smooth L1 (beta = 1): 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
ScalarGrad smooth_l1(double pred, double target);

double sigmoid(double z);

}  // namespace cycconf::nn

#endif  // CYCCONF_NN_HPP_
