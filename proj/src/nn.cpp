#include "cycconf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cycconf/util.hpp"

namespace cycconf::nn {

namespace {

int64_t shape_volume(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int s : shape) n *= s;
  return n;
}

}  // namespace

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  const auto n_elem = static_cast<size_t>(shape_volume(shape));
  value.assign(n_elem, 0.0);
  grad.assign(n_elem, 0.0);
  momentum.assign(n_elem, 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Param::he_init(CounterRng& rng, int fan_in) {
  const double s = std::sqrt(2.0 / std::max(1, fan_in));
  for (double& v : value) v = rng.normal() * s;
}

Tensor conv2d_forward(const Tensor& x, const Param& w, const Param& b,
                      int stride, int pad) {
  const int in_c = x.channels(), h = x.height(), wd = x.width();
  const int out_c = w.shape[0], k = w.shape[2];
  if (w.shape[1] != in_c)
    throw ContractError("conv2d: input channels mismatch (" +
                        std::to_string(in_c) + " vs " +
                        std::to_string(w.shape[1]) + ")");
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  Tensor y(out_c, ho, wo);

  for (int co = 0; co < out_c; ++co) {
    double* yp = y.plane(co);
    const double bias = b.value[co];
    for (int i = 0; i < ho * wo; ++i) yp[i] = bias;
  }
  for (int co = 0; co < out_c; ++co) {
    double* yp = y.plane(co);
    for (int ci = 0; ci < in_c; ++ci) {
      const double* xp = x.plane(ci);
      const double* wrow = &w.value[(static_cast<size_t>(co) * in_c + ci) * k * k];
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double wv = wrow[ky * k + kx];
          if (wv == 0.0) continue;
          // valid output range for this kernel offset
          int y0 = 0;
          while (y0 < ho && y0 * stride + ky - pad < 0) ++y0;
          int y1 = ho;
          while (y1 > y0 && (y1 - 1) * stride + ky - pad >= h) --y1;
          int x0 = 0;
          while (x0 < wo && x0 * stride + kx - pad < 0) ++x0;
          int x1 = wo;
          while (x1 > x0 && (x1 - 1) * stride + kx - pad >= wd) --x1;
          for (int oy = y0; oy < y1; ++oy) {
            const double* xr = xp + static_cast<size_t>(oy * stride + ky - pad) * wd;
            double* yr = yp + static_cast<size_t>(oy) * wo;
            if (stride == 1) {
              const double* xs = xr + kx - pad;
              for (int ox = x0; ox < x1; ++ox) yr[ox] += wv * xs[ox];
            } else {
              for (int ox = x0; ox < x1; ++ox)
                yr[ox] += wv * xr[ox * stride + kx - pad];
            }
          }
        }
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, Param& w, Param& b, const Tensor& dy,
                     int stride, int pad, Tensor* dx) {
  const int in_c = x.channels(), h = x.height(), wd = x.width();
  const int out_c = w.shape[0], k = w.shape[2];
  const int ho = dy.height(), wo = dy.width();

  for (int co = 0; co < out_c; ++co) {
    const double* dyp = dy.plane(co);
    double acc = 0.0;
    for (int i = 0; i < ho * wo; ++i) acc += dyp[i];
    b.grad[co] += acc;
  }

  for (int co = 0; co < out_c; ++co) {
    const double* dyp = dy.plane(co);
    for (int ci = 0; ci < in_c; ++ci) {
      const double* xp = x.plane(ci);
      double* dxp = dx ? dx->plane(ci) : nullptr;
      const size_t wbase = (static_cast<size_t>(co) * in_c + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          int y0 = 0;
          while (y0 < ho && y0 * stride + ky - pad < 0) ++y0;
          int y1 = ho;
          while (y1 > y0 && (y1 - 1) * stride + ky - pad >= h) --y1;
          int x0 = 0;
          while (x0 < wo && x0 * stride + kx - pad < 0) ++x0;
          int x1 = wo;
          while (x1 > x0 && (x1 - 1) * stride + kx - pad >= wd) --x1;

          double wgrad = 0.0;
          const double wv = w.value[wbase + ky * k + kx];
          for (int oy = y0; oy < y1; ++oy) {
            const double* xr = xp + static_cast<size_t>(oy * stride + ky - pad) * wd;
            const double* dyr = dyp + static_cast<size_t>(oy) * wo;
            double* dxr = dxp ? dxp + static_cast<size_t>(oy * stride + ky - pad) * wd
                              : nullptr;
            if (stride == 1) {
              const int off = kx - pad;
              for (int ox = x0; ox < x1; ++ox) {
                wgrad += dyr[ox] * xr[ox + off];
                if (dxr) dxr[ox + off] += wv * dyr[ox];
              }
            } else {
              for (int ox = x0; ox < x1; ++ox) {
                const int xi = ox * stride + kx - pad;
                wgrad += dyr[ox] * xr[xi];
                if (dxr) dxr[xi] += wv * dyr[ox];
              }
            }
          }
          w.grad[wbase + ky * k + kx] += wgrad;
        }
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  double* p = y.data();
  for (size_t i = 0; i < y.size(); ++i)
    if (p[i] < 0.0) p[i] = 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  const double* xp = x.data();
  double* dp = dx.data();
  for (size_t i = 0; i < dx.size(); ++i)
    if (xp[i] <= 0.0) dp[i] = 0.0;
  return dx;
}

std::vector<double> global_avg_pool(const Tensor& x) {
  std::vector<double> out(x.channels());
  const double inv = 1.0 / (x.height() * x.width());
  for (int c = 0; c < x.channels(); ++c) {
    const double* p = x.plane(c);
    double acc = 0.0;
    for (int i = 0; i < x.height() * x.width(); ++i) acc += p[i];
    out[c] = acc * inv;
  }
  return out;
}

Tensor global_avg_pool_backward(const std::vector<double>& dy, int c, int h, int w) {
  Tensor dx(c, h, w);
  const double inv = 1.0 / (h * w);
  for (int ci = 0; ci < c; ++ci) {
    double* p = dx.plane(ci);
    const double g = dy[ci] * inv;
    for (int i = 0; i < h * w; ++i) p[i] = g;
  }
  return dx;
}

std::vector<double> linear_forward(const std::vector<double>& x, const Param& w,
                                   const Param& b) {
  const int out_n = w.shape[0], in_n = w.shape[1];
  if (static_cast<int>(x.size()) != in_n)
    throw ContractError("linear: input size mismatch");
  std::vector<double> y(out_n);
  for (int o = 0; o < out_n; ++o) {
    const double* wr = &w.value[static_cast<size_t>(o) * in_n];
    double acc = b.value[o];
    for (int i = 0; i < in_n; ++i) acc += wr[i] * x[i];
    y[o] = acc;
  }
  return y;
}

std::vector<double> linear_backward(const std::vector<double>& x, Param& w,
                                    Param& b, const std::vector<double>& dy) {
  const int out_n = w.shape[0], in_n = w.shape[1];
  std::vector<double> dx(in_n, 0.0);
  for (int o = 0; o < out_n; ++o) {
    const double g = dy[o];
    b.grad[o] += g;
    const double* wr = &w.value[static_cast<size_t>(o) * in_n];
    double* gr = &w.grad[static_cast<size_t>(o) * in_n];
    for (int i = 0; i < in_n; ++i) {
      gr[i] += g * x[i];
      dx[i] += g * wr[i];
    }
  }
  return dx;
}

std::vector<double> relu_vec(const std::vector<double>& x) {
  std::vector<double> y = x;
  for (double& v : y)
    if (v < 0.0) v = 0.0;
  return y;
}

std::vector<double> relu_vec_backward(const std::vector<double>& x,
                                      const std::vector<double>& dy) {
  std::vector<double> dx = dy;
  for (size_t i = 0; i < dx.size(); ++i)
    if (x[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

namespace {

struct BilinearTap {
  int y0, x0, y1, x1;
  double w00, w01, w10, w11;
  bool outside;
};

BilinearTap bilinear_tap(double fy, double fx, int h, int w) {
  BilinearTap t{};
  if (fy < -1.0 || fy > h || fx < -1.0 || fx > w) {
    t.outside = true;
    return t;
  }
  if (fy < 0.0) fy = 0.0;
  if (fx < 0.0) fx = 0.0;
  t.y0 = static_cast<int>(fy);
  t.x0 = static_cast<int>(fx);
  t.y1 = t.y0 + 1;
  t.x1 = t.x0 + 1;
  double ly = fy - t.y0, lx = fx - t.x0;
  if (t.y0 >= h - 1) {
    t.y0 = t.y1 = h - 1;
    ly = 0.0;
  }
  if (t.x0 >= w - 1) {
    t.x0 = t.x1 = w - 1;
    lx = 0.0;
  }
  const double hy = 1.0 - ly, hx = 1.0 - lx;
  t.w00 = hy * hx;
  t.w01 = hy * lx;
  t.w10 = ly * hx;
  t.w11 = ly * lx;
  t.outside = false;
  return t;
}

}  // namespace

Tensor roi_align(const Tensor& feat, double x1, double y1, double x2, double y2,
                 int out_size, double stride) {
  if (x2 <= x1 || y2 <= y1)
    throw ContractError("roi_align: degenerate box");
  const int c = feat.channels(), h = feat.height(), w = feat.width();
  const double fx1 = x1 / stride - 0.5, fy1 = y1 / stride - 0.5;
  const double fx2 = x2 / stride - 0.5, fy2 = y2 / stride - 0.5;
  const double bin_h = (fy2 - fy1) / out_size;
  const double bin_w = (fx2 - fx1) / out_size;

  Tensor out(c, out_size, out_size);
  for (int by = 0; by < out_size; ++by) {
    for (int bx = 0; bx < out_size; ++bx) {
      // fixed 2x2 sample grid per bin
      BilinearTap taps[4];
      int nt = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double fy = fy1 + bin_h * (by + (sy + 0.5) / 2.0);
          const double fx = fx1 + bin_w * (bx + (sx + 0.5) / 2.0);
          taps[nt++] = bilinear_tap(fy, fx, h, w);
        }
      for (int ci = 0; ci < c; ++ci) {
        const double* p = feat.plane(ci);
        double acc = 0.0;
        for (const auto& t : taps) {
          if (t.outside) continue;
          acc += t.w00 * p[t.y0 * w + t.x0] + t.w01 * p[t.y0 * w + t.x1] +
                 t.w10 * p[t.y1 * w + t.x0] + t.w11 * p[t.y1 * w + t.x1];
        }
        out.at(ci, by, bx) = acc * 0.25;
      }
    }
  }
  return out;
}

void roi_align_backward(const Tensor& dy, double x1, double y1, double x2,
                        double y2, int out_size, double stride, Tensor* dfeat) {
  const int c = dfeat->channels(), h = dfeat->height(), w = dfeat->width();
  const double fx1 = x1 / stride - 0.5, fy1 = y1 / stride - 0.5;
  const double fx2 = x2 / stride - 0.5, fy2 = y2 / stride - 0.5;
  const double bin_h = (fy2 - fy1) / out_size;
  const double bin_w = (fx2 - fx1) / out_size;

  for (int by = 0; by < out_size; ++by) {
    for (int bx = 0; bx < out_size; ++bx) {
      BilinearTap taps[4];
      int nt = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double fy = fy1 + bin_h * (by + (sy + 0.5) / 2.0);
          const double fx = fx1 + bin_w * (bx + (sx + 0.5) / 2.0);
          taps[nt++] = bilinear_tap(fy, fx, h, w);
        }
      for (int ci = 0; ci < c; ++ci) {
        double* p = dfeat->plane(ci);
        const double g = dy.at(ci, by, bx) * 0.25;
        for (const auto& t : taps) {
          if (t.outside) continue;
          p[t.y0 * w + t.x0] += g * t.w00;
          p[t.y0 * w + t.x1] += g * t.w01;
          p[t.y1 * w + t.x0] += g * t.w10;
          p[t.y1 * w + t.x1] += g * t.w11;
        }
      }
    }
  }
}

ScalarGrad bce_with_logits(double logit, double target) {
  ScalarGrad r;
  const double z = logit;
  r.loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  r.grad = sigmoid(z) - target;
  return r;
}

VecGrad softmax_cross_entropy(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw ContractError("softmax_cross_entropy: label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double logz = std::log(z) + mx;
  VecGrad r;
  r.loss = logz - logits[label];
  r.grad.resize(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) {
    r.grad[k] = std::exp(logits[k] - logz);
    if (static_cast<int>(k) == label) r.grad[k] -= 1.0;
  }
  return r;
}

ScalarGrad smooth_l1(double pred, double target) {
  ScalarGrad r;
  const double d = pred - target;
  if (std::abs(d) < 1.0) {
    r.loss = 0.5 * d * d;
    r.grad = d;
  } else {
    r.loss = std::abs(d) - 0.5;
    r.grad = d > 0 ? 1.0 : -1.0;
  }
  return r;
}

double sigmoid(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace cycconf::nn
