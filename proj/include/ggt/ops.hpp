#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <tuple>

#include "ggt/tensor.hpp"

namespace ggt {

/// How a backward pass treats the signal at ReLU nodes.
///   Backprop:  signal * 1[input > 0]
///   Deconvnet: signal * 1[signal > 0]
///   Guided:    signal * 1[input > 0] * 1[signal > 0]
enum class BackwardRule { Backprop, Deconvnet, Guided };

inline const char* to_string(BackwardRule r) {
  switch (r) {
    case BackwardRule::Backprop: return "backprop";
    case BackwardRule::Deconvnet: return "deconvnet";
    case BackwardRule::Guided: return "guided";
  }
  return "?";
}

namespace detail {

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int padding) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be NCHW, got " + shape_str(x.shape));
  if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be OIKK, got " + shape_str(w.shape));
  if (x.dim(1) != w.dim(1)) {
    throw std::invalid_argument("conv2d: input channels " + std::to_string(x.dim(1)) +
                                " != weight input channels " + std::to_string(w.dim(1)));
  }
  if (!b.data.empty() && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
    throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape) + " must be (" +
                                std::to_string(w.dim(0)) + ")");
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0, got " + std::to_string(padding));
  const int ho = (x.dim(2) + 2 * padding - w.dim(2)) / stride + 1;
  const int wo = (x.dim(3) + 2 * padding - w.dim(3)) / stride + 1;
  if (x.dim(2) + 2 * padding < w.dim(2) || x.dim(3) + 2 * padding < w.dim(3) || ho < 1 || wo < 1) {
    throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape) + " does not fit input " +
                                shape_str(x.shape) + " with padding " + std::to_string(padding));
  }
}

/// Copies one image (C,H,W view at x_base) into a zero-padded buffer.
template <typename T>
void pad_image(const T* src, int c, int h, int w, int pad, std::vector<T>& dst) {
  const int hp = h + 2 * pad;
  const int wp = w + 2 * pad;
  dst.assign(static_cast<std::size_t>(c) * hp * wp, T(0));
  for (int ci = 0; ci < c; ++ci) {
    for (int y = 0; y < h; ++y) {
      const T* s = src + (static_cast<std::size_t>(ci) * h + y) * w;
      T* d = dst.data() + (static_cast<std::size_t>(ci) * hp + y + pad) * wp + pad;
      std::copy(s, s + w, d);
    }
  }
}

}  // namespace detail

/// Cross-correlation (no kernel flip). x: NCHW, w: OIKK, b: (O) or empty.
/// Output extent per axis: floor((H + 2*pad - K)/stride) + 1.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1,
                         int padding = 0) {
  detail::check_conv_args(x, w, b, stride, padding);
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int ho = (h + 2 * padding - kh) / stride + 1;
  const int wo = (wd + 2 * padding - kw) / stride + 1;
  const int hp = h + 2 * padding, wp = wd + 2 * padding;

  Tensor<T> out({n, co, ho, wo});
  std::vector<T> padded;
  for (int ni = 0; ni < n; ++ni) {
    const T* xn;
    if (padding > 0) {
      detail::pad_image(x.data.data() + x.idx4(ni, 0, 0, 0), ci, h, wd, padding, padded);
      xn = padded.data();
    } else {
      xn = x.data.data() + x.idx4(ni, 0, 0, 0);
    }
    for (int oc = 0; oc < co; ++oc) {
      T* outp = out.data.data() + out.idx4(ni, oc, 0, 0);
      const T bias = b.data.empty() ? T(0) : b.data[static_cast<std::size_t>(oc)];
      std::fill(outp, outp + static_cast<std::size_t>(ho) * wo, bias);
      for (int ic = 0; ic < ci; ++ic) {
        const T* xc = xn + static_cast<std::size_t>(ic) * hp * wp;
        const T* wc = w.data.data() + ((static_cast<std::size_t>(oc) * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wc[static_cast<std::size_t>(ky) * kw + kx];
            if (wv == T(0)) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const T* xrow = xc + static_cast<std::size_t>(oy * stride + ky) * wp + kx;
              T* orow = outp + static_cast<std::size_t>(oy) * wo;
              if (stride == 1) {
                for (int ox = 0; ox < wo; ++ox) orow[ox] += wv * xrow[ox];
              } else {
                for (int ox = 0; ox < wo; ++ox) orow[ox] += wv * xrow[static_cast<std::size_t>(ox) * stride];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

/// Transposed convolution of grad_out with w; adjoint of conv2d_forward in x.
template <typename T>
Tensor<T> conv2d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& w, int stride, int padding, int in_h,
                                int in_w) {
  if (grad_out.rank() != 4 || w.rank() != 4) {
    throw std::invalid_argument("conv2d_backward_input: grad_out " + shape_str(grad_out.shape) + ", weight " +
                                shape_str(w.shape) + " must be rank 4");
  }
  if (grad_out.dim(1) != w.dim(0)) {
    throw std::invalid_argument("conv2d_backward_input: grad channels " + std::to_string(grad_out.dim(1)) +
                                " != weight output channels " + std::to_string(w.dim(0)));
  }
  const int n = grad_out.dim(0), co = grad_out.dim(1), ho = grad_out.dim(2), wo = grad_out.dim(3);
  const int ci = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int hp = in_h + 2 * padding, wp = in_w + 2 * padding;
  if ((in_h + 2 * padding - kh) / stride + 1 != ho || (in_w + 2 * padding - kw) / stride + 1 != wo) {
    throw std::invalid_argument("conv2d_backward_input: grad_out " + shape_str(grad_out.shape) +
                                " inconsistent with input " + std::to_string(in_h) + "x" + std::to_string(in_w));
  }

  Tensor<T> dx({n, ci, in_h, in_w});
  std::vector<T> dpad(static_cast<std::size_t>(ci) * hp * wp);
  for (int ni = 0; ni < n; ++ni) {
    std::fill(dpad.begin(), dpad.end(), T(0));
    for (int oc = 0; oc < co; ++oc) {
      const T* gp = grad_out.data.data() + grad_out.idx4(ni, oc, 0, 0);
      for (int ic = 0; ic < ci; ++ic) {
        T* dc = dpad.data() + static_cast<std::size_t>(ic) * hp * wp;
        const T* wc = w.data.data() + ((static_cast<std::size_t>(oc) * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            const T wv = wc[static_cast<std::size_t>(ky) * kw + kx];
            if (wv == T(0)) continue;
            for (int oy = 0; oy < ho; ++oy) {
              const T* grow = gp + static_cast<std::size_t>(oy) * wo;
              T* drow = dc + static_cast<std::size_t>(oy * stride + ky) * wp + kx;
              if (stride == 1) {
                for (int ox = 0; ox < wo; ++ox) drow[ox] += wv * grow[ox];
              } else {
                for (int ox = 0; ox < wo; ++ox) drow[static_cast<std::size_t>(ox) * stride] += wv * grow[ox];
              }
            }
          }
        }
      }
    }
    // strip padding
    for (int ic = 0; ic < ci; ++ic) {
      for (int y = 0; y < in_h; ++y) {
        const T* s = dpad.data() + (static_cast<std::size_t>(ic) * hp + y + padding) * wp + padding;
        T* d = dx.data.data() + dx.idx4(ni, ic, y, 0);
        std::copy(s, s + in_w, d);
      }
    }
  }
  return dx;
}

/// d loss / d w for y = conv2d_forward(x, w, .): correlation of x with grad_out.
template <typename T>
Tensor<T> conv2d_backward_weight(const Tensor<T>& grad_out, const Tensor<T>& x, int kh, int kw, int stride,
                                 int padding) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = grad_out.dim(1), ho = grad_out.dim(2), wo = grad_out.dim(3);
  if (grad_out.dim(0) != n) {
    throw std::invalid_argument("conv2d_backward_weight: batch mismatch " + std::to_string(grad_out.dim(0)) +
                                " vs " + std::to_string(n));
  }
  const int hp = h + 2 * padding, wp = wd + 2 * padding;

  Tensor<T> dw({co, ci, kh, kw});
  std::vector<T> padded;
  for (int ni = 0; ni < n; ++ni) {
    const T* xn;
    if (padding > 0) {
      detail::pad_image(x.data.data() + x.idx4(ni, 0, 0, 0), ci, h, wd, padding, padded);
      xn = padded.data();
    } else {
      xn = x.data.data() + x.idx4(ni, 0, 0, 0);
    }
    for (int oc = 0; oc < co; ++oc) {
      const T* gp = grad_out.data.data() + grad_out.idx4(ni, oc, 0, 0);
      for (int ic = 0; ic < ci; ++ic) {
        const T* xc = xn + static_cast<std::size_t>(ic) * hp * wp;
        T* dwc = dw.data.data() + ((static_cast<std::size_t>(oc) * ci + ic) * kh) * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            T acc = T(0);
            for (int oy = 0; oy < ho; ++oy) {
              const T* grow = gp + static_cast<std::size_t>(oy) * wo;
              const T* xrow = xc + static_cast<std::size_t>(oy * stride + ky) * wp + kx;
              if (stride == 1) {
                for (int ox = 0; ox < wo; ++ox) acc += grow[ox] * xrow[ox];
              } else {
                for (int ox = 0; ox < wo; ++ox) acc += grow[ox] * xrow[static_cast<std::size_t>(ox) * stride];
              }
            }
            dwc[static_cast<std::size_t>(ky) * kw + kx] += acc;
          }
        }
      }
    }
  }
  return dw;
}

template <typename T>
Tensor<T> conv2d_backward_bias(const Tensor<T>& grad_out) {
  const int n = grad_out.dim(0), co = grad_out.dim(1);
  const std::size_t plane = static_cast<std::size_t>(grad_out.dim(2)) * grad_out.dim(3);
  Tensor<T> db({co});
  for (int ni = 0; ni < n; ++ni) {
    for (int oc = 0; oc < co; ++oc) {
      const T* gp = grad_out.data.data() + grad_out.idx4(ni, oc, 0, 0);
      T acc = T(0);
      for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
      db.data[static_cast<std::size_t>(oc)] += acc;
    }
  }
  return db;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

/// Exact partials of sum(grad_out . conv2d_forward(x, w, b)).
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input, const Tensor<T>& w,
                             int stride = 1, int padding = 0) {
  return ConvGrads<T>{
      conv2d_backward_input(grad_out, w, stride, padding, cached_input.dim(2), cached_input.dim(3)),
      conv2d_backward_weight(grad_out, cached_input, w.dim(2), w.dim(3), stride, padding),
      conv2d_backward_bias(grad_out)};
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

/// Rule-parameterized ReLU backward. The subgradient at exactly 0 is 0 under
/// every rule. Implemented as a multiply by a 0/1 mask so that the saliency
/// graph replay reproduces it exactly.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& signal, const Tensor<T>& cached_input, BackwardRule rule) {
  require_same_shape(signal, cached_input, "relu_backward");
  Tensor<T> out;
  out.shape = signal.shape;
  out.data.resize(signal.data.size());
  for (std::size_t i = 0; i < signal.data.size(); ++i) {
    T m;
    switch (rule) {
      case BackwardRule::Backprop: m = cached_input.data[i] > T(0) ? T(1) : T(0); break;
      case BackwardRule::Deconvnet: m = signal.data[i] > T(0) ? T(1) : T(0); break;
      default: m = (cached_input.data[i] > T(0) && signal.data[i] > T(0)) ? T(1) : T(0); break;
    }
    out.data[i] = signal.data[i] * m;
  }
  return out;
}

template <typename T>
struct PoolResult {
  Tensor<T> out;
  TensorI switches;  // flat h*W+w index of the argmax per output cell (first max wins)
};

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& x, int k) {
  if (x.rank() != 4) throw std::invalid_argument("maxpool2d: input must be NCHW, got " + shape_str(x.shape));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0) {
    throw std::invalid_argument("maxpool2d: extent " + std::to_string(h) + "x" + std::to_string(w) +
                                " not divisible by pool factor " + std::to_string(k));
  }
  const int ho = h / k, wo = w / k;
  PoolResult<T> r{Tensor<T>({n, c, ho, wo}), TensorI({n, c, ho, wo})};
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* xp = x.data.data() + x.idx4(ni, ci, 0, 0);
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          T best = xp[static_cast<std::size_t>(oy * k) * w + ox * k];
          int best_at = (oy * k) * w + ox * k;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              const int at = (oy * k + dy) * w + (ox * k + dx);
              const T v = xp[static_cast<std::size_t>(at)];
              if (v > best) {
                best = v;
                best_at = at;
              }
            }
          }
          r.out.at4(ni, ci, oy, ox) = best;
          r.switches.at4(ni, ci, oy, ox) = best_at;
        }
      }
    }
  }
  return r;
}

template <typename T>
void require_same_shape_pool(const Tensor<T>& g, const TensorI& s) {
  if (g.shape != s.shape) {
    throw std::invalid_argument("maxpool2d_backward: grad " + shape_str(g.shape) + " vs switches " +
                                shape_str(s.shape));
  }
}

/// Routes the signal back to the recorded argmax positions (used both as the
/// training backward and as the "unpooling" stage of saliency passes).
template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const TensorI& switches, int in_h, int in_w) {
  require_same_shape_pool(grad_out, switches);
  const int n = grad_out.dim(0), c = grad_out.dim(1), ho = grad_out.dim(2), wo = grad_out.dim(3);
  Tensor<T> dx({n, c, in_h, in_w});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* gp = grad_out.data.data() + grad_out.idx4(ni, ci, 0, 0);
      const int* sp = switches.data.data() + switches.idx4(ni, ci, 0, 0);
      T* dp = dx.data.data() + dx.idx4(ni, ci, 0, 0);
      const std::size_t plane = static_cast<std::size_t>(ho) * wo;
      for (std::size_t i = 0; i < plane; ++i) dp[static_cast<std::size_t>(sp[i])] += gp[i];
    }
  }
  return dx;
}

/// Gathers from the argmax positions: max-pooling with frozen switches, the
/// exact adjoint of maxpool2d_backward.
template <typename T>
Tensor<T> maxpool2d_gather(const Tensor<T>& u, const TensorI& switches) {
  const int n = switches.dim(0), c = switches.dim(1), ho = switches.dim(2), wo = switches.dim(3);
  if (u.rank() != 4 || u.dim(0) != n || u.dim(1) != c) {
    throw std::invalid_argument("maxpool2d_gather: input " + shape_str(u.shape) + " vs switches " +
                                shape_str(switches.shape));
  }
  Tensor<T> out({n, c, ho, wo});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* up = u.data.data() + u.idx4(ni, ci, 0, 0);
      const int* sp = switches.data.data() + switches.idx4(ni, ci, 0, 0);
      T* op = out.data.data() + out.idx4(ni, ci, 0, 0);
      const std::size_t plane = static_cast<std::size_t>(ho) * wo;
      for (std::size_t i = 0; i < plane; ++i) op[i] = up[static_cast<std::size_t>(sp[i])];
    }
  }
  return out;
}

/// Nearest-neighbor upsampling by an integer factor.
template <typename T>
Tensor<T> upsample2d_forward(const Tensor<T>& x, int factor) {
  if (x.rank() != 4) throw std::invalid_argument("upsample2d: input must be NCHW, got " + shape_str(x.shape));
  if (factor < 1) throw std::invalid_argument("upsample2d: factor must be >= 1");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({n, c, h * factor, w * factor});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < h * factor; ++y) {
        const T* xrow = x.data.data() + x.idx4(ni, ci, y / factor, 0);
        T* orow = out.data.data() + out.idx4(ni, ci, y, 0);
        for (int xo = 0; xo < w * factor; ++xo) orow[xo] = xrow[xo / factor];
      }
    }
  }
  return out;
}

/// Sums each factor x factor block back onto its source cell.
template <typename T>
Tensor<T> upsample2d_backward(const Tensor<T>& grad_out, int factor) {
  if (grad_out.rank() != 4) {
    throw std::invalid_argument("upsample2d_backward: grad must be NCHW, got " + shape_str(grad_out.shape));
  }
  const int n = grad_out.dim(0), c = grad_out.dim(1), ho = grad_out.dim(2), wo = grad_out.dim(3);
  if (ho % factor != 0 || wo % factor != 0) {
    throw std::invalid_argument("upsample2d_backward: extent " + std::to_string(ho) + "x" + std::to_string(wo) +
                                " not divisible by factor " + std::to_string(factor));
  }
  Tensor<T> dx({n, c, ho / factor, wo / factor});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int y = 0; y < ho; ++y) {
        const T* grow = grad_out.data.data() + grad_out.idx4(ni, ci, y, 0);
        T* drow = dx.data.data() + dx.idx4(ni, ci, y / factor, 0);
        for (int xo = 0; xo < wo; ++xo) drow[xo / factor] += grow[xo];
      }
    }
  }
  return dx;
}

/// y = W x + b with x, y rank-1.
template <typename T>
Tensor<T> affine_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 1 || w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw std::invalid_argument("affine: x " + shape_str(x.shape) + " incompatible with weight " +
                                shape_str(w.shape));
  }
  if (!b.data.empty() && (b.rank() != 1 || b.dim(0) != w.dim(0))) {
    throw std::invalid_argument("affine: bias shape " + shape_str(b.shape) + " must be (" +
                                std::to_string(w.dim(0)) + ")");
  }
  const int out_n = w.dim(0), in_n = w.dim(1);
  Tensor<T> y({out_n});
  for (int i = 0; i < out_n; ++i) {
    T acc = b.data.empty() ? T(0) : b.data[static_cast<std::size_t>(i)];
    const T* wr = w.data.data() + static_cast<std::size_t>(i) * in_n;
    for (int j = 0; j < in_n; ++j) acc += wr[j] * x.data[static_cast<std::size_t>(j)];
    y.data[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

template <typename T>
struct AffineGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
AffineGrads<T> affine_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_input, const Tensor<T>& w) {
  const int out_n = w.dim(0), in_n = w.dim(1);
  if (grad_out.rank() != 1 || grad_out.dim(0) != out_n) {
    throw std::invalid_argument("affine_backward: grad " + shape_str(grad_out.shape) + " vs weight " +
                                shape_str(w.shape));
  }
  AffineGrads<T> g{Tensor<T>({in_n}), Tensor<T>({out_n, in_n}), Tensor<T>({out_n})};
  for (int i = 0; i < out_n; ++i) {
    const T gi = grad_out.data[static_cast<std::size_t>(i)];
    g.bias.data[static_cast<std::size_t>(i)] = gi;
    const T* wr = w.data.data() + static_cast<std::size_t>(i) * in_n;
    T* dwr = g.weight.data.data() + static_cast<std::size_t>(i) * in_n;
    for (int j = 0; j < in_n; ++j) {
      dwr[j] = gi * cached_input.data[static_cast<std::size_t>(j)];
      g.input.data[static_cast<std::size_t>(j)] += gi * wr[j];
    }
  }
  return g;
}

/// Per-channel spatial mean of a (1,C,H,W) map -> (C).
template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(0) != 1) {
    throw std::invalid_argument("gap: input must be (1,C,H,W), got " + shape_str(x.shape));
  }
  const int c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> out({c});
  for (int ci = 0; ci < c; ++ci) {
    const T* xp = x.data.data() + x.idx4(0, ci, 0, 0);
    T acc = T(0);
    for (std::size_t i = 0; i < plane; ++i) acc += xp[i];
    out.data[static_cast<std::size_t>(ci)] = acc / static_cast<T>(plane);
  }
  return out;
}

/// Distributes g_c / (H*W) over each channel plane.
template <typename T>
Tensor<T> gap_backward(const Tensor<T>& grad_out, int h, int w) {
  if (grad_out.rank() != 1) {
    throw std::invalid_argument("gap_backward: grad must be rank 1, got " + shape_str(grad_out.shape));
  }
  const int c = grad_out.dim(0);
  Tensor<T> dx({1, c, h, w});
  const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(h) * w);
  for (int ci = 0; ci < c; ++ci) {
    const T v = grad_out.data[static_cast<std::size_t>(ci)] * inv;
    T* dp = dx.data.data() + dx.idx4(0, ci, 0, 0);
    std::fill(dp, dp + static_cast<std::size_t>(h) * w, v);
  }
  return dx;
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y;
  y.shape = x.shape;
  y.data.resize(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = sigmoid_scalar(x.data[i]);
  return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad_out, const Tensor<T>& cached_output) {
  require_same_shape(grad_out, cached_output, "sigmoid_backward");
  Tensor<T> dx;
  dx.shape = grad_out.shape;
  dx.data.resize(grad_out.data.size());
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) {
    const T y = cached_output.data[i];
    dx.data[i] = grad_out.data[i] * y * (T(1) - y);
  }
  return dx;
}

/// Channel-wise concatenation of (1,Ca,H,W) and (1,Cb,H,W).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != 1 || b.dim(0) != 1 || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat_channels: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  Tensor<T> out({1, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int c_first) {
  if (g.rank() != 4 || g.dim(0) != 1 || c_first <= 0 || c_first >= g.dim(1)) {
    throw std::invalid_argument("split_channels: cannot split " + shape_str(g.shape) + " at channel " +
                                std::to_string(c_first));
  }
  Tensor<T> a({1, c_first, g.dim(2), g.dim(3)});
  Tensor<T> b({1, g.dim(1) - c_first, g.dim(2), g.dim(3)});
  std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), a.data.begin());
  std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), g.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

}  // namespace ggt
