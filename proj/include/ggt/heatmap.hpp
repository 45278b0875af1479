#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/tensor.hpp"

namespace ggt {

/// H x W non-negative map, max-normalized into [0,1]. The max is exactly 1
/// unless the map is identically zero.
struct Heatmap {
  enum class Source { Backprop, Deconvnet, Guided, GradCam, Gaze, DecoderMask };

  int h = 0;
  int w = 0;
  std::vector<float> values;  // row-major
  Source source = Source::Gaze;

  Heatmap() = default;
  Heatmap(int h_, int w_, Source s) : h(h_), w(w_), values(static_cast<std::size_t>(h_) * w_, 0.0f), source(s) {}

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * w + x]; }
  std::size_t numel() const { return values.size(); }
};

inline const char* to_string(Heatmap::Source s) {
  switch (s) {
    case Heatmap::Source::Backprop: return "backprop";
    case Heatmap::Source::Deconvnet: return "deconvnet";
    case Heatmap::Source::Guided: return "guided";
    case Heatmap::Source::GradCam: return "gradcam";
    case Heatmap::Source::Gaze: return "gaze";
    case Heatmap::Source::DecoderMask: return "mask";
  }
  return "?";
}

/// Rectify then scale so the max is 1; an all-nonpositive map becomes all
/// zeros (no division). Idempotent.
template <typename T>
Tensor<T> normalize_map(const Tensor<T>& raw) {
  if (raw.rank() != 2) throw std::invalid_argument("normalize: map must be HxW, got " + shape_str(raw.shape));
  if (!raw.all_finite()) throw std::invalid_argument("normalize: non-finite values in map");
  Tensor<T> out;
  out.shape = raw.shape;
  out.data.resize(raw.data.size());
  T mx = T(0);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    const T v = raw.data[i] > T(0) ? raw.data[i] : T(0);
    out.data[i] = v;
    if (v > mx) mx = v;
  }
  if (mx > T(0)) {
    for (T& v : out.data) v /= mx;
  }
  return out;
}

inline Heatmap to_heatmap(const Tensor<float>& normalized, Heatmap::Source source) {
  Heatmap hm;
  hm.h = normalized.dim(0);
  hm.w = normalized.dim(1);
  hm.values = normalized.data;
  hm.source = source;
  return hm;
}

inline Heatmap normalize(const Tensor<float>& raw, Heatmap::Source source) {
  return to_heatmap(normalize_map(raw), source);
}

inline Tensor<float> to_tensor(const Heatmap& hm) {
  return Tensor<float>::from({hm.h, hm.w}, hm.values);
}

}  // namespace ggt
