#include "ggt/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ggt {

std::array<unsigned char, 3> colormap_fire(float v) {
  if (!(v >= 0.0f)) v = 0.0f;
  if (v > 1.0f) v = 1.0f;
  // stops at v = 0, .2, .4, .6, .8, 1
  static const float stops[6][3] = {{0, 0, 0},        {80, 0, 120},   {200, 30, 30},
                                    {255, 120, 0},    {255, 220, 60}, {255, 255, 255}};
  const float pos = v * 5.0f;
  const int k = std::min(4, static_cast<int>(pos));
  const float f = pos - static_cast<float>(k);
  std::array<unsigned char, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const float x = stops[k][c] + f * (stops[k + 1][c] - stops[k][c]);
    out[static_cast<std::size_t>(c)] = static_cast<unsigned char>(std::lround(x));
  }
  return out;
}

namespace {

std::pair<int, int> gray_dims(const Tensor<float>& image) {
  if (image.rank() == 2) return {image.dim(0), image.dim(1)};
  if (image.rank() == 4 && image.dim(0) == 1 && image.dim(1) == 1) return {image.dim(2), image.dim(3)};
  throw std::invalid_argument("visualize: image must be (H,W) or (1,1,H,W), got " + shape_str(image.shape));
}

unsigned char to_byte(float v) {
  if (!(v >= 0.0f)) v = 0.0f;
  if (v > 1.0f) v = 1.0f;
  return static_cast<unsigned char>(std::lround(v * 255.0f));
}

}  // namespace

RgbImage gray_to_rgb(const Tensor<float>& image) {
  auto [h, w] = gray_dims(image);
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const unsigned char g = to_byte(image.data[static_cast<std::size_t>(y) * w + x]);
      unsigned char* p = out.px(y, x);
      p[0] = p[1] = p[2] = g;
    }
  }
  return out;
}

RgbImage heatmap_to_rgb(const Heatmap& hm) {
  RgbImage out(hm.h, hm.w);
  for (int y = 0; y < hm.h; ++y) {
    for (int x = 0; x < hm.w; ++x) {
      const std::array<unsigned char, 3> c = colormap_fire(hm.at(y, x));
      unsigned char* p = out.px(y, x);
      p[0] = c[0];
      p[1] = c[1];
      p[2] = c[2];
    }
  }
  return out;
}

RgbImage overlay(const Tensor<float>& image, const Heatmap& hm, float alpha) {
  auto [h, w] = gray_dims(image);
  if (h != hm.h || w != hm.w) {
    throw std::invalid_argument("overlay: image " + std::to_string(h) + "x" + std::to_string(w) + " vs heatmap " +
                                std::to_string(hm.h) + "x" + std::to_string(hm.w));
  }
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float g = image.data[static_cast<std::size_t>(y) * w + x];
      const std::array<unsigned char, 3> c = colormap_fire(hm.at(y, x));
      unsigned char* p = out.px(y, x);
      for (int k = 0; k < 3; ++k) {
        const float mixed = (1.0f - alpha) * g * 255.0f + alpha * static_cast<float>(c[static_cast<std::size_t>(k)]);
        p[k] = static_cast<unsigned char>(std::lround(std::clamp(mixed, 0.0f, 255.0f)));
      }
    }
  }
  return out;
}

RgbImage four_panel(const std::vector<RgbImage>& panels) {
  if (panels.empty()) throw std::invalid_argument("four_panel: no panels");
  const int h = panels[0].h, w = panels[0].w;
  for (const RgbImage& p : panels) {
    if (p.h != h || p.w != w) throw std::invalid_argument("four_panel: panels must share dimensions");
  }
  const int sep = 2;
  const int total_w = static_cast<int>(panels.size()) * w + (static_cast<int>(panels.size()) - 1) * sep;
  RgbImage out(h, total_w);
  std::fill(out.data.begin(), out.data.end(), static_cast<unsigned char>(255));
  int x0 = 0;
  for (const RgbImage& p : panels) {
    for (int y = 0; y < h; ++y) {
      std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(y) * w * 3,
                p.data.begin() + static_cast<std::ptrdiff_t>(y + 1) * w * 3,
                out.data.begin() + (static_cast<std::ptrdiff_t>(y) * total_w + x0) * 3);
    }
    x0 += w + sep;
  }
  return out;
}

}  // namespace ggt
