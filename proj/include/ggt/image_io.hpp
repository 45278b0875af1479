#pragma once

#include <string>
#include <vector>

#include "ggt/tensor.hpp"

namespace ggt {

/// Reads an 8- or 16-bit grayscale PNG into (1,1,H,W) with values k/255 or
/// k/65535. No gamma handling; samples are taken verbatim.
Tensor<float> read_png_gray(const std::string& path);

/// Writes a (H,W) or (1,1,H,W) map in [0,1] as 16-bit grayscale PNG,
/// quantizing to round(v * 65535).
void write_png_gray16(const std::string& path, const Tensor<float>& img);

struct RgbImage {
  int h = 0, w = 0;
  std::vector<unsigned char> data;  // rgb8, row-major

  RgbImage() = default;
  RgbImage(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_ * 3, 0) {}
  unsigned char* px(int y, int x) { return data.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
};

void write_png_rgb8(const std::string& path, const RgbImage& img);

/// Bilinear resample of a (1,1,H,W) image to (1,1,out_h,out_w).
Tensor<float> resize_bilinear(const Tensor<float>& img, int out_h, int out_w);

}  // namespace ggt
