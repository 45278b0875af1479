#pragma once

#include <array>
#include <vector>

#include "ggt/heatmap.hpp"
#include "ggt/image_io.hpp"
#include "ggt/tensor.hpp"

namespace ggt {

/// Fixed dark-to-bright ramp (black, violet, red, orange, yellow, white).
std::array<unsigned char, 3> colormap_fire(float v);

/// Heatmap rendered on its own through the colormap.
RgbImage heatmap_to_rgb(const Heatmap& hm);

/// Heatmap blended over the grayscale image at a constant 40% alpha.
RgbImage overlay(const Tensor<float>& image, const Heatmap& hm, float alpha = 0.4f);

RgbImage gray_to_rgb(const Tensor<float>& image);

/// Horizontal strip of same-size panels with a 2px white separator.
RgbImage four_panel(const std::vector<RgbImage>& panels);

}  // namespace ggt
