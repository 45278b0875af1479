#pragma once

#include <map>
#include <string>
#include <vector>

#include "ggt/heatmap.hpp"
#include "ggt/tensor.hpp"

namespace ggt {

/// One eye-tracker fixation, coordinates normalized to the image extent.
struct FixationRecord {
  std::string image_id;
  std::string patient_id;
  double x_norm = 0;      // fraction of image width, in [0,1]
  double y_norm = 0;      // fraction of image height, in [0,1]
  double start_ms = 0;
  double duration_ms = 0;
};

struct GazeRenderConfig {
  double sigma_frac = 0.05;  // Gaussian sigma as a fraction of output width
  double window_ms = 1000.0;
  int out_h = 128;
  int out_w = 128;

  void validate() const;
};

/// Un-normalized per-window accumulations: fixations bucketed by start_ms
/// into consecutive windows, each rendered as sum of duration-weighted
/// Gaussians (truncated at 4 sigma). Trailing empty windows are dropped.
/// Accumulation order is canonicalized, so permuting the input changes
/// nothing.
std::vector<Tensor<float>> render_temporal_raw(const std::vector<FixationRecord>& records,
                                               const GazeRenderConfig& cfg);

/// Max-normalized temporal heatmaps.
std::vector<Heatmap> render_temporal(const std::vector<FixationRecord>& records, const GazeRenderConfig& cfg);

/// Pixelwise sum of the un-normalized temporal accumulations.
Tensor<float> render_static_raw(const std::vector<Tensor<float>>& temporal_raw);

/// The summed map, max-normalized.
Heatmap render_static(const std::vector<Tensor<float>>& temporal_raw);

/// Strict CSV parse; schema `image_id,patient_id,x_norm,y_norm,start_ms,duration_ms`.
/// Rejects missing columns, non-numeric fields and out-of-range coordinates,
/// naming the row and column.
std::vector<FixationRecord> parse_fixations(const std::string& path);

void write_fixations_csv(const std::string& path, const std::vector<FixationRecord>& records);

std::map<std::string, std::vector<FixationRecord>> group_by_image(const std::vector<FixationRecord>& records);

}  // namespace ggt
