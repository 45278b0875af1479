#include "ggt/gaze.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ggt/csv.hpp"

namespace ggt {

void GazeRenderConfig::validate() const {
  if (!(sigma_frac > 0)) throw std::invalid_argument("gaze config: sigma_frac must be > 0");
  if (!(window_ms > 0)) throw std::invalid_argument("gaze config: window_ms must be > 0");
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("gaze config: output size must be positive");
}

namespace {

void check_record(const FixationRecord& r, std::size_t i) {
  if (!(r.x_norm >= 0 && r.x_norm <= 1 && r.y_norm >= 0 && r.y_norm <= 1)) {
    throw std::invalid_argument("fixation " + std::to_string(i) + ": coordinates (" + std::to_string(r.x_norm) +
                                ", " + std::to_string(r.y_norm) + ") outside [0,1]");
  }
  if (r.duration_ms < 0 || r.start_ms < 0) {
    throw std::invalid_argument("fixation " + std::to_string(i) + ": negative time");
  }
}

void splat_gaussian(Tensor<float>& map, const FixationRecord& r, double sigma) {
  const int h = map.dim(0), w = map.dim(1);
  const double cx = r.x_norm * (w - 1);
  const double cy = r.y_norm * (h - 1);
  const double radius = 4.0 * sigma;
  const int y0 = std::max(0, static_cast<int>(std::ceil(cy - radius)));
  const int y1 = std::min(h - 1, static_cast<int>(std::floor(cy + radius)));
  const int x0 = std::max(0, static_cast<int>(std::ceil(cx - radius)));
  const int x1 = std::min(w - 1, static_cast<int>(std::floor(cx + radius)));
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y) {
    const double dy = y - cy;
    float* row = map.data.data() + static_cast<std::size_t>(y) * w;
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - cx;
      row[x] += static_cast<float>(r.duration_ms * std::exp(-(dx * dx + dy * dy) * inv2s2));
    }
  }
}

}  // namespace

std::vector<Tensor<float>> render_temporal_raw(const std::vector<FixationRecord>& records,
                                               const GazeRenderConfig& cfg) {
  cfg.validate();
  if (records.empty()) return {};
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].image_id != records[0].image_id) {
      throw std::invalid_argument("render_temporal: mixed image ids `" + records[0].image_id + "` and `" +
                                  records[i].image_id + "`");
    }
  }
  for (std::size_t i = 0; i < records.size(); ++i) check_record(records[i], i);

  // Canonical accumulation order makes the result independent of input order.
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const FixationRecord& ra = records[a];
    const FixationRecord& rb = records[b];
    return std::tie(ra.start_ms, ra.y_norm, ra.x_norm, ra.duration_ms) <
           std::tie(rb.start_ms, rb.y_norm, rb.x_norm, rb.duration_ms);
  });

  int n_windows = 0;
  for (const FixationRecord& r : records) {
    n_windows = std::max(n_windows, static_cast<int>(std::floor(r.start_ms / cfg.window_ms)) + 1);
  }
  std::vector<Tensor<float>> maps;
  maps.reserve(static_cast<std::size_t>(n_windows));
  for (int i = 0; i < n_windows; ++i) maps.emplace_back(std::vector<int>{cfg.out_h, cfg.out_w});

  const double sigma = cfg.sigma_frac * cfg.out_w;
  for (std::size_t k : order) {
    const FixationRecord& r = records[k];
    const int bucket = static_cast<int>(std::floor(r.start_ms / cfg.window_ms));
    splat_gaussian(maps[static_cast<std::size_t>(bucket)], r, sigma);
  }
  return maps;
}

std::vector<Heatmap> render_temporal(const std::vector<FixationRecord>& records, const GazeRenderConfig& cfg) {
  std::vector<Tensor<float>> raw = render_temporal_raw(records, cfg);
  std::vector<Heatmap> out;
  out.reserve(raw.size());
  for (const Tensor<float>& m : raw) out.push_back(normalize(m, Heatmap::Source::Gaze));
  return out;
}

Tensor<float> render_static_raw(const std::vector<Tensor<float>>& temporal_raw) {
  if (temporal_raw.empty()) throw std::invalid_argument("render_static: no temporal maps");
  Tensor<float> sum = temporal_raw[0];
  for (std::size_t i = 1; i < temporal_raw.size(); ++i) {
    if (temporal_raw[i].shape != sum.shape) {
      throw std::invalid_argument("render_static: mixed extents " + shape_str(sum.shape) + " vs " +
                                  shape_str(temporal_raw[i].shape));
    }
    for (std::size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += temporal_raw[i].data[j];
  }
  return sum;
}

Heatmap render_static(const std::vector<Tensor<float>>& temporal_raw) {
  return normalize(render_static_raw(temporal_raw), Heatmap::Source::Gaze);
}

std::vector<FixationRecord> parse_fixations(const std::string& path) {
  static const std::vector<std::string> kHeader = {"image_id", "patient_id", "x_norm",
                                                   "y_norm",   "start_ms",   "duration_ms"};
  CsvFile csv = read_csv(path, kHeader);
  std::vector<FixationRecord> out;
  out.reserve(csv.rows.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const std::vector<std::string>& f = csv.rows[i];
    const std::size_t row = i + 1;
    FixationRecord r;
    r.image_id = f[0];
    r.patient_id = f[1];
    r.x_norm = parse_double_field(f[2], path, row, "x_norm");
    r.y_norm = parse_double_field(f[3], path, row, "y_norm");
    r.start_ms = parse_double_field(f[4], path, row, "start_ms");
    r.duration_ms = parse_double_field(f[5], path, row, "duration_ms");
    if (r.image_id.empty()) throw std::runtime_error(path + " row " + std::to_string(row) + ": empty image_id");
    if (!(r.x_norm >= 0 && r.x_norm <= 1)) {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": x_norm = " + f[2] + " outside [0,1]");
    }
    if (!(r.y_norm >= 0 && r.y_norm <= 1)) {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": y_norm = " + f[3] + " outside [0,1]");
    }
    if (r.start_ms < 0) {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": start_ms = " + f[4] + " is negative");
    }
    if (r.duration_ms < 0) {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": duration_ms = " + f[5] + " is negative");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_fixations_csv(const std::string& path, const std::vector<FixationRecord>& records) {
  std::ofstream outf(path);
  if (!outf) throw std::runtime_error(path + ": cannot open for writing");
  outf << "image_id,patient_id,x_norm,y_norm,start_ms,duration_ms\n";
  char buf[128];
  for (const FixationRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g", r.x_norm, r.y_norm, r.start_ms, r.duration_ms);
    outf << r.image_id << ',' << r.patient_id << ',' << buf << '\n';
  }
  if (!outf) throw std::runtime_error(path + ": write failed");
}

std::map<std::string, std::vector<FixationRecord>> group_by_image(const std::vector<FixationRecord>& records) {
  std::map<std::string, std::vector<FixationRecord>> out;
  for (const FixationRecord& r : records) out[r.image_id].push_back(r);
  return out;
}

}  // namespace ggt
