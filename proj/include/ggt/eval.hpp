#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/heatmap.hpp"

namespace ggt {

struct ScoredExample {
  std::string image_id;
  std::array<double, 3> scores{};  // per-class, higher = more likely
  int true_label = 0;
};

/// auc() cannot be computed from a single-class sample; callers choose the
/// skip/resample policy.
class AucUndefined : public std::runtime_error {
 public:
  explicit AucUndefined(const std::string& what) : std::runtime_error(what) {}
};

/// Mann-Whitney AUC: (concordant pairs + 0.5 * tied pairs) / (P * N),
/// computed through average ranks.
double auc(const std::vector<double>& scores, const std::vector<bool>& positives);

/// Per-class and mean AUC percentiles over bootstrap resamples.
struct AucReport {
  struct Entry {
    double p50 = 0, p2_5 = 0, p97_5 = 0;
  };
  Entry mean;
  std::array<Entry, 3> per_class;  // normal, CHF, pneumonia
  int n_iterations = 0;
  int resample_size = 0;
  std::uint64_t seed = 0;
};

/// Resamples |examples| items (or resample_size, when nonzero) with
/// replacement per iteration; iterations with an undefined AUC are redrawn,
/// up to 100 retries each. Percentiles use linear interpolation. The
/// per-iteration RNG streams derive from (seed, iteration), so the result is
/// reproducible and iteration-order independent.
AucReport bootstrap_auc(const std::vector<ScoredExample>& examples, int iterations = 30, std::uint64_t seed = 1,
                        int resample_size = 0);

struct OverlapMetrics {
  double iou = 0;  // of the {v >= tau} supports; 1 when both are empty
  double ncc = 0;  // Pearson correlation; 0 when either map is constant
};

OverlapMetrics overlap_metrics(const Heatmap& a, const Heatmap& b, double tau = 0.5);

/// Plain-text table in the "0.872 (0.840, 0.897)" style, mean first, then
/// normal, CHF, pneumonia.
std::string render_report(const AucReport& report);

/// Same content as CSV rows: class,p50,p2.5,p97.5.
std::string render_report_csv(const AucReport& report);

std::string format_auc_cell(const AucReport::Entry& e);

}  // namespace ggt
