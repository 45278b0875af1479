#include "ggt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ggt/rng.hpp"

namespace ggt {

double auc(const std::vector<double>& scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw std::invalid_argument("auc: " + std::to_string(scores.size()) + " scores vs " +
                                std::to_string(positives.size()) + " labels");
  }
  std::size_t p = 0;
  for (bool b : positives) p += b ? 1 : 0;
  const std::size_t n = scores.size() - p;
  if (p == 0 || n == 0) {
    throw AucUndefined("auc: sample has " + std::to_string(p) + " positives and " + std::to_string(n) +
                       " negatives");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("auc: non-finite score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of average ranks of the positives (ranks are 1-based; ties share the
  // mean rank of their block).
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (positives[order[k]]) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double pd = static_cast<double>(p);
  return (rank_sum_pos - pd * (pd + 1.0) / 2.0) / (pd * static_cast<double>(n));
}

namespace {

double percentile(std::vector<double> sorted, double pct) {
  // callers pass sorted data
  const double h = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

AucReport::Entry entry_from(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  AucReport::Entry e;
  e.p2_5 = percentile(values, 2.5);
  e.p50 = percentile(values, 50.0);
  e.p97_5 = percentile(values, 97.5);
  return e;
}

}  // namespace

AucReport bootstrap_auc(const std::vector<ScoredExample>& examples, int iterations, std::uint64_t seed,
                        int resample_size) {
  if (iterations < 1) throw std::invalid_argument("bootstrap_auc: iterations must be >= 1");
  std::array<std::size_t, 3> class_count{};
  for (const ScoredExample& e : examples) {
    if (e.true_label < 0 || e.true_label > 2) {
      throw std::invalid_argument("bootstrap_auc: label " + std::to_string(e.true_label) + " outside [0,2]");
    }
    ++class_count[static_cast<std::size_t>(e.true_label)];
  }
  for (int c = 0; c < 3; ++c) {
    if (class_count[static_cast<std::size_t>(c)] == 0) {
      throw std::invalid_argument("bootstrap_auc: class " + std::to_string(c) + " absent from the test set");
    }
  }
  const std::size_t draw = resample_size > 0 ? static_cast<std::size_t>(resample_size) : examples.size();

  std::array<std::vector<double>, 3> per_class;
  std::vector<double> means;
  for (int it = 0; it < iterations; ++it) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(it)));
    bool done = false;
    for (int attempt = 0; attempt < 100 && !done; ++attempt) {
      std::vector<std::size_t> idx(draw);
      for (std::size_t k = 0; k < draw; ++k) idx[k] = rng.below(examples.size());
      try {
        double mean_auc = 0;
        std::array<double, 3> class_auc{};
        for (int c = 0; c < 3; ++c) {
          std::vector<double> scores(draw);
          std::vector<bool> pos(draw);
          for (std::size_t k = 0; k < draw; ++k) {
            scores[k] = examples[idx[k]].scores[static_cast<std::size_t>(c)];
            pos[k] = examples[idx[k]].true_label == c;
          }
          class_auc[static_cast<std::size_t>(c)] = auc(scores, pos);
          mean_auc += class_auc[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < 3; ++c) per_class[static_cast<std::size_t>(c)].push_back(class_auc[static_cast<std::size_t>(c)]);
        means.push_back(mean_auc / 3.0);
        done = true;
      } catch (const AucUndefined&) {
        // redraw from the same iteration stream
      }
    }
    if (!done) {
      throw std::runtime_error("bootstrap_auc: iteration " + std::to_string(it) +
                               " could not draw a resample with all classes in 100 attempts");
    }
  }

  AucReport report;
  report.mean = entry_from(means);
  for (int c = 0; c < 3; ++c) report.per_class[static_cast<std::size_t>(c)] = entry_from(per_class[static_cast<std::size_t>(c)]);
  report.n_iterations = iterations;
  report.resample_size = static_cast<int>(draw);
  report.seed = seed;
  return report;
}

OverlapMetrics overlap_metrics(const Heatmap& a, const Heatmap& b, double tau) {
  if (a.h != b.h || a.w != b.w) {
    throw std::invalid_argument("overlap_metrics: extents " + std::to_string(a.h) + "x" + std::to_string(a.w) +
                                " vs " + std::to_string(b.h) + "x" + std::to_string(b.w));
  }
  OverlapMetrics m;
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool va = a.values[i] >= tau;
    const bool vb = b.values[i] >= tau;
    inter += (va && vb) ? 1 : 0;
    uni += (va || vb) ? 1 : 0;
  }
  m.iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);

  const double n = static_cast<double>(a.values.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  m.ncc = (saa <= 0 || sbb <= 0) ? 0.0 : sab / std::sqrt(saa * sbb);
  return m;
}

std::string format_auc_cell(const AucReport::Entry& e) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f (%.3f, %.3f)", e.p50, e.p2_5, e.p97_5);
  return buf;
}

std::string render_report(const AucReport& report) {
  static const char* kCols[] = {"Average AUC", "\"Normal\" AUC", "\"CHF\" AUC", "\"Pneumonia\" AUC"};
  std::array<std::string, 4> cells = {format_auc_cell(report.mean), format_auc_cell(report.per_class[0]),
                                      format_auc_cell(report.per_class[1]), format_auc_cell(report.per_class[2])};
  std::ostringstream os;
  for (int i = 0; i < 4; ++i) {
    const std::size_t width = std::max(std::string(kCols[i]).size(), cells[static_cast<std::size_t>(i)].size()) + 2;
    std::string name = kCols[i];
    name.resize(width, ' ');
    os << name;
  }
  os << '\n';
  for (int i = 0; i < 4; ++i) {
    const std::size_t width = std::max(std::string(kCols[i]).size(), cells[static_cast<std::size_t>(i)].size()) + 2;
    std::string cell = cells[static_cast<std::size_t>(i)];
    cell.resize(width, ' ');
    os << cell;
  }
  os << '\n';
  return os.str();
}

std::string render_report_csv(const AucReport& report) {
  std::ostringstream os;
  os << "class,p50,p2.5,p97.5\n";
  const char* names[] = {"average", "normal", "chf", "pneumonia"};
  const AucReport::Entry* entries[] = {&report.mean, &report.per_class[0], &report.per_class[1],
                                       &report.per_class[2]};
  char buf[96];
  for (int i = 0; i < 4; ++i) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f\n", names[i], entries[i]->p50, entries[i]->p2_5,
                  entries[i]->p97_5);
    os << buf;
  }
  return os.str();
}

}  // namespace ggt
