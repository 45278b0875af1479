#include "ggt/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ggt/csv.hpp"
#include "ggt/image_io.hpp"
#include "ggt/parallel.hpp"
#include "ggt/rng.hpp"

namespace fs = std::filesystem;

namespace ggt {

Label parse_label(const std::string& s) {
  std::string t = trim(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "normal") return Label::Normal;
  if (t == "chf") return Label::Chf;
  if (t == "pneumonia") return Label::Pneumonia;
  throw std::invalid_argument("unknown label `" + s + "` (expected normal, CHF or pneumonia)");
}

const char* label_name(Label l) {
  switch (l) {
    case Label::Normal: return "normal";
    case Label::Chf: return "CHF";
    case Label::Pneumonia: return "pneumonia";
  }
  return "?";
}

namespace {

void throw_itemized(const std::string& what, const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << what << " (" << problems.size() << " problems):";
  const std::size_t cap = 20;
  for (std::size_t i = 0; i < problems.size() && i < cap; ++i) os << "\n  - " << problems[i];
  if (problems.size() > cap) os << "\n  ... and " << (problems.size() - cap) << " more";
  throw std::runtime_error(os.str());
}

}  // namespace

std::vector<Example> load_dataset(const std::string& image_dir, const std::string& labels_csv,
                                  const std::string& fixations_csv, const LoadConfig& cfg) {
  if (cfg.target_h < 1 || cfg.target_w < 1) throw std::invalid_argument("load_dataset: bad target size");

  CsvFile labels = read_csv(labels_csv, {"image_id", "patient_id", "label"});
  std::vector<FixationRecord> fixations = parse_fixations(fixations_csv);
  std::map<std::string, std::vector<FixationRecord>> by_image = group_by_image(fixations);

  std::vector<std::string> problems;

  struct Row {
    std::string image_id, patient_id;
    Label label;
  };
  std::vector<Row> rows;
  std::set<std::string> seen_ids;
  for (std::size_t i = 0; i < labels.rows.size(); ++i) {
    const auto& f = labels.rows[i];
    const std::string id = trim(f[0]);
    if (id.empty()) {
      problems.push_back(labels_csv + " row " + std::to_string(i + 1) + ": empty image_id");
      continue;
    }
    if (!seen_ids.insert(id).second) {
      problems.push_back(labels_csv + " row " + std::to_string(i + 1) + ": duplicate image_id " + id);
      continue;
    }
    Row r;
    r.image_id = id;
    r.patient_id = trim(f[1]);
    try {
      r.label = parse_label(f[2]);
    } catch (const std::exception& e) {
      problems.push_back(labels_csv + " row " + std::to_string(i + 1) + ": " + e.what());
      continue;
    }
    rows.push_back(std::move(r));
  }

  // Cross-validate the three sources by image id.
  std::set<std::string> files;
  if (!fs::is_directory(image_dir)) throw std::runtime_error(image_dir + ": not a directory");
  for (const fs::directory_entry& e : fs::directory_iterator(image_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.insert(e.path().stem().string());
  }
  for (const Row& r : rows) {
    if (!files.count(r.image_id)) {
      problems.push_back("label row for " + r.image_id + ": missing image file " + image_dir + "/" + r.image_id +
                         ".png");
    }
  }
  for (const std::string& f : files) {
    if (!seen_ids.count(f)) problems.push_back("image " + f + ".png has no label row");
  }
  for (const auto& [id, recs] : by_image) {
    if (!seen_ids.count(id)) {
      problems.push_back("fixations reference unknown image_id " + id + " (" + std::to_string(recs.size()) +
                         " rows)");
    }
  }
  if (!problems.empty()) throw_itemized("load_dataset: dataset is inconsistent", problems);

  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.image_id < b.image_id; });

  GazeRenderConfig gcfg;
  gcfg.sigma_frac = cfg.sigma_frac;
  gcfg.window_ms = cfg.window_ms;
  gcfg.out_h = cfg.target_h;
  gcfg.out_w = cfg.target_w;

  std::vector<Example> out(rows.size());
  parallel_for(rows.size(), 0, [&](std::size_t i) {
    const Row& r = rows[i];
    Example ex;
    ex.image_id = r.image_id;
    ex.patient_id = r.patient_id;
    ex.label = r.label;
    Tensor<float> raw = read_png_gray(image_dir + "/" + r.image_id + ".png");
    ex.image = resize_bilinear(raw, cfg.target_h, cfg.target_w);
    auto it = by_image.find(r.image_id);
    if (it == by_image.end() || it->second.empty()) {
      ex.gaze_static = Heatmap(cfg.target_h, cfg.target_w, Heatmap::Source::Gaze);
    } else {
      std::vector<Tensor<float>> raws = render_temporal_raw(it->second, gcfg);
      for (const Tensor<float>& m : raws) ex.gaze_temporals.push_back(normalize(m, Heatmap::Source::Gaze));
      ex.gaze_static = render_static(raws);
    }
    out[i] = std::move(ex);
  });
  return out;
}

SplitPlan grouped_split(const std::vector<Example>& examples, std::array<double, 3> fractions, std::uint64_t seed) {
  std::vector<ImagePatient> rows;
  rows.reserve(examples.size());
  for (const Example& e : examples) rows.push_back({e.image_id, e.patient_id});
  return grouped_split_ids(rows, fractions, seed);
}

SplitPlan grouped_split_ids(const std::vector<ImagePatient>& rows, std::array<double, 3> fractions,
                            std::uint64_t seed) {
  double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw std::invalid_argument("grouped_split: fractions must be non-negative and sum to 1");
  }
  std::map<std::string, std::vector<std::string>> patients;  // patient -> image ids
  for (const ImagePatient& e : rows) patients[e.patient_id].push_back(e.image_id);
  if (patients.size() < 3) {
    throw std::invalid_argument("grouped_split: need at least 3 patients, got " + std::to_string(patients.size()));
  }

  std::vector<std::string> order;
  order.reserve(patients.size());
  for (const auto& [p, ids] : patients) order.push_back(p);
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  const double total = static_cast<double>(rows.size());
  std::array<double, 3> target{fractions[0] * total, fractions[1] * total, fractions[2] * total};
  std::array<double, 3> count{};
  SplitPlan plan;
  plan.fractions = fractions;
  plan.seed = seed;
  std::array<std::vector<std::string>*, 3> lists{&plan.train, &plan.val, &plan.test};
  for (const std::string& p : order) {
    int best = 0;
    double best_deficit = target[0] - count[0];
    for (int s = 1; s < 3; ++s) {
      const double d = target[static_cast<std::size_t>(s)] - count[static_cast<std::size_t>(s)];
      if (d > best_deficit) {
        best_deficit = d;
        best = s;
      }
    }
    const std::vector<std::string>& ids = patients[p];
    for (const std::string& id : ids) lists[static_cast<std::size_t>(best)]->push_back(id);
    count[static_cast<std::size_t>(best)] += static_cast<double>(ids.size());
  }
  for (auto* l : lists) std::sort(l->begin(), l->end());
  return plan;
}

void save_split(const SplitPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "# seed=" << plan.seed << " fractions=" << plan.fractions[0] << ',' << plan.fractions[1] << ','
      << plan.fractions[2] << '\n';
  out << "image_id,split\n";
  const std::array<const std::vector<std::string>*, 3> lists{&plan.train, &plan.val, &plan.test};
  const char* names[] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    for (const std::string& id : *lists[static_cast<std::size_t>(s)]) out << id << ',' << names[s] << '\n';
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

SplitPlan load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  SplitPlan plan;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# seed=", 0) != 0) {
    throw std::runtime_error(path + ": missing `# seed=... fractions=...` first line");
  }
  {
    std::istringstream ss(line.substr(7));
    char c;
    ss >> plan.seed;
    std::string rest;
    ss >> rest;  // fractions=a,b,c
    if (rest.rfind("fractions=", 0) != 0) throw std::runtime_error(path + ": malformed header line");
    std::istringstream fs_(rest.substr(10));
    fs_ >> plan.fractions[0] >> c >> plan.fractions[1] >> c >> plan.fractions[2];
    if (!fs_) throw std::runtime_error(path + ": malformed fractions");
  }
  if (!std::getline(in, line) || trim(line) != "image_id,split") {
    throw std::runtime_error(path + ": expected `image_id,split` header");
  }
  std::set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 2) throw std::runtime_error(path + " row " + std::to_string(row) + ": expected 2 columns");
    if (!seen.insert(f[0]).second) {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": duplicate image_id " + f[0]);
    }
    if (f[1] == "train") {
      plan.train.push_back(f[0]);
    } else if (f[1] == "val") {
      plan.val.push_back(f[0]);
    } else if (f[1] == "test") {
      plan.test.push_back(f[0]);
    } else {
      throw std::runtime_error(path + " row " + std::to_string(row) + ": unknown split `" + f[1] + "`");
    }
  }
  return plan;
}

namespace {

const char* class_tag(Label l) {
  switch (l) {
    case Label::Normal: return "nrm";
    case Label::Chf: return "chf";
    case Label::Pneumonia: return "pnu";
  }
  return "?";
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

float quantize16(float v) {
  if (v < 0.0f) v = 0.0f;
  if (v > 1.0f) v = 1.0f;
  return static_cast<float>(std::lround(v * 65535.0f)) / 65535.0f;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(int n_per_class, int size, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("generate_synthetic: n_per_class must be >= 1");
  if (size < 16) throw std::invalid_argument("generate_synthetic: size must be >= 16");
  SyntheticCorpus corpus;
  const float s1 = static_cast<float>(size - 1);

  GazeRenderConfig gcfg;
  gcfg.out_h = size;
  gcfg.out_w = size;

  for (int c = 0; c < 3; ++c) {
    const Label label = static_cast<Label>(c);
    for (int k = 0; k < n_per_class; ++k) {
      const int global = c * n_per_class + k;
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(global)));

      Example ex;
      ex.image_id = std::string("syn") + class_tag(label) + zero_pad(k, 5);
      ex.patient_id = std::string("pat") + class_tag(label) + zero_pad(k / 2, 5);
      ex.label = label;
      ex.image = Tensor<float>({1, 1, size, size});

      const double amp = rng.uniform(0.15, 0.3);
      for (float& v : ex.image.data) v = static_cast<float>(rng.uniform(0.0, amp));

      std::vector<std::array<float, 2>> sites;  // fixation anchors, pixel coords
      if (label == Label::Chf) {
        const double cx = rng.uniform(0.35, 0.55) * s1;
        const double cy = rng.uniform(0.40, 0.62) * s1;
        const double sigma_b = rng.uniform(0.09, 0.13) * size;
        const double amp_b = rng.uniform(0.35, 0.5);
        const double inv2s2 = 1.0 / (2.0 * sigma_b * sigma_b);
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            ex.image.at4(0, 0, y, x) += static_cast<float>(amp_b * std::exp(-d2 * inv2s2));
          }
        }
        sites.push_back({static_cast<float>(cx), static_cast<float>(cy)});
      } else if (label == Label::Pneumonia) {
        const int n_patches = 1 + static_cast<int>(rng.below(2));
        for (int p = 0; p < n_patches; ++p) {
          const bool left = rng.below(2) == 0;
          const double cx = (left ? rng.uniform(0.22, 0.38) : rng.uniform(0.62, 0.78)) * s1;
          const double cy = rng.uniform(0.28, 0.68) * s1;
          const double half = rng.uniform(0.05, 0.08) * size;
          const double hi = rng.uniform(0.30, 0.45);
          const double lo = 0.05;
          const int x0 = std::max(0, static_cast<int>(cx - half));
          const int x1 = std::min(size - 1, static_cast<int>(cx + half));
          const int y0 = std::max(0, static_cast<int>(cy - half));
          const int y1 = std::min(size - 1, static_cast<int>(cy + half));
          for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
              // 4-px checkerboard texture; survives a 2x downscale
              const bool high = (((x / 2) + (y / 2)) % 2) == 0;
              ex.image.at4(0, 0, y, x) += static_cast<float>(high ? hi : lo);
            }
          }
          sites.push_back({static_cast<float>(cx), static_cast<float>(cy)});
        }
      } else {
        sites.push_back({0.5f * s1, 0.5f * s1});
      }

      for (float& v : ex.image.data) v = quantize16(v);
      corpus.anchors.push_back(sites[0]);

      const int n_fix = 5 + static_cast<int>(rng.below(6));
      std::vector<FixationRecord> recs;
      const double scatter = 0.06 * size;
      for (int j = 0; j < n_fix; ++j) {
        const std::array<float, 2>& site = sites[static_cast<std::size_t>(j) % sites.size()];
        FixationRecord r;
        r.image_id = ex.image_id;
        r.patient_id = ex.patient_id;
        r.x_norm = std::clamp((site[0] + rng.normal() * scatter) / s1, 0.0, 1.0);
        r.y_norm = std::clamp((site[1] + rng.normal() * scatter) / s1, 0.0, 1.0);
        r.start_ms = rng.uniform(0.0, 2500.0);
        r.duration_ms = rng.uniform(100.0, 600.0);
        recs.push_back(r);
      }
      std::vector<Tensor<float>> raws = render_temporal_raw(recs, gcfg);
      for (const Tensor<float>& m : raws) ex.gaze_temporals.push_back(normalize(m, Heatmap::Source::Gaze));
      ex.gaze_static = render_static(raws);

      corpus.examples.push_back(std::move(ex));
      for (FixationRecord& r : recs) corpus.fixations.push_back(std::move(r));
    }
  }

  // Match load_dataset's ordering.
  std::vector<std::size_t> order(corpus.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.examples[a].image_id < corpus.examples[b].image_id;
  });
  SyntheticCorpus sorted;
  sorted.fixations = std::move(corpus.fixations);
  for (std::size_t i : order) {
    sorted.examples.push_back(std::move(corpus.examples[i]));
    sorted.anchors.push_back(corpus.anchors[i]);
  }
  return sorted;
}

std::vector<Example> generate_synthetic(int n_per_class, int size, std::uint64_t seed) {
  return generate_synthetic_corpus(n_per_class, size, seed).examples;
}

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  for (const Example& e : corpus.examples) {
    write_png_gray16((fs::path(dir) / "images" / (e.image_id + ".png")).string(), e.image);
  }
  std::ofstream labels((fs::path(dir) / "labels.csv").string());
  if (!labels) throw std::runtime_error(dir + "/labels.csv: cannot open for writing");
  labels << "image_id,patient_id,label\n";
  for (const Example& e : corpus.examples) {
    labels << e.image_id << ',' << e.patient_id << ',' << label_name(e.label) << '\n';
  }
  if (!labels) throw std::runtime_error(dir + "/labels.csv: write failed");
  write_fixations_csv((fs::path(dir) / "fixations.csv").string(), corpus.fixations);
}

}  // namespace ggt
