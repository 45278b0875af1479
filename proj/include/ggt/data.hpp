#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ggt/gaze.hpp"
#include "ggt/heatmap.hpp"
#include "ggt/tensor.hpp"

namespace ggt {

enum class Label { Normal = 0, Chf = 1, Pneumonia = 2 };

/// Trims and matches case-insensitively; anything but normal/CHF/pneumonia is
/// rejected.
Label parse_label(const std::string& s);
const char* label_name(Label l);

struct Example {
  std::string image_id;
  std::string patient_id;
  Tensor<float> image;  // (1,1,H,W) grayscale in [0,1]
  Label label = Label::Normal;
  Heatmap gaze_static;
  std::vector<Heatmap> gaze_temporals;
};

struct SplitPlan {
  std::vector<std::string> train, val, test;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

struct LoadConfig {
  int target_h = 128;
  int target_w = 128;
  double sigma_frac = 0.05;
  double window_ms = 1000.0;
};

/// Loads `<image_dir>/<image_id>.png` per labels row, rescales to the target
/// size, renders gaze maps from the fixation csv, and returns examples sorted
/// by image_id. ID mismatches between the three sources are itemized in one
/// error.
std::vector<Example> load_dataset(const std::string& image_dir, const std::string& labels_csv,
                                  const std::string& fixations_csv, const LoadConfig& cfg);

/// Patient-grouped split: patients are shuffled by seed and greedily assigned
/// to the split furthest below its image-count target.
SplitPlan grouped_split(const std::vector<Example>& examples, std::array<double, 3> fractions, std::uint64_t seed);

struct ImagePatient {
  std::string image_id;
  std::string patient_id;
};
SplitPlan grouped_split_ids(const std::vector<ImagePatient>& rows, std::array<double, 3> fractions,
                            std::uint64_t seed);

void save_split(const SplitPlan& plan, const std::string& path);
SplitPlan load_split(const std::string& path);

struct SyntheticCorpus {
  std::vector<Example> examples;
  std::vector<FixationRecord> fixations;
  // Scatter anchor per example (blob center; image center for normals), in
  // pixel coordinates of the generated size.
  std::vector<std::array<float, 2>> anchors;
};

/// Class-balanced synthetic radiograph stand-ins: noise background, a wide
/// bright blob for CHF, small textured patches for pneumonia, plus synthetic
/// fixations scattered around the relevant site. One patient per 2 images.
SyntheticCorpus generate_synthetic_corpus(int n_per_class, int size, std::uint64_t seed);

std::vector<Example> generate_synthetic(int n_per_class, int size, std::uint64_t seed);

/// Writes images/, labels.csv and fixations.csv so load_dataset can read the
/// corpus back.
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);

}  // namespace ggt
