// ggt — synthesize data, render gaze maps, split, train, evaluate and export
// explanation panels for the gaze-guided U-Net classifier.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ggt/checkpoint.hpp"
#include "ggt/csv.hpp"
#include "ggt/data.hpp"
#include "ggt/eval.hpp"
#include "ggt/gaze.hpp"
#include "ggt/parallel.hpp"
#include "ggt/saliency.hpp"
#include "ggt/train.hpp"
#include "ggt/unet.hpp"
#include "ggt/visualize.hpp"

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string> kDefaults = {
    {"seed", "1"},
    {"input_size", "128"},
    {"encoder_channels", "16,32,64,128"},
    {"epochs", "10"},
    {"batch_size", "8"},
    {"learning_rate", "0.001"},
    {"lambda_cls", "1"},
    {"lambda_seg", "1"},
    {"alpha", "0.5"},
    {"optimizer", "adam"},
    {"regime", "mask-vs-gaze"},
    {"rule", "guided"},
    {"sigma_frac", "0.05"},
    {"window_ms", "1000"},
    {"threads", "0"},
    {"iterations", "30"},
    {"resample_size", "0"},
    {"n_per_class", "200"},
    {"size", "128"},
    {"fractions", "0.8,0.1,0.1"},
    {"subset", "test"},
    {"image_dir", ""},
    {"labels_csv", ""},
    {"fixations_csv", ""},
    {"split_file", ""},
    {"checkpoint", ""},
    {"image_ids", ""},
    {"out", "."},
};

/// Exit code 1: bad usage or bad configuration.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(path + ": cannot open config file");
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const std::string t = ggt::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(path + " line " + std::to_string(ln) + ": expected key=value");
    const std::string key = ggt::trim(t.substr(0, eq));
    if (!kDefaults.count(key)) throw UsageError(path + " line " + std::to_string(ln) + ": unknown key `" + key + "`");
    kv[key] = ggt::trim(t.substr(eq + 1));
  }
  return kv;
}

class Conf {
 public:
  Conf(const std::string& config_path, const std::map<std::string, std::string>& cli_overrides) {
    kv_ = kDefaults;
    if (!config_path.empty()) {
      for (const auto& [k, v] : read_config_file(config_path)) kv_[k] = v;
    }
    for (const auto& [k, v] : cli_overrides) kv_[k] = v;
  }

  const std::string& str(const std::string& key) const { return kv_.at(key); }

  long long integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      long long v = std::stoll(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw UsageError("config: " + key + " = `" + str(key) + "` is not an integer");
    }
  }

  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      double v = std::stod(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw UsageError("config: " + key + " = `" + str(key) + "` is not a number");
    }
  }

  std::uint64_t seed() const { return static_cast<std::uint64_t>(integer("seed")); }

  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& part : ggt::split_csv_line(str(key))) {
      try {
        out.push_back(std::stoi(part));
      } catch (...) {
        throw UsageError("config: " + key + " = `" + str(key) + "` is not a comma-separated integer list");
      }
    }
    return out;
  }

  std::array<double, 3> fractions() const {
    const std::vector<std::string> parts = ggt::split_csv_line(str("fractions"));
    if (parts.size() != 3) throw UsageError("config: fractions must have 3 comma-separated values");
    std::array<double, 3> out{};
    for (int i = 0; i < 3; ++i) {
      try {
        out[static_cast<std::size_t>(i)] = std::stod(parts[static_cast<std::size_t>(i)]);
      } catch (...) {
        throw UsageError("config: fractions must be numeric");
      }
    }
    return out;
  }

  std::vector<std::string> id_list() const {
    std::vector<std::string> out;
    for (const std::string& part : ggt::split_csv_line(str("image_ids"))) {
      const std::string t = ggt::trim(part);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  ggt::BackwardRule rule() const {
    const std::string& r = str("rule");
    if (r == "backprop") return ggt::BackwardRule::Backprop;
    if (r == "deconvnet") return ggt::BackwardRule::Deconvnet;
    if (r == "guided") return ggt::BackwardRule::Guided;
    throw UsageError("config: rule must be backprop, deconvnet or guided (or gradcam for explain), got `" + r + "`");
  }

  ggt::UNetConfig unet_config() const {
    ggt::UNetConfig c;
    c.input_h = c.input_w = static_cast<int>(integer("input_size"));
    c.encoder_channels = int_list("encoder_channels");
    c.seed = seed();
    return c;
  }

  ggt::TrainConfig train_config() const {
    ggt::TrainConfig c;
    c.epochs = static_cast<int>(integer("epochs"));
    c.batch_size = static_cast<int>(integer("batch_size"));
    c.learning_rate = real("learning_rate");
    c.lambda_cls = real("lambda_cls");
    c.lambda_seg = real("lambda_seg");
    c.alpha = real("alpha");
    c.seed = seed();
    const std::string& opt = str("optimizer");
    if (opt == "adam") {
      c.optimizer = ggt::TrainConfig::Opt::Adam;
    } else if (opt == "sgd") {
      c.optimizer = ggt::TrainConfig::Opt::Sgd;
    } else {
      throw UsageError("config: optimizer must be adam or sgd, got `" + opt + "`");
    }
    c.threads = static_cast<int>(integer("threads"));
    return c;
  }

  ggt::RegimeSpec regime_spec() const {
    ggt::RegimeSpec r;
    r.kind = ggt::parse_regime(str("regime"));
    if (r.uses_generator()) r.rule = rule();
    r.alpha = real("alpha");
    r.validate();
    return r;
  }

  ggt::LoadConfig load_config(int target) const {
    ggt::LoadConfig c;
    c.target_h = c.target_w = target;
    c.sigma_frac = real("sigma_frac");
    c.window_ms = real("window_ms");
    return c;
  }

  void require_paths(const std::vector<std::string>& keys) const {
    for (const std::string& k : keys) {
      if (str(k).empty()) throw UsageError("missing required option --" + k);
    }
  }

  void echo(const std::string& out_dir) const {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "config.txt").string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    for (const auto& [k, v] : kv_) out << k << " = " << v << '\n';
    if (!out) throw std::runtime_error(path + ": write failed");
  }

 private:
  std::map<std::string, std::string> kv_;
};

std::vector<ggt::Example> load_for(const Conf& conf, int target_size) {
  conf.require_paths({"image_dir", "labels_csv", "fixations_csv"});
  return ggt::load_dataset(conf.str("image_dir"), conf.str("labels_csv"), conf.str("fixations_csv"),
                           conf.load_config(target_size));
}

std::vector<const ggt::Example*> pick_subset(const std::vector<ggt::Example>& examples, const Conf& conf) {
  const std::string& split_file = conf.str("split_file");
  const std::string& subset = conf.str("subset");
  if (split_file.empty() || subset == "all") {
    std::vector<const ggt::Example*> out;
    for (const ggt::Example& e : examples) out.push_back(&e);
    return out;
  }
  ggt::SplitPlan plan = ggt::load_split(split_file);
  const std::vector<std::string>* ids = nullptr;
  if (subset == "train") {
    ids = &plan.train;
  } else if (subset == "val") {
    ids = &plan.val;
  } else if (subset == "test") {
    ids = &plan.test;
  } else {
    throw UsageError("config: subset must be train, val, test or all, got `" + subset + "`");
  }
  std::map<std::string, const ggt::Example*> by_id;
  for (const ggt::Example& e : examples) by_id[e.image_id] = &e;
  std::vector<const ggt::Example*> out;
  for (const std::string& id : *ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("split references unknown image_id " + id);
    out.push_back(it->second);
  }
  return out;
}

int cmd_synth(const Conf& conf) {
  conf.require_paths({"out"});
  const int n = static_cast<int>(conf.integer("n_per_class"));
  const int size = static_cast<int>(conf.integer("size"));
  ggt::SyntheticCorpus corpus = ggt::generate_synthetic_corpus(n, size, conf.seed());
  ggt::write_corpus(corpus, conf.str("out"));
  conf.echo(conf.str("out"));
  std::cout << "wrote " << corpus.examples.size() << " images (" << size << "x" << size << ", " << n
            << " per class) under " << conf.str("out") << "\n";
  return 0;
}

int cmd_render_gaze(const Conf& conf) {
  conf.require_paths({"fixations_csv", "out"});
  const int size = static_cast<int>(conf.integer("size"));
  ggt::GazeRenderConfig gcfg;
  gcfg.sigma_frac = conf.real("sigma_frac");
  gcfg.window_ms = conf.real("window_ms");
  gcfg.out_h = gcfg.out_w = size;

  std::vector<ggt::FixationRecord> fixations = ggt::parse_fixations(conf.str("fixations_csv"));
  auto by_image = ggt::group_by_image(fixations);
  std::vector<std::string> wanted = conf.id_list();
  if (!wanted.empty()) {
    std::map<std::string, std::vector<ggt::FixationRecord>> filtered;
    for (const std::string& id : wanted) {
      auto it = by_image.find(id);
      if (it == by_image.end()) throw std::runtime_error("no fixations for image_id " + id);
      filtered.insert(*it);
    }
    by_image = std::move(filtered);
  }

  fs::create_directories(conf.str("out"));
  std::size_t files = 0;
  for (const auto& [id, recs] : by_image) {
    std::vector<ggt::Tensor<float>> raws = ggt::render_temporal_raw(recs, gcfg);
    for (std::size_t t = 0; t < raws.size(); ++t) {
      ggt::Heatmap hm = ggt::normalize(raws[t], ggt::Heatmap::Source::Gaze);
      ggt::write_png_rgb8((fs::path(conf.str("out")) / (id + "_t" + std::to_string(t) + ".png")).string(),
                          ggt::heatmap_to_rgb(hm));
      ++files;
    }
    ggt::Heatmap stat = ggt::render_static(raws);
    ggt::write_png_rgb8((fs::path(conf.str("out")) / (id + "_static.png")).string(), ggt::heatmap_to_rgb(stat));
    ++files;
  }
  conf.echo(conf.str("out"));
  std::cout << "wrote " << files << " heatmap PNGs for " << by_image.size() << " images under " << conf.str("out")
            << "\n";
  return 0;
}

int cmd_split(const Conf& conf) {
  conf.require_paths({"labels_csv", "out"});
  ggt::CsvFile labels = ggt::read_csv(conf.str("labels_csv"), {"image_id", "patient_id", "label"});
  std::vector<ggt::ImagePatient> rows;
  for (const auto& f : labels.rows) rows.push_back({ggt::trim(f[0]), ggt::trim(f[1])});
  ggt::SplitPlan plan = ggt::grouped_split_ids(rows, conf.fractions(), conf.seed());
  fs::create_directories(conf.str("out"));
  const std::string path = (fs::path(conf.str("out")) / "split.csv").string();
  ggt::save_split(plan, path);
  conf.echo(conf.str("out"));
  std::cout << "split " << rows.size() << " images into " << plan.train.size() << "/" << plan.val.size() << "/"
            << plan.test.size() << " (train/val/test), wrote " << path << "\n";
  return 0;
}

int cmd_train(const Conf& conf) {
  conf.require_paths({"out"});
  ggt::UNetConfig ucfg = conf.unet_config();
  ggt::TrainConfig tcfg = conf.train_config();
  ggt::RegimeSpec regime = conf.regime_spec();

  std::vector<ggt::Example> examples = load_for(conf, ucfg.input_h);
  ggt::SplitPlan plan;
  if (conf.str("split_file").empty()) {
    plan = ggt::grouped_split(examples, conf.fractions(), conf.seed());
    fs::create_directories(conf.str("out"));
    ggt::save_split(plan, (fs::path(conf.str("out")) / "split.csv").string());
  } else {
    plan = ggt::load_split(conf.str("split_file"));
  }

  ggt::UNetModel<float> model = ggt::build_unet<float>(ucfg);
  std::cout << "training regime " << ggt::to_string(regime.kind) << " on " << plan.train.size() << " images ("
            << model.param_count() << " parameters)\n";
  ggt::FitResult result = ggt::fit(model, examples, plan, regime, tcfg, [](const ggt::EpochMetrics& m) {
    std::printf("epoch %3d  train %.4f  val %.4f  val auc %.4f\n", m.epoch, m.train_loss, m.val_loss,
                m.val_auc_mean);
  });

  fs::create_directories(conf.str("out"));
  ggt::save_checkpoint(result.model, (fs::path(conf.str("out")) / "checkpoint.ggt").string());
  ggt::write_metrics_csv((fs::path(conf.str("out")) / "metrics.csv").string(), result.log);
  conf.echo(conf.str("out"));
  std::cout << "best epoch " << result.best_epoch << ", checkpoint and metrics.csv written to " << conf.str("out")
            << "\n";
  return 0;
}

int cmd_eval(const Conf& conf) {
  conf.require_paths({"checkpoint", "out"});
  ggt::UNetModel<float> model = ggt::load_checkpoint(conf.str("checkpoint"));
  std::vector<ggt::Example> examples = load_for(conf, model.config.input_h);
  std::vector<const ggt::Example*> subset = pick_subset(examples, conf);
  if (subset.empty()) throw std::runtime_error("eval: empty subset");

  std::vector<ggt::ScoredExample> scored(subset.size());
  ggt::parallel_for(subset.size(), static_cast<int>(conf.integer("threads")), [&](std::size_t i) {
    const ggt::Example& e = *subset[i];
    std::array<float, 3> p = ggt::classify(model, e.image);
    scored[i].image_id = e.image_id;
    for (int c = 0; c < 3; ++c) scored[i].scores[static_cast<std::size_t>(c)] = static_cast<double>(p[static_cast<std::size_t>(c)]);
    scored[i].true_label = static_cast<int>(e.label);
  });

  ggt::AucReport report = ggt::bootstrap_auc(scored, static_cast<int>(conf.integer("iterations")), conf.seed(),
                                             static_cast<int>(conf.integer("resample_size")));
  const std::string table = ggt::render_report(report);
  fs::create_directories(conf.str("out"));
  {
    std::ofstream t((fs::path(conf.str("out")) / "auc.txt").string());
    t << table;
  }
  {
    std::ofstream c((fs::path(conf.str("out")) / "auc.csv").string());
    c << ggt::render_report_csv(report);
  }
  conf.echo(conf.str("out"));
  std::cout << table;
  return 0;
}

int cmd_explain(const Conf& conf) {
  conf.require_paths({"checkpoint", "out"});
  ggt::UNetModel<float> model = ggt::load_checkpoint(conf.str("checkpoint"));
  std::vector<ggt::Example> examples = load_for(conf, model.config.input_h);

  std::vector<std::string> ids = conf.id_list();
  if (ids.empty()) throw UsageError("explain: --image_ids is required (comma-separated)");
  std::map<std::string, const ggt::Example*> by_id;
  for (const ggt::Example& e : examples) by_id[e.image_id] = &e;

  const bool use_gradcam = conf.str("rule") == "gradcam";
  fs::create_directories(conf.str("out"));
  for (const std::string& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("explain: unknown image_id " + id);
    const ggt::Example& e = *it->second;
    ggt::ForwardRecord<float> rec = ggt::forward_one(model, e.image, true);
    int predicted = 0;
    for (int c = 1; c < 3; ++c) {
      if (rec.class_logits.data[static_cast<std::size_t>(c)] > rec.class_logits.data[static_cast<std::size_t>(predicted)]) {
        predicted = c;
      }
    }
    ggt::Heatmap gen = use_gradcam ? ggt::gradcam(model, rec, predicted)
                                   : ggt::generate(model, rec, predicted, conf.rule());
    ggt::Heatmap mask = ggt::decoder_mask_heatmap(rec);
    std::vector<ggt::RgbImage> panels;
    panels.push_back(ggt::gray_to_rgb(e.image));
    panels.push_back(ggt::overlay(e.image, gen));
    panels.push_back(ggt::overlay(e.image, e.gaze_static));
    panels.push_back(ggt::overlay(e.image, mask));
    const std::string path = (fs::path(conf.str("out")) / (id + "_explain.png")).string();
    ggt::write_png_rgb8(path, ggt::four_panel(panels));
    std::cout << id << ": predicted " << ggt::label_name(static_cast<ggt::Label>(predicted)) << " (true "
              << ggt::label_name(e.label) << "), wrote " << path << "\n";
  }
  conf.echo(conf.str("out"));
  return 0;
}

void add_conf_options(CLI::App* cmd, std::map<std::string, std::string>& overrides, std::string& config_path,
                      const std::vector<std::string>& keys) {
  cmd->add_option("--config", config_path, "key=value config file; flags override file values");
  for (const std::string& key : keys) {
    auto setter = [&overrides, key](const std::string& v) { overrides[key] = v; };
    cmd->add_option_function<std::string>("--" + key, setter, "(default: " + kDefaults.at(key) + ")");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gaze-guided U-Net training and evaluation"};
  app.require_subcommand(1);

  std::map<std::string, std::string> overrides;
  std::string config_path;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_conf_options(synth, overrides, config_path, {"n_per_class", "size", "seed", "out"});

  CLI::App* render = app.add_subcommand("render-gaze", "render gaze heatmap PNGs from a fixation csv");
  add_conf_options(render, overrides, config_path,
                   {"fixations_csv", "sigma_frac", "window_ms", "size", "image_ids", "out"});

  CLI::App* split = app.add_subcommand("split", "write a patient-grouped split plan");
  add_conf_options(split, overrides, config_path, {"labels_csv", "fractions", "seed", "out"});

  CLI::App* train = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  add_conf_options(train, overrides, config_path,
                   {"image_dir", "labels_csv", "fixations_csv", "split_file", "input_size", "encoder_channels",
                    "regime", "rule", "alpha", "epochs", "batch_size", "learning_rate", "lambda_cls", "lambda_seg",
                    "optimizer", "seed", "threads", "sigma_frac", "window_ms", "fractions", "out"});

  CLI::App* eval_cmd = app.add_subcommand("eval", "bootstrap-AUC report for a checkpoint");
  add_conf_options(eval_cmd, overrides, config_path,
                   {"checkpoint", "image_dir", "labels_csv", "fixations_csv", "split_file", "subset", "iterations",
                    "resample_size", "seed", "threads", "sigma_frac", "window_ms", "out"});

  CLI::App* explain = app.add_subcommand("explain", "write four-panel explanation PNGs");
  add_conf_options(explain, overrides, config_path,
                   {"checkpoint", "image_dir", "labels_csv", "fixations_csv", "image_ids", "rule", "sigma_frac",
                    "window_ms", "out"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 1;
  }

  try {
    Conf conf(config_path, overrides);
    if (synth->parsed()) return cmd_synth(conf);
    if (render->parsed()) return cmd_render_gaze(conf);
    if (split->parsed()) return cmd_split(conf);
    if (train->parsed()) return cmd_train(conf);
    if (eval_cmd->parsed()) return cmd_eval(conf);
    if (explain->parsed()) return cmd_explain(conf);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
