#include "ggt/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <functional>
#include <map>
#include <set>

#include "ggt/eval.hpp"
#include "ggt/parallel.hpp"
#include "ggt/rng.hpp"

namespace ggt {

const char* to_string(Regime r) {
  switch (r) {
    case Regime::ClsOnly: return "cls-only";
    case Regime::MaskVsGaze: return "mask-vs-gaze";
    case Regime::SalVsGaze: return "sal-vs-gaze";
    case Regime::MaskVsSal: return "mask-vs-sal";
    case Regime::Combined: return "combined";
  }
  return "?";
}

Regime parse_regime(const std::string& s) {
  if (s == "cls-only") return Regime::ClsOnly;
  if (s == "mask-vs-gaze") return Regime::MaskVsGaze;
  if (s == "sal-vs-gaze") return Regime::SalVsGaze;
  if (s == "mask-vs-sal") return Regime::MaskVsSal;
  if (s == "combined") return Regime::Combined;
  throw std::invalid_argument("unknown regime `" + s +
                              "` (expected cls-only, mask-vs-gaze, sal-vs-gaze, mask-vs-sal or combined)");
}

Optimizer Optimizer::for_model(const UNetModel<float>& model, const TrainConfig& cfg) {
  Optimizer opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.learning_rate;
  opt.beta1 = cfg.beta1;
  opt.beta2 = cfg.beta2;
  opt.eps = cfg.adam_eps;
  if (opt.kind == TrainConfig::Opt::Adam) {
    for (const Tensor<float>* p : model.params()) {
      opt.m.emplace_back(p->shape);
      opt.v.emplace_back(p->shape);
    }
  }
  return opt;
}

void Optimizer::step(std::vector<Tensor<float>*> params, const ParamGrads<float>& grads) {
  if (params.size() != grads.grads.size()) throw std::invalid_argument("optimizer: parameter/gradient mismatch");
  const float lrf = static_cast<float>(lr);
  if (kind == TrainConfig::Opt::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      float* p = params[i]->data.data();
      const float* g = grads.grads[i].data.data();
      for (std::size_t j = 0; j < params[i]->data.size(); ++j) p[j] -= lrf * g[j];
    }
    return;
  }
  ++t;
  const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(beta1, static_cast<double>(t))));
  const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(beta2, static_cast<double>(t))));
  const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
  const float ef = static_cast<float>(eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* p = params[i]->data.data();
    const float* g = grads.grads[i].data.data();
    float* mi = m[i].data.data();
    float* vi = v[i].data.data();
    for (std::size_t j = 0; j < params[i]->data.size(); ++j) {
      mi[j] = b1 * mi[j] + (1.0f - b1) * g[j];
      vi[j] = b2 * vi[j] + (1.0f - b2) * g[j] * g[j];
      const float mh = mi[j] * c1;
      const float vh = vi[j] * c2;
      p[j] -= lrf * mh / (std::sqrt(vh) + ef);
    }
  }
}

namespace {

struct IndexedSplit {
  std::vector<std::size_t> train, val;
};

IndexedSplit index_split(const std::vector<Example>& examples, const SplitPlan& plan) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < examples.size(); ++i) by_id[examples[i].image_id] = i;

  auto resolve = [&](const std::vector<std::string>& ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw std::invalid_argument("fit: split references unknown image_id " + id);
      out.push_back(it->second);
    }
    return out;
  };

  // Patient-disjointness across all three lists.
  std::array<const std::vector<std::string>*, 3> lists{&plan.train, &plan.val, &plan.test};
  std::array<std::set<std::string>, 3> patients;
  for (int s = 0; s < 3; ++s) {
    for (const std::string& id : *lists[static_cast<std::size_t>(s)]) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw std::invalid_argument("fit: split references unknown image_id " + id);
      patients[static_cast<std::size_t>(s)].insert(examples[it->second].patient_id);
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      for (const std::string& p : patients[static_cast<std::size_t>(a)]) {
        if (patients[static_cast<std::size_t>(b)].count(p)) {
          throw std::invalid_argument("fit: patient " + p + " appears in two splits");
        }
      }
    }
  }

  IndexedSplit s;
  s.train = resolve(plan.train);
  s.val = resolve(plan.val);
  return s;
}

Tensor<float> onehot_of(Label l) {
  Tensor<float> t({3});
  t.data[static_cast<std::size_t>(l)] = 1.0f;
  return t;
}

}  // namespace

FitResult fit(const UNetModel<float>& model_in, const std::vector<Example>& examples, const SplitPlan& plan,
              const RegimeSpec& regime, const TrainConfig& cfg,
              const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  regime.validate();
  IndexedSplit split = index_split(examples, plan);
  if (split.train.empty()) throw std::invalid_argument("fit: empty train split");
  if (split.val.empty()) throw std::invalid_argument("fit: empty validation split");

  UNetModel<float> model = model_in;
  const int h = model.config.input_h, w = model.config.input_w;

  // Per-example tensors used every epoch.
  std::map<std::size_t, Tensor<float>> gaze_t;
  std::map<std::size_t, Tensor<float>> onehot_t;
  auto prepare = [&](const std::vector<std::size_t>& idx) {
    for (std::size_t i : idx) {
      const Example& e = examples[i];
      if (e.image.rank() != 4 || e.image.dim(2) != h || e.image.dim(3) != w) {
        throw std::invalid_argument("fit: example " + e.image_id + " image " + shape_str(e.image.shape) +
                                    " does not match model input " + std::to_string(h) + "x" + std::to_string(w));
      }
      if (e.gaze_static.h != h || e.gaze_static.w != w) {
        throw std::invalid_argument("fit: example " + e.image_id + " gaze map " + std::to_string(e.gaze_static.h) +
                                    "x" + std::to_string(e.gaze_static.w) + " does not match model input");
      }
      gaze_t.emplace(i, to_tensor(e.gaze_static));
      onehot_t.emplace(i, onehot_of(e.label));
    }
  };
  prepare(split.train);
  prepare(split.val);

  Optimizer opt = Optimizer::for_model(model, cfg);

  FitResult result;
  result.model = model;
  result.best_epoch = 0;
  double best_auc = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng rng(mix_seed(cfg.seed, 0x7261696e00ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    double train_loss_sum = 0;
    int batch_index = 0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t bn = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - pos);
      std::vector<ExampleResult<float>> results(bn);
      parallel_for(bn, cfg.threads, [&](std::size_t k) {
        const std::size_t i = order[pos + k];
        results[k] = example_loss_and_grads(model, examples[i].image, onehot_t.at(i), gaze_t.at(i), regime, cfg);
      });
      ParamGrads<float> batch_grads = ParamGrads<float>::like(model);
      double batch_loss = 0;
      for (std::size_t k = 0; k < bn; ++k) {
        batch_grads.add(results[k].grads);
        batch_loss += static_cast<double>(results[k].loss);
      }
      batch_grads.scale(1.0f / static_cast<float>(bn));
      batch_loss /= static_cast<double>(bn);
      if (!std::isfinite(batch_loss)) throw TrainingDiverged(epoch, batch_index);
      train_loss_sum += batch_loss * static_cast<double>(bn);
      opt.step(model.params(), batch_grads);
      model.bump_revision();
    }

    // Validation pass.
    struct ValOut {
      double loss = 0;
      std::array<double, 3> scores{};
    };
    std::vector<ValOut> vals(split.val.size());
    parallel_for(split.val.size(), cfg.threads, [&](std::size_t k) {
      const std::size_t i = split.val[k];
      ForwardRecord<float> rec = forward_one(model, examples[i].image, regime.uses_decoder());
      vals[k].loss = static_cast<double>(total_loss(rec, model, regime, cfg, onehot_t.at(i), gaze_t.at(i)));
      for (int c = 0; c < 3; ++c) {
        vals[k].scores[static_cast<std::size_t>(c)] =
            static_cast<double>(sigmoid_scalar(rec.class_logits.data[static_cast<std::size_t>(c)]));
      }
    });

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = train_loss_sum / static_cast<double>(order.size());
    double val_loss = 0;
    for (const ValOut& v : vals) val_loss += v.loss;
    em.val_loss = val_loss / static_cast<double>(vals.size());

    double auc_sum = 0;
    int auc_n = 0;
    for (int c = 0; c < 3; ++c) {
      std::vector<double> scores(vals.size());
      std::vector<bool> pos(vals.size());
      for (std::size_t k = 0; k < vals.size(); ++k) {
        scores[k] = vals[k].scores[static_cast<std::size_t>(c)];
        pos[k] = examples[split.val[k]].label == static_cast<Label>(c);
      }
      try {
        em.val_auc[static_cast<std::size_t>(c)] = auc(scores, pos);
        auc_sum += em.val_auc[static_cast<std::size_t>(c)];
        ++auc_n;
      } catch (const AucUndefined&) {
        em.val_auc[static_cast<std::size_t>(c)] = std::numeric_limits<double>::quiet_NaN();
      }
    }
    em.val_auc_mean = auc_n > 0 ? auc_sum / auc_n : std::numeric_limits<double>::quiet_NaN();
    result.log.push_back(em);
    if (on_epoch) on_epoch(em);

    if (em.val_auc_mean > best_auc) {
      best_auc = em.val_auc_mean;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "epoch,train_loss,val_loss,val_auc_mean,val_auc_normal,val_auc_chf,val_auc_pneumonia\n";
  char buf[256];
  for (const EpochMetrics& m : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", m.epoch, m.train_loss, m.val_loss,
                  m.val_auc_mean, m.val_auc[0], m.val_auc[1], m.val_auc[2]);
    out << buf;
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace ggt
