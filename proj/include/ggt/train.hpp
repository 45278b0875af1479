#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/data.hpp"
#include "ggt/ops.hpp"
#include "ggt/saliency.hpp"
#include "ggt/tensor.hpp"
#include "ggt/unet.hpp"

namespace ggt {

/// The five loss wirings: classification only; decoder mask vs gaze (the
/// baseline); generator map vs gaze; decoder mask vs a constant generator
/// map; and the alpha-weighted combination of the first and second
/// segmentation terms.
enum class Regime { ClsOnly, MaskVsGaze, SalVsGaze, MaskVsSal, Combined };

const char* to_string(Regime r);
Regime parse_regime(const std::string& s);

struct RegimeSpec {
  Regime kind = Regime::MaskVsGaze;
  BackwardRule rule = BackwardRule::Guided;  // generator rule where one is used
  double alpha = 0.5;                        // Combined only

  bool uses_generator() const {
    return kind == Regime::SalVsGaze || kind == Regime::MaskVsSal || kind == Regime::Combined;
  }
  bool uses_decoder() const {
    return kind == Regime::MaskVsGaze || kind == Regime::MaskVsSal || kind == Regime::Combined;
  }
  void validate() const {
    if (uses_generator() && rule == BackwardRule::Backprop) {
      throw std::invalid_argument("regime: generator rule must be deconvnet or guided");
    }
    if (kind == Regime::Combined && !(alpha >= 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("regime: alpha must be in [0,1], got " + std::to_string(alpha));
    }
  }
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double lambda_cls = 1.0;
  double lambda_seg = 1.0;
  double alpha = 0.5;
  std::uint64_t seed = 1;
  enum class Opt { Sgd, Adam } optimizer = Opt::Adam;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int threads = 0;  // 0 = hardware concurrency; result is thread-count independent

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(learning_rate >= 0)) throw std::invalid_argument("train config: learning_rate must be >= 0");
    if (!(lambda_cls >= 0) || !(lambda_seg >= 0)) throw std::invalid_argument("train config: lambdas must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("train config: alpha must be in [0,1]");
  }
};

/// Numerically stable binary cross-entropy on logits, averaged over elements:
/// mean(max(z,0) - z*y + log(1 + exp(-|z|))).
template <typename T>
T bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  if (logits.data.empty()) throw std::invalid_argument("bce_with_logits: empty input");
  T acc = T(0);
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    const T y = targets.data[i];
    if (!(y >= T(0) && y <= T(1))) {
      throw std::invalid_argument("bce_with_logits: target " + std::to_string(static_cast<double>(y)) +
                                  " outside [0,1] at " + std::to_string(i));
    }
    const T z = logits.data[i];
    const T az = z < T(0) ? -z : z;
    acc += (z > T(0) ? z : T(0)) - z * y + std::log1p(std::exp(-az));
  }
  return acc / static_cast<T>(logits.data.size());
}

/// Loss plus d loss / d logits = (sigmoid(z) - y) / n.
template <typename T>
std::pair<T, Tensor<T>> bce_with_logits_grad(const Tensor<T>& logits, const Tensor<T>& targets) {
  const T loss = bce_with_logits(logits, targets);
  Tensor<T> d;
  d.shape = logits.shape;
  d.data.resize(logits.data.size());
  const T inv_n = T(1) / static_cast<T>(logits.data.size());
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    d.data[i] = (sigmoid_scalar(logits.data[i]) - targets.data[i]) * inv_n;
  }
  return {loss, std::move(d)};
}

namespace detail {

template <typename T>
Tensor<T> as_mask_target(const Tensor<T>& map_hw, const Tensor<T>& mask_logits) {
  if (map_hw.rank() != 2 || map_hw.dim(0) != mask_logits.dim(2) || map_hw.dim(1) != mask_logits.dim(3)) {
    throw std::invalid_argument("segmentation loss: map " + shape_str(map_hw.shape) + " vs mask logits " +
                                shape_str(mask_logits.shape));
  }
  return Tensor<T>::from(mask_logits.shape, map_hw.data);
}

}  // namespace detail

/// Loss-only segmentation term (the gradient path lives in
/// example_loss_and_grads). `gaze` is the static eye-gaze map as an (H,W)
/// tensor in [0,1]; target_class seeds the generator where one is used.
template <typename T>
T segmentation_loss(const RegimeSpec& regime, const ForwardRecord<T>& rec, const UNetModel<T>& model,
                    const Tensor<T>& gaze, int target_class) {
  regime.validate();
  switch (regime.kind) {
    case Regime::ClsOnly: throw std::invalid_argument("segmentation_loss: regime has no segmentation term");
    case Regime::MaskVsGaze: return bce_with_logits(rec.mask_logits, detail::as_mask_target(gaze, rec.mask_logits));
    case Regime::SalVsGaze: {
      Tensor<T> map = saliency_map(model, rec, target_class, regime.rule);
      return bce_with_logits(map, gaze);
    }
    case Regime::MaskVsSal: {
      Tensor<T> map = saliency_map(model, rec, target_class, regime.rule);
      return bce_with_logits(rec.mask_logits, detail::as_mask_target(map, rec.mask_logits));
    }
    case Regime::Combined: {
      Tensor<T> map = saliency_map(model, rec, target_class, regime.rule);
      const T sal = bce_with_logits(map, gaze);
      const T mask = bce_with_logits(rec.mask_logits, detail::as_mask_target(gaze, rec.mask_logits));
      return static_cast<T>(regime.alpha) * sal + static_cast<T>(1.0 - regime.alpha) * mask;
    }
  }
  throw std::logic_error("segmentation_loss: unreachable");
}

template <typename T>
int onehot_argmax(const Tensor<T>& label_onehot) {
  if (label_onehot.rank() != 1) throw std::invalid_argument("label: one-hot must be rank 1");
  int hot = -1;
  for (std::size_t i = 0; i < label_onehot.data.size(); ++i) {
    const T v = label_onehot.data[i];
    if (v == T(1)) {
      if (hot >= 0) throw std::invalid_argument("label: one-hot has more than one 1");
      hot = static_cast<int>(i);
    } else if (v != T(0)) {
      throw std::invalid_argument("label: one-hot entries must be 0 or 1");
    }
  }
  if (hot < 0) throw std::invalid_argument("label: one-hot has no 1");
  return hot;
}

template <typename T>
T total_loss(const ForwardRecord<T>& rec, const UNetModel<T>& model, const RegimeSpec& regime,
             const TrainConfig& cfg, const Tensor<T>& label_onehot, const Tensor<T>& gaze) {
  const int target = onehot_argmax(label_onehot);
  T loss = static_cast<T>(cfg.lambda_cls) * bce_with_logits(rec.class_logits, label_onehot);
  if (regime.kind != Regime::ClsOnly) {
    loss += static_cast<T>(cfg.lambda_seg) * segmentation_loss(regime, rec, model, gaze, target);
  }
  return loss;
}

template <typename T>
struct ExampleResult {
  T loss = T(0);
  ParamGrads<T> grads;
};

/// Loss and exact parameter gradients for one example under a regime.
/// Saliency terms flow through a frozen-mask graph; MaskVsSal's generator
/// target is constant.
template <typename T>
ExampleResult<T> example_loss_and_grads(const UNetModel<T>& model, const Tensor<T>& image,
                                        const Tensor<T>& label_onehot, const Tensor<T>& gaze,
                                        const RegimeSpec& regime, const TrainConfig& cfg) {
  regime.validate();
  const int target = onehot_argmax(label_onehot);
  ForwardRecord<T> rec = forward_one(model, image, regime.uses_decoder());

  ExampleResult<T> out;
  out.grads = ParamGrads<T>::like(model);

  auto [cls_loss, d_class] = bce_with_logits_grad(rec.class_logits, label_onehot);
  out.loss = static_cast<T>(cfg.lambda_cls) * cls_loss;
  for (T& v : d_class.data) v *= static_cast<T>(cfg.lambda_cls);

  Tensor<T> d_mask;  // stays empty unless a mask term exists
  T seg_loss = T(0);

  if (regime.kind == Regime::MaskVsGaze || regime.kind == Regime::Combined) {
    const T w = regime.kind == Regime::Combined ? static_cast<T>(1.0 - regime.alpha) : T(1);
    auto [l, d] = bce_with_logits_grad(rec.mask_logits, detail::as_mask_target(gaze, rec.mask_logits));
    seg_loss += w * l;
    d_mask = std::move(d);
    for (T& v : d_mask.data) v *= static_cast<T>(cfg.lambda_seg) * w;
  } else if (regime.kind == Regime::MaskVsSal) {
    Tensor<T> map = saliency_map(model, rec, target, regime.rule);  // constant target
    auto [l, d] = bce_with_logits_grad(rec.mask_logits, detail::as_mask_target(map, rec.mask_logits));
    seg_loss += l;
    d_mask = std::move(d);
    for (T& v : d_mask.data) v *= static_cast<T>(cfg.lambda_seg);
  }

  unet_backward(model, rec, d_class, d_mask, out.grads);

  if (regime.kind == Regime::SalVsGaze || regime.kind == Regime::Combined) {
    const T w = regime.kind == Regime::Combined ? static_cast<T>(regime.alpha) : T(1);
    SaliencyGraph<T> graph = build_saliency_graph(model, rec, target, regime.rule);
    typename SaliencyGraph<T>::Eval ev = graph.eval();
    auto [l, d_map] = bce_with_logits_grad(ev.map, gaze);
    seg_loss += w * l;
    for (T& v : d_map.data) v *= static_cast<T>(cfg.lambda_seg) * w;
    typename SaliencyGraph<T>::Grads gg = graph.backward(ev, d_map);
    for (auto& [param_index, grad] : gg.by_param) {
      if (param_index < 0) throw std::logic_error("saliency graph node lacks a parameter mapping");
      detail::add_into(out.grads.grads[static_cast<std::size_t>(param_index)], grad);
    }
  }

  if (regime.kind != Regime::ClsOnly) out.loss += static_cast<T>(cfg.lambda_seg) * seg_loss;
  return out;
}

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auc_mean = 0;
  std::array<double, 3> val_auc{};  // normal, CHF, pneumonia
};

struct FitResult {
  UNetModel<float> model;  // parameters at the best validation mean AUC
  std::vector<EpochMetrics> log;
  int best_epoch = 0;
};

/// Training aborted on a non-finite batch loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, int batch)
      : std::runtime_error("training diverged: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

/// Minibatch training over the plan's train split with per-epoch validation
/// metrics; returns the checkpoint with the best validation mean AUC.
/// Per-example gradients within a batch may be computed in parallel; the
/// reduction is in example order, so results do not depend on thread count.
FitResult fit(const UNetModel<float>& model, const std::vector<Example>& examples, const SplitPlan& plan,
              const RegimeSpec& regime, const TrainConfig& cfg,
              const std::function<void(const EpochMetrics&)>& on_epoch = {});

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& log);

/// Adam / SGD on the canonical flat parameter list.
struct Optimizer {
  TrainConfig::Opt kind = TrainConfig::Opt::Adam;
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Tensor<float>> m, v;
  long t = 0;

  static Optimizer for_model(const UNetModel<float>& model, const TrainConfig& cfg);
  void step(std::vector<Tensor<float>*> params, const ParamGrads<float>& grads);
};

}  // namespace ggt
