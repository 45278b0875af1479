#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/ops.hpp"
#include "ggt/rng.hpp"
#include "ggt/tensor.hpp"

namespace ggt {

/// Multi-head U-Net: conv encoder with max-pooled stages, a conv bottleneck,
/// a GAP + affine classification head, and a skip-connected nearest-upsample
/// decoder that emits a 1-channel mask logit map at input resolution.
struct UNetConfig {
  int input_h = 128;
  int input_w = 128;
  std::vector<int> encoder_channels{16, 32, 64, 128};
  int num_classes = 3;
  std::uint64_t seed = 1;

  int stages() const { return static_cast<int>(encoder_channels.size()); }
  int bottleneck_channels() const { return encoder_channels.empty() ? 0 : 2 * encoder_channels.back(); }

  void validate() const {
    if (input_h != input_w) {
      throw std::invalid_argument("unet config: input must be square, got " + std::to_string(input_h) + "x" +
                                  std::to_string(input_w));
    }
    if (encoder_channels.empty()) throw std::invalid_argument("unet config: encoder_channels is empty");
    for (int c : encoder_channels) {
      if (c < 1) throw std::invalid_argument("unet config: encoder channel counts must be positive");
    }
    int div = 1 << stages();
    if (input_h <= 0 || input_h % div != 0) {
      throw std::invalid_argument("unet config: input size " + std::to_string(input_h) +
                                  " not divisible by 2^" + std::to_string(stages()));
    }
    if (num_classes != 3) {
      throw std::invalid_argument("unet config: num_classes must be 3, got " + std::to_string(num_classes));
    }
  }
};

template <typename T>
struct UNetModel {
  UNetConfig config;
  std::vector<Tensor<T>> enc_w, enc_b;  // per stage: (C_i, C_{i-1}, 3, 3), (C_i)
  Tensor<T> bneck_w, bneck_b;
  Tensor<T> head_w, head_b;             // (num_classes, Cb), (num_classes)
  std::vector<Tensor<T>> dec_w, dec_b;  // per stage i: (C_i, up_i + C_i, 3, 3), (C_i)
  Tensor<T> out_w, out_b;               // (1, C_0, 1, 1), (1)

  std::uint64_t tag = 0;       // build identity, ties records to this model
  std::uint64_t revision = 0;  // bumped on every parameter mutation

  int stages() const { return config.stages(); }

  /// Channels feeding decoder stage i from below (bottleneck for the deepest).
  int up_channels(int i) const {
    return i == stages() - 1 ? config.bottleneck_channels() : config.encoder_channels[static_cast<std::size_t>(i + 1)];
  }

  /// Canonical flat parameter order; checkpoints, optimizers and gradients
  /// all index by it.
  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> out;
    for (int i = 0; i < stages(); ++i) {
      out.push_back(&enc_w[static_cast<std::size_t>(i)]);
      out.push_back(&enc_b[static_cast<std::size_t>(i)]);
    }
    out.push_back(&bneck_w);
    out.push_back(&bneck_b);
    out.push_back(&head_w);
    out.push_back(&head_b);
    for (int i = 0; i < stages(); ++i) {
      out.push_back(&dec_w[static_cast<std::size_t>(i)]);
      out.push_back(&dec_b[static_cast<std::size_t>(i)]);
    }
    out.push_back(&out_w);
    out.push_back(&out_b);
    return out;
  }
  std::vector<const Tensor<T>*> params() const {
    auto* self = const_cast<UNetModel*>(this);
    std::vector<Tensor<T>*> p = self->params();
    return {p.begin(), p.end()};
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (int i = 0; i < stages(); ++i) {
      out.push_back("enc" + std::to_string(i) + ".conv.weight");
      out.push_back("enc" + std::to_string(i) + ".conv.bias");
    }
    out.push_back("bottleneck.conv.weight");
    out.push_back("bottleneck.conv.bias");
    out.push_back("head.fc.weight");
    out.push_back("head.fc.bias");
    for (int i = 0; i < stages(); ++i) {
      out.push_back("dec" + std::to_string(i) + ".conv.weight");
      out.push_back("dec" + std::to_string(i) + ".conv.bias");
    }
    out.push_back("out.conv.weight");
    out.push_back("out.conv.bias");
    return out;
  }

  int enc_w_index(int i) const { return 2 * i; }
  int bneck_w_index() const { return 2 * stages(); }
  int head_w_index() const { return 2 * stages() + 2; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Tensor<T>* p : params()) n += p->numel();
    return n;
  }

  void bump_revision() { ++revision; }
};

/// Activation cache from one forward pass of one example. Holds everything a
/// backward pass under any rule needs, plus the bottleneck feature maps for
/// Grad-CAM, without re-running forward.
template <typename T>
struct ForwardRecord {
  Tensor<T> class_logits;  // (num_classes)
  Tensor<T> mask_logits;   // (1,1,H,W), empty when the decoder was skipped

  Tensor<T> input;                    // (1,1,H,W)
  std::vector<Tensor<T>> enc_pre;     // conv output before ReLU, per stage
  std::vector<Tensor<T>> enc_act;     // ReLU output (skip tap / pool input)
  std::vector<TensorI> pool_switch;   // argmax switches per stage
  std::vector<Tensor<T>> pool_out;    // pooled map (next conv input)
  Tensor<T> bneck_pre, bneck_act;     // bottleneck pre/post ReLU
  Tensor<T> gap_out;                  // (Cb), classification head input
  std::vector<Tensor<T>> dec_cat;     // decoder conv input (up ++ skip)
  std::vector<Tensor<T>> dec_pre;     // decoder conv output before ReLU
  std::vector<Tensor<T>> dec_act;     // decoder ReLU output

  bool has_decoder = false;
  std::uint64_t model_tag = 0;
  std::uint64_t model_revision = 0;

  bool matches(const UNetModel<T>& m) const { return model_tag == m.tag && model_revision == m.revision; }
};

namespace detail {

template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

inline double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace detail

/// Seeded build; the same seed yields a bitwise-identical model.
template <typename T>
UNetModel<T> build_unet(const UNetConfig& config) {
  config.validate();
  UNetModel<T> m;
  m.config = config;
  const int n = config.stages();
  Rng rng(config.seed);

  int in_c = 1;
  for (int i = 0; i < n; ++i) {
    const int out_c = config.encoder_channels[static_cast<std::size_t>(i)];
    Tensor<T> w({out_c, in_c, 3, 3});
    detail::init_uniform(w, detail::xavier_bound(static_cast<std::size_t>(in_c) * 9, static_cast<std::size_t>(out_c) * 9), rng);
    m.enc_w.push_back(std::move(w));
    m.enc_b.emplace_back(std::vector<int>{out_c});
    in_c = out_c;
  }

  const int cb = config.bottleneck_channels();
  m.bneck_w = Tensor<T>({cb, in_c, 3, 3});
  detail::init_uniform(m.bneck_w, detail::xavier_bound(static_cast<std::size_t>(in_c) * 9, static_cast<std::size_t>(cb) * 9), rng);
  m.bneck_b = Tensor<T>({cb});

  m.head_w = Tensor<T>({config.num_classes, cb});
  detail::init_uniform(m.head_w, detail::xavier_bound(static_cast<std::size_t>(cb), static_cast<std::size_t>(config.num_classes)), rng);
  m.head_b = Tensor<T>({config.num_classes});

  m.dec_w.resize(static_cast<std::size_t>(n));
  m.dec_b.resize(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    const int out_c = config.encoder_channels[static_cast<std::size_t>(i)];
    const int cat_c = m.up_channels(i) + out_c;
    Tensor<T> w({out_c, cat_c, 3, 3});
    detail::init_uniform(w, detail::xavier_bound(static_cast<std::size_t>(cat_c) * 9, static_cast<std::size_t>(out_c) * 9), rng);
    m.dec_w[static_cast<std::size_t>(i)] = std::move(w);
    m.dec_b[static_cast<std::size_t>(i)] = Tensor<T>({out_c});
  }

  const int c0 = config.encoder_channels[0];
  m.out_w = Tensor<T>({1, c0, 1, 1});
  detail::init_uniform(m.out_w, detail::xavier_bound(static_cast<std::size_t>(c0), 1), rng);
  m.out_b = Tensor<T>({1});

  m.tag = mix_seed(config.seed, 0xce1ebaa7);
  m.revision = 0;
  return m;
}

/// Forward for one (1,1,H,W) example. Pixel range is validated by the public
/// batched entry point.
template <typename T>
ForwardRecord<T> forward_one(const UNetModel<T>& m, Tensor<T> x, bool with_decoder = true) {
  const int n = m.stages();
  ForwardRecord<T> rec;
  rec.model_tag = m.tag;
  rec.model_revision = m.revision;
  rec.input = std::move(x);

  const Tensor<T>* cur = &rec.input;
  for (int i = 0; i < n; ++i) {
    rec.enc_pre.push_back(conv2d_forward(*cur, m.enc_w[static_cast<std::size_t>(i)], m.enc_b[static_cast<std::size_t>(i)], 1, 1));
    rec.enc_act.push_back(relu_forward(rec.enc_pre.back()));
    PoolResult<T> pr = maxpool2d_forward(rec.enc_act.back(), 2);
    rec.pool_switch.push_back(std::move(pr.switches));
    rec.pool_out.push_back(std::move(pr.out));
    cur = &rec.pool_out.back();
  }

  rec.bneck_pre = conv2d_forward(*cur, m.bneck_w, m.bneck_b, 1, 1);
  rec.bneck_act = relu_forward(rec.bneck_pre);
  rec.gap_out = gap_forward(rec.bneck_act);
  rec.class_logits = affine_forward(rec.gap_out, m.head_w, m.head_b);

  if (with_decoder) {
    rec.dec_cat.resize(static_cast<std::size_t>(n));
    rec.dec_pre.resize(static_cast<std::size_t>(n));
    rec.dec_act.resize(static_cast<std::size_t>(n));
    const Tensor<T>* deeper = &rec.bneck_act;
    for (int i = n - 1; i >= 0; --i) {
      Tensor<T> up = upsample2d_forward(*deeper, 2);
      rec.dec_cat[static_cast<std::size_t>(i)] = concat_channels(up, rec.enc_act[static_cast<std::size_t>(i)]);
      rec.dec_pre[static_cast<std::size_t>(i)] =
          conv2d_forward(rec.dec_cat[static_cast<std::size_t>(i)], m.dec_w[static_cast<std::size_t>(i)], m.dec_b[static_cast<std::size_t>(i)], 1, 1);
      rec.dec_act[static_cast<std::size_t>(i)] = relu_forward(rec.dec_pre[static_cast<std::size_t>(i)]);
      deeper = &rec.dec_act[static_cast<std::size_t>(i)];
    }
    rec.mask_logits = conv2d_forward(rec.dec_act[0], m.out_w, m.out_b, 1, 0);
    rec.has_decoder = true;
  }

  if (!rec.class_logits.all_finite() || (rec.has_decoder && !rec.mask_logits.all_finite())) {
    throw std::runtime_error("unet forward: non-finite logits");
  }
  return rec;
}

/// Batched forward; one record per example. Rejects out-of-range pixels.
template <typename T>
std::vector<ForwardRecord<T>> forward(const UNetModel<T>& m, const Tensor<T>& batch, bool with_decoder = true) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != m.config.input_h || batch.dim(3) != m.config.input_w) {
    throw std::invalid_argument("unet forward: batch " + shape_str(batch.shape) + " does not match configured input (Nx1x" +
                                std::to_string(m.config.input_h) + "x" + std::to_string(m.config.input_w) + ")");
  }
  for (std::size_t i = 0; i < batch.data.size(); ++i) {
    const T v = batch.data[i];
    if (!(v >= T(0) && v <= T(1))) {
      throw std::invalid_argument("unet forward: pixel " + std::to_string(i) + " = " + std::to_string(static_cast<double>(v)) +
                                  " outside [0,1]");
    }
  }
  const int n = batch.dim(0);
  const std::size_t plane = static_cast<std::size_t>(batch.dim(2)) * batch.dim(3);
  std::vector<ForwardRecord<T>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor<T> x({1, 1, batch.dim(2), batch.dim(3)});
    std::copy(batch.data.begin() + static_cast<std::ptrdiff_t>(i * plane),
              batch.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * plane), x.data.begin());
    out.push_back(forward_one(m, std::move(x), with_decoder));
  }
  return out;
}

/// Per-class sigmoid probabilities for one image (multi-label framing; the
/// three values do not sum to 1).
template <typename T>
std::array<T, 3> classify(const UNetModel<T>& m, const Tensor<T>& image) {
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw std::invalid_argument("classify: image must be (1,1,H,W), got " + shape_str(image.shape));
  }
  ForwardRecord<T> rec = forward(m, image, false)[0];
  std::array<T, 3> p{};
  for (int c = 0; c < 3; ++c) p[static_cast<std::size_t>(c)] = sigmoid_scalar(rec.class_logits.data[static_cast<std::size_t>(c)]);
  return p;
}

/// Gradients for every parameter, in the model's canonical flat order.
template <typename T>
struct ParamGrads {
  std::vector<Tensor<T>> grads;

  static ParamGrads like(const UNetModel<T>& m) {
    ParamGrads g;
    for (const Tensor<T>* p : m.params()) g.grads.emplace_back(p->shape);
    return g;
  }

  void add(const ParamGrads& o) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (std::size_t j = 0; j < grads[i].data.size(); ++j) grads[i].data[j] += o.grads[i].data[j];
    }
  }

  void scale(T s) {
    for (Tensor<T>& g : grads)
      for (T& v : g.data) v *= s;
  }
};

namespace detail {

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace detail

/// Exact backward of one example under the true (Backprop) gradient. Seeds
/// are the upstream gradients at the two heads; either may be empty. Returns
/// the input gradient when requested.
template <typename T>
Tensor<T> unet_backward(const UNetModel<T>& m, const ForwardRecord<T>& rec, const Tensor<T>& d_class_logits,
                        const Tensor<T>& d_mask_logits, ParamGrads<T>& out, bool want_input_grad = false) {
  const int n = m.stages();
  if (!rec.matches(m)) throw std::invalid_argument("unet backward: record does not match model state");

  // Gradient w.r.t. each encoder stage's ReLU output (skip + pool fan-in).
  std::vector<Tensor<T>> d_enc_act(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d_enc_act[static_cast<std::size_t>(i)] = Tensor<T>(rec.enc_act[static_cast<std::size_t>(i)].shape);
  Tensor<T> d_bneck_act(rec.bneck_act.shape);

  const int base_dec = 2 * n + 4;
  if (!d_class_logits.data.empty()) {
    AffineGrads<T> hg = affine_backward(d_class_logits, rec.gap_out, m.head_w);
    detail::add_into(out.grads[static_cast<std::size_t>(m.head_w_index())], hg.weight);
    detail::add_into(out.grads[static_cast<std::size_t>(m.head_w_index() + 1)], hg.bias);
    detail::add_into(d_bneck_act, gap_backward(hg.input, rec.bneck_act.dim(2), rec.bneck_act.dim(3)));
  }

  if (!d_mask_logits.data.empty()) {
    if (!rec.has_decoder) throw std::invalid_argument("unet backward: record has no decoder cache");
    ConvGrads<T> og = conv2d_backward(d_mask_logits, rec.dec_act[0], m.out_w, 1, 0);
    detail::add_into(out.grads[static_cast<std::size_t>(base_dec + 2 * n)], og.weight);
    detail::add_into(out.grads[static_cast<std::size_t>(base_dec + 2 * n + 1)], og.bias);
    Tensor<T> d_dec_act = std::move(og.input);
    for (int i = 0; i < n; ++i) {
      Tensor<T> d_pre = relu_backward(d_dec_act, rec.dec_pre[static_cast<std::size_t>(i)], BackwardRule::Backprop);
      ConvGrads<T> cg = conv2d_backward(d_pre, rec.dec_cat[static_cast<std::size_t>(i)], m.dec_w[static_cast<std::size_t>(i)], 1, 1);
      detail::add_into(out.grads[static_cast<std::size_t>(base_dec + 2 * i)], cg.weight);
      detail::add_into(out.grads[static_cast<std::size_t>(base_dec + 2 * i + 1)], cg.bias);
      auto [d_up, d_skip] = split_channels(cg.input, m.up_channels(i));
      detail::add_into(d_enc_act[static_cast<std::size_t>(i)], d_skip);
      Tensor<T> d_deeper = upsample2d_backward(d_up, 2);
      if (i == n - 1) {
        detail::add_into(d_bneck_act, d_deeper);
      } else {
        d_dec_act = std::move(d_deeper);
      }
    }
  }

  // Bottleneck and encoder, deepest first.
  Tensor<T> d_bneck_pre = relu_backward(d_bneck_act, rec.bneck_pre, BackwardRule::Backprop);
  const Tensor<T>& bneck_in = rec.pool_out[static_cast<std::size_t>(n - 1)];
  ConvGrads<T> bg = conv2d_backward(d_bneck_pre, bneck_in, m.bneck_w, 1, 1);
  detail::add_into(out.grads[static_cast<std::size_t>(m.bneck_w_index())], bg.weight);
  detail::add_into(out.grads[static_cast<std::size_t>(m.bneck_w_index() + 1)], bg.bias);
  Tensor<T> d_pool = std::move(bg.input);

  Tensor<T> d_input;
  for (int i = n - 1; i >= 0; --i) {
    Tensor<T>& d_act = d_enc_act[static_cast<std::size_t>(i)];
    detail::add_into(d_act, maxpool2d_backward(d_pool, rec.pool_switch[static_cast<std::size_t>(i)],
                                               rec.enc_act[static_cast<std::size_t>(i)].dim(2),
                                               rec.enc_act[static_cast<std::size_t>(i)].dim(3)));
    Tensor<T> d_pre = relu_backward(d_act, rec.enc_pre[static_cast<std::size_t>(i)], BackwardRule::Backprop);
    const Tensor<T>& conv_in = (i == 0) ? rec.input : rec.pool_out[static_cast<std::size_t>(i - 1)];
    ConvGrads<T> cg = conv2d_backward(d_pre, conv_in, m.enc_w[static_cast<std::size_t>(i)], 1, 1);
    detail::add_into(out.grads[static_cast<std::size_t>(m.enc_w_index(i))], cg.weight);
    detail::add_into(out.grads[static_cast<std::size_t>(m.enc_w_index(i) + 1)], cg.bias);
    if (i == 0) {
      if (want_input_grad) d_input = std::move(cg.input);
    } else {
      d_pool = std::move(cg.input);
    }
  }
  return d_input;
}

}  // namespace ggt
