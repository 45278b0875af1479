#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ggt/heatmap.hpp"
#include "ggt/ops.hpp"
#include "ggt/tensor.hpp"
#include "ggt/unet.hpp"

namespace ggt {

/// One stage of the classifier chain (input -> class logits), in forward
/// order. Saliency passes walk it in reverse. Weight pointers alias the
/// owning model; pre-activation and switch pointers alias a forward record.
template <typename T>
struct PathNode {
  enum class Kind { Conv, Relu, Pool, Gap, Affine };
  Kind kind;
  const Tensor<T>* weight = nullptr;   // Conv, Affine
  const Tensor<T>* pre = nullptr;      // Relu: forward input (pre-activation)
  const TensorI* switches = nullptr;   // Pool
  int stride = 1, padding = 0;         // Conv
  int in_h = 0, in_w = 0;              // Conv, Pool: input spatial extent
  int param_index = -1;                // weight's slot in the model's flat order

  static PathNode conv(const Tensor<T>* w, int stride, int padding, int in_h, int in_w, int param_index = -1) {
    PathNode n;
    n.kind = Kind::Conv;
    n.weight = w;
    n.stride = stride;
    n.padding = padding;
    n.in_h = in_h;
    n.in_w = in_w;
    n.param_index = param_index;
    return n;
  }
  static PathNode relu(const Tensor<T>* pre) {
    PathNode n;
    n.kind = Kind::Relu;
    n.pre = pre;
    return n;
  }
  static PathNode pool(const TensorI* sw, int in_h, int in_w) {
    PathNode n;
    n.kind = Kind::Pool;
    n.switches = sw;
    n.in_h = in_h;
    n.in_w = in_w;
    return n;
  }
  static PathNode gap(int h, int w) {
    PathNode n;
    n.kind = Kind::Gap;
    n.in_h = h;
    n.in_w = w;
    return n;
  }
  static PathNode affine(const Tensor<T>* w, int param_index = -1) {
    PathNode n;
    n.kind = Kind::Affine;
    n.weight = w;
    n.param_index = param_index;
    return n;
  }
};

template <typename T>
struct ClassifierPath {
  std::vector<PathNode<T>> nodes;  // forward order, input side first
  int num_classes = 3;
};

/// Extracts the encoder + bottleneck + head chain of a U-Net forward record.
template <typename T>
ClassifierPath<T> classifier_path(const UNetModel<T>& m, const ForwardRecord<T>& rec) {
  if (!rec.matches(m)) throw std::invalid_argument("saliency: record does not match model state");
  ClassifierPath<T> path;
  path.num_classes = m.config.num_classes;
  const int n = m.stages();
  for (int i = 0; i < n; ++i) {
    const Tensor<T>& act = rec.enc_act[static_cast<std::size_t>(i)];
    const Tensor<T>& in = (i == 0) ? rec.input : rec.pool_out[static_cast<std::size_t>(i - 1)];
    path.nodes.push_back(PathNode<T>::conv(&m.enc_w[static_cast<std::size_t>(i)], 1, 1, in.dim(2), in.dim(3),
                                           m.enc_w_index(i)));
    path.nodes.push_back(PathNode<T>::relu(&rec.enc_pre[static_cast<std::size_t>(i)]));
    path.nodes.push_back(PathNode<T>::pool(&rec.pool_switch[static_cast<std::size_t>(i)], act.dim(2), act.dim(3)));
  }
  const Tensor<T>& bin = rec.pool_out[static_cast<std::size_t>(n - 1)];
  path.nodes.push_back(PathNode<T>::conv(&m.bneck_w, 1, 1, bin.dim(2), bin.dim(3), m.bneck_w_index()));
  path.nodes.push_back(PathNode<T>::relu(&rec.bneck_pre));
  path.nodes.push_back(PathNode<T>::gap(rec.bneck_act.dim(2), rec.bneck_act.dim(3)));
  path.nodes.push_back(PathNode<T>::affine(&m.head_w, m.head_w_index()));
  return path;
}

namespace detail {

template <typename T>
Tensor<T> affine_transpose(const Tensor<T>& w, const Tensor<T>& s) {
  const int rows = w.dim(0), cols = w.dim(1);
  if (s.rank() != 1 || s.dim(0) != rows) {
    throw std::invalid_argument("saliency: seed " + shape_str(s.shape) + " vs head weight " + shape_str(w.shape));
  }
  Tensor<T> out({cols});
  for (int r = 0; r < rows; ++r) {
    const T sv = s.data[static_cast<std::size_t>(r)];
    if (sv == T(0)) continue;
    const T* wr = w.data.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) out.data[static_cast<std::size_t>(c)] += sv * wr[c];
  }
  return out;
}

/// max over channel absolute values, (1,C,H,W) -> (H,W).
template <typename T>
Tensor<T> abs_collapse(const Tensor<T>& g) {
  const int c = g.dim(1), h = g.dim(2), w = g.dim(3);
  Tensor<T> out({h, w});
  for (int ci = 0; ci < c; ++ci) {
    const T* gp = g.data.data() + g.idx4(0, ci, 0, 0);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const T a = gp[i] < T(0) ? -gp[i] : gp[i];
      if (a > out.data[i]) out.data[i] = a;
    }
  }
  return out;
}

template <typename T>
Tensor<T> one_hot_seed(int num_classes, int target_class) {
  if (target_class < 0 || target_class >= num_classes) {
    throw std::invalid_argument("saliency: target class " + std::to_string(target_class) + " outside [0, " +
                                std::to_string(num_classes) + ")");
  }
  Tensor<T> seed({num_classes});
  seed.data[static_cast<std::size_t>(target_class)] = T(1);
  return seed;
}

}  // namespace detail

/// Modified-backward input attribution: seeds a one-hot on the target class
/// logit, walks the path in reverse applying `rule` at each ReLU, collapses
/// channels by absolute value, and rectify-then-max normalizes.
template <typename T>
Tensor<T> saliency_map(const ClassifierPath<T>& path, int target_class, BackwardRule rule) {
  Tensor<T> signal = detail::one_hot_seed<T>(path.num_classes, target_class);
  for (auto it = path.nodes.rbegin(); it != path.nodes.rend(); ++it) {
    const PathNode<T>& n = *it;
    switch (n.kind) {
      case PathNode<T>::Kind::Affine: signal = detail::affine_transpose(*n.weight, signal); break;
      case PathNode<T>::Kind::Gap: signal = gap_backward(signal, n.in_h, n.in_w); break;
      case PathNode<T>::Kind::Relu: signal = relu_backward(signal, *n.pre, rule); break;
      case PathNode<T>::Kind::Pool: signal = maxpool2d_backward(signal, *n.switches, n.in_h, n.in_w); break;
      case PathNode<T>::Kind::Conv:
        signal = conv2d_backward_input(signal, *n.weight, n.stride, n.padding, n.in_h, n.in_w);
        break;
    }
  }
  return normalize_map(detail::abs_collapse(signal));
}

inline Heatmap::Source source_of(BackwardRule rule) {
  switch (rule) {
    case BackwardRule::Backprop: return Heatmap::Source::Backprop;
    case BackwardRule::Deconvnet: return Heatmap::Source::Deconvnet;
    case BackwardRule::Guided: return Heatmap::Source::Guided;
  }
  return Heatmap::Source::Backprop;
}

template <typename T>
Tensor<T> saliency_map(const UNetModel<T>& m, const ForwardRecord<T>& rec, int target_class, BackwardRule rule) {
  return saliency_map(classifier_path(m, rec), target_class, rule);
}

inline Heatmap generate(const UNetModel<float>& m, const ForwardRecord<float>& rec, int target_class,
                        BackwardRule rule) {
  return to_heatmap(saliency_map(m, rec, target_class, rule), source_of(rule));
}

/// Coarse Grad-CAM map at the bottleneck extent: per-channel weights are the
/// spatial mean of d(class logit)/d(feature map), combined and rectified.
template <typename T>
Tensor<T> gradcam_coarse(const UNetModel<T>& m, const ForwardRecord<T>& rec, int target_class) {
  if (!rec.matches(m)) throw std::invalid_argument("gradcam: record does not match model state");
  const Tensor<T>& a = rec.bneck_act;
  const int c = a.dim(1), h = a.dim(2), w = a.dim(3);
  Tensor<T> seed = detail::one_hot_seed<T>(m.config.num_classes, target_class);
  // Gradient flowing into the bottleneck feature maps, through affine + GAP.
  Tensor<T> d_gap = detail::affine_transpose(m.head_w, seed);
  Tensor<T> d_act = gap_backward(d_gap, h, w);
  Tensor<T> weights = gap_forward(d_act);  // per-channel importance
  Tensor<T> cam({h, w});
  for (int ci = 0; ci < c; ++ci) {
    const T wv = weights.data[static_cast<std::size_t>(ci)];
    const T* ap = a.data.data() + a.idx4(0, ci, 0, 0);
    for (std::size_t i = 0; i < cam.data.size(); ++i) cam.data[i] += wv * ap[i];
  }
  for (T& v : cam.data) v = v > T(0) ? v : T(0);
  return cam;
}

template <typename T>
Tensor<T> gradcam_map(const UNetModel<T>& m, const ForwardRecord<T>& rec, int target_class) {
  Tensor<T> cam = gradcam_coarse(m, rec, target_class);
  const int factor = m.config.input_h / cam.dim(0);
  Tensor<T> as4 = Tensor<T>::from({1, 1, cam.dim(0), cam.dim(1)}, cam.data);
  Tensor<T> up = upsample2d_forward(as4, factor);
  return normalize_map(Tensor<T>::from({up.dim(2), up.dim(3)}, up.data));
}

inline Heatmap gradcam(const UNetModel<float>& m, const ForwardRecord<float>& rec, int target_class) {
  return to_heatmap(gradcam_map(m, rec, target_class), Heatmap::Source::GradCam);
}

/// sigmoid of the decoder logits, max-normalized.
inline Heatmap decoder_mask_heatmap(const ForwardRecord<float>& rec) {
  if (!rec.has_decoder) throw std::invalid_argument("decoder mask: record has no decoder output");
  Tensor<float> s = sigmoid(rec.mask_logits);
  return normalize(Tensor<float>::from({s.dim(2), s.dim(3)}, s.data), Heatmap::Source::DecoderMask);
}

/// Replayable saliency pass with the ReLU masks frozen at build time. The
/// output equals the imperative generator exactly; re-evaluating after a
/// weight change keeps the masks, which is what lets a loss on the map send
/// gradients to the weights through the transposed-convolution weight uses.
template <typename T>
struct SaliencyGraph {
  struct Node {
    typename PathNode<T>::Kind kind;
    const Tensor<T>* weight = nullptr;
    Tensor<T> mask;               // Relu: frozen 0/1 mask
    const TensorI* switches = nullptr;
    int stride = 1, padding = 0;
    int in_h = 0, in_w = 0;
    int param_index = -1;
  };

  std::vector<Node> nodes;  // forward order, as in ClassifierPath
  Tensor<T> seed;           // one-hot over class logits
  BackwardRule rule = BackwardRule::Guided;

  struct Eval {
    Tensor<T> map;                        // normalized (H,W) output
    std::vector<Tensor<T>> node_input;    // signal entering each node (exec = reverse order)
    Tensor<T> collapse_in;                // final (1,C,H,W) signal
    Tensor<T> collapse_out;               // pre-normalization (H,W) map
  };

  /// One weight-gradient tensor per graph node that has a weight.
  struct Grads {
    std::vector<std::pair<int, Tensor<T>>> by_param;  // (param_index, grad)
  };

  Eval eval() const {
    Eval e;
    e.node_input.resize(nodes.size());
    Tensor<T> signal = seed;
    for (std::size_t k = nodes.size(); k-- > 0;) {
      const Node& n = nodes[k];
      e.node_input[k] = signal;
      switch (n.kind) {
        case PathNode<T>::Kind::Affine: signal = detail::affine_transpose(*n.weight, signal); break;
        case PathNode<T>::Kind::Gap: signal = gap_backward(signal, n.in_h, n.in_w); break;
        case PathNode<T>::Kind::Relu: {
          Tensor<T> masked;
          masked.shape = signal.shape;
          masked.data.resize(signal.data.size());
          for (std::size_t i = 0; i < signal.data.size(); ++i) masked.data[i] = signal.data[i] * n.mask.data[i];
          signal = std::move(masked);
          break;
        }
        case PathNode<T>::Kind::Pool: signal = maxpool2d_backward(signal, *n.switches, n.in_h, n.in_w); break;
        case PathNode<T>::Kind::Conv:
          signal = conv2d_backward_input(signal, *n.weight, n.stride, n.padding, n.in_h, n.in_w);
          break;
      }
    }
    e.collapse_in = std::move(signal);
    e.collapse_out = detail::abs_collapse(e.collapse_in);
    e.map = normalize_map(e.collapse_out);
    return e;
  }

  /// Gradients of sum(d_map . map) w.r.t. each node weight, masks constant.
  Grads backward(const Eval& e, const Tensor<T>& d_map) const {
    require_same_shape(d_map, e.map, "saliency graph backward");
    Grads out;

    // Through normalize: map = rect(r)/M with M = max rect(r).
    Tensor<T> d_r(e.collapse_out.shape);
    T mx = T(0);
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < e.collapse_out.data.size(); ++i) {
      if (e.collapse_out.data[i] > mx) {
        mx = e.collapse_out.data[i];
        argmax = i;
      }
    }
    if (mx > T(0)) {
      T dot = T(0);  // sum of d_map . map
      for (std::size_t i = 0; i < d_map.data.size(); ++i) dot += d_map.data[i] * e.map.data[i];
      for (std::size_t i = 0; i < d_map.data.size(); ++i) {
        d_r.data[i] = e.collapse_out.data[i] > T(0) ? d_map.data[i] / mx : T(0);
      }
      d_r.data[argmax] -= dot / mx;
    }

    // Through the channel collapse: route to the argmax channel with sign.
    const Tensor<T>& g = e.collapse_in;
    const int c = g.dim(1);
    Tensor<T> u({1, c, g.dim(2), g.dim(3)});
    const std::size_t plane = d_r.data.size();
    for (std::size_t i = 0; i < plane; ++i) {
      int best_c = 0;
      T best = T(-1);
      for (int ci = 0; ci < c; ++ci) {
        const T v = g.data[static_cast<std::size_t>(ci) * plane + i];
        const T a = v < T(0) ? -v : v;
        if (a > best) {
          best = a;
          best_c = ci;
        }
      }
      const T v = g.data[static_cast<std::size_t>(best_c) * plane + i];
      const T sgn = v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
      u.data[static_cast<std::size_t>(best_c) * plane + i] = d_r.data[i] * sgn;
    }

    // Back through the replay, in original forward order.
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const Node& n = nodes[k];
      const Tensor<T>& s_in = e.node_input[k];
      switch (n.kind) {
        case PathNode<T>::Kind::Conv: {
          // node output = convT(s_in, W); adjoint in s is the forward conv,
          // and d W = correlation of u with s_in.
          Tensor<T> dw = conv2d_backward_weight(s_in, u, n.weight->dim(2), n.weight->dim(3), n.stride, n.padding);
          out.by_param.emplace_back(n.param_index, std::move(dw));
          u = conv2d_forward(u, *n.weight, Tensor<T>{}, n.stride, n.padding);
          break;
        }
        case PathNode<T>::Kind::Pool: u = maxpool2d_gather(u, *n.switches); break;
        case PathNode<T>::Kind::Relu: {
          Tensor<T> masked;
          masked.shape = u.shape;
          masked.data.resize(u.data.size());
          for (std::size_t i = 0; i < u.data.size(); ++i) masked.data[i] = u.data[i] * n.mask.data[i];
          u = std::move(masked);
          break;
        }
        case PathNode<T>::Kind::Gap: u = gap_forward(u); break;
        case PathNode<T>::Kind::Affine: {
          // node output = W^T seed; d W = seed (outer) u.
          const int rows = n.weight->dim(0), cols = n.weight->dim(1);
          Tensor<T> dw({rows, cols});
          for (int r = 0; r < rows; ++r) {
            const T sv = s_in.data[static_cast<std::size_t>(r)];
            if (sv == T(0)) continue;
            for (int cc = 0; cc < cols; ++cc) {
              dw.data[static_cast<std::size_t>(r) * cols + cc] = sv * u.data[static_cast<std::size_t>(cc)];
            }
          }
          out.by_param.emplace_back(n.param_index, std::move(dw));
          u = Tensor<T>({rows});  // gradient at the seed; unused
          break;
        }
      }
    }
    return out;
  }
};

/// Builds the frozen-mask graph for a Deconvnet or Guided pass; the build
/// itself runs the imperative walk once to capture the masks.
template <typename T>
SaliencyGraph<T> build_saliency_graph(const ClassifierPath<T>& path, int target_class, BackwardRule rule) {
  if (rule != BackwardRule::Deconvnet && rule != BackwardRule::Guided) {
    throw std::invalid_argument("saliency graph: rule must be deconvnet or guided, got " +
                                std::string(to_string(rule)));
  }
  SaliencyGraph<T> g;
  g.rule = rule;
  g.seed = detail::one_hot_seed<T>(path.num_classes, target_class);
  g.nodes.resize(path.nodes.size());

  Tensor<T> signal = g.seed;
  for (std::size_t k = path.nodes.size(); k-- > 0;) {
    const PathNode<T>& p = path.nodes[k];
    typename SaliencyGraph<T>::Node& n = g.nodes[k];
    n.kind = p.kind;
    n.weight = p.weight;
    n.switches = p.switches;
    n.stride = p.stride;
    n.padding = p.padding;
    n.in_h = p.in_h;
    n.in_w = p.in_w;
    n.param_index = p.param_index;
    switch (p.kind) {
      case PathNode<T>::Kind::Affine: signal = detail::affine_transpose(*p.weight, signal); break;
      case PathNode<T>::Kind::Gap: signal = gap_backward(signal, p.in_h, p.in_w); break;
      case PathNode<T>::Kind::Relu: {
        n.mask = Tensor<T>(signal.shape);
        for (std::size_t i = 0; i < signal.data.size(); ++i) {
          const bool in_pos = p.pre->data[i] > T(0);
          const bool sig_pos = signal.data[i] > T(0);
          const bool keep = rule == BackwardRule::Deconvnet ? sig_pos : (in_pos && sig_pos);
          n.mask.data[i] = keep ? T(1) : T(0);
          signal.data[i] *= n.mask.data[i];
        }
        break;
      }
      case PathNode<T>::Kind::Pool: signal = maxpool2d_backward(signal, *p.switches, p.in_h, p.in_w); break;
      case PathNode<T>::Kind::Conv:
        signal = conv2d_backward_input(signal, *p.weight, p.stride, p.padding, p.in_h, p.in_w);
        break;
    }
  }
  return g;
}

template <typename T>
SaliencyGraph<T> build_saliency_graph(const UNetModel<T>& m, const ForwardRecord<T>& rec, int target_class,
                                      BackwardRule rule) {
  return build_saliency_graph(classifier_path(m, rec), target_class, rule);
}

}  // namespace ggt
