#include "xmodal/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "xmodal/encoder.hpp"
#include "xmodal/error.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  return t;
}

// --- backbone spec ------------------------------------------------------

BackboneSpec parse_backbone_spec(const std::string& text) {
  BackboneSpec spec;
  spec.text = text;
  spec.feature_dim = 0;

  std::size_t start = 0;
  std::vector<std::string> tokens;
  while (start <= text.size()) {
    std::size_t pos = text.find(',', start);
    if (pos == std::string::npos) pos = text.size();
    std::string tok = text.substr(start, pos - start);
    // trim spaces
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    if (!tok.empty()) tokens.push_back(tok);
    start = pos + 1;
  }
  if (tokens.empty()) throw InputError("empty backbone spec");

  auto parse_arg = [](const std::string& tok, std::size_t prefix) {
    const std::string num = tok.substr(prefix);
    if (num.empty() ||
        !std::all_of(num.begin(), num.end(),
                     [](unsigned char c) { return std::isdigit(c); })) {
      throw InputError(format_msg("bad backbone layer '", tok, "'"));
    }
    int v = std::stoi(num);
    if (v < 1) throw InputError(format_msg("bad backbone layer '", tok, "'"));
    return v;
  };

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (tok.rfind("pool", 0) == 0) {
      spec.layers.push_back({LayerKind::Pool, parse_arg(tok, 4)});
    } else if (tok.rfind("conv", 0) == 0) {
      spec.layers.push_back({LayerKind::Conv, parse_arg(tok, 4)});
    } else if (tok.rfind("fc", 0) == 0) {
      if (i + 1 != tokens.size()) {
        throw InputError("backbone fc layer must come last");
      }
      spec.feature_dim = parse_arg(tok, 2);
    } else {
      throw InputError(format_msg("unknown backbone layer '", tok, "'"));
    }
  }
  if (spec.feature_dim == 0) {
    throw InputError("backbone spec needs a trailing fc layer");
  }
  return spec;
}

namespace {

struct StageShape {
  int ch, h, w;
  std::size_t numel() const {
    return static_cast<std::size_t>(ch) * h * w;
  }
};

// Shapes entering each layer; back() is the flatten input to the fc.
std::vector<StageShape> stage_shapes(const BackboneSpec& spec, int input_h,
                                     int input_w) {
  std::vector<StageShape> shapes;
  StageShape cur{3, input_h, input_w};
  shapes.push_back(cur);
  for (const auto& layer : spec.layers) {
    if (layer.kind == LayerKind::Pool) {
      if (cur.h % layer.arg != 0 || cur.w % layer.arg != 0) {
        throw InputError(format_msg("pool", layer.arg, " does not divide ",
                                    cur.h, "x", cur.w));
      }
      cur.h /= layer.arg;
      cur.w /= layer.arg;
    } else {
      cur.ch = layer.arg;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

}  // namespace

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  for (auto& c : convs) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.push_back(&feature.weight);
  out.push_back(&feature.bias);
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  for (const auto& c : convs) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  out.push_back(&feature.weight);
  out.push_back(&feature.bias);
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    names.push_back(format_msg("conv", i, ".weight"));
    names.push_back(format_msg("conv", i, ".bias"));
  }
  names.push_back("feature.weight");
  names.push_back("feature.bias");
  names.push_back("classifier.weight");
  names.push_back("classifier.bias");
  return names;
}

namespace {

void glorot_fill(Tensor& t, double fan_in, double fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
}

}  // namespace

ModelParams init_params(const BackboneSpec& spec, int input_h, int input_w,
                        int num_classes, Rng& rng) {
  if (input_h < 1 || input_w < 1) throw InputError("bad input size");
  if (num_classes < 1) throw InputError("need at least one class");

  ModelParams params;
  params.spec = spec;
  params.input_h = input_h;
  params.input_w = input_w;
  params.num_classes = num_classes;

  const auto shapes = stage_shapes(spec, input_h, input_w);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (spec.layers[l].kind != LayerKind::Conv) continue;
    const int in_ch = shapes[l].ch;
    const int out_ch = spec.layers[l].arg;
    ConvParams conv;
    conv.weight = Tensor::zeros({out_ch, in_ch, 3, 3});
    conv.bias = Tensor::zeros({out_ch});
    glorot_fill(conv.weight, in_ch * 9.0, out_ch * 9.0, rng);
    params.convs.push_back(std::move(conv));
  }
  const int flat = static_cast<int>(shapes.back().numel());
  params.feature.weight = Tensor::zeros({spec.feature_dim, flat});
  params.feature.bias = Tensor::zeros({spec.feature_dim});
  glorot_fill(params.feature.weight, flat, spec.feature_dim, rng);
  params.classifier.weight = Tensor::zeros({num_classes, spec.feature_dim});
  params.classifier.bias = Tensor::zeros({num_classes});
  glorot_fill(params.classifier.weight, spec.feature_dim, num_classes, rng);
  return params;
}

// --- layer kernels ------------------------------------------------------

namespace {

Tensor canvas_to_tensor(const Canvas& canvas) {
  Tensor t = Tensor::zeros({3, canvas.height, canvas.width});
  const std::size_t plane = static_cast<std::size_t>(canvas.height) * canvas.width;
  for (int y = 0; y < canvas.height; ++y) {
    for (int x = 0; x < canvas.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * canvas.width + x;
      for (int c = 0; c < 3; ++c) {
        t.data[c * plane + p] = canvas.at(y, x, c) / 255.0;
      }
    }
  }
  return t;
}

// 3x3 zero-padded convolution followed by ReLU.
void conv_relu_forward(const ConvParams& p, const Tensor& in, Tensor& out) {
  const int ci_n = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int co_n = p.weight.shape[0];
  out = Tensor::zeros({co_n, h, w});
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int co = 0; co < co_n; ++co) {
    double* op = &out.data[co * plane];
    const double bias = p.bias.data[co];
    for (std::size_t i = 0; i < plane; ++i) op[i] = bias;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* ip = &in.data[ci * plane];
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = p.weight.data[((co * ci_n + ci) * 3 + ky) * 3 + kx];
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          for (int y = y0; y < y1; ++y) {
            double* orow = op + static_cast<std::size_t>(y) * w;
            const double* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
    for (std::size_t i = 0; i < plane; ++i) {
      if (op[i] < 0.0) op[i] = 0.0;
    }
  }
}

// dout already masked by the ReLU derivative.
void conv_backward(const ConvParams& p, const Tensor& in, const Tensor& dout,
                   Tensor& dw, Tensor& db, Tensor& din) {
  const int ci_n = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int co_n = p.weight.shape[0];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  din = Tensor::zeros(in.shape);
  for (int co = 0; co < co_n; ++co) {
    const double* gp = &dout.data[co * plane];
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
    db.data[co] += acc;
    for (int ci = 0; ci < ci_n; ++ci) {
      const double* ip = &in.data[ci * plane];
      double* dip = &din.data[ci * plane];
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const std::size_t widx = ((co * ci_n + ci) * 3 + ky) * 3 + kx;
          const double wv = p.weight.data[widx];
          const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          double wacc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = gp + static_cast<std::size_t>(y) * w;
            const double* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            double* drow = dip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) {
              wacc += grow[x] * irow[x];
              drow[x] += grow[x] * wv;
            }
          }
          dw.data[widx] += wacc;
        }
      }
    }
  }
}

void pool_forward(int k, const Tensor& in, Tensor& out) {
  const int ch = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int oh = h / k, ow = w / k;
  out = Tensor::zeros({ch, oh, ow});
  const double inv = 1.0 / (k * k);
  for (int c = 0; c < ch; ++c) {
    const double* ip = &in.data[static_cast<std::size_t>(c) * h * w];
    double* op = &out.data[static_cast<std::size_t>(c) * oh * ow];
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy) {
          const double* irow = ip + static_cast<std::size_t>(y * k + dy) * w + x * k;
          for (int dx = 0; dx < k; ++dx) acc += irow[dx];
        }
        op[static_cast<std::size_t>(y) * ow + x] = acc * inv;
      }
    }
  }
}

void pool_backward(int k, const Tensor& in, const Tensor& dout, Tensor& din) {
  const int ch = in.shape[0], h = in.shape[1], w = in.shape[2];
  const int oh = h / k, ow = w / k;
  din = Tensor::zeros(in.shape);
  const double inv = 1.0 / (k * k);
  for (int c = 0; c < ch; ++c) {
    const double* gp = &dout.data[static_cast<std::size_t>(c) * oh * ow];
    double* dp = &din.data[static_cast<std::size_t>(c) * h * w];
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double g = gp[static_cast<std::size_t>(y) * ow + x] * inv;
        for (int dy = 0; dy < k; ++dy) {
          double* drow = dp + static_cast<std::size_t>(y * k + dy) * w + x * k;
          for (int dx = 0; dx < k; ++dx) drow[dx] += g;
        }
      }
    }
  }
}

void fc_forward(const FcParams& p, const double* in, std::size_t in_n,
                std::vector<double>& out) {
  const int out_n = p.weight.shape[0];
  out.assign(out_n, 0.0);
  for (int o = 0; o < out_n; ++o) {
    const double* wrow = &p.weight.data[static_cast<std::size_t>(o) * in_n];
    double acc = p.bias.data[o];
    for (std::size_t i = 0; i < in_n; ++i) acc += wrow[i] * in[i];
    out[o] = acc;
  }
}

void fc_backward(const FcParams& p, const double* in, std::size_t in_n,
                 const std::vector<double>& dout, Tensor& dw, Tensor& db,
                 std::vector<double>& din) {
  const int out_n = p.weight.shape[0];
  din.assign(in_n, 0.0);
  for (int o = 0; o < out_n; ++o) {
    const double g = dout[o];
    db.data[o] += g;
    const double* wrow = &p.weight.data[static_cast<std::size_t>(o) * in_n];
    double* dwrow = &dw.data[static_cast<std::size_t>(o) * in_n];
    for (std::size_t i = 0; i < in_n; ++i) {
      dwrow[i] += g * in[i];
      din[i] += g * wrow[i];
    }
  }
}

struct ForwardStack {
  std::vector<Tensor> acts;     // acts[0] = input; acts[l+1] = layer l output
  std::vector<double> feature;  // backbone fc output
};

void check_input(const ModelParams& params, const Canvas& canvas) {
  if (canvas.height != params.input_h || canvas.width != params.input_w) {
    throw Error(format_msg("input canvas is ", canvas.height, "x",
                           canvas.width, ", model expects ", params.input_h,
                           "x", params.input_w));
  }
}

ForwardStack forward_stack(const ModelParams& params, const Canvas& canvas) {
  check_input(params, canvas);
  ForwardStack stack;
  stack.acts.reserve(params.spec.layers.size() + 1);
  stack.acts.push_back(canvas_to_tensor(canvas));
  std::size_t conv_idx = 0;
  for (const auto& layer : params.spec.layers) {
    Tensor out;
    if (layer.kind == LayerKind::Pool) {
      pool_forward(layer.arg, stack.acts.back(), out);
    } else {
      conv_relu_forward(params.convs[conv_idx++], stack.acts.back(), out);
    }
    stack.acts.push_back(std::move(out));
  }
  const Tensor& flat = stack.acts.back();
  fc_forward(params.feature, flat.data.data(), flat.data.size(),
             stack.feature);
  return stack;
}

// Accumulates backbone gradients for one item into grads (ordered like
// ModelParams::tensors()); dfeature is d(loss)/d(feature).
void backward_stack(const ModelParams& params, const ForwardStack& stack,
                    const std::vector<double>& dfeature,
                    std::vector<Tensor>& grads) {
  const std::size_t n_conv = params.convs.size();
  Tensor& dw_feat = grads[2 * n_conv];
  Tensor& db_feat = grads[2 * n_conv + 1];

  const Tensor& flat = stack.acts.back();
  std::vector<double> dflat;
  fc_backward(params.feature, flat.data.data(), flat.data.size(), dfeature,
              dw_feat, db_feat, dflat);

  Tensor dcur;
  dcur.shape = flat.shape;
  dcur.data = std::move(dflat);

  std::size_t conv_idx = n_conv;
  for (std::size_t l = params.spec.layers.size(); l-- > 0;) {
    const auto& layer = params.spec.layers[l];
    const Tensor& in = stack.acts[l];
    const Tensor& out = stack.acts[l + 1];
    Tensor din;
    if (layer.kind == LayerKind::Pool) {
      pool_backward(layer.arg, in, dcur, din);
    } else {
      --conv_idx;
      // ReLU derivative: output stored post-activation, zero stays zero.
      for (std::size_t i = 0; i < dcur.data.size(); ++i) {
        if (out.data[i] <= 0.0) dcur.data[i] = 0.0;
      }
      conv_backward(params.convs[conv_idx], in, dcur, grads[2 * conv_idx],
                    grads[2 * conv_idx + 1], din);
    }
    dcur = std::move(din);
  }
}

}  // namespace

std::vector<double> forward(const ModelParams& params, const Canvas& canvas) {
  return forward_stack(params, canvas).feature;
}

// --- losses -------------------------------------------------------------

double center_distance(const std::vector<std::vector<double>>& features) {
  if (features.empty()) throw Error("center distance of an empty group");
  const std::size_t dim = features.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& f : features) {
    if (f.size() != dim) throw Error("center distance: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) mean[i] += f[i];
  }
  for (double& m : mean) m /= static_cast<double>(features.size());
  double total = 0.0;
  for (const auto& f : features) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = f[i] - mean[i];
      total += d * d;
    }
  }
  return total;
}

double center_loss(
    const std::vector<std::vector<std::vector<double>>>& class_groups) {
  double total = 0.0;
  for (const auto& group : class_groups) total += center_distance(group);
  return 0.5 * total;
}

double softmax_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw Error(format_msg("label ", label, " out of range for ",
                           logits.size(), " logits"));
  }
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  return std::log(sum) - (logits[label] - zmax);
}

std::pair<int, int> MiniBatch::modality_counts(int label) const {
  int n_images = 0, n_texts = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != label) continue;
    (modalities[i] == Modality::Image ? n_images : n_texts) += 1;
  }
  return {n_images, n_texts};
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw InputError("learning rate must be positive");
  if (lambda_center < 0.0) throw InputError("lambda_center must be >= 0");
  if (weight_decay < 0.0) throw InputError("weight decay must be >= 0");
  if (epochs < 0) throw InputError("epochs must be >= 0");
  if (batch < 2) throw InputError("batch size must be >= 2");
  if (ema_centers && (ema_alpha <= 0.0 || ema_alpha > 1.0)) {
    throw InputError("ema_alpha must be in (0, 1]");
  }
}

AugmentationScheme augmentation_from_string(const std::string& s) {
  if (s == "cfg-std" || s == "cfg_std") return AugmentationScheme::CfgStd;
  if (s == "cfg-2" || s == "cfg_2") return AugmentationScheme::Cfg2;
  if (s == "cfg-3" || s == "cfg_3") return AugmentationScheme::Cfg3;
  throw InputError(format_msg("unknown augmentation scheme '", s, "'"));
}

const char* to_string(AugmentationScheme a) {
  switch (a) {
    case AugmentationScheme::CfgStd:
      return "cfg-std";
    case AugmentationScheme::Cfg2:
      return "cfg-2";
    case AugmentationScheme::Cfg3:
      return "cfg-3";
  }
  return "?";
}

std::pair<LossBreakdown, std::vector<Tensor>> joint_loss_and_grads(
    const ModelParams& params, const MiniBatch& batch, const TrainConfig& cfg,
    ClassCenters* ema_state) {
  const std::size_t n = batch.size();
  if (n == 0) throw Error("empty mini batch");
  if (batch.labels.size() != n || batch.modalities.size() != n) {
    throw Error("mini batch field lengths differ");
  }
  const int feat_dim = params.feature_dim();

  std::vector<Tensor> grads;
  for (const Tensor* t : params.tensors()) grads.push_back(Tensor::zeros(t->shape));

  // Forward everything first; features are needed jointly for the centers.
  std::vector<ForwardStack> stacks;
  stacks.reserve(n);
  std::vector<std::vector<double>> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.labels[i] < 0 || batch.labels[i] >= params.num_classes) {
      throw Error(format_msg("batch item ", i, ": label ", batch.labels[i],
                             " out of range"));
    }
    stacks.push_back(forward_stack(params, *batch.inputs[i]));
    fc_forward(params.classifier, stacks[i].feature.data(),
               stacks[i].feature.size(), logits[i]);
    for (double v : stacks[i].feature) {
      if (!std::isfinite(v)) {
        throw Error(format_msg("divergence: non-finite feature at batch item ", i));
      }
    }
    for (double v : logits[i]) {
      if (!std::isfinite(v)) {
        throw Error(format_msg("divergence: non-finite logits at batch item ", i));
      }
    }
  }

  // Per-class centers over the batch (or the EMA state when enabled).
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[batch.labels[i]].push_back(i);
  std::map<int, std::vector<double>> centers;
  for (const auto& [label, members] : groups) {
    std::vector<double> mean(feat_dim, 0.0);
    for (std::size_t i : members) {
      for (int d = 0; d < feat_dim; ++d) mean[d] += stacks[i].feature[d];
    }
    for (double& v : mean) v /= static_cast<double>(members.size());
    if (cfg.ema_centers && ema_state) {
      auto& stored = ema_state->centers[label];
      if (!ema_state->seen[label]) {
        stored = mean;
        ema_state->seen[label] = true;
      }
      centers[label] = stored;
      // Pull the running center toward this batch's mean.
      for (int d = 0; d < feat_dim; ++d) {
        stored[d] += cfg.ema_alpha * (mean[d] - stored[d]);
      }
    } else {
      centers[label] = std::move(mean);
    }
  }

  LossBreakdown loss;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> dlogits;
  std::vector<double> dfeature(feat_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = batch.labels[i];
    loss.softmax_loss += softmax_cross_entropy(logits[i], label) * inv_n;

    // softmax gradient, scaled by the batch mean factor
    const double zmax = *std::max_element(logits[i].begin(), logits[i].end());
    double sum = 0.0;
    for (double z : logits[i]) sum += std::exp(z - zmax);
    dlogits.assign(logits[i].size(), 0.0);
    for (std::size_t c = 0; c < logits[i].size(); ++c) {
      dlogits[c] = std::exp(logits[i][c] - zmax) / sum * inv_n;
    }
    dlogits[label] -= inv_n;

    const auto& center = centers[label];
    double dist = 0.0;
    for (int d = 0; d < feat_dim; ++d) {
      const double diff = stacks[i].feature[d] - center[d];
      dist += diff * diff;
    }
    loss.center_loss += 0.5 * dist;

    // classifier grads and d(loss)/d(feature)
    const std::size_t n_conv = params.convs.size();
    Tensor& dw_cls = grads[2 * n_conv + 2];
    Tensor& db_cls = grads[2 * n_conv + 3];
    std::vector<double> dfeat_cls;
    fc_backward(params.classifier, stacks[i].feature.data(),
                stacks[i].feature.size(), dlogits, dw_cls, db_cls, dfeat_cls);
    for (int d = 0; d < feat_dim; ++d) {
      dfeature[d] = dfeat_cls[d] +
                    cfg.lambda_center * (stacks[i].feature[d] - center[d]);
    }
    backward_stack(params, stacks[i], dfeature, grads);
  }

  loss.total = loss.softmax_loss + cfg.lambda_center * loss.center_loss;
  if (!std::isfinite(loss.total)) {
    throw Error("divergence: non-finite loss over mini batch");
  }
  return {loss, std::move(grads)};
}

// --- augmentation -------------------------------------------------------

std::vector<CanvasItem> apply_augmentation(const std::vector<CanvasItem>& items,
                                           AugmentationScheme scheme) {
  std::vector<CanvasItem> out = items;
  if (scheme != AugmentationScheme::CfgStd) {
    ItemId next_id = 0;
    for (const auto& item : items) next_id = std::max(next_id, item.id + 1);
    for (const auto& item : items) {
      CanvasItem copy = item;
      copy.id = next_id++;
      copy.canvas = augment_encoded(item.canvas,
                                    item.modality == Modality::Image
                                        ? AugmentMode::HFlip
                                        : AugmentMode::Crop227Enlarge);
      out.push_back(std::move(copy));
    }
  }
  if (scheme == AugmentationScheme::Cfg3) {
    for (auto& item : out) {
      item.canvas = augment_encoded(item.canvas, AugmentMode::Downsample128);
    }
  }
  return out;
}

std::vector<CanvasItem> eval_view(const std::vector<CanvasItem>& items,
                                  AugmentationScheme scheme) {
  if (scheme != AugmentationScheme::Cfg3) return items;
  std::vector<CanvasItem> out = items;
  for (auto& item : out) {
    item.canvas = augment_encoded(item.canvas, AugmentMode::Downsample128);
  }
  return out;
}

// --- training -----------------------------------------------------------

namespace {

struct AdamState {
  std::vector<Tensor> m, v;
  long t = 0;
};

void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads,
               AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++state.t;
  const double bc1 = 1.0 - std::pow(kBeta1, state.t);
  const double bc2 = 1.0 - std::pow(kBeta2, state.t);
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    auto& p = params[ti]->data;
    const auto& g = grads[ti].data;
    auto& m = state.m[ti].data;
    auto& v = state.v[ti].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
    }
  }
}

struct ClassPool {
  std::vector<std::size_t> images, texts;
  std::size_t img_cursor = 0, txt_cursor = 0;

  std::size_t next_image() {
    if (images.empty()) return next_text();
    return images[img_cursor++ % images.size()];
  }
  std::size_t next_text() {
    if (texts.empty()) return images[img_cursor++ % images.size()];
    return texts[txt_cursor++ % texts.size()];
  }
};

// Class-balanced batches: classes are visited round-robin in a shuffled
// order, each visit contributing one image and one text, so every sampled
// class is present with both modalities when it has them. An odd final slot
// takes one more text from the batch's first class.
std::vector<std::vector<std::size_t>> make_batches(
    const std::vector<CanvasItem>& items, const std::vector<int>& labels,
    int num_classes, int batch_size, Rng& rng) {
  std::vector<ClassPool> pools(num_classes);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& pool = pools[labels[i]];
    (items[i].modality == Modality::Image ? pool.images : pool.texts)
        .push_back(i);
  }
  for (auto& pool : pools) {
    rng.shuffle(pool.images);
    rng.shuffle(pool.texts);
  }
  std::vector<int> class_order(num_classes);
  std::iota(class_order.begin(), class_order.end(), 0);
  rng.shuffle(class_order);

  const std::size_t n_batches =
      std::max<std::size_t>(1, (items.size() + batch_size - 1) / batch_size);
  std::vector<std::vector<std::size_t>> batches(n_batches);
  std::size_t rotate = 0;
  for (auto& batch : batches) {
    int first_label = -1;
    while (batch.size() + 2 <= static_cast<std::size_t>(batch_size)) {
      const int label = class_order[rotate++ % class_order.size()];
      if (first_label < 0) first_label = label;
      batch.push_back(pools[label].next_image());
      batch.push_back(pools[label].next_text());
    }
    if (batch.size() < static_cast<std::size_t>(batch_size)) {
      batch.push_back(pools[first_label].next_text());
    }
  }
  return batches;
}

}  // namespace

void save_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out << "epoch\tsoftmax\tcenter\ttotal\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << '\t' << format_component(e.loss.softmax_loss) << '\t'
        << format_component(e.loss.center_loss) << '\t'
        << format_component(e.loss.total) << '\n';
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

std::pair<ModelParams, TrainLog> train(const std::vector<CanvasItem>& items,
                                       const TrainConfig& cfg) {
  cfg.validate();
  if (items.empty()) throw InputError("empty training set");

  std::map<ClassId, std::pair<int, int>> counts;  // class -> (images, texts)
  for (const auto& item : items) {
    auto& c = counts[item.class_id];
    (item.modality == Modality::Image ? c.first : c.second) += 1;
  }
  if (counts.size() < 2) {
    throw InputError("training needs at least two classes");
  }
  for (const auto& [cls, c] : counts) {
    if (c.first == 0 || c.second == 0) {
      throw InputError(format_msg("class ", cls,
                                  " lacks one modality (images=", c.first,
                                  ", texts=", c.second, ")"));
    }
  }

  const auto augmented = apply_augmentation(items, cfg.augmentation);

  // contiguous labels in sorted class order
  std::map<ClassId, int> label_of;
  for (const auto& [cls, c] : counts) {
    label_of.emplace(cls, static_cast<int>(label_of.size()));
  }
  std::vector<int> labels(augmented.size());
  for (std::size_t i = 0; i < augmented.size(); ++i) {
    labels[i] = label_of.at(augmented[i].class_id);
  }
  const int num_classes = static_cast<int>(label_of.size());

  const int input_h = augmented.front().canvas.height;
  const int input_w = augmented.front().canvas.width;
  for (const auto& item : augmented) {
    if (item.canvas.height != input_h || item.canvas.width != input_w) {
      throw InputError(format_msg("item ", item.id, ": canvas ",
                                  item.canvas.height, "x", item.canvas.width,
                                  " differs from ", input_h, "x", input_w));
    }
  }

  Rng master(cfg.seed);
  Rng init_rng = master.fork("init");
  Rng batch_rng = master.fork("batches");

  ModelParams params = init_params(parse_backbone_spec(cfg.backbone), input_h,
                                   input_w, num_classes, init_rng);
  AdamState adam;
  for (const Tensor* t : params.tensors()) {
    adam.m.push_back(Tensor::zeros(t->shape));
    adam.v.push_back(Tensor::zeros(t->shape));
  }
  ClassCenters ema;
  if (cfg.ema_centers) {
    ema.centers.assign(num_classes, std::vector<double>(params.feature_dim(), 0.0));
    ema.seen.assign(num_classes, false);
  }

  TrainLog log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_epoch = cfg.decay == DecayMode::LrSchedule
                                ? cfg.lr / (1.0 + cfg.weight_decay * epoch)
                                : cfg.lr;
    const auto batches =
        make_batches(augmented, labels, num_classes, cfg.batch, batch_rng);
    LossBreakdown epoch_loss;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      MiniBatch mb;
      for (std::size_t idx : batches[b]) {
        mb.inputs.push_back(&augmented[idx].canvas);
        mb.labels.push_back(labels[idx]);
        mb.modalities.push_back(augmented[idx].modality);
      }
      std::pair<LossBreakdown, std::vector<Tensor>> result;
      try {
        result = joint_loss_and_grads(params, mb, cfg,
                                      cfg.ema_centers ? &ema : nullptr);
      } catch (const Error& e) {
        throw Error(format_msg("epoch ", epoch, ", batch ", b, ": ", e.what()));
      }
      auto& [loss, grads] = result;
      if (cfg.decay == DecayMode::L2Penalty) {
        const auto tensors = params.tensors();
        for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
          for (std::size_t i = 0; i < grads[ti].data.size(); ++i) {
            grads[ti].data[i] += cfg.weight_decay * tensors[ti]->data[i];
          }
        }
      }
      adam_step(params.tensors(), grads, adam, lr_epoch);
      epoch_loss.softmax_loss += loss.softmax_loss;
      epoch_loss.center_loss += loss.center_loss;
      epoch_loss.total += loss.total;
    }
    const double inv = 1.0 / static_cast<double>(batches.size());
    epoch_loss.softmax_loss *= inv;
    epoch_loss.center_loss *= inv;
    epoch_loss.total *= inv;
    log.epochs.push_back({epoch, epoch_loss});
  }
  return {std::move(params), std::move(log)};
}

EmbeddingSet embed_dataset(const ModelParams& params,
                           const std::vector<CanvasItem>& items,
                           unsigned threads) {
  std::vector<EmbeddingRecord> records(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) {
    records[i].id = items[i].id;
    records[i].class_id = items[i].class_id;
    records[i].modality = items[i].modality;
    records[i].vector = forward(params, items[i].canvas);
  });
  return EmbeddingSet(static_cast<std::size_t>(params.feature_dim()),
                      std::move(records));
}

double mean_intra_class_distance(const EmbeddingSet& set) {
  if (set.empty()) throw Error("intra-class distance of an empty set");
  std::map<ClassId, std::vector<std::vector<double>>> groups;
  for (const auto& r : set.records()) {
    groups[r.class_id].push_back(l2_normalize(r.vector));
  }
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [cls, feats] : groups) {
    std::vector<double> mean(set.dim(), 0.0);
    for (const auto& f : feats) {
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += f[d];
    }
    for (double& v : mean) v /= static_cast<double>(feats.size());
    for (const auto& f : feats) {
      double sq = 0.0;
      for (std::size_t d = 0; d < mean.size(); ++d) {
        const double diff = f[d] - mean[d];
        sq += diff * diff;
      }
      total += std::sqrt(sq);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// --- checkpoints --------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[] = "XMPARAM";
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InputError(format_msg("checkpoint truncated reading ", what));
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in, const char* what) {
  const std::uint32_t bits = get_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* what) {
  const std::uint32_t len = get_u32(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw InputError(format_msg("checkpoint truncated reading ", what));
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(format_msg("cannot write ", path.string()));
  out.write(kCheckpointMagic, 7);
  put_u32(out, kCheckpointVersion);
  put_string(out, params.spec.text);
  put_u32(out, static_cast<std::uint32_t>(params.input_h));
  put_u32(out, static_cast<std::uint32_t>(params.input_w));
  put_u32(out, static_cast<std::uint32_t>(params.num_classes));

  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    put_string(out, names[i]);
    put_u32(out, static_cast<std::uint32_t>(tensors[i]->shape.size()));
    for (int d : tensors[i]->shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensors[i]->data) put_f32(out, static_cast<float>(v));
  }
  out.flush();
  if (!out) throw Error(format_msg("write failed for ", path.string()));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(format_msg("cannot open ", path.string()));
  char magic[7];
  in.read(magic, 7);
  if (!in || std::memcmp(magic, kCheckpointMagic, 7) != 0) {
    throw InputError(format_msg(path.string(), ": not a checkpoint file"));
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw InputError(
        format_msg(path.string(), ": unsupported version ", version));
  }
  const std::string spec_text = get_string(in, "backbone spec");
  const int input_h = static_cast<int>(get_u32(in, "input height"));
  const int input_w = static_cast<int>(get_u32(in, "input width"));
  const int num_classes = static_cast<int>(get_u32(in, "class count"));

  Rng dummy(0);
  ModelParams params = init_params(parse_backbone_spec(spec_text), input_h,
                                   input_w, num_classes, dummy);
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  const std::uint32_t count = get_u32(in, "tensor count");
  if (count != tensors.size()) {
    throw InputError(format_msg(path.string(), ": expected ", tensors.size(),
                                " tensors, file has ", count));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = get_string(in, "tensor name");
    if (name != names[i]) {
      throw InputError(format_msg(path.string(), ": tensor ", i, " is '", name,
                                  "', expected '", names[i], "'"));
    }
    const std::uint32_t ndim = get_u32(in, "tensor rank");
    if (ndim != tensors[i]->shape.size()) {
      throw InputError(format_msg(path.string(), ": tensor '", name,
                                  "' rank mismatch"));
    }
    for (std::size_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = get_u32(in, "tensor dim");
      if (static_cast<int>(dim) != tensors[i]->shape[d]) {
        throw InputError(format_msg(path.string(), ": tensor '", name,
                                    "' shape mismatch at axis ", d));
      }
    }
    for (double& v : tensors[i]->data) {
      v = static_cast<double>(get_f32(in, "tensor data"));
    }
  }
  return params;
}

}  // namespace xmodal
