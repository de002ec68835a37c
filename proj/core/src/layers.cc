// core/src/layers.cc

// Copyright 2026  The pacrnn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "pacrnn/layers.h"

#include <cmath>

#include "pacrnn/error.h"

namespace pacrnn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_activation(Activation act, Tensor* z) {
  double* d = z->data();
  switch (act) {
    case Activation::kLinear:
      return;
    case Activation::kSigmoid:
      for (size_t i = 0; i < z->size(); ++i) d[i] = sigmoid(d[i]);
      return;
    case Activation::kTanh:
      for (size_t i = 0; i < z->size(); ++i) d[i] = std::tanh(d[i]);
      return;
  }
}

// d(activation)/d(pre-activation) expressed through the output value.
double activation_grad_from_output(Activation act, double y) {
  switch (act) {
    case Activation::kLinear:
      return 1.0;
    case Activation::kSigmoid:
      return y * (1.0 - y);
    case Activation::kTanh:
      return 1.0 - y * y;
  }
  return 1.0;
}

double init_scale(size_t fan_in) { return 1.0 / std::sqrt(double(fan_in)); }

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kLinear:
      return "linear";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
  }
  return "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  throw ParameterError("unknown activation: " + name);
}

// ---------------------------------------------------------------------------
// Affine.

AffineLayer make_affine(size_t out_dim, size_t in_dim, Activation activation,
                        Rng* rng) {
  if (out_dim == 0 || in_dim == 0) {
    throw ParameterError("make_affine: layer widths must be positive");
  }
  AffineLayer layer;
  layer.weights = uniform_init(rng, {out_dim, in_dim}, init_scale(in_dim));
  layer.bias = Tensor({out_dim});
  layer.activation = activation;
  return layer;
}

AffineGrad make_grad(const AffineLayer& layer) {
  return AffineGrad{Tensor::zeros_like(layer.weights),
                    Tensor::zeros_like(layer.bias)};
}

Tensor affine_forward(const AffineLayer& layer, const Tensor& x,
                      AffineCache* cache) {
  if (x.rank() != 1 || x.length() != layer.in_dim()) {
    throw DimensionError("affine_forward: input " + x.shape_string() +
                         " does not match weights " +
                         layer.weights.shape_string());
  }
  Tensor y = matvec(layer.weights, x);
  add_inplace(&y, layer.bias);
  apply_activation(layer.activation, &y);
  if (cache != nullptr) {
    cache->input = x;
    cache->output = y;
    cache->valid = true;
  }
  return y;
}

Tensor affine_backward(const AffineLayer& layer, const AffineCache& cache,
                       const Tensor& d_output, AffineGrad* grad) {
  if (!cache.valid) {
    throw StateError("affine_backward: forward was not run with caching");
  }
  if (d_output.rank() != 1 || d_output.length() != layer.out_dim()) {
    throw DimensionError("affine_backward: upstream gradient " +
                         d_output.shape_string() + " does not match layer");
  }
  Tensor dz({layer.out_dim()});
  for (size_t i = 0; i < dz.length(); ++i) {
    dz[i] = d_output[i] *
            activation_grad_from_output(layer.activation, cache.output[i]);
  }
  add_outer(&grad->d_weights, dz, cache.input);
  add_inplace(&grad->d_bias, dz);
  return matvec_transpose(layer.weights, dz);
}

// ---------------------------------------------------------------------------
// LSTM.

namespace {

LstmGateParams make_gate(size_t hidden, size_t in, Rng* rng, double bias0) {
  LstmGateParams g;
  g.w_input = uniform_init(rng, {hidden, in}, init_scale(in));
  g.w_hidden = uniform_init(rng, {hidden, hidden}, init_scale(hidden));
  g.bias = Tensor({hidden});
  if (bias0 != 0.0) g.bias.fill(bias0);
  return g;
}

Tensor gate_preactivation(const LstmGateParams& g, const Tensor& x,
                          const Tensor& h_prev) {
  Tensor z = matvec(g.w_input, x);
  add_inplace(&z, matvec(g.w_hidden, h_prev));
  add_inplace(&z, g.bias);
  return z;
}

LstmGateGrad make_gate_grad(const LstmGateParams& g) {
  return LstmGateGrad{Tensor::zeros_like(g.w_input),
                      Tensor::zeros_like(g.w_hidden),
                      Tensor::zeros_like(g.bias)};
}

// Accumulates one gate's parameter gradients and the shared input/h_prev
// gradients for pre-activation gradient dz.
void gate_backward(const LstmGateParams& g, const Tensor& dz, const Tensor& x,
                   const Tensor& h_prev, LstmGateGrad* grad, Tensor* d_input,
                   Tensor* d_h_prev) {
  add_outer(&grad->d_w_input, dz, x);
  add_outer(&grad->d_w_hidden, dz, h_prev);
  add_inplace(&grad->d_bias, dz);
  add_inplace(d_input, matvec_transpose(g.w_input, dz));
  add_inplace(d_h_prev, matvec_transpose(g.w_hidden, dz));
}

}  // namespace

LstmCell make_lstm(size_t hidden_dim, size_t in_dim, Rng* rng,
                   double forget_bias) {
  if (hidden_dim == 0 || in_dim == 0) {
    throw ParameterError("make_lstm: widths must be positive");
  }
  LstmCell cell;
  cell.input_gate = make_gate(hidden_dim, in_dim, rng, 0.0);
  cell.forget_gate = make_gate(hidden_dim, in_dim, rng, forget_bias);
  cell.output_gate = make_gate(hidden_dim, in_dim, rng, 0.0);
  cell.candidate = make_gate(hidden_dim, in_dim, rng, 0.0);
  return cell;
}

LstmGrad make_grad(const LstmCell& cell) {
  return LstmGrad{make_gate_grad(cell.input_gate),
                  make_gate_grad(cell.forget_gate),
                  make_gate_grad(cell.output_gate),
                  make_gate_grad(cell.candidate)};
}

std::pair<Tensor, Tensor> lstm_step(const LstmCell& cell, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev,
                                    LstmStepCache* cache) {
  const size_t hidden = cell.hidden_dim();
  if (x.rank() != 1 || x.length() != cell.in_dim()) {
    throw DimensionError("lstm_step: input " + x.shape_string() +
                         " does not match cell input width " +
                         std::to_string(cell.in_dim()));
  }
  if (h_prev.rank() != 1 || h_prev.length() != hidden || c_prev.rank() != 1 ||
      c_prev.length() != hidden) {
    throw DimensionError("lstm_step: state widths " + h_prev.shape_string() +
                         ", " + c_prev.shape_string() +
                         " do not match cell width " + std::to_string(hidden));
  }

  Tensor i = gate_preactivation(cell.input_gate, x, h_prev);
  Tensor f = gate_preactivation(cell.forget_gate, x, h_prev);
  Tensor o = gate_preactivation(cell.output_gate, x, h_prev);
  Tensor g = gate_preactivation(cell.candidate, x, h_prev);
  apply_activation(Activation::kSigmoid, &i);
  apply_activation(Activation::kSigmoid, &f);
  apply_activation(Activation::kSigmoid, &o);
  apply_activation(Activation::kTanh, &g);

  Tensor c({hidden});
  for (size_t k = 0; k < hidden; ++k) c[k] = f[k] * c_prev[k] + i[k] * g[k];
  Tensor tanh_c({hidden});
  for (size_t k = 0; k < hidden; ++k) tanh_c[k] = std::tanh(c[k]);
  Tensor h({hidden});
  for (size_t k = 0; k < hidden; ++k) h[k] = o[k] * tanh_c[k];

  if (cache != nullptr) {
    cache->input = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = i;
    cache->f = f;
    cache->o = o;
    cache->g = g;
    cache->c = c;
    cache->tanh_c = tanh_c;
    cache->valid = true;
  }
  return {h, c};
}

LstmStepBack lstm_backward(const LstmCell& cell, const LstmStepCache& cache,
                           const Tensor& d_h, const Tensor& d_c,
                           LstmGrad* grad) {
  if (!cache.valid) {
    throw StateError("lstm_backward: forward was not run with caching");
  }
  const size_t hidden = cell.hidden_dim();
  if (d_h.length() != hidden || d_c.length() != hidden) {
    throw DimensionError("lstm_backward: gradient widths do not match cell");
  }

  Tensor dc({hidden});
  Tensor dz_i({hidden}), dz_f({hidden}), dz_o({hidden}), dz_g({hidden});
  for (size_t k = 0; k < hidden; ++k) {
    const double do_k = d_h[k] * cache.tanh_c[k];
    dc[k] = d_c[k] + d_h[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
    const double di_k = dc[k] * cache.g[k];
    const double df_k = dc[k] * cache.c_prev[k];
    const double dg_k = dc[k] * cache.i[k];
    dz_i[k] = di_k * cache.i[k] * (1.0 - cache.i[k]);
    dz_f[k] = df_k * cache.f[k] * (1.0 - cache.f[k]);
    dz_o[k] = do_k * cache.o[k] * (1.0 - cache.o[k]);
    dz_g[k] = dg_k * (1.0 - cache.g[k] * cache.g[k]);
  }

  LstmStepBack back;
  back.d_input = Tensor({cell.in_dim()});
  back.d_h_prev = Tensor({hidden});
  back.d_c_prev = Tensor({hidden});
  gate_backward(cell.input_gate, dz_i, cache.input, cache.h_prev,
                &grad->input_gate, &back.d_input, &back.d_h_prev);
  gate_backward(cell.forget_gate, dz_f, cache.input, cache.h_prev,
                &grad->forget_gate, &back.d_input, &back.d_h_prev);
  gate_backward(cell.output_gate, dz_o, cache.input, cache.h_prev,
                &grad->output_gate, &back.d_input, &back.d_h_prev);
  gate_backward(cell.candidate, dz_g, cache.input, cache.h_prev,
                &grad->candidate, &back.d_input, &back.d_h_prev);
  for (size_t k = 0; k < hidden; ++k) back.d_c_prev[k] = dc[k] * cache.f[k];
  return back;
}

// ---------------------------------------------------------------------------
// Softmax head.

SoftmaxHead make_head(size_t classes, size_t in_dim, Rng* rng) {
  if (classes < 2) {
    throw ParameterError("make_head: class count must be at least 2, got " +
                         std::to_string(classes));
  }
  SoftmaxHead head;
  head.weights = uniform_init(rng, {classes, in_dim}, init_scale(in_dim));
  head.bias = Tensor({classes});
  return head;
}

HeadGrad make_grad(const SoftmaxHead& head) {
  return HeadGrad{Tensor::zeros_like(head.weights),
                  Tensor::zeros_like(head.bias)};
}

HeadResult softmax_ce(const SoftmaxHead& head, const Tensor& x, size_t label,
                      HeadCache* cache) {
  if (x.rank() != 1 || x.length() != head.in_dim()) {
    throw DimensionError("softmax_ce: input " + x.shape_string() +
                         " does not match head " +
                         head.weights.shape_string());
  }
  if (label >= head.classes()) {
    throw LabelError("softmax_ce: label " + std::to_string(label) +
                     " out of range [0, " + std::to_string(head.classes()) +
                     ")");
  }
  Tensor logits = matvec(head.weights, x);
  add_inplace(&logits, head.bias);

  // Loss in log space so extreme logits stay finite.
  const size_t n = logits.length();
  double mx = logits[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  Tensor posterior({n});
  for (size_t i = 0; i < n; ++i) {
    posterior[i] = std::exp(logits[i] - mx);
    sum += posterior[i];
  }
  const double inv = 1.0 / sum;
  for (size_t i = 0; i < n; ++i) posterior[i] *= inv;

  HeadResult result;
  result.loss = -(logits[label] - mx - std::log(sum));
  result.posterior = posterior;
  if (cache != nullptr) {
    cache->input = x;
    cache->posterior = posterior;
    cache->valid = true;
  }
  return result;
}

Tensor head_forward(const SoftmaxHead& head, const Tensor& x) {
  if (x.rank() != 1 || x.length() != head.in_dim()) {
    throw DimensionError("head_forward: input " + x.shape_string() +
                         " does not match head " +
                         head.weights.shape_string());
  }
  Tensor logits = matvec(head.weights, x);
  add_inplace(&logits, head.bias);
  return softmax(logits);
}

Tensor softmax_ce_backward(const SoftmaxHead& head, const HeadCache& cache,
                           size_t label, double loss_weight, HeadGrad* grad) {
  if (!cache.valid) {
    throw StateError("softmax_ce_backward: forward was not run with caching");
  }
  if (label >= head.classes()) {
    throw LabelError("softmax_ce_backward: label " + std::to_string(label) +
                     " out of range [0, " + std::to_string(head.classes()) +
                     ")");
  }
  // d(loss)/d(logits) = posterior - onehot(label), scaled by loss_weight.
  Tensor dz = cache.posterior;
  dz[label] -= 1.0;
  if (loss_weight != 1.0) scale_inplace(&dz, loss_weight);
  add_outer(&grad->d_weights, dz, cache.input);
  add_inplace(&grad->d_bias, dz);
  return matvec_transpose(head.weights, dz);
}

// ---------------------------------------------------------------------------
// Parameter traversal.

void collect_params(AffineLayer* layer, const std::string& prefix,
                    std::vector<ParamRef>* out) {
  out->push_back({prefix + ".W", &layer->weights});
  out->push_back({prefix + ".b", &layer->bias});
}

void collect_params(LstmCell* cell, const std::string& prefix,
                    std::vector<ParamRef>* out) {
  const std::pair<const char*, LstmGateParams*> gates[] = {
      {"i", &cell->input_gate},
      {"f", &cell->forget_gate},
      {"o", &cell->output_gate},
      {"g", &cell->candidate}};
  for (auto [tag, gate] : gates) {
    out->push_back({prefix + "." + tag + ".Wx", &gate->w_input});
    out->push_back({prefix + "." + tag + ".Wh", &gate->w_hidden});
    out->push_back({prefix + "." + tag + ".b", &gate->bias});
  }
}

void collect_params(SoftmaxHead* head, const std::string& prefix,
                    std::vector<ParamRef>* out) {
  out->push_back({prefix + ".W", &head->weights});
  out->push_back({prefix + ".b", &head->bias});
}

void collect_grads(AffineGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out) {
  out->push_back({prefix + ".W", &grad->d_weights});
  out->push_back({prefix + ".b", &grad->d_bias});
}

void collect_grads(LstmGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out) {
  const std::pair<const char*, LstmGateGrad*> gates[] = {
      {"i", &grad->input_gate},
      {"f", &grad->forget_gate},
      {"o", &grad->output_gate},
      {"g", &grad->candidate}};
  for (auto [tag, gate] : gates) {
    out->push_back({prefix + "." + tag + ".Wx", &gate->d_w_input});
    out->push_back({prefix + "." + tag + ".Wh", &gate->d_w_hidden});
    out->push_back({prefix + "." + tag + ".b", &gate->d_bias});
  }
}

void collect_grads(HeadGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out) {
  out->push_back({prefix + ".W", &grad->d_weights});
  out->push_back({prefix + ".b", &grad->d_bias});
}

}  // namespace pacrnn
