// core/include/pacrnn/layers.h

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

#ifndef PACRNN_LAYERS_H_
#define PACRNN_LAYERS_H_

#include <string>
#include <utility>
#include <vector>

#include "pacrnn/rng.h"
#include "pacrnn/tensor.h"

namespace pacrnn {

enum class Activation { kLinear, kSigmoid, kTanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Named handle onto one parameter tensor; models expose their parameters as
// an ordered list of these, and gradients / velocities mirror that order.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

// ---------------------------------------------------------------------------
// Affine layer: activation(W x + b).

struct AffineLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
  Activation activation = Activation::kSigmoid;

  size_t in_dim() const { return weights.cols(); }
  size_t out_dim() const { return weights.rows(); }
};

// Weights i.i.d. uniform in [-1/sqrt(in), +1/sqrt(in)], bias zero.
AffineLayer make_affine(size_t out_dim, size_t in_dim, Activation activation,
                        Rng* rng);

struct AffineCache {
  Tensor input;
  Tensor output;
  bool valid = false;
};

struct AffineGrad {
  Tensor d_weights;
  Tensor d_bias;
};

AffineGrad make_grad(const AffineLayer& layer);

// Forward pass. When cache is non-null the input and output are recorded so
// affine_backward can be called afterwards.
Tensor affine_forward(const AffineLayer& layer, const Tensor& x,
                      AffineCache* cache = nullptr);

// Exact gradients for one cached forward call. Accumulates parameter
// gradients into *grad and returns the gradient w.r.t. the input.
// Throws StateError when the cache was never filled.
Tensor affine_backward(const AffineLayer& layer, const AffineCache& cache,
                       const Tensor& d_output, AffineGrad* grad);

// ---------------------------------------------------------------------------
// LSTM cell (no peepholes, no projection): i,f,o sigmoid gates, tanh
// candidate, c = f.c_prev + i.g, h = o.tanh(c).

struct LstmGateParams {
  Tensor w_input;   // hidden x in
  Tensor w_hidden;  // hidden x hidden
  Tensor bias;      // hidden
};

struct LstmCell {
  LstmGateParams input_gate;
  LstmGateParams forget_gate;
  LstmGateParams output_gate;
  LstmGateParams candidate;

  size_t in_dim() const { return input_gate.w_input.cols(); }
  size_t hidden_dim() const { return input_gate.w_input.rows(); }
};

// Forget-gate bias starts at forget_bias (default +1), other biases at zero.
LstmCell make_lstm(size_t hidden_dim, size_t in_dim, Rng* rng,
                   double forget_bias = 1.0);

struct LstmStepCache {
  Tensor input, h_prev, c_prev;
  Tensor i, f, o, g;  // post-nonlinearity gate values
  Tensor c, tanh_c;
  bool valid = false;
};

struct LstmGateGrad {
  Tensor d_w_input;
  Tensor d_w_hidden;
  Tensor d_bias;
};

struct LstmGrad {
  LstmGateGrad input_gate, forget_gate, output_gate, candidate;
};

LstmGrad make_grad(const LstmCell& cell);

// One recurrence step; returns (h, c).
std::pair<Tensor, Tensor> lstm_step(const LstmCell& cell, const Tensor& x,
                                    const Tensor& h_prev, const Tensor& c_prev,
                                    LstmStepCache* cache = nullptr);

struct LstmStepBack {
  Tensor d_input;
  Tensor d_h_prev;
  Tensor d_c_prev;
};

// Backward through one cached step given gradients w.r.t. h and c.
LstmStepBack lstm_backward(const LstmCell& cell, const LstmStepCache& cache,
                           const Tensor& d_h, const Tensor& d_c,
                           LstmGrad* grad);

// ---------------------------------------------------------------------------
// Softmax cross-entropy head.

struct SoftmaxHead {
  Tensor weights;  // classes x in
  Tensor bias;     // classes

  size_t in_dim() const { return weights.cols(); }
  size_t classes() const { return weights.rows(); }
};

SoftmaxHead make_head(size_t classes, size_t in_dim, Rng* rng);

struct HeadCache {
  Tensor input;
  Tensor posterior;
  bool valid = false;
};

struct HeadGrad {
  Tensor d_weights;
  Tensor d_bias;
};

HeadGrad make_grad(const SoftmaxHead& head);

struct HeadResult {
  double loss = 0.0;  // -ln posterior[label], computed in log space
  Tensor posterior;
};

// Posterior and cross-entropy loss for one frame.
HeadResult softmax_ce(const SoftmaxHead& head, const Tensor& x, size_t label,
                      HeadCache* cache = nullptr);

// Posterior only (evaluation path, no label needed).
Tensor head_forward(const SoftmaxHead& head, const Tensor& x);

// Backward for loss_weight * (-ln posterior[label]). Accumulates parameter
// gradients and returns the input gradient.
Tensor softmax_ce_backward(const SoftmaxHead& head, const HeadCache& cache,
                           size_t label, double loss_weight, HeadGrad* grad);

// ---------------------------------------------------------------------------
// Parameter traversal. collect_params and collect_grads of the same layer
// emit tensors in the same order, so flattened parameter and gradient lists
// stay congruent.

void collect_params(AffineLayer* layer, const std::string& prefix,
                    std::vector<ParamRef>* out);
void collect_params(LstmCell* cell, const std::string& prefix,
                    std::vector<ParamRef>* out);
void collect_params(SoftmaxHead* head, const std::string& prefix,
                    std::vector<ParamRef>* out);

void collect_grads(AffineGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out);
void collect_grads(LstmGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out);
void collect_grads(HeadGrad* grad, const std::string& prefix,
                   std::vector<ParamRef>* out);

}  // namespace pacrnn

#endif  // PACRNN_LAYERS_H_
