// core/include/pacrnn/model.h

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

#ifndef PACRNN_MODEL_H_
#define PACRNN_MODEL_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pacrnn/data.h"
#include "pacrnn/layers.h"
#include "pacrnn/rng.h"
#include "pacrnn/tensor.h"

namespace pacrnn {

// The four architectures. The PAC variants couple a correction network
// (state posterior) and a prediction network (future phoneme posterior)
// through a recurrent loop: the prediction bottleneck history feeds the
// correction input and the projected correction output feeds the prediction
// input.
enum class Variant { kDnn, kLstm, kPacRnnDnn, kPacRnnLstm };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct PacRnnConfig {
  Variant variant = Variant::kPacRnnDnn;
  size_t feature_dim = 0;     // input width after the feature pipeline
  size_t state_classes = 0;   // correction / state inventory
  size_t phoneme_classes = 0; // prediction inventory (PAC variants)

  size_t t_corr = 10;  // prediction-history depth seen by the correction net
  size_t t_pred = 1;   // correction-history depth seen by the prediction net
  double alpha = 0.8;  // interpolation weight between the two objectives
  size_t horizon = 1;  // the prediction target is the phoneme at t + horizon

  // PAC sizes.
  size_t pred_hidden = 2048;
  size_t pred_bottleneck = 80;
  std::vector<size_t> corr_hidden = {2048, 2048};  // correction DNN stack
  size_t corr_cells = 1024;                        // correction LSTM cells
  size_t projection = 500;

  // Baseline sizes.
  std::vector<size_t> dnn_hidden = {1024, 1024, 1024};
  std::vector<size_t> lstm_cells = {512, 512, 512};

  // Correction-history slot count. The literal index range spans
  // t_pred + 2 frames (the default); the compat switch selects t_pred + 1.
  bool literal_corr_window = true;

  double forget_bias = 1.0;  // initial forget-gate bias for all LSTM cells
  // Recorded in manifests so results are labeled with the cell structure.
  std::string lstm_cell_variant = "plain-forget-gate";

  bool is_pac() const {
    return variant == Variant::kPacRnnDnn || variant == Variant::kPacRnnLstm;
  }
  size_t corr_history_slots() const {
    return t_pred + (literal_corr_window ? 2 : 1);
  }
  // Width of the correction-net input [o_t ; x_t].
  size_t correction_input_dim() const {
    return feature_dim + t_corr * pred_bottleneck;
  }
  // Width of the prediction-net input [o_t ; y_t].
  size_t prediction_input_dim() const {
    return feature_dim + corr_history_slots() * projection;
  }
};

// Throws ParameterError naming the offending field.
void validate_config(const PacRnnConfig& config);

std::string config_to_json(const PacRnnConfig& config);
PacRnnConfig config_from_json(const std::string& json_text);

// ---------------------------------------------------------------------------
// Recurrent state.

// Fixed-capacity ring of equally sized vectors, zero-filled at start; entry 0
// is the oldest.
class RingBuffer {
 public:
  RingBuffer() = default;
  RingBuffer(size_t capacity, size_t width);

  void push(const Tensor& v);
  const Tensor& entry(size_t i) const { return slots_[(start_ + i) % slots_.size()]; }
  size_t capacity() const { return slots_.size(); }
  size_t width() const { return width_; }

  // Concatenation of all entries, oldest first.
  Tensor concat_entries() const;

 private:
  std::vector<Tensor> slots_;
  size_t width_ = 0;
  size_t start_ = 0;
};

// State carried across frames (and across BPTT chunks): the two context
// ring buffers, LSTM layer states, and a frame counter. Slots earlier than
// the utterance start hold zero vectors.
struct RecurrentState {
  RingBuffer pred_history;  // capacity t_corr, width pred_bottleneck
  RingBuffer corr_history;  // capacity corr_history_slots(), width projection
  std::vector<std::pair<Tensor, Tensor>> lstm_state;  // (h, c) per LSTM layer
  size_t frames_seen = 0;
};

// x_t: concatenation of the last t_corr prediction-bottleneck outputs,
// oldest first. Valid before the current frame's bottleneck is pushed.
Tensor gather_prediction_context(const RecurrentState& state);

// y_t: concatenation of the correction-history slots ending at the current
// frame, oldest first. Valid after the current frame's projection is pushed.
Tensor gather_correction_context(const RecurrentState& state);

// ---------------------------------------------------------------------------
// Model.

struct FrameOutput {
  Tensor state_posterior;
  std::optional<Tensor> phoneme_posterior;  // absent for the baselines
};

// Joint objective J = sum_t [ alpha * ln p_state(s_t) +
// (1 - alpha) * ln p_pred(l_{t+horizon}) ] over frames with a non-negative
// state label; the prediction index is clamped to the last frame. Frames
// whose output lacks a phoneme posterior (baselines) contribute ln p_state
// unweighted. The trainer maximizes J.
double joint_objective(const std::vector<FrameOutput>& outputs,
                       const std::vector<int>& state_labels,
                       const std::vector<int>& phoneme_labels, double alpha,
                       size_t horizon);

// Gradients for every parameter tensor of a model, same layout.
struct PacRnnGrads {
  std::vector<AffineGrad> corr_stack;
  LstmGrad corr_lstm;
  AffineGrad projection;
  HeadGrad state_head;
  AffineGrad pred_hidden;
  AffineGrad pred_bottleneck;
  HeadGrad phoneme_head;
  std::vector<AffineGrad> dnn_stack;
  std::vector<LstmGrad> lstm_stack;

  std::vector<ParamRef> refs();
  void clear();
};

struct ChunkStats {
  double loss = 0.0;   // summed negated objective (-J) over counted frames
  size_t frames = 0;   // frames that carried a loss term
};

class PacRnnModel {
 public:
  PacRnnModel() = default;
  // Builds and initializes all parameter tensors for the configured variant.
  PacRnnModel(const PacRnnConfig& config, Rng* rng);

  const PacRnnConfig& config() const { return config_; }
  size_t parameter_count() const;
  std::vector<ParamRef> params();
  PacRnnGrads make_grads() const;

  RecurrentState initial_state() const;

  // One frame through the configured architecture; advances *state.
  FrameOutput forward_step(const Tensor& features, RecurrentState* state) const;

  // Whole utterance with state threaded frame to frame.
  std::vector<FrameOutput> forward_utterance(const Utterance& utt) const;

  // Forward + backward over frames [begin, end) of an utterance with carried
  // state. Gradients of the negated objective (-J) accumulate into *grads;
  // backward is truncated at the chunk boundary (nothing flows into the
  // carried state). Frames with a negative state label are structurally
  // forwarded but contribute no loss term.
  ChunkStats chunk_backward(const Utterance& utt, size_t begin, size_t end,
                            RecurrentState* state, PacRnnGrads* grads) const;

  // Head replacement for transfer: a fresh randomly initialized state head
  // (and phoneme head for PAC variants) over new class inventories. Hidden
  // layers are untouched.
  void replace_heads(size_t state_classes, size_t phoneme_classes, Rng* rng);

  void save(const std::string& path) const;
  static PacRnnModel load(const std::string& path);

 private:
  void allocate(Rng* rng);

  FrameOutput step_dnn(const Tensor& o, RecurrentState* state) const;
  FrameOutput step_lstm(const Tensor& o, RecurrentState* state) const;
  FrameOutput step_pac(const Tensor& o, RecurrentState* state) const;

  ChunkStats chunk_backward_dnn(const Utterance& utt, size_t begin, size_t end,
                                RecurrentState* state, PacRnnGrads* grads) const;
  ChunkStats chunk_backward_lstm(const Utterance& utt, size_t begin, size_t end,
                                 RecurrentState* state,
                                 PacRnnGrads* grads) const;
  ChunkStats chunk_backward_pac(const Utterance& utt, size_t begin, size_t end,
                                RecurrentState* state, PacRnnGrads* grads) const;

  PacRnnConfig config_;

  // Correction side (PAC variants).
  std::vector<AffineLayer> corr_stack_;  // sigmoid hidden stack (pacrnn-dnn)
  LstmCell corr_lstm_;                   // single cell (pacrnn-lstm)
  AffineLayer projection_;               // linear
  SoftmaxHead state_head_;

  // Prediction side (PAC variants).
  AffineLayer pred_hidden_;      // sigmoid
  AffineLayer pred_bottleneck_;  // linear
  SoftmaxHead phoneme_head_;

  // Baselines.
  std::vector<AffineLayer> dnn_stack_;
  std::vector<LstmCell> lstm_stack_;
};

}  // namespace pacrnn

#endif  // PACRNN_MODEL_H_
