// core/src/model.cc

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

#include "pacrnn/model.h"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "pacrnn/error.h"
#include "pacrnn/serialize.h"

namespace pacrnn {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kDnn:
      return "dnn";
    case Variant::kLstm:
      return "lstm";
    case Variant::kPacRnnDnn:
      return "pacrnn-dnn";
    case Variant::kPacRnnLstm:
      return "pacrnn-lstm";
  }
  return "dnn";
}

Variant variant_from_name(const std::string& name) {
  if (name == "dnn") return Variant::kDnn;
  if (name == "lstm") return Variant::kLstm;
  if (name == "pacrnn-dnn") return Variant::kPacRnnDnn;
  if (name == "pacrnn-lstm") return Variant::kPacRnnLstm;
  throw ParameterError("unknown variant: '" + name + "'");
}

void validate_config(const PacRnnConfig& c) {
  auto require = [](bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw ParameterError("config." + field + ": " + why);
  };
  require(c.feature_dim > 0, "feature_dim", "must be positive");
  require(c.state_classes >= 2, "state_classes", "must be at least 2");
  require(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha", "must lie in [0, 1]");
  require(c.horizon >= 1, "horizon", "must be at least 1");
  switch (c.variant) {
    case Variant::kDnn:
      require(!c.dnn_hidden.empty(), "dnn_hidden", "must not be empty");
      for (size_t w : c.dnn_hidden)
        require(w > 0, "dnn_hidden", "widths must be positive");
      break;
    case Variant::kLstm:
      require(!c.lstm_cells.empty(), "lstm_cells", "must not be empty");
      for (size_t w : c.lstm_cells)
        require(w > 0, "lstm_cells", "widths must be positive");
      break;
    case Variant::kPacRnnDnn:
    case Variant::kPacRnnLstm:
      require(c.phoneme_classes >= 2, "phoneme_classes", "must be at least 2");
      require(c.t_corr >= 1, "t_corr", "must be at least 1");
      require(c.pred_hidden > 0, "pred_hidden", "must be positive");
      require(c.pred_bottleneck > 0, "pred_bottleneck", "must be positive");
      require(c.projection > 0, "projection", "must be positive");
      if (c.variant == Variant::kPacRnnDnn) {
        require(!c.corr_hidden.empty(), "corr_hidden", "must not be empty");
        for (size_t w : c.corr_hidden)
          require(w > 0, "corr_hidden", "widths must be positive");
      } else {
        require(c.corr_cells > 0, "corr_cells", "must be positive");
      }
      break;
  }
}

std::string config_to_json(const PacRnnConfig& c) {
  nlohmann::json j;
  j["variant"] = variant_name(c.variant);
  j["feature_dim"] = c.feature_dim;
  j["state_classes"] = c.state_classes;
  j["phoneme_classes"] = c.phoneme_classes;
  j["t_corr"] = c.t_corr;
  j["t_pred"] = c.t_pred;
  j["alpha"] = c.alpha;
  j["horizon"] = c.horizon;
  j["pred_hidden"] = c.pred_hidden;
  j["pred_bottleneck"] = c.pred_bottleneck;
  j["corr_hidden"] = c.corr_hidden;
  j["corr_cells"] = c.corr_cells;
  j["projection"] = c.projection;
  j["dnn_hidden"] = c.dnn_hidden;
  j["lstm_cells"] = c.lstm_cells;
  j["literal_corr_window"] = c.literal_corr_window;
  j["forget_bias"] = c.forget_bias;
  j["lstm_cell_variant"] = c.lstm_cell_variant;
  return j.dump();
}

PacRnnConfig config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") +
                      e.what());
  }
  static const char* known[] = {
      "variant",        "feature_dim", "state_classes", "phoneme_classes",
      "t_corr",         "t_pred",      "alpha",         "horizon",
      "pred_hidden",    "pred_bottleneck", "corr_hidden", "corr_cells",
      "projection",     "dnn_hidden",  "lstm_cells",    "literal_corr_window",
      "forget_bias",    "lstm_cell_variant"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || (it.key() == k);
    if (!ok) throw ConfigError("unknown model config key: '" + it.key() + "'");
  }
  PacRnnConfig c;
  try {
    if (j.contains("variant")) c.variant = variant_from_name(j["variant"]);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.state_classes = j.value("state_classes", c.state_classes);
    c.phoneme_classes = j.value("phoneme_classes", c.phoneme_classes);
    c.t_corr = j.value("t_corr", c.t_corr);
    c.t_pred = j.value("t_pred", c.t_pred);
    c.alpha = j.value("alpha", c.alpha);
    c.horizon = j.value("horizon", c.horizon);
    c.pred_hidden = j.value("pred_hidden", c.pred_hidden);
    c.pred_bottleneck = j.value("pred_bottleneck", c.pred_bottleneck);
    c.corr_hidden = j.value("corr_hidden", c.corr_hidden);
    c.corr_cells = j.value("corr_cells", c.corr_cells);
    c.projection = j.value("projection", c.projection);
    c.dnn_hidden = j.value("dnn_hidden", c.dnn_hidden);
    c.lstm_cells = j.value("lstm_cells", c.lstm_cells);
    c.literal_corr_window =
        j.value("literal_corr_window", c.literal_corr_window);
    c.forget_bias = j.value("forget_bias", c.forget_bias);
    c.lstm_cell_variant = j.value("lstm_cell_variant", c.lstm_cell_variant);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad model config value: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Recurrent state.

RingBuffer::RingBuffer(size_t capacity, size_t width) : width_(width) {
  slots_.reserve(capacity);
  for (size_t i = 0; i < capacity; ++i) slots_.emplace_back(Tensor({width}));
}

void RingBuffer::push(const Tensor& v) {
  if (slots_.empty()) {
    throw StateError("RingBuffer::push on zero-capacity buffer");
  }
  if (v.rank() != 1 || v.length() != width_) {
    throw DimensionError("RingBuffer::push: entry " + v.shape_string() +
                         " does not match width " + std::to_string(width_));
  }
  slots_[start_] = v;
  start_ = (start_ + 1) % slots_.size();
}

Tensor RingBuffer::concat_entries() const {
  std::vector<const Tensor*> parts;
  parts.reserve(slots_.size());
  for (size_t i = 0; i < slots_.size(); ++i) parts.push_back(&entry(i));
  return concat(parts);
}

Tensor gather_prediction_context(const RecurrentState& state) {
  if (state.pred_history.capacity() == 0) {
    throw StateError("gather_prediction_context: state has no prediction "
                     "history (baseline variant?)");
  }
  return state.pred_history.concat_entries();
}

Tensor gather_correction_context(const RecurrentState& state) {
  if (state.corr_history.capacity() == 0) {
    throw StateError("gather_correction_context: state has no correction "
                     "history (baseline variant?)");
  }
  return state.corr_history.concat_entries();
}

// ---------------------------------------------------------------------------
// Joint objective.

namespace {

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

}  // namespace

double joint_objective(const std::vector<FrameOutput>& outputs,
                       const std::vector<int>& state_labels,
                       const std::vector<int>& phoneme_labels, double alpha,
                       size_t horizon) {
  const size_t t_total = outputs.size();
  if (state_labels.size() != t_total || phoneme_labels.size() != t_total) {
    throw LabelError("joint_objective: " + std::to_string(t_total) +
                     " outputs vs " + std::to_string(state_labels.size()) +
                     " state / " + std::to_string(phoneme_labels.size()) +
                     " phoneme labels");
  }
  double j = 0.0;
  for (size_t t = 0; t < t_total; ++t) {
    const int s = state_labels[t];
    if (s < 0) continue;  // frame excluded from the loss
    const Tensor& sp = outputs[t].state_posterior;
    if (size_t(s) >= sp.length()) {
      throw LabelError("frame " + std::to_string(t) + ": state label " +
                       std::to_string(s) + " outside posterior of " +
                       std::to_string(sp.length()) + " classes");
    }
    if (!outputs[t].phoneme_posterior.has_value()) {
      j += safe_log(sp[size_t(s)]);
      continue;
    }
    j += alpha * safe_log(sp[size_t(s)]);
    const size_t idx = std::min(t + horizon, t_total - 1);
    const int l = phoneme_labels[idx];
    if (l < 0) continue;
    const Tensor& pp = *outputs[t].phoneme_posterior;
    if (size_t(l) >= pp.length()) {
      throw LabelError("frame " + std::to_string(t) + ": phoneme label " +
                       std::to_string(l) + " outside posterior of " +
                       std::to_string(pp.length()) + " classes");
    }
    j += (1.0 - alpha) * safe_log(pp[size_t(l)]);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Gradients.

std::vector<ParamRef> PacRnnGrads::refs() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < corr_stack.size(); ++i) {
    collect_grads(&corr_stack[i], "corr." + std::to_string(i), &out);
  }
  if (corr_lstm.input_gate.d_w_input.size() > 0) {
    collect_grads(&corr_lstm, "corr_lstm", &out);
  }
  if (projection.d_weights.size() > 0) {
    collect_grads(&projection, "proj", &out);
    collect_grads(&state_head, "state_head", &out);
    collect_grads(&pred_hidden, "pred_hidden", &out);
    collect_grads(&pred_bottleneck, "pred_bn", &out);
    collect_grads(&phoneme_head, "phoneme_head", &out);
  }
  for (size_t i = 0; i < dnn_stack.size(); ++i) {
    collect_grads(&dnn_stack[i], "dnn." + std::to_string(i), &out);
  }
  for (size_t i = 0; i < lstm_stack.size(); ++i) {
    collect_grads(&lstm_stack[i], "lstm." + std::to_string(i), &out);
  }
  if (projection.d_weights.size() == 0 && state_head.d_weights.size() > 0) {
    collect_grads(&state_head, "state_head", &out);
  }
  return out;
}

void PacRnnGrads::clear() {
  for (ParamRef& r : refs()) r.tensor->fill(0.0);
}

// ---------------------------------------------------------------------------
// Model construction.

PacRnnModel::PacRnnModel(const PacRnnConfig& config, Rng* rng)
    : config_(config) {
  validate_config(config_);
  allocate(rng);
}

void PacRnnModel::allocate(Rng* rng) {
  const PacRnnConfig& c = config_;
  switch (c.variant) {
    case Variant::kDnn: {
      size_t in = c.feature_dim;
      for (size_t w : c.dnn_hidden) {
        dnn_stack_.push_back(make_affine(w, in, Activation::kSigmoid, rng));
        in = w;
      }
      state_head_ = make_head(c.state_classes, in, rng);
      break;
    }
    case Variant::kLstm: {
      size_t in = c.feature_dim;
      for (size_t w : c.lstm_cells) {
        lstm_stack_.push_back(make_lstm(w, in, rng, c.forget_bias));
        in = w;
      }
      state_head_ = make_head(c.state_classes, in, rng);
      break;
    }
    case Variant::kPacRnnDnn:
    case Variant::kPacRnnLstm: {
      size_t top;
      if (c.variant == Variant::kPacRnnDnn) {
        size_t in = c.correction_input_dim();
        for (size_t w : c.corr_hidden) {
          corr_stack_.push_back(make_affine(w, in, Activation::kSigmoid, rng));
          in = w;
        }
        top = in;
      } else {
        corr_lstm_ =
            make_lstm(c.corr_cells, c.correction_input_dim(), rng,
                      c.forget_bias);
        top = c.corr_cells;
      }
      state_head_ = make_head(c.state_classes, top, rng);
      projection_ = make_affine(c.projection, top, Activation::kLinear, rng);
      pred_hidden_ = make_affine(c.pred_hidden, c.prediction_input_dim(),
                                 Activation::kSigmoid, rng);
      pred_bottleneck_ =
          make_affine(c.pred_bottleneck, c.pred_hidden, Activation::kLinear,
                      rng);
      phoneme_head_ = make_head(c.phoneme_classes, c.pred_bottleneck, rng);
      break;
    }
  }
}

std::vector<ParamRef> PacRnnModel::params() {
  std::vector<ParamRef> out;
  switch (config_.variant) {
    case Variant::kDnn:
      for (size_t i = 0; i < dnn_stack_.size(); ++i) {
        collect_params(&dnn_stack_[i], "dnn." + std::to_string(i), &out);
      }
      collect_params(&state_head_, "state_head", &out);
      break;
    case Variant::kLstm:
      for (size_t i = 0; i < lstm_stack_.size(); ++i) {
        collect_params(&lstm_stack_[i], "lstm." + std::to_string(i), &out);
      }
      collect_params(&state_head_, "state_head", &out);
      break;
    case Variant::kPacRnnDnn:
    case Variant::kPacRnnLstm:
      for (size_t i = 0; i < corr_stack_.size(); ++i) {
        collect_params(&corr_stack_[i], "corr." + std::to_string(i), &out);
      }
      if (config_.variant == Variant::kPacRnnLstm) {
        collect_params(&corr_lstm_, "corr_lstm", &out);
      }
      collect_params(&projection_, "proj", &out);
      collect_params(&state_head_, "state_head", &out);
      collect_params(&pred_hidden_, "pred_hidden", &out);
      collect_params(&pred_bottleneck_, "pred_bn", &out);
      collect_params(&phoneme_head_, "phoneme_head", &out);
      break;
  }
  return out;
}

size_t PacRnnModel::parameter_count() const {
  size_t n = 0;
  for (const ParamRef& r : const_cast<PacRnnModel*>(this)->params()) {
    n += r.tensor->size();
  }
  return n;
}

PacRnnGrads PacRnnModel::make_grads() const {
  PacRnnGrads g;
  switch (config_.variant) {
    case Variant::kDnn:
      for (const AffineLayer& l : dnn_stack_) g.dnn_stack.push_back(make_grad(l));
      g.state_head = make_grad(state_head_);
      break;
    case Variant::kLstm:
      for (const LstmCell& l : lstm_stack_) g.lstm_stack.push_back(make_grad(l));
      g.state_head = make_grad(state_head_);
      break;
    case Variant::kPacRnnDnn:
    case Variant::kPacRnnLstm:
      for (const AffineLayer& l : corr_stack_) g.corr_stack.push_back(make_grad(l));
      if (config_.variant == Variant::kPacRnnLstm) g.corr_lstm = make_grad(corr_lstm_);
      g.projection = make_grad(projection_);
      g.state_head = make_grad(state_head_);
      g.pred_hidden = make_grad(pred_hidden_);
      g.pred_bottleneck = make_grad(pred_bottleneck_);
      g.phoneme_head = make_grad(phoneme_head_);
      break;
  }
  return g;
}

RecurrentState PacRnnModel::initial_state() const {
  RecurrentState state;
  switch (config_.variant) {
    case Variant::kDnn:
      break;
    case Variant::kLstm:
      for (size_t w : config_.lstm_cells) {
        state.lstm_state.emplace_back(Tensor({w}), Tensor({w}));
      }
      break;
    case Variant::kPacRnnDnn:
    case Variant::kPacRnnLstm:
      state.pred_history =
          RingBuffer(config_.t_corr, config_.pred_bottleneck);
      state.corr_history =
          RingBuffer(config_.corr_history_slots(), config_.projection);
      if (config_.variant == Variant::kPacRnnLstm) {
        state.lstm_state.emplace_back(Tensor({config_.corr_cells}),
                                      Tensor({config_.corr_cells}));
      }
      break;
  }
  return state;
}

// ---------------------------------------------------------------------------
// Forward.

FrameOutput PacRnnModel::forward_step(const Tensor& features,
                                      RecurrentState* state) const {
  if (features.rank() != 1 || features.length() != config_.feature_dim) {
    throw DimensionError("forward_step[input]: features " +
                         features.shape_string() +
                         " do not match configured feature_dim " +
                         std::to_string(config_.feature_dim));
  }
  switch (config_.variant) {
    case Variant::kDnn:
      return step_dnn(features, state);
    case Variant::kLstm:
      return step_lstm(features, state);
    default:
      return step_pac(features, state);
  }
}

FrameOutput PacRnnModel::step_dnn(const Tensor& o,
                                  RecurrentState* state) const {
  Tensor a = o;
  for (const AffineLayer& layer : dnn_stack_) a = affine_forward(layer, a);
  FrameOutput out;
  out.state_posterior = head_forward(state_head_, a);
  state->frames_seen += 1;
  return out;
}

FrameOutput PacRnnModel::step_lstm(const Tensor& o,
                                   RecurrentState* state) const {
  if (state->lstm_state.size() != lstm_stack_.size()) {
    throw StateError("forward_step[lstm]: state does not match stack depth");
  }
  Tensor a = o;
  for (size_t l = 0; l < lstm_stack_.size(); ++l) {
    auto [h, c] = lstm_step(lstm_stack_[l], a, state->lstm_state[l].first,
                            state->lstm_state[l].second);
    state->lstm_state[l] = {h, c};
    a = h;
  }
  FrameOutput out;
  out.state_posterior = head_forward(state_head_, a);
  state->frames_seen += 1;
  return out;
}

FrameOutput PacRnnModel::step_pac(const Tensor& o,
                                  RecurrentState* state) const {
  // (1) prediction context from history
  Tensor x = gather_prediction_context(*state);
  Tensor u = concat({&o, &x});

  // (2) correction network
  Tensor top;
  if (config_.variant == Variant::kPacRnnDnn) {
    Tensor a = u;
    for (const AffineLayer& layer : corr_stack_) a = affine_forward(layer, a);
    top = a;
  } else {
    auto& st = state->lstm_state[0];
    auto [h, c] = lstm_step(corr_lstm_, u, st.first, st.second);
    st = {h, c};
    top = h;
  }
  FrameOutput out;
  out.state_posterior = head_forward(state_head_, top);

  // (3) project and push the correction output
  Tensor proj = affine_forward(projection_, top);
  state->corr_history.push(proj);

  // (4) correction context including the current frame
  Tensor y = gather_correction_context(*state);
  Tensor v = concat({&o, &y});

  // (5) prediction network; its bottleneck becomes history for t+1
  Tensor ph = affine_forward(pred_hidden_, v);
  Tensor hpred = affine_forward(pred_bottleneck_, ph);
  out.phoneme_posterior = head_forward(phoneme_head_, hpred);
  state->pred_history.push(hpred);

  state->frames_seen += 1;
  return out;
}

std::vector<FrameOutput> PacRnnModel::forward_utterance(
    const Utterance& utt) const {
  std::vector<FrameOutput> outputs;
  outputs.reserve(utt.frames());
  RecurrentState state = initial_state();
  for (size_t t = 0; t < utt.frames(); ++t) {
    outputs.push_back(forward_step(utt.features.row_vector(t), &state));
  }
  return outputs;
}

// ---------------------------------------------------------------------------
// Backward.

ChunkStats PacRnnModel::chunk_backward(const Utterance& utt, size_t begin,
                                       size_t end, RecurrentState* state,
                                       PacRnnGrads* grads) const {
  end = std::min(end, utt.frames());
  if (begin >= end) return {};
  if (utt.feature_dim() != config_.feature_dim) {
    throw DimensionError("chunk_backward: utterance dim " +
                         std::to_string(utt.feature_dim()) +
                         " does not match configured feature_dim " +
                         std::to_string(config_.feature_dim));
  }
  switch (config_.variant) {
    case Variant::kDnn:
      return chunk_backward_dnn(utt, begin, end, state, grads);
    case Variant::kLstm:
      return chunk_backward_lstm(utt, begin, end, state, grads);
    default:
      return chunk_backward_pac(utt, begin, end, state, grads);
  }
}

namespace {

void check_state_label(const Utterance& utt, size_t t, size_t classes) {
  const int s = utt.state_labels[t];
  if (s >= 0 && size_t(s) >= classes) {
    throw LabelError("utterance '" + utt.id + "' frame " + std::to_string(t) +
                     ": state label " + std::to_string(s) +
                     " outside inventory of " + std::to_string(classes));
  }
}

void check_phoneme_label(const Utterance& utt, size_t t, size_t classes) {
  const int l = utt.phoneme_labels[t];
  if (l >= 0 && size_t(l) >= classes) {
    throw LabelError("utterance '" + utt.id + "' frame " + std::to_string(t) +
                     ": phoneme label " + std::to_string(l) +
                     " outside inventory of " + std::to_string(classes));
  }
}

}  // namespace

ChunkStats PacRnnModel::chunk_backward_dnn(const Utterance& utt, size_t begin,
                                           size_t end, RecurrentState* state,
                                           PacRnnGrads* grads) const {
  const size_t k_frames = end - begin;
  const size_t depth = dnn_stack_.size();
  std::vector<std::vector<AffineCache>> caches(
      k_frames, std::vector<AffineCache>(depth));
  std::vector<HeadCache> head_caches(k_frames);
  ChunkStats stats;

  for (size_t i = 0; i < k_frames; ++i) {
    const size_t t = begin + i;
    Tensor a = utt.features.row_vector(t);
    for (size_t l = 0; l < depth; ++l) {
      a = affine_forward(dnn_stack_[l], a, &caches[i][l]);
    }
    check_state_label(utt, t, config_.state_classes);
    const int s = utt.state_labels[t];
    if (s >= 0) {
      HeadResult hr = softmax_ce(state_head_, a, size_t(s), &head_caches[i]);
      stats.loss += hr.loss;
      stats.frames += 1;
    }
  }
  state->frames_seen += k_frames;

  for (size_t i = k_frames; i-- > 0;) {
    if (!head_caches[i].valid) continue;
    const size_t t = begin + i;
    Tensor d = softmax_ce_backward(state_head_, head_caches[i],
                                   size_t(utt.state_labels[t]), 1.0,
                                   &grads->state_head);
    for (size_t l = depth; l-- > 0;) {
      d = affine_backward(dnn_stack_[l], caches[i][l], d, &grads->dnn_stack[l]);
    }
  }
  return stats;
}

ChunkStats PacRnnModel::chunk_backward_lstm(const Utterance& utt, size_t begin,
                                            size_t end, RecurrentState* state,
                                            PacRnnGrads* grads) const {
  const size_t k_frames = end - begin;
  const size_t depth = lstm_stack_.size();
  if (state->lstm_state.size() != depth) {
    throw StateError("chunk_backward[lstm]: state does not match stack depth");
  }
  std::vector<std::vector<LstmStepCache>> caches(
      k_frames, std::vector<LstmStepCache>(depth));
  std::vector<HeadCache> head_caches(k_frames);
  ChunkStats stats;

  for (size_t i = 0; i < k_frames; ++i) {
    const size_t t = begin + i;
    Tensor a = utt.features.row_vector(t);
    for (size_t l = 0; l < depth; ++l) {
      auto [h, c] = lstm_step(lstm_stack_[l], a, state->lstm_state[l].first,
                              state->lstm_state[l].second, &caches[i][l]);
      state->lstm_state[l] = {h, c};
      a = h;
    }
    check_state_label(utt, t, config_.state_classes);
    const int s = utt.state_labels[t];
    if (s >= 0) {
      HeadResult hr = softmax_ce(state_head_, a, size_t(s), &head_caches[i]);
      stats.loss += hr.loss;
      stats.frames += 1;
    }
  }
  state->frames_seen += k_frames;

  // Truncated BPTT: per-layer h/c gradients flow backward through the chunk
  // and stop at the chunk boundary.
  std::vector<Tensor> d_h_next(depth), d_c_next(depth);
  for (size_t l = 0; l < depth; ++l) {
    d_h_next[l] = Tensor({lstm_stack_[l].hidden_dim()});
    d_c_next[l] = Tensor({lstm_stack_[l].hidden_dim()});
  }
  for (size_t i = k_frames; i-- > 0;) {
    const size_t t = begin + i;
    Tensor d_above;
    if (head_caches[i].valid) {
      d_above = softmax_ce_backward(state_head_, head_caches[i],
                                    size_t(utt.state_labels[t]), 1.0,
                                    &grads->state_head);
    } else {
      d_above = Tensor({lstm_stack_.back().hidden_dim()});
    }
    for (size_t l = depth; l-- > 0;) {
      add_inplace(&d_above, d_h_next[l]);
      LstmStepBack back = lstm_backward(lstm_stack_[l], caches[i][l], d_above,
                                        d_c_next[l], &grads->lstm_stack[l]);
      d_h_next[l] = std::move(back.d_h_prev);
      d_c_next[l] = std::move(back.d_c_prev);
      d_above = std::move(back.d_input);  // into h of the layer below
    }
  }
  return stats;
}

ChunkStats PacRnnModel::chunk_backward_pac(const Utterance& utt, size_t begin,
                                           size_t end, RecurrentState* state,
                                           PacRnnGrads* grads) const {
  const size_t t_total = utt.frames();
  const size_t k_frames = end - begin;
  const bool use_lstm = config_.variant == Variant::kPacRnnLstm;
  const size_t tc = config_.t_corr;
  const size_t slots = config_.corr_history_slots();
  const size_t feat = config_.feature_dim;
  const size_t bn = config_.pred_bottleneck;
  const size_t pj = config_.projection;
  const double alpha = config_.alpha;

  // Combined history arrays: carried entries first (their gradient is
  // discarded at the boundary), then this chunk's outputs. The bottleneck at
  // local frame i lands at index tc + i and is consumed by frames i+1 ..
  // i+tc; the projection at local frame i lands at slots-1 + i and is
  // consumed by frames i .. i+slots-1.
  std::vector<Tensor> pred_hist;
  pred_hist.reserve(tc + k_frames);
  for (size_t j = 0; j < tc; ++j) {
    pred_hist.push_back(state->pred_history.entry(j));
  }
  std::vector<Tensor> corr_hist;
  corr_hist.reserve(slots - 1 + k_frames);
  for (size_t j = 1; j < slots; ++j) {
    corr_hist.push_back(state->corr_history.entry(j));
  }

  std::vector<std::vector<AffineCache>> corr_caches;
  std::vector<LstmStepCache> lstm_caches;
  if (use_lstm) {
    lstm_caches.resize(k_frames);
  } else {
    corr_caches.assign(k_frames, std::vector<AffineCache>(corr_stack_.size()));
  }
  std::vector<HeadCache> state_caches(k_frames);
  std::vector<AffineCache> proj_caches(k_frames);
  std::vector<AffineCache> pred_hidden_caches(k_frames);
  std::vector<AffineCache> pred_bn_caches(k_frames);
  std::vector<HeadCache> phoneme_caches(k_frames);
  std::vector<int> pred_targets(k_frames, -1);

  ChunkStats stats;

  // ---- forward over the chunk, pushing state as forward_step does
  for (size_t i = 0; i < k_frames; ++i) {
    const size_t t = begin + i;
    Tensor o = utt.features.row_vector(t);

    std::vector<const Tensor*> xparts;
    xparts.reserve(tc + 1);
    xparts.push_back(&o);
    for (size_t j = 0; j < tc; ++j) xparts.push_back(&pred_hist[i + j]);
    Tensor u = concat(xparts);

    Tensor top;
    if (use_lstm) {
      auto& st = state->lstm_state[0];
      auto [h, c] = lstm_step(corr_lstm_, u, st.first, st.second,
                              &lstm_caches[i]);
      st = {h, c};
      top = h;
    } else {
      Tensor a = u;
      for (size_t l = 0; l < corr_stack_.size(); ++l) {
        a = affine_forward(corr_stack_[l], a, &corr_caches[i][l]);
      }
      top = a;
    }

    check_state_label(utt, t, config_.state_classes);
    const int s = utt.state_labels[t];
    if (s >= 0) {
      HeadResult hr = softmax_ce(state_head_, top, size_t(s), &state_caches[i]);
      stats.loss += alpha * hr.loss;
      stats.frames += 1;
    }

    Tensor proj = affine_forward(projection_, top, &proj_caches[i]);
    corr_hist.push_back(proj);
    state->corr_history.push(proj);

    std::vector<const Tensor*> yparts;
    yparts.reserve(slots + 1);
    yparts.push_back(&o);
    for (size_t j = 0; j < slots; ++j) yparts.push_back(&corr_hist[i + j]);
    Tensor v = concat(yparts);

    Tensor ph = affine_forward(pred_hidden_, v, &pred_hidden_caches[i]);
    Tensor hpred =
        affine_forward(pred_bottleneck_, ph, &pred_bn_caches[i]);

    if (s >= 0) {
      const size_t target_idx = std::min(t + config_.horizon, t_total - 1);
      check_phoneme_label(utt, target_idx, config_.phoneme_classes);
      const int l = utt.phoneme_labels[target_idx];
      if (l >= 0) {
        HeadResult pr =
            softmax_ce(phoneme_head_, hpred, size_t(l), &phoneme_caches[i]);
        stats.loss += (1.0 - alpha) * pr.loss;
        pred_targets[i] = l;
      }
    }

    pred_hist.push_back(hpred);
    state->pred_history.push(hpred);
  }
  state->frames_seen += k_frames;

  // ---- backward, newest frame first
  std::vector<Tensor> d_pred_hist(tc + k_frames), d_corr_hist(slots - 1 + k_frames);
  for (auto& t : d_pred_hist) t = Tensor({bn});
  for (auto& t : d_corr_hist) t = Tensor({pj});
  Tensor d_h_next, d_c_next;
  if (use_lstm) {
    d_h_next = Tensor({config_.corr_cells});
    d_c_next = Tensor({config_.corr_cells});
  }

  for (size_t i = k_frames; i-- > 0;) {
    // Prediction side first: the phoneme head and all future consumers of
    // this frame's bottleneck have already deposited into d_pred_hist.
    Tensor d_hpred = d_pred_hist[tc + i];
    if (pred_targets[i] >= 0 && alpha < 1.0) {
      Tensor dh = softmax_ce_backward(phoneme_head_, phoneme_caches[i],
                                      size_t(pred_targets[i]), 1.0 - alpha,
                                      &grads->phoneme_head);
      add_inplace(&d_hpred, dh);
    }
    Tensor d_ph = affine_backward(pred_bottleneck_, pred_bn_caches[i], d_hpred,
                                  &grads->pred_bottleneck);
    Tensor d_v = affine_backward(pred_hidden_, pred_hidden_caches[i], d_ph,
                                 &grads->pred_hidden);
    // The o_t part of the input gradient is discarded; the y_t part scatters
    // back onto the projections it came from.
    for (size_t j = 0; j < slots; ++j) {
      double* dst = d_corr_hist[i + j].data();
      const double* src = d_v.data() + feat + j * pj;
      for (size_t q = 0; q < pj; ++q) dst[q] += src[q];
    }

    // Correction side: d_corr_hist[slots-1+i] is now complete.
    Tensor d_top = affine_backward(projection_, proj_caches[i],
                                   d_corr_hist[slots - 1 + i],
                                   &grads->projection);
    if (state_caches[i].valid && alpha > 0.0) {
      Tensor dt = softmax_ce_backward(state_head_, state_caches[i],
                                      size_t(utt.state_labels[begin + i]),
                                      alpha, &grads->state_head);
      add_inplace(&d_top, dt);
    }

    Tensor d_u;
    if (use_lstm) {
      add_inplace(&d_top, d_h_next);
      LstmStepBack back = lstm_backward(corr_lstm_, lstm_caches[i], d_top,
                                        d_c_next, &grads->corr_lstm);
      d_u = std::move(back.d_input);
      d_h_next = std::move(back.d_h_prev);
      d_c_next = std::move(back.d_c_prev);
    } else {
      Tensor d = std::move(d_top);
      for (size_t l = corr_stack_.size(); l-- > 0;) {
        d = affine_backward(corr_stack_[l], corr_caches[i][l], d,
                            &grads->corr_stack[l]);
      }
      d_u = std::move(d);
    }
    for (size_t j = 0; j < tc; ++j) {
      double* dst = d_pred_hist[i + j].data();
      const double* src = d_u.data() + feat + j * bn;
      for (size_t q = 0; q < bn; ++q) dst[q] += src[q];
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Transfer and persistence.

void PacRnnModel::replace_heads(size_t state_classes, size_t phoneme_classes,
                                Rng* rng) {
  state_head_ = make_head(state_classes, state_head_.in_dim(), rng);
  config_.state_classes = state_classes;
  if (config_.is_pac()) {
    phoneme_head_ = make_head(phoneme_classes, phoneme_head_.in_dim(), rng);
    config_.phoneme_classes = phoneme_classes;
  }
}

void PacRnnModel::save(const std::string& path) const {
  auto* self = const_cast<PacRnnModel*>(this);
  save_tensor_bundle(path, "pacrnn", config_to_json(config_), self->params());
}

PacRnnModel PacRnnModel::load(const std::string& path) {
  LoadedBundle bundle = load_tensor_bundle(path);
  if (bundle.kind != "pacrnn") {
    throw FormatError("model file '" + path + "' holds kind '" + bundle.kind +
                      "', expected 'pacrnn'");
  }
  PacRnnConfig config = config_from_json(bundle.config_json);
  Rng scratch(0);
  PacRnnModel model(config, &scratch);
  fill_params_from_bundle(bundle, model.params());
  return model;
}

}  // namespace pacrnn
