// core/src/trainer.cc

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

#include "pacrnn/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pacrnn/error.h"

namespace pacrnn {

std::vector<ChunkBatch> make_batches(const Corpus& corpus,
                                     const BpttPlan& plan, Rng* rng) {
  if (corpus.utterances.empty()) {
    throw DataError("make_batches: corpus is empty");
  }
  if (plan.chunk_frames == 0 || plan.parallel_utterances == 0) {
    throw ParameterError("make_batches: plan sizes must be positive");
  }
  std::vector<size_t> order(corpus.utterances.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng->shuffle(&order);

  std::vector<ChunkBatch> batches;
  for (size_t at = 0; at < order.size(); at += plan.parallel_utterances) {
    ChunkBatch batch;
    const size_t n = std::min(plan.parallel_utterances, order.size() - at);
    size_t max_frames = 0;
    for (size_t k = 0; k < n; ++k) {
      const size_t idx = order[at + k];
      batch.utterance_indices.push_back(idx);
      max_frames = std::max(max_frames, corpus.utterances[idx].frames());
    }
    batch.num_chunks = (max_frames + plan.chunk_frames - 1) / plan.chunk_frames;
    if (batch.num_chunks > 0) batches.push_back(std::move(batch));
  }
  return batches;
}

Schedule make_schedule(Variant variant, size_t max_epochs) {
  Schedule s;
  s.base_lr = (variant == Variant::kDnn) ? 0.1 : 0.01;
  s.learning_rate = s.base_lr;
  s.momentum = 0.0;
  s.max_epochs = max_epochs;
  return s;
}

void advance_schedule(Schedule* s, double dev_loss) {
  s->dev_history.push_back(dev_loss);
  if (s->epoch == 1) {
    s->learning_rate = 10.0 * s->base_lr;
    s->momentum = s->peak_momentum;
    s->phase = SchedulePhase::kMain;
  } else if (dev_loss >= s->best_dev_loss - s->improvement_eps) {
    s->learning_rate *= 0.5;
    s->phase = SchedulePhase::kHalving;
  }
  s->best_dev_loss = std::min(s->best_dev_loss, dev_loss);
  s->epoch += 1;
  if (s->learning_rate < s->base_lr / 64.0 || s->epoch > s->max_epochs) {
    s->stop = true;
  }
}

Velocity make_velocity(const std::vector<ParamRef>& params) {
  Velocity v;
  v.reserve(params.size());
  for (const ParamRef& p : params) v.push_back(Tensor::zeros_like(*p.tensor));
  return v;
}

void sgd_update(const std::vector<ParamRef>& params,
                const std::vector<ParamRef>& grads, Velocity* velocity,
                double learning_rate, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity->size()) {
    throw DimensionError("sgd_update: parameter/gradient/velocity lists "
                         "disagree in length");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].tensor;
    const Tensor& g = *grads[i].tensor;
    Tensor& v = (*velocity)[i];
    if (!p.same_shape(g) || !p.same_shape(v)) {
      throw DimensionError("sgd_update: shape mismatch at '" + params[i].name +
                           "'");
    }
    double* pd = p.data();
    const double* gd = g.data();
    double* vd = v.data();
    for (size_t k = 0; k < p.size(); ++k) {
      vd[k] = momentum * vd[k] - learning_rate * gd[k];
      pd[k] += vd[k];
    }
  }
}

TrainChunkResult train_chunk(const PacRnnModel& model, const Corpus& corpus,
                             const ChunkBatch& batch, size_t chunk_index,
                             const BpttPlan& plan,
                             std::vector<RecurrentState>* states,
                             PacRnnGrads* grads) {
  if (states->size() != batch.utterance_indices.size()) {
    throw StateError("train_chunk: carried states do not match the batch");
  }
  TrainChunkResult result;
  const size_t begin = chunk_index * plan.chunk_frames;
  const size_t end = begin + plan.chunk_frames;
  for (size_t k = 0; k < batch.utterance_indices.size(); ++k) {
    const Utterance& utt = corpus.utterances[batch.utterance_indices[k]];
    ChunkStats stats =
        model.chunk_backward(utt, begin, end, &(*states)[k], grads);
    result.loss += stats.loss;
    result.frames += stats.frames;
  }
  return result;
}

EvalResult evaluate_outputs(
    const std::vector<std::vector<FrameOutput>>& outputs_per_utterance,
    const Corpus& corpus, double alpha, size_t horizon) {
  if (outputs_per_utterance.size() != corpus.utterances.size()) {
    throw DataError("evaluate_outputs: output list does not match corpus");
  }
  EvalResult result;
  double loss_sum = 0.0;
  size_t errors = 0;
  for (size_t u = 0; u < corpus.utterances.size(); ++u) {
    const Utterance& utt = corpus.utterances[u];
    const auto& outputs = outputs_per_utterance[u];
    loss_sum -= joint_objective(outputs, utt.state_labels, utt.phoneme_labels,
                                alpha, horizon);
    for (size_t t = 0; t < utt.frames(); ++t) {
      const int s = utt.state_labels[t];
      if (s < 0) continue;
      result.frames += 1;
      if (argmax(outputs[t].state_posterior) != size_t(s)) errors += 1;
    }
  }
  if (result.frames > 0) {
    result.mean_loss = loss_sum / double(result.frames);
    result.frame_error_rate = double(errors) / double(result.frames);
  }
  return result;
}

EvalResult evaluate(const PacRnnModel& model, const Corpus& corpus) {
  if (corpus.state_classes != model.config().state_classes) {
    throw ConfigError("evaluate: corpus has " +
                      std::to_string(corpus.state_classes) +
                      " state classes, model expects " +
                      std::to_string(model.config().state_classes));
  }
  if (model.config().is_pac() &&
      corpus.phoneme_classes != model.config().phoneme_classes) {
    throw ConfigError("evaluate: corpus has " +
                      std::to_string(corpus.phoneme_classes) +
                      " phoneme classes, model expects " +
                      std::to_string(model.config().phoneme_classes));
  }
  std::vector<std::vector<FrameOutput>> outputs;
  outputs.reserve(corpus.utterances.size());
  for (const Utterance& utt : corpus.utterances) {
    outputs.push_back(model.forward_utterance(utt));
  }
  return evaluate_outputs(outputs, corpus, model.config().alpha,
                          model.config().horizon);
}

namespace {

void clip_grads(const std::vector<ParamRef>& grads, double limit) {
  for (const ParamRef& g : grads) {
    double* d = g.tensor->data();
    for (size_t i = 0; i < g.tensor->size(); ++i) {
      d[i] = std::clamp(d[i], -limit, limit);
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainResult train_model(PacRnnModel* model, const Corpus& train,
                        const Corpus& dev, const TrainOptions& options) {
  if (train.utterances.empty()) {
    throw DataError("train_model: training corpus is empty");
  }
  std::vector<ParamRef> params = model->params();
  PacRnnGrads grads = model->make_grads();
  std::vector<ParamRef> grad_refs = grads.refs();
  if (grad_refs.size() != params.size()) {
    throw StateError("train_model: gradient layout does not match parameters");
  }
  Velocity velocity = make_velocity(params);
  Schedule schedule = make_schedule(model->config().variant,
                                    options.max_epochs);

  std::ofstream metrics;
  if (!options.metrics_path.empty()) {
    metrics.open(options.metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot open: " + options.metrics_path);
  }
  std::ofstream timing;
  if (!options.timing_path.empty()) {
    timing.open(options.timing_path, std::ios::trunc);
    if (!timing) throw IoError("cannot open: " + options.timing_path);
  }

  TrainResult result;
  while (!schedule.stop) {
    const auto epoch_start = std::chrono::steady_clock::now();
    // Fresh deterministic shuffle per epoch.
    Rng shuffle_rng(options.shuffle_seed ^
                    (uint64_t(schedule.epoch) * 0x9E3779B97F4A7C15ULL));
    std::vector<ChunkBatch> batches =
        make_batches(train, options.plan, &shuffle_rng);

    double loss_sum = 0.0;
    size_t frames = 0;
    for (const ChunkBatch& batch : batches) {
      std::vector<RecurrentState> states;
      states.reserve(batch.utterance_indices.size());
      for (size_t k = 0; k < batch.utterance_indices.size(); ++k) {
        states.push_back(model->initial_state());
      }
      for (size_t c = 0; c < batch.num_chunks; ++c) {
        grads.clear();
        TrainChunkResult chunk_result = train_chunk(
            *model, train, batch, c, options.plan, &states, &grads);
        if (chunk_result.frames == 0) continue;
        if (options.grad_clip > 0.0) clip_grads(grad_refs, options.grad_clip);
        sgd_update(params, grad_refs, &velocity, schedule.learning_rate,
                   schedule.momentum);
        loss_sum += chunk_result.loss;
        frames += chunk_result.frames;
      }
    }

    EvalResult dev_eval = evaluate(*model, dev);

    EpochRecord record;
    record.epoch = schedule.epoch;
    record.learning_rate = schedule.learning_rate;
    record.momentum = schedule.momentum;
    record.train_j = frames > 0 ? -loss_sum / double(frames) : 0.0;
    record.dev_j = -dev_eval.mean_loss;
    record.dev_fer = dev_eval.frame_error_rate;
    result.records.push_back(record);

    if (metrics.is_open()) {
      metrics << "{\"epoch\":" << record.epoch
              << ",\"lr\":" << format_double(record.learning_rate)
              << ",\"momentum\":" << format_double(record.momentum)
              << ",\"train_j\":" << format_double(record.train_j)
              << ",\"dev_j\":" << format_double(record.dev_j)
              << ",\"dev_fer\":" << format_double(record.dev_fer) << "}\n";
      metrics.flush();
    }
    if (timing.is_open()) {
      const auto elapsed = std::chrono::steady_clock::now() - epoch_start;
      const auto ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(elapsed);
      timing << "{\"epoch\":" << record.epoch << ",\"wall_ms\":" << ms.count()
             << "}\n";
      timing.flush();
    }

    result.final_dev_loss = dev_eval.mean_loss;
    result.final_dev_fer = dev_eval.frame_error_rate;
    result.epochs_run = schedule.epoch;
    advance_schedule(&schedule, dev_eval.mean_loss);
  }
  return result;
}

PipelineOptions pipeline_for_variant(Variant variant) {
  PipelineOptions options;
  if (variant == Variant::kLstm) {
    options.stack = false;
    options.label_delay = 5;
  }
  return options;
}

}  // namespace pacrnn
