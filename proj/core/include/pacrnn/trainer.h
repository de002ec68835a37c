// core/include/pacrnn/trainer.h

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

#ifndef PACRNN_TRAINER_H_
#define PACRNN_TRAINER_H_

#include <limits>
#include <string>
#include <vector>

#include "pacrnn/data.h"
#include "pacrnn/model.h"

namespace pacrnn {

// ---------------------------------------------------------------------------
// BPTT batching.

struct BpttPlan {
  size_t chunk_frames = 20;
  size_t parallel_utterances = 20;
};

// One group of utterances processed simultaneously. The chunk grid spans the
// longest utterance; shorter ones are masked out past their end.
struct ChunkBatch {
  std::vector<size_t> utterance_indices;  // fixed processing order
  size_t num_chunks = 0;
};

// Shuffles utterances (seeded) and groups them plan.parallel_utterances at a
// time.
std::vector<ChunkBatch> make_batches(const Corpus& corpus,
                                     const BpttPlan& plan, Rng* rng);

// ---------------------------------------------------------------------------
// Learning-rate schedule: warm first epoch at the base rate without
// momentum, then ten times the base rate with momentum 0.9, halving whenever
// the dev criterion stops improving. Recurrent variants use a base rate ten
// times smaller than the DNN's.

enum class SchedulePhase { kWarmup, kMain, kHalving };

struct Schedule {
  size_t epoch = 1;
  double base_lr = 0.1;
  double learning_rate = 0.1;
  double momentum = 0.0;
  double peak_momentum = 0.9;
  double best_dev_loss = std::numeric_limits<double>::infinity();
  SchedulePhase phase = SchedulePhase::kWarmup;
  size_t max_epochs = 30;
  double improvement_eps = 1e-6;  // "no longer improves" threshold
  bool stop = false;
  std::vector<double> dev_history;
};

Schedule make_schedule(Variant variant, size_t max_epochs = 30);

// Consumes one dev evaluation and moves the schedule to the next epoch.
// Sets stop once the rate falls below base_lr / 64 or max_epochs is reached.
void advance_schedule(Schedule* schedule, double dev_loss);

// ---------------------------------------------------------------------------
// Momentum SGD.

// Momentum accumulators, congruent with the parameter list and zeroed at
// training start.
using Velocity = std::vector<Tensor>;

Velocity make_velocity(const std::vector<ParamRef>& params);

// velocity <- momentum * velocity - lr * grad;  param <- param + velocity.
// Gradients are of the negated objective (-J), so this ascends J.
void sgd_update(const std::vector<ParamRef>& params,
                const std::vector<ParamRef>& grads, Velocity* velocity,
                double learning_rate, double momentum);

// ---------------------------------------------------------------------------
// Chunk training and evaluation.

struct TrainChunkResult {
  double loss = 0.0;  // summed -J over counted frames
  size_t frames = 0;
};

// Forward + truncated backward for grid chunk `chunk_index` of one batch,
// utterances in fixed order, accumulating into *grads. States are carried
// across calls for consecutive chunks of the same batch.
TrainChunkResult train_chunk(const PacRnnModel& model, const Corpus& corpus,
                             const ChunkBatch& batch, size_t chunk_index,
                             const BpttPlan& plan,
                             std::vector<RecurrentState>* states,
                             PacRnnGrads* grads);

struct EvalResult {
  double mean_loss = 0.0;  // mean -J per counted frame
  double frame_error_rate = 0.0;
  size_t frames = 0;
};

// Scores hand-built outputs against a corpus (test seam for mock posteriors).
EvalResult evaluate_outputs(
    const std::vector<std::vector<FrameOutput>>& outputs_per_utterance,
    const Corpus& corpus, double alpha, size_t horizon);

// Deterministic dev/test evaluation; masked frames excluded.
EvalResult evaluate(const PacRnnModel& model, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Full training run.

struct TrainOptions {
  BpttPlan plan;
  size_t max_epochs = 30;
  uint64_t shuffle_seed = 1;
  // Elementwise gradient clip; 0 disables (the default: the recurrent
  // variants are kept stable by their 1/10 learning rate instead).
  double grad_clip = 0.0;
  std::string metrics_path;  // JSONL, one deterministic record per epoch
  std::string timing_path;   // JSONL wall-time sidecar (not deterministic)
};

struct EpochRecord {
  size_t epoch = 0;
  double learning_rate = 0.0;
  double momentum = 0.0;
  double train_j = 0.0;  // mean J per frame on train
  double dev_j = 0.0;    // mean J per frame on dev
  double dev_fer = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> records;
  double final_dev_loss = 0.0;
  double final_dev_fer = 0.0;
  size_t epochs_run = 0;
};

// Epoch loop with per-chunk updates, dev-driven schedule, and metrics
// emission. A fixed seed makes the whole run bitwise reproducible.
TrainResult train_model(PacRnnModel* model, const Corpus& train,
                        const Corpus& dev, const TrainOptions& options);

// Pipeline defaults per variant: context stacking for DNN and PAC inputs,
// single frames with a 5-frame label delay for the LSTM baseline.
PipelineOptions pipeline_for_variant(Variant variant);

}  // namespace pacrnn

#endif  // PACRNN_TRAINER_H_
