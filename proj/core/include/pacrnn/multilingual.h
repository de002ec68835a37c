// core/include/pacrnn/multilingual.h

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

#ifndef PACRNN_MULTILINGUAL_H_
#define PACRNN_MULTILINGUAL_H_

#include <string>
#include <utility>
#include <vector>

#include "pacrnn/data.h"
#include "pacrnn/model.h"
#include "pacrnn/trainer.h"

namespace pacrnn {

// ---------------------------------------------------------------------------
// Multi-head bottleneck network: shared sigmoid stack, a narrow linear
// bottleneck, one more sigmoid layer, and one softmax head per language.
// Frames of language L route loss and head gradient through head L only; the
// shared stack receives gradient from every language.

struct MultiHeadSpec {
  size_t input_dim = 0;
  std::vector<size_t> hidden = {64};  // sigmoid stack before the bottleneck
  size_t bottleneck = 16;             // linear
  size_t post_hidden = 64;            // sigmoid layer feeding the heads
  // (language, class count) pairs; filled from the corpora by the trainers.
  std::vector<std::pair<std::string, size_t>> heads;
};

struct MultiHeadFrameCache {
  std::vector<AffineCache> hidden;
  AffineCache bottleneck;
  AffineCache post_hidden;
  HeadCache head;
};

struct MultiHeadGrads {
  std::vector<AffineGrad> hidden;
  AffineGrad bottleneck;
  AffineGrad post_hidden;
  std::vector<HeadGrad> heads;

  std::vector<ParamRef> refs();
  void clear();
};

class MultiHeadNet {
 public:
  MultiHeadNet() = default;
  MultiHeadNet(const MultiHeadSpec& spec, Rng* rng);

  const MultiHeadSpec& spec() const { return spec_; }
  size_t bottleneck_dim() const { return spec_.bottleneck; }
  std::vector<ParamRef> params();
  size_t parameter_count() const;
  MultiHeadGrads make_grads() const;

  // Index of the head for a language; throws ConfigError when absent.
  size_t head_index(const std::string& language) const;

  // Linear bottleneck activations for one frame.
  Tensor bottleneck_frame(const Tensor& x) const;

  // Posterior of one language's head for one frame.
  Tensor head_posterior(size_t head, const Tensor& x) const;

  // CE loss for one frame routed through one head, with caching for
  // frame_backward.
  double frame_loss(size_t head, const Tensor& x, size_t label,
                    MultiHeadFrameCache* cache) const;
  void frame_backward(size_t head, size_t label,
                      const MultiHeadFrameCache& cache, double loss_weight,
                      MultiHeadGrads* grads) const;

  // Drops every head and attaches a freshly initialized one. Hidden layers
  // and the bottleneck keep the donor's parameters.
  void replace_heads(const std::string& language, size_t classes, Rng* rng);

  void save(const std::string& path) const;
  static MultiHeadNet load(const std::string& path);

 private:
  MultiHeadSpec spec_;
  std::vector<AffineLayer> hidden_;
  AffineLayer bottleneck_;
  AffineLayer post_hidden_;
  std::vector<SoftmaxHead> heads_;
};

// Frame-shuffled minibatch SGD options for the feed-forward nets. Gradients
// are averaged over the minibatch (unlike the chunk trainer, which applies
// the paper's summed-gradient convention).
struct FrameTrainOptions {
  size_t minibatch = 128;
  size_t max_epochs = 8;
  uint64_t seed = 1;
  double base_lr = 0.1;  // warm first epoch, then 10x with momentum 0.9
  double peak_momentum = 0.9;
};

// Pools the corpora; each frame trains its own language's head plus the
// shared stack. Duplicate language tags are rejected. dev_corpora may be
// empty (fixed-epoch training, no halving).
MultiHeadNet train_multilingual(const std::vector<Corpus>& train_corpora,
                                const std::vector<Corpus>& dev_corpora,
                                MultiHeadSpec spec,
                                const FrameTrainOptions& options, Rng* rng);

// Mean CE of the routed heads over a corpus list (dev criterion).
double multilingual_dev_loss(const MultiHeadNet& net,
                             const std::vector<Corpus>& corpora);

// Per-frame linear bottleneck features for an utterance / a whole corpus.
Tensor extract_bn(const MultiHeadNet& net, const Utterance& utt);
Corpus extract_bn_corpus(const MultiHeadNet& net, const Corpus& corpus);

enum class AdaptMode { kKeepHead, kReplaceHead };

// Fine-tunes a donor net on the target corpus. kReplaceHead installs a fresh
// head for the target inventory first; kKeepHead requires an existing head
// matching the target language and class count.
void adapt_network(MultiHeadNet* net, const Corpus& target_train,
                   const std::vector<Corpus>& target_dev, AdaptMode mode,
                   const FrameTrainOptions& options, Rng* rng);

// ---------------------------------------------------------------------------
// Stacked bottleneck cascade: stage-2 consumes context-stacked stage-1
// bottleneck features.

struct SbnPipeline {
  MultiHeadNet stage1;
  MultiHeadNet stage2;
  size_t stack_half_window = 15;
  size_t stack_step = 5;
};

// Trains stage-2 on stacked stage-1 features of the given corpora.
MultiHeadNet train_sbn_stage2(const MultiHeadNet& stage1,
                              const std::vector<Corpus>& train_corpora,
                              const std::vector<Corpus>& dev_corpora,
                              MultiHeadSpec stage2_spec, size_t half_window,
                              size_t step, const FrameTrainOptions& options,
                              Rng* rng);

// Final features from the cascade (stage-2 bottleneck).
Tensor sbn_extract(const SbnPipeline& sbn, const Utterance& utt);

// ---------------------------------------------------------------------------
// Language identification.

struct LidSpec {
  size_t input_dim = 0;
  size_t hidden = 32;
};

class LidModel {
 public:
  LidModel() = default;
  LidModel(const LidSpec& spec, std::vector<std::string> languages, Rng* rng);

  const LidSpec& spec() const { return spec_; }
  const std::vector<std::string>& languages() const { return languages_; }
  std::vector<ParamRef> params();
  Tensor frame_posterior(const Tensor& x) const;

  void save(const std::string& path) const;
  static LidModel load(const std::string& path);

  AffineLayer& hidden_layer() { return hidden_; }
  SoftmaxHead& head() { return head_; }

 private:
  LidSpec spec_;
  std::vector<std::string> languages_;  // sorted; class order
  AffineLayer hidden_;
  SoftmaxHead head_;
};

// Frame classifier over the source languages (tags sorted lexicographically).
LidModel train_lid(const std::vector<Corpus>& sources, const LidSpec& spec,
                   const FrameTrainOptions& options, Rng* rng);

// Mean frame posterior over the whole corpus.
Tensor mean_language_posterior(const LidModel& lid, const Corpus& corpus);

// Argmax of the mean posterior; ties break toward the lexicographically
// smallest tag. Throws DataError on an empty corpus.
std::string select_closest_language(const LidModel& lid, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Closest-language transfer: adapt stage-1 to the target, pick the closest
// source language by LID, train the hybrid from random initialization on
// that language, then adapt it to the target with head replacement.

struct ProvenanceStep {
  std::string name;
  std::string detail;
};

struct ProvenanceRecord {
  std::vector<ProvenanceStep> steps;
  std::string donor_hash;  // hash of the closest-language hybrid model file
  uint64_t seed = 0;
  std::string schedule_summary;

  std::string to_json() const;
  void write(const std::string& path) const;
};

struct HybridPipelineOptions {
  PacRnnConfig hybrid_template;  // variant + sizes; dims/classes filled here
  TrainOptions donor_train;      // closest-language training
  TrainOptions adapt_train;      // final adaptation
  FrameTrainOptions stage1_adapt;
  // Context stacking applied to features entering stage-1 and the LID.
  size_t input_half_window = 15;
  size_t input_step = 5;
  // Context stacking applied to BN features entering the hybrid (PAC/DNN
  // variants; the LSTM baseline takes single frames with label delay).
  size_t bn_half_window = 15;
  size_t bn_step = 5;
  std::string work_dir;  // intermediate artifacts (donor model) land here
  uint64_t seed = 1;
};

struct ClosestLanguageResult {
  PacRnnModel model;
  std::string closest_language;
  ProvenanceRecord provenance;
  MultiHeadNet adapted_stage1;
};

// stage1 and lid are pre-trained on the sources (stacked raw features with
// the same window as options.input_*). Source and target corpora are raw.
ClosestLanguageResult closest_language_pipeline(
    const MultiHeadNet& stage1, const LidModel& lid,
    const std::vector<Corpus>& source_train,
    const std::vector<Corpus>& source_dev, const Corpus& target_train,
    const Corpus& target_dev, const HybridPipelineOptions& options, Rng* rng);

}  // namespace pacrnn

#endif  // PACRNN_MULTILINGUAL_H_
