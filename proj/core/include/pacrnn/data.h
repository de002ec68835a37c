// core/include/pacrnn/data.h

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

#ifndef PACRNN_DATA_H_
#define PACRNN_DATA_H_

#include <string>
#include <vector>

#include "pacrnn/rng.h"
#include "pacrnn/tensor.h"

namespace pacrnn {

// One utterance: frame features plus per-frame state and phoneme labels.
// Labels are class indices; a negative label marks a frame excluded from the
// loss (produced by delay_labels, never stored in corpus files).
struct Utterance {
  std::string id;
  std::string language;
  Tensor features;  // frames x dim; default tensor when empty
  std::vector<int> state_labels;
  std::vector<int> phoneme_labels;

  size_t frames() const { return features.rank() == 2 ? features.rows() : 0; }
  size_t feature_dim() const {
    return features.rank() == 2 ? features.cols() : 0;
  }
};

struct Corpus {
  std::string language;
  size_t state_classes = 0;
  size_t phoneme_classes = 0;
  std::vector<Utterance> utterances;

  size_t total_frames() const;
  // Dimension of the first non-empty utterance; 0 for an empty corpus.
  size_t feature_dim() const;
};

// Checks the invariants required of stored corpora: aligned label lengths,
// labels within class inventories, consistent feature dimensions.
void validate_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Synthetic toy language.
//
// A toy language is a phoneme-level bigram chain where each phoneme emits a
// fixed left-to-right ladder of states with geometric dwell and per-state
// Gaussian features. It stands in for a real corpus at desk scale.

struct ToyLanguageSpec {
  std::string language = "toy";
  size_t phoneme_count = 10;
  size_t states_per_phoneme = 3;
  size_t feature_dim = 24;
  Tensor transition;    // phoneme_count x phoneme_count; rows sum to 1
  Tensor state_means;   // state_classes() x feature_dim
  Tensor state_stddev;  // state_classes() x feature_dim, strictly positive
  size_t silence_phoneme = 0;
  double dwell_stay_prob = 0.6;  // P(stay in state for another frame)
  uint64_t seed = 1;

  size_t state_classes() const { return phoneme_count * states_per_phoneme; }
};

// Throws SpecError when rows do not sum to 1, a variance is not positive,
// some phoneme has no exit probability, or the bigram chain carries no
// information (mean next-phoneme entropy not strictly below log(P)).
void validate_spec(const ToyLanguageSpec& spec);

// Mean over rows of the conditional next-phoneme entropy, in nats.
double next_phoneme_entropy(const Tensor& transition);

// Style knobs for the default toy language family.
struct ToyFamilyOptions {
  size_t phoneme_count = 10;
  size_t states_per_phoneme = 3;
  size_t feature_dim = 24;
  double mean_scale = 1.0;      // spread of state means
  double noise_stddev = 1.0;    // emission noise
  double dwell_stay_prob = 0.6;

  // When >= 0, phonemes are generated in confusable pairs whose state means
  // differ only by this offset, so frame-local evidence underdetermines the
  // phoneme and history carries real information.
  double confusable_offset = -1.0;
};

ToyLanguageSpec make_toy_spec(const ToyFamilyOptions& options,
                              const std::string& language, uint64_t seed);

// A related language: same inventory and phonotactics, state means moved by
// a perturbation of the given magnitude. Smaller magnitude = closer language.
ToyLanguageSpec perturb_toy_spec(const ToyLanguageSpec& base, double magnitude,
                                 const std::string& language, uint64_t seed);

// Samples a corpus of utterance_count utterances with lengths uniform in
// [min_frames, max_frames]. corpus_seed distinguishes draws (train/dev/test)
// from the same spec.
Corpus generate_toy_corpus(const ToyLanguageSpec& spec, size_t utterance_count,
                           size_t min_frames, size_t max_frames,
                           uint64_t corpus_seed);

// ---------------------------------------------------------------------------
// Feature pipeline.

// Splices frames at offsets {-half_window, ..., -step, 0, +step, ...,
// +half_window} (edges clamped), producing taps*D columns. half_window must
// be a multiple of step. Frame count is unchanged.
Tensor stack_context(const Tensor& features, size_t half_window = 15,
                     size_t step = 5);

// labels'[t] = labels[t - delay]; the first `delay` frames become -1 (frames
// excluded from the loss). Throws DataError when delay >= length.
std::vector<int> delay_labels(const std::vector<int>& labels, size_t delay);

// Removes silence frames farther than `margin` frames from the nearest
// non-silence frame. An all-silence utterance comes back empty.
Utterance trim_silence(const Utterance& utt, size_t silence_phoneme,
                       size_t margin = 5);

// Options for preparing a raw corpus for one model family.
struct PipelineOptions {
  bool trim_sil = true;
  size_t sil_margin = 5;
  long silence_phoneme = 0;  // < 0 disables trimming
  bool stack = true;         // context stacking (DNN / PAC-RNN inputs)
  size_t half_window = 15;
  size_t step = 5;
  size_t label_delay = 0;  // state-label delay (LSTM inputs)
};

// Applies trim -> stacking -> label delay and drops utterances that end up
// empty.
Corpus prepare_corpus(const Corpus& raw, const PipelineOptions& options);

// Global per-dimension mean/variance normalization, in place.
void normalize_corpus(Corpus* corpus);

// ---------------------------------------------------------------------------
// Corpus files: text manifest + binary payload, see docs/formats.md.

void write_corpus(const Corpus& corpus, const std::string& path);
Corpus read_corpus(const std::string& path);

}  // namespace pacrnn

#endif  // PACRNN_DATA_H_
