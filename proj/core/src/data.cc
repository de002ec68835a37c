// core/src/data.cc

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

#include "pacrnn/data.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "pacrnn/error.h"

namespace pacrnn {

size_t Corpus::total_frames() const {
  size_t n = 0;
  for (const Utterance& u : utterances) n += u.frames();
  return n;
}

size_t Corpus::feature_dim() const {
  for (const Utterance& u : utterances) {
    if (u.frames() > 0) return u.feature_dim();
  }
  return 0;
}

void validate_corpus(const Corpus& corpus) {
  const size_t dim = corpus.feature_dim();
  for (const Utterance& u : corpus.utterances) {
    const size_t t = u.frames();
    if (u.state_labels.size() != t || u.phoneme_labels.size() != t) {
      throw DataError("utterance '" + u.id + "': label lengths " +
                      std::to_string(u.state_labels.size()) + "/" +
                      std::to_string(u.phoneme_labels.size()) +
                      " do not match " + std::to_string(t) + " frames");
    }
    if (t > 0 && u.feature_dim() != dim) {
      throw DataError("utterance '" + u.id + "': feature dim " +
                      std::to_string(u.feature_dim()) + " differs from " +
                      std::to_string(dim));
    }
    for (size_t k = 0; k < t; ++k) {
      if (u.state_labels[k] < 0 ||
          size_t(u.state_labels[k]) >= corpus.state_classes) {
        throw DataError("utterance '" + u.id + "': state label " +
                        std::to_string(u.state_labels[k]) + " at frame " +
                        std::to_string(k) + " outside inventory of " +
                        std::to_string(corpus.state_classes));
      }
      if (u.phoneme_labels[k] < 0 ||
          size_t(u.phoneme_labels[k]) >= corpus.phoneme_classes) {
        throw DataError("utterance '" + u.id + "': phoneme label " +
                        std::to_string(u.phoneme_labels[k]) + " at frame " +
                        std::to_string(k) + " outside inventory of " +
                        std::to_string(corpus.phoneme_classes));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Toy language.

double next_phoneme_entropy(const Tensor& transition) {
  const size_t n = transition.rows();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double h = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double p = transition.at(i, j);
      if (p > 0.0) h -= p * std::log(p);
    }
    total += h;
  }
  return total / double(n);
}

void validate_spec(const ToyLanguageSpec& spec) {
  if (spec.phoneme_count < 2 || spec.states_per_phoneme < 1 ||
      spec.feature_dim < 1) {
    throw SpecError("toy spec: inventory sizes must be positive (got " +
                    std::to_string(spec.phoneme_count) + " phonemes)");
  }
  if (spec.silence_phoneme >= spec.phoneme_count) {
    throw SpecError("toy spec: silence phoneme index out of range");
  }
  if (!(spec.dwell_stay_prob >= 0.0 && spec.dwell_stay_prob < 1.0)) {
    throw SpecError("toy spec: dwell probability must be in [0, 1)");
  }
  const size_t p = spec.phoneme_count;
  if (spec.transition.rank() != 2 || spec.transition.rows() != p ||
      spec.transition.cols() != p) {
    throw SpecError("toy spec: transition matrix must be " +
                    std::to_string(p) + " x " + std::to_string(p));
  }
  for (size_t i = 0; i < p; ++i) {
    double row_sum = 0.0;
    for (size_t j = 0; j < p; ++j) {
      const double v = spec.transition.at(i, j);
      if (v < 0.0) throw SpecError("toy spec: negative transition probability");
      row_sum += v;
    }
    if (std::abs(row_sum - 1.0) > 1e-9) {
      throw SpecError("toy spec: transition row " + std::to_string(i) +
                      " sums to " + std::to_string(row_sum));
    }
    if (spec.transition.at(i, i) >= 1.0 - 1e-12) {
      throw SpecError("toy spec: phoneme " + std::to_string(i) +
                      " is absorbing with no exit");
    }
  }
  const size_t s = spec.state_classes();
  if (spec.state_means.rank() != 2 || spec.state_means.rows() != s ||
      spec.state_means.cols() != spec.feature_dim ||
      !spec.state_stddev.same_shape(spec.state_means)) {
    throw SpecError("toy spec: emission tables must be " + std::to_string(s) +
                    " x " + std::to_string(spec.feature_dim));
  }
  for (size_t i = 0; i < spec.state_stddev.size(); ++i) {
    if (!(spec.state_stddev[i] > 0.0)) {
      throw SpecError("toy spec: emission stddev must be strictly positive");
    }
  }
  // The prediction task must be learnable: the bigram chain has to carry
  // information about the next phoneme.
  const double h = next_phoneme_entropy(spec.transition);
  if (h >= std::log(double(p)) - 1e-9) {
    throw SpecError("toy spec: next-phoneme entropy " + std::to_string(h) +
                    " is not below log(" + std::to_string(p) + ")");
  }
}

ToyLanguageSpec make_toy_spec(const ToyFamilyOptions& options,
                              const std::string& language, uint64_t seed) {
  ToyLanguageSpec spec;
  spec.language = language;
  spec.phoneme_count = options.phoneme_count;
  spec.states_per_phoneme = options.states_per_phoneme;
  spec.feature_dim = options.feature_dim;
  spec.dwell_stay_prob = options.dwell_stay_prob;
  spec.seed = seed;

  const size_t p = options.phoneme_count;
  Rng rng(seed);

  // Skewed phonotactics: each phoneme has one strong and one weaker
  // successor, plus a small floor everywhere.
  spec.transition = Tensor({p, p});
  for (size_t i = 0; i < p; ++i) {
    for (size_t j = 0; j < p; ++j) spec.transition.at(i, j) = 0.02;
    const size_t first = (i + 1) % p;
    size_t second = (i + 3) % p;
    if (second == first) second = (i + 2) % p;
    spec.transition.at(i, first) += 0.55;
    spec.transition.at(i, second) += 0.25;
    double row = 0.0;
    for (size_t j = 0; j < p; ++j) row += spec.transition.at(i, j);
    for (size_t j = 0; j < p; ++j) spec.transition.at(i, j) /= row;
  }

  const size_t s = spec.state_classes();
  const size_t d = options.feature_dim;
  spec.state_means = Tensor({s, d});
  spec.state_stddev = Tensor({s, d});
  spec.state_stddev.fill(options.noise_stddev);

  if (options.confusable_offset < 0.0) {
    for (size_t i = 0; i < s; ++i) {
      for (size_t k = 0; k < d; ++k) {
        spec.state_means.at(i, k) =
            options.mean_scale * rng.next_uniform(-1.0, 1.0);
      }
    }
  } else {
    // Phonemes above silence come in pairs whose means differ only by a
    // fixed small offset along a per-pair unit direction.
    std::vector<size_t> order;
    for (size_t ph = 0; ph < p; ++ph) {
      if (ph != spec.silence_phoneme) order.push_back(ph);
    }
    // Silence keeps independent means.
    for (size_t q = 0; q < spec.states_per_phoneme; ++q) {
      const size_t st = spec.silence_phoneme * spec.states_per_phoneme + q;
      for (size_t k = 0; k < d; ++k) {
        spec.state_means.at(st, k) =
            options.mean_scale * rng.next_uniform(-1.0, 1.0);
      }
    }
    for (size_t idx = 0; idx < order.size(); idx += 2) {
      const size_t a = order[idx];
      for (size_t q = 0; q < spec.states_per_phoneme; ++q) {
        const size_t st = a * spec.states_per_phoneme + q;
        for (size_t k = 0; k < d; ++k) {
          spec.state_means.at(st, k) =
              options.mean_scale * rng.next_uniform(-1.0, 1.0);
        }
      }
      if (idx + 1 >= order.size()) break;
      const size_t b = order[idx + 1];
      Tensor dir({d});
      double norm = 0.0;
      for (size_t k = 0; k < d; ++k) {
        dir[k] = rng.next_gaussian();
        norm += dir[k] * dir[k];
      }
      norm = std::sqrt(std::max(norm, 1e-12));
      for (size_t q = 0; q < spec.states_per_phoneme; ++q) {
        const size_t sa = a * spec.states_per_phoneme + q;
        const size_t sb = b * spec.states_per_phoneme + q;
        for (size_t k = 0; k < d; ++k) {
          spec.state_means.at(sb, k) =
              spec.state_means.at(sa, k) +
              options.confusable_offset * dir[k] / norm;
        }
      }
    }
  }

  validate_spec(spec);
  return spec;
}

ToyLanguageSpec perturb_toy_spec(const ToyLanguageSpec& base, double magnitude,
                                 const std::string& language, uint64_t seed) {
  if (magnitude < 0.0) {
    throw ParameterError("perturb_toy_spec: magnitude must be >= 0");
  }
  ToyLanguageSpec spec = base;
  spec.language = language;
  spec.seed = seed;
  Rng rng(base.seed ^ (seed * 0x9E3779B97F4A7C15ULL));
  for (size_t i = 0; i < spec.state_means.size(); ++i) {
    spec.state_means[i] += magnitude * rng.next_gaussian();
  }
  validate_spec(spec);
  return spec;
}

namespace {

size_t sample_categorical(const Tensor& transition, size_t row, Rng* rng) {
  const double u = rng->next_unit();
  double acc = 0.0;
  const size_t n = transition.cols();
  for (size_t j = 0; j < n; ++j) {
    acc += transition.at(row, j);
    if (u < acc) return j;
  }
  return n - 1;
}

}  // namespace

Corpus generate_toy_corpus(const ToyLanguageSpec& spec, size_t utterance_count,
                           size_t min_frames, size_t max_frames,
                           uint64_t corpus_seed) {
  validate_spec(spec);
  if (min_frames == 0 || max_frames < min_frames) {
    throw ParameterError("generate_toy_corpus: bad length range [" +
                         std::to_string(min_frames) + ", " +
                         std::to_string(max_frames) + "]");
  }
  Rng rng(spec.seed ^ (corpus_seed * 0x9E3779B97F4A7C15ULL));

  Corpus corpus;
  corpus.language = spec.language;
  corpus.state_classes = spec.state_classes();
  corpus.phoneme_classes = spec.phoneme_count;
  corpus.utterances.reserve(utterance_count);

  const size_t d = spec.feature_dim;
  const size_t s_per = spec.states_per_phoneme;
  for (size_t u = 0; u < utterance_count; ++u) {
    const size_t target =
        min_frames + rng.next_below(max_frames - min_frames + 1);
    Utterance utt;
    {
      std::ostringstream id;
      id << spec.language << "-" << corpus_seed << "-" << u;
      utt.id = id.str();
    }
    utt.language = spec.language;
    utt.features = Tensor({target, d});
    utt.state_labels.reserve(target);
    utt.phoneme_labels.reserve(target);

    size_t t = 0;
    size_t phoneme = spec.silence_phoneme;
    while (t < target) {
      for (size_t q = 0; q < s_per && t < target; ++q) {
        const size_t state = phoneme * s_per + q;
        bool stay = true;
        while (stay && t < target) {
          double* frame = utt.features.row(t);
          for (size_t k = 0; k < d; ++k) {
            frame[k] = spec.state_means.at(state, k) +
                       spec.state_stddev.at(state, k) * rng.next_gaussian();
          }
          utt.state_labels.push_back(int(state));
          utt.phoneme_labels.push_back(int(phoneme));
          ++t;
          stay = rng.next_unit() < spec.dwell_stay_prob;
        }
      }
      phoneme = sample_categorical(spec.transition, phoneme, &rng);
    }
    corpus.utterances.push_back(std::move(utt));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Feature pipeline.

Tensor stack_context(const Tensor& features, size_t half_window, size_t step) {
  if (features.rank() != 2) {
    throw DimensionError("stack_context: features must be rank-2, got " +
                         features.shape_string());
  }
  if (step == 0 || half_window % step != 0) {
    throw ParameterError("stack_context: half_window must be a multiple of a "
                         "positive step");
  }
  const long t_max = long(features.rows());
  const size_t d = features.cols();
  const long half = long(half_window);
  const long st = long(step);
  std::vector<long> offsets;
  for (long o = -half; o <= half; o += st) offsets.push_back(o);

  Tensor out({features.rows(), offsets.size() * d});
  for (long t = 0; t < t_max; ++t) {
    double* dst = out.row(size_t(t));
    for (size_t oi = 0; oi < offsets.size(); ++oi) {
      const long src = std::clamp(t + offsets[oi], 0L, t_max - 1);
      std::memcpy(dst + oi * d, features.row(size_t(src)), d * sizeof(double));
    }
  }
  return out;
}

std::vector<int> delay_labels(const std::vector<int>& labels, size_t delay) {
  if (delay >= labels.size() && !(delay == 0 && labels.empty())) {
    throw DataError("delay_labels: delay " + std::to_string(delay) +
                    " >= sequence length " + std::to_string(labels.size()));
  }
  std::vector<int> out(labels.size(), -1);
  for (size_t t = delay; t < labels.size(); ++t) out[t] = labels[t - delay];
  return out;
}

Utterance trim_silence(const Utterance& utt, size_t silence_phoneme,
                       size_t margin) {
  const size_t t_max = utt.frames();
  if (t_max == 0) return utt;
  if (utt.phoneme_labels.size() != t_max) {
    throw DataError("trim_silence: utterance '" + utt.id +
                    "' has misaligned phoneme labels");
  }
  const long kFar = std::numeric_limits<long>::max() / 2;
  std::vector<long> dist(t_max, kFar);
  long last_speech = -kFar;
  for (size_t t = 0; t < t_max; ++t) {
    if (size_t(utt.phoneme_labels[t]) != silence_phoneme) last_speech = long(t);
    dist[t] = long(t) - last_speech;
  }
  long next_speech = kFar;
  for (size_t ri = t_max; ri-- > 0;) {
    if (size_t(utt.phoneme_labels[ri]) != silence_phoneme) {
      next_speech = long(ri);
    }
    dist[ri] = std::min(dist[ri], next_speech - long(ri));
  }

  std::vector<size_t> keep;
  for (size_t t = 0; t < t_max; ++t) {
    if (size_t(utt.phoneme_labels[t]) != silence_phoneme ||
        dist[t] <= long(margin)) {
      keep.push_back(t);
    }
  }

  Utterance out;
  out.id = utt.id;
  out.language = utt.language;
  if (keep.empty()) return out;
  out.features = Tensor({keep.size(), utt.feature_dim()});
  out.state_labels.reserve(keep.size());
  out.phoneme_labels.reserve(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    std::memcpy(out.features.row(i), utt.features.row(keep[i]),
                utt.feature_dim() * sizeof(double));
    out.state_labels.push_back(utt.state_labels[keep[i]]);
    out.phoneme_labels.push_back(utt.phoneme_labels[keep[i]]);
  }
  return out;
}

Corpus prepare_corpus(const Corpus& raw, const PipelineOptions& options) {
  Corpus out;
  out.language = raw.language;
  out.state_classes = raw.state_classes;
  out.phoneme_classes = raw.phoneme_classes;
  for (const Utterance& u : raw.utterances) {
    Utterance prepared = (options.trim_sil && options.silence_phoneme >= 0)
                             ? trim_silence(u, size_t(options.silence_phoneme),
                                            options.sil_margin)
                             : u;
    if (prepared.frames() == 0) continue;
    if (options.stack) {
      prepared.features =
          stack_context(prepared.features, options.half_window, options.step);
    }
    if (options.label_delay > 0) {
      // Utterances too short to carry any unmasked frame are dropped.
      if (prepared.frames() <= options.label_delay) continue;
      prepared.state_labels =
          delay_labels(prepared.state_labels, options.label_delay);
      prepared.phoneme_labels =
          delay_labels(prepared.phoneme_labels, options.label_delay);
    }
    out.utterances.push_back(std::move(prepared));
  }
  return out;
}

void normalize_corpus(Corpus* corpus) {
  const size_t d = corpus->feature_dim();
  if (d == 0) return;
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  size_t n = 0;
  for (const Utterance& u : corpus->utterances) {
    for (size_t t = 0; t < u.frames(); ++t) {
      const double* row = u.features.row(t);
      for (size_t k = 0; k < d; ++k) mean[k] += row[k];
      ++n;
    }
  }
  if (n == 0) return;
  for (size_t k = 0; k < d; ++k) mean[k] /= double(n);
  for (const Utterance& u : corpus->utterances) {
    for (size_t t = 0; t < u.frames(); ++t) {
      const double* row = u.features.row(t);
      for (size_t k = 0; k < d; ++k) {
        const double c = row[k] - mean[k];
        var[k] += c * c;
      }
    }
  }
  for (size_t k = 0; k < d; ++k) {
    var[k] = std::sqrt(var[k] / double(n));
    if (var[k] < 1e-8) var[k] = 1e-8;
  }
  for (Utterance& u : corpus->utterances) {
    for (size_t t = 0; t < u.frames(); ++t) {
      double* row = u.features.row(t);
      for (size_t k = 0; k < d; ++k) row[k] = (row[k] - mean[k]) / var[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Corpus files.

namespace {

constexpr const char* kCorpusMagic = "PACRNN-CORPUS 1";

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of(" \t\n") != std::string::npos) {
    throw ParameterError("utterance id must be non-empty without whitespace: '" +
                         id + "'");
  }
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::string& path) {
  validate_corpus(corpus);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);

  os << kCorpusMagic << "\n";
  os << "language " << corpus.language << "\n";
  os << "state_classes " << corpus.state_classes << "\n";
  os << "phoneme_classes " << corpus.phoneme_classes << "\n";
  os << "feature_dim " << corpus.feature_dim() << "\n";
  os << "utterance_count " << corpus.utterances.size() << "\n";
  for (const Utterance& u : corpus.utterances) {
    check_id(u.id);
    os << "utt " << u.id << " " << u.language << " " << u.frames() << " "
       << u.feature_dim() << "\n";
  }
  os << "payload\n";
  for (const Utterance& u : corpus.utterances) {
    const size_t t = u.frames();
    if (t == 0) continue;
    os.write(reinterpret_cast<const char*>(u.features.data()),
             std::streamsize(u.features.size() * sizeof(double)));
    std::vector<int32_t> labels(t);
    for (size_t k = 0; k < t; ++k) labels[k] = int32_t(u.state_labels[k]);
    os.write(reinterpret_cast<const char*>(labels.data()),
             std::streamsize(t * sizeof(int32_t)));
    for (size_t k = 0; k < t; ++k) labels[k] = int32_t(u.phoneme_labels[k]);
    os.write(reinterpret_cast<const char*>(labels.data()),
             std::streamsize(t * sizeof(int32_t)));
  }
  if (!os) throw IoError("write failed: " + path);
}

Corpus read_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);

  auto fail = [&](const std::string& what) -> void {
    throw FormatError(what + " at byte " + std::to_string(long(is.tellg())) +
                      " in " + path);
  };

  std::string line;
  if (!std::getline(is, line) || line != kCorpusMagic) {
    throw FormatError("bad magic at byte 0 in " + path);
  }

  Corpus corpus;
  size_t feature_dim = 0;
  size_t utterance_count = 0;
  auto read_field = [&](const std::string& key) -> std::string {
    if (!std::getline(is, line)) fail("truncated header");
    std::istringstream ls(line);
    std::string k, v;
    ls >> k >> v;
    if (k != key) fail("expected header field '" + key + "', got '" + k + "'");
    return v;
  };
  try {
    corpus.language = read_field("language");
    corpus.state_classes = std::stoul(read_field("state_classes"));
    corpus.phoneme_classes = std::stoul(read_field("phoneme_classes"));
    feature_dim = std::stoul(read_field("feature_dim"));
    utterance_count = std::stoul(read_field("utterance_count"));
  } catch (const std::logic_error&) {
    fail("malformed numeric header field");
  }

  struct UttMeta {
    std::string id, language;
    size_t frames, dim;
  };
  std::vector<UttMeta> metas;
  metas.reserve(utterance_count);
  for (size_t i = 0; i < utterance_count; ++i) {
    if (!std::getline(is, line)) fail("truncated utterance manifest");
    std::istringstream ls(line);
    std::string tag;
    UttMeta m;
    ls >> tag >> m.id >> m.language >> m.frames >> m.dim;
    if (tag != "utt" || ls.fail()) fail("malformed utterance manifest line");
    if (m.frames > 0 && m.dim != feature_dim) {
      throw FormatError("utterance '" + m.id + "' declares feature dim " +
                        std::to_string(m.dim) + ", manifest says " +
                        std::to_string(feature_dim) + " in " + path);
    }
    metas.push_back(std::move(m));
  }
  if (!std::getline(is, line) || line != "payload") {
    fail("missing payload marker");
  }

  for (const UttMeta& m : metas) {
    Utterance u;
    u.id = m.id;
    u.language = m.language;
    if (m.frames > 0) {
      u.features = Tensor({m.frames, m.dim});
      is.read(reinterpret_cast<char*>(u.features.data()),
              std::streamsize(u.features.size() * sizeof(double)));
      if (!is) {
        throw FormatError("truncated features for utterance '" + m.id +
                          "' at byte " + std::to_string(long(is.gcount())) +
                          " of its block in " + path);
      }
      std::vector<int32_t> labels(m.frames);
      is.read(reinterpret_cast<char*>(labels.data()),
              std::streamsize(m.frames * sizeof(int32_t)));
      if (!is) fail("truncated state labels for utterance '" + m.id + "'");
      u.state_labels.assign(labels.begin(), labels.end());
      is.read(reinterpret_cast<char*>(labels.data()),
              std::streamsize(m.frames * sizeof(int32_t)));
      if (!is) fail("truncated phoneme labels for utterance '" + m.id + "'");
      u.phoneme_labels.assign(labels.begin(), labels.end());
    }
    corpus.utterances.push_back(std::move(u));
  }
  is.peek();
  if (!is.eof()) fail("trailing bytes after payload");

  validate_corpus(corpus);
  return corpus;
}

}  // namespace pacrnn
