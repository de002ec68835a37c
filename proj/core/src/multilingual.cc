// core/src/multilingual.cc

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

#include "pacrnn/multilingual.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pacrnn/error.h"
#include "pacrnn/serialize.h"

namespace pacrnn {

// ---------------------------------------------------------------------------
// MultiHeadNet.

std::vector<ParamRef> MultiHeadGrads::refs() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < hidden.size(); ++i) {
    collect_grads(&hidden[i], "hidden." + std::to_string(i), &out);
  }
  collect_grads(&bottleneck, "bn", &out);
  collect_grads(&post_hidden, "post", &out);
  for (size_t i = 0; i < heads.size(); ++i) {
    collect_grads(&heads[i], "head." + std::to_string(i), &out);
  }
  return out;
}

void MultiHeadGrads::clear() {
  for (ParamRef& r : refs()) r.tensor->fill(0.0);
}

MultiHeadNet::MultiHeadNet(const MultiHeadSpec& spec, Rng* rng) : spec_(spec) {
  if (spec_.input_dim == 0) {
    throw ParameterError("MultiHeadNet: input_dim must be positive");
  }
  if (spec_.bottleneck == 0 || spec_.post_hidden == 0) {
    throw ParameterError("MultiHeadNet: bottleneck/post widths must be positive");
  }
  if (spec_.heads.empty()) {
    throw ParameterError("MultiHeadNet: at least one head is required");
  }
  {
    std::set<std::string> tags;
    for (const auto& [language, classes] : spec_.heads) {
      if (!tags.insert(language).second) {
        throw ConfigError("MultiHeadNet: duplicate language tag '" + language +
                          "'");
      }
      (void)classes;
    }
  }
  size_t in = spec_.input_dim;
  for (size_t w : spec_.hidden) {
    hidden_.push_back(make_affine(w, in, Activation::kSigmoid, rng));
    in = w;
  }
  bottleneck_ = make_affine(spec_.bottleneck, in, Activation::kLinear, rng);
  post_hidden_ =
      make_affine(spec_.post_hidden, spec_.bottleneck, Activation::kSigmoid,
                  rng);
  for (const auto& [language, classes] : spec_.heads) {
    heads_.push_back(make_head(classes, spec_.post_hidden, rng));
  }
}

std::vector<ParamRef> MultiHeadNet::params() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < hidden_.size(); ++i) {
    collect_params(&hidden_[i], "hidden." + std::to_string(i), &out);
  }
  collect_params(&bottleneck_, "bn", &out);
  collect_params(&post_hidden_, "post", &out);
  for (size_t i = 0; i < heads_.size(); ++i) {
    collect_params(&heads_[i], "head." + std::to_string(i), &out);
  }
  return out;
}

size_t MultiHeadNet::parameter_count() const {
  size_t n = 0;
  for (const ParamRef& r : const_cast<MultiHeadNet*>(this)->params()) {
    n += r.tensor->size();
  }
  return n;
}

MultiHeadGrads MultiHeadNet::make_grads() const {
  MultiHeadGrads g;
  for (const AffineLayer& l : hidden_) g.hidden.push_back(make_grad(l));
  g.bottleneck = make_grad(bottleneck_);
  g.post_hidden = make_grad(post_hidden_);
  for (const SoftmaxHead& h : heads_) g.heads.push_back(make_grad(h));
  return g;
}

size_t MultiHeadNet::head_index(const std::string& language) const {
  for (size_t i = 0; i < spec_.heads.size(); ++i) {
    if (spec_.heads[i].first == language) return i;
  }
  throw ConfigError("MultiHeadNet: no head for language '" + language + "'");
}

Tensor MultiHeadNet::bottleneck_frame(const Tensor& x) const {
  Tensor a = x;
  for (const AffineLayer& l : hidden_) a = affine_forward(l, a);
  return affine_forward(bottleneck_, a);
}

Tensor MultiHeadNet::head_posterior(size_t head, const Tensor& x) const {
  Tensor a = x;
  for (const AffineLayer& l : hidden_) a = affine_forward(l, a);
  a = affine_forward(bottleneck_, a);
  a = affine_forward(post_hidden_, a);
  return head_forward(heads_[head], a);
}

double MultiHeadNet::frame_loss(size_t head, const Tensor& x, size_t label,
                                MultiHeadFrameCache* cache) const {
  cache->hidden.resize(hidden_.size());
  Tensor a = x;
  for (size_t i = 0; i < hidden_.size(); ++i) {
    a = affine_forward(hidden_[i], a, &cache->hidden[i]);
  }
  a = affine_forward(bottleneck_, a, &cache->bottleneck);
  a = affine_forward(post_hidden_, a, &cache->post_hidden);
  return softmax_ce(heads_[head], a, label, &cache->head).loss;
}

void MultiHeadNet::frame_backward(size_t head, size_t label,
                                  const MultiHeadFrameCache& cache,
                                  double loss_weight,
                                  MultiHeadGrads* grads) const {
  Tensor d = softmax_ce_backward(heads_[head], cache.head, label, loss_weight,
                                 &grads->heads[head]);
  d = affine_backward(post_hidden_, cache.post_hidden, d, &grads->post_hidden);
  d = affine_backward(bottleneck_, cache.bottleneck, d, &grads->bottleneck);
  for (size_t i = hidden_.size(); i-- > 0;) {
    d = affine_backward(hidden_[i], cache.hidden[i], d, &grads->hidden[i]);
  }
}

void MultiHeadNet::replace_heads(const std::string& language, size_t classes,
                                 Rng* rng) {
  spec_.heads = {{language, classes}};
  heads_.clear();
  heads_.push_back(make_head(classes, spec_.post_hidden, rng));
}

void MultiHeadNet::save(const std::string& path) const {
  nlohmann::json j;
  j["input_dim"] = spec_.input_dim;
  j["hidden"] = spec_.hidden;
  j["bottleneck"] = spec_.bottleneck;
  j["post_hidden"] = spec_.post_hidden;
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& [language, classes] : spec_.heads) {
    heads.push_back({{"language", language}, {"classes", classes}});
  }
  j["heads"] = heads;
  auto* self = const_cast<MultiHeadNet*>(this);
  save_tensor_bundle(path, "multihead", j.dump(), self->params());
}

MultiHeadNet MultiHeadNet::load(const std::string& path) {
  LoadedBundle bundle = load_tensor_bundle(path);
  if (bundle.kind != "multihead") {
    throw FormatError("model file '" + path + "' holds kind '" + bundle.kind +
                      "', expected 'multihead'");
  }
  nlohmann::json j = nlohmann::json::parse(bundle.config_json);
  MultiHeadSpec spec;
  spec.input_dim = j.at("input_dim");
  spec.hidden = j.at("hidden").get<std::vector<size_t>>();
  spec.bottleneck = j.at("bottleneck");
  spec.post_hidden = j.at("post_hidden");
  for (const auto& h : j.at("heads")) {
    spec.heads.emplace_back(h.at("language"), h.at("classes"));
  }
  Rng scratch(0);
  MultiHeadNet net(spec, &scratch);
  fill_params_from_bundle(bundle, net.params());
  return net;
}

// ---------------------------------------------------------------------------
// Frame-shuffled minibatch SGD shared by the feed-forward trainers.

namespace {

struct FrameRef {
  uint32_t corpus;
  uint32_t utterance;
  uint32_t frame;
};

std::vector<FrameRef> index_frames(const std::vector<const Corpus*>& corpora) {
  std::vector<FrameRef> frames;
  for (size_t c = 0; c < corpora.size(); ++c) {
    const Corpus& corpus = *corpora[c];
    for (size_t u = 0; u < corpus.utterances.size(); ++u) {
      const Utterance& utt = corpus.utterances[u];
      for (size_t t = 0; t < utt.frames(); ++t) {
        if (utt.state_labels[t] >= 0) {
          frames.push_back({uint32_t(c), uint32_t(u), uint32_t(t)});
        }
      }
    }
  }
  return frames;
}

// One warm epoch at base_lr without momentum, then 10x base with momentum;
// halving on a non-improving dev loss when a dev criterion is available.
struct FrameSchedule {
  double lr;
  double momentum = 0.0;
  double best = std::numeric_limits<double>::infinity();

  explicit FrameSchedule(double base) : lr(base) {}
  void advance(const FrameTrainOptions& options, size_t epoch, bool have_dev,
               double dev_loss) {
    if (epoch == 1) {
      lr = 10.0 * options.base_lr;
      momentum = options.peak_momentum;
    } else if (have_dev && dev_loss >= best - 1e-6) {
      lr *= 0.5;
    }
    if (have_dev) best = std::min(best, dev_loss);
  }
};

void multihead_frame_sgd(MultiHeadNet* net,
                         const std::vector<const Corpus*>& train,
                         const std::vector<size_t>& head_of_corpus,
                         const std::vector<const Corpus*>& dev,
                         const std::vector<size_t>& dev_head_of_corpus,
                         const FrameTrainOptions& options) {
  std::vector<FrameRef> frames = index_frames(train);
  if (frames.empty()) throw DataError("frame training: no usable frames");

  std::vector<ParamRef> params = net->params();
  MultiHeadGrads grads = net->make_grads();
  std::vector<ParamRef> grad_refs = grads.refs();
  Velocity velocity = make_velocity(params);
  FrameSchedule schedule(options.base_lr);
  MultiHeadFrameCache cache;

  for (size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    Rng rng(options.seed ^ (uint64_t(epoch) * 0x9E3779B97F4A7C15ULL));
    rng.shuffle(&frames);
    for (size_t at = 0; at < frames.size(); at += options.minibatch) {
      const size_t n = std::min(options.minibatch, frames.size() - at);
      grads.clear();
      for (size_t k = 0; k < n; ++k) {
        const FrameRef& f = frames[at + k];
        const Utterance& utt = (*train[f.corpus]).utterances[f.utterance];
        const Tensor x = utt.features.row_vector(f.frame);
        const size_t label = size_t(utt.state_labels[f.frame]);
        const size_t head = head_of_corpus[f.corpus];
        net->frame_loss(head, x, label, &cache);
        net->frame_backward(head, label, cache, 1.0 / double(n), &grads);
      }
      sgd_update(params, grad_refs, &velocity, schedule.lr, schedule.momentum);
    }
    double dev_loss = 0.0;
    if (!dev.empty()) {
      double sum = 0.0;
      size_t count = 0;
      for (size_t c = 0; c < dev.size(); ++c) {
        for (const Utterance& utt : dev[c]->utterances) {
          for (size_t t = 0; t < utt.frames(); ++t) {
            if (utt.state_labels[t] < 0) continue;
            MultiHeadFrameCache scratch;
            sum += net->frame_loss(dev_head_of_corpus[c],
                                   utt.features.row_vector(t),
                                   size_t(utt.state_labels[t]), &scratch);
            ++count;
          }
        }
      }
      dev_loss = count > 0 ? sum / double(count) : 0.0;
    }
    schedule.advance(options, epoch, !dev.empty(), dev_loss);
    if (schedule.lr < options.base_lr / 64.0) break;
  }
}

std::vector<const Corpus*> to_pointers(const std::vector<Corpus>& corpora) {
  std::vector<const Corpus*> out;
  out.reserve(corpora.size());
  for (const Corpus& c : corpora) out.push_back(&c);
  return out;
}

}  // namespace

MultiHeadNet train_multilingual(const std::vector<Corpus>& train_corpora,
                                const std::vector<Corpus>& dev_corpora,
                                MultiHeadSpec spec,
                                const FrameTrainOptions& options, Rng* rng) {
  if (train_corpora.empty()) {
    throw DataError("train_multilingual: no corpora given");
  }
  {
    std::set<std::string> tags;
    for (const Corpus& c : train_corpora) {
      if (!tags.insert(c.language).second) {
        throw ConfigError("train_multilingual: duplicate language tag '" +
                          c.language + "'");
      }
    }
  }
  if (spec.input_dim == 0) spec.input_dim = train_corpora.front().feature_dim();
  spec.heads.clear();
  for (const Corpus& c : train_corpora) {
    spec.heads.emplace_back(c.language, c.state_classes);
  }
  MultiHeadNet net(spec, rng);

  std::vector<size_t> head_of_corpus(train_corpora.size());
  for (size_t i = 0; i < train_corpora.size(); ++i) head_of_corpus[i] = i;
  std::vector<size_t> dev_heads;
  for (const Corpus& c : dev_corpora) {
    dev_heads.push_back(net.head_index(c.language));
  }
  multihead_frame_sgd(&net, to_pointers(train_corpora), head_of_corpus,
                      to_pointers(dev_corpora), dev_heads, options);
  return net;
}

double multilingual_dev_loss(const MultiHeadNet& net,
                             const std::vector<Corpus>& corpora) {
  double sum = 0.0;
  size_t count = 0;
  for (const Corpus& corpus : corpora) {
    const size_t head = net.head_index(corpus.language);
    for (const Utterance& utt : corpus.utterances) {
      for (size_t t = 0; t < utt.frames(); ++t) {
        if (utt.state_labels[t] < 0) continue;
        MultiHeadFrameCache cache;
        sum += net.frame_loss(head, utt.features.row_vector(t),
                              size_t(utt.state_labels[t]), &cache);
        ++count;
      }
    }
  }
  return count > 0 ? sum / double(count) : 0.0;
}

Tensor extract_bn(const MultiHeadNet& net, const Utterance& utt) {
  if (utt.frames() == 0) return Tensor();
  Tensor out({utt.frames(), net.bottleneck_dim()});
  for (size_t t = 0; t < utt.frames(); ++t) {
    Tensor bn = net.bottleneck_frame(utt.features.row_vector(t));
    std::copy(bn.data(), bn.data() + bn.length(), out.row(t));
  }
  return out;
}

Corpus extract_bn_corpus(const MultiHeadNet& net, const Corpus& corpus) {
  Corpus out;
  out.language = corpus.language;
  out.state_classes = corpus.state_classes;
  out.phoneme_classes = corpus.phoneme_classes;
  out.utterances.reserve(corpus.utterances.size());
  for (const Utterance& utt : corpus.utterances) {
    Utterance u;
    u.id = utt.id;
    u.language = utt.language;
    u.features = extract_bn(net, utt);
    u.state_labels = utt.state_labels;
    u.phoneme_labels = utt.phoneme_labels;
    out.utterances.push_back(std::move(u));
  }
  return out;
}

void adapt_network(MultiHeadNet* net, const Corpus& target_train,
                   const std::vector<Corpus>& target_dev, AdaptMode mode,
                   const FrameTrainOptions& options, Rng* rng) {
  size_t head;
  if (mode == AdaptMode::kReplaceHead) {
    net->replace_heads(target_train.language, target_train.state_classes, rng);
    head = 0;
  } else {
    head = net->head_index(target_train.language);
    const size_t classes = net->spec().heads[head].second;
    if (classes != target_train.state_classes) {
      throw ConfigError("adapt_network[keep_head]: head for '" +
                        target_train.language + "' has " +
                        std::to_string(classes) + " classes, corpus has " +
                        std::to_string(target_train.state_classes));
    }
  }
  if (options.max_epochs == 0) return;
  std::vector<size_t> dev_heads;
  for (const Corpus& c : target_dev) dev_heads.push_back(net->head_index(c.language));
  multihead_frame_sgd(net, {&target_train}, {head}, to_pointers(target_dev),
                      dev_heads, options);
}

// ---------------------------------------------------------------------------
// SBN cascade.

namespace {

Corpus stack_corpus(const Corpus& corpus, size_t half_window, size_t step) {
  Corpus out;
  out.language = corpus.language;
  out.state_classes = corpus.state_classes;
  out.phoneme_classes = corpus.phoneme_classes;
  out.utterances.reserve(corpus.utterances.size());
  for (const Utterance& utt : corpus.utterances) {
    Utterance u = utt;
    if (u.frames() > 0) {
      u.features = stack_context(u.features, half_window, step);
    }
    out.utterances.push_back(std::move(u));
  }
  return out;
}

}  // namespace

MultiHeadNet train_sbn_stage2(const MultiHeadNet& stage1,
                              const std::vector<Corpus>& train_corpora,
                              const std::vector<Corpus>& dev_corpora,
                              MultiHeadSpec stage2_spec, size_t half_window,
                              size_t step, const FrameTrainOptions& options,
                              Rng* rng) {
  std::vector<Corpus> train2, dev2;
  for (const Corpus& c : train_corpora) {
    train2.push_back(stack_corpus(extract_bn_corpus(stage1, c), half_window,
                                  step));
  }
  for (const Corpus& c : dev_corpora) {
    dev2.push_back(stack_corpus(extract_bn_corpus(stage1, c), half_window,
                                step));
  }
  const size_t taps = 2 * (half_window / step) + 1;
  stage2_spec.input_dim = stage1.bottleneck_dim() * taps;
  return train_multilingual(train2, dev2, stage2_spec, options, rng);
}

Tensor sbn_extract(const SbnPipeline& sbn, const Utterance& utt) {
  Utterance bn1;
  bn1.id = utt.id;
  bn1.language = utt.language;
  bn1.features = extract_bn(sbn.stage1, utt);
  bn1.state_labels = utt.state_labels;
  bn1.phoneme_labels = utt.phoneme_labels;
  if (bn1.frames() == 0) return Tensor();
  bn1.features =
      stack_context(bn1.features, sbn.stack_half_window, sbn.stack_step);
  return extract_bn(sbn.stage2, bn1);
}

// ---------------------------------------------------------------------------
// LID.

LidModel::LidModel(const LidSpec& spec, std::vector<std::string> languages,
                   Rng* rng)
    : spec_(spec), languages_(std::move(languages)) {
  if (languages_.size() < 1) {
    throw ParameterError("LidModel: at least one language required");
  }
  hidden_ = make_affine(spec_.hidden, spec_.input_dim, Activation::kSigmoid,
                        rng);
  // A two-class floor keeps the head well-formed even for one language.
  head_ = make_head(std::max<size_t>(2, languages_.size()), spec_.hidden, rng);
}

std::vector<ParamRef> LidModel::params() {
  std::vector<ParamRef> out;
  collect_params(&hidden_, "hidden", &out);
  collect_params(&head_, "head", &out);
  return out;
}

Tensor LidModel::frame_posterior(const Tensor& x) const {
  return head_forward(head_, affine_forward(hidden_, x));
}

void LidModel::save(const std::string& path) const {
  nlohmann::json j;
  j["input_dim"] = spec_.input_dim;
  j["hidden"] = spec_.hidden;
  j["languages"] = languages_;
  auto* self = const_cast<LidModel*>(this);
  save_tensor_bundle(path, "lid", j.dump(), self->params());
}

LidModel LidModel::load(const std::string& path) {
  LoadedBundle bundle = load_tensor_bundle(path);
  if (bundle.kind != "lid") {
    throw FormatError("model file '" + path + "' holds kind '" + bundle.kind +
                      "', expected 'lid'");
  }
  nlohmann::json j = nlohmann::json::parse(bundle.config_json);
  LidSpec spec;
  spec.input_dim = j.at("input_dim");
  spec.hidden = j.at("hidden");
  Rng scratch(0);
  LidModel lid(spec, j.at("languages").get<std::vector<std::string>>(),
               &scratch);
  fill_params_from_bundle(bundle, lid.params());
  return lid;
}

LidModel train_lid(const std::vector<Corpus>& sources, const LidSpec& spec,
                   const FrameTrainOptions& options, Rng* rng) {
  if (sources.empty()) throw DataError("train_lid: no source corpora");
  std::vector<std::string> languages;
  for (const Corpus& c : sources) languages.push_back(c.language);
  std::sort(languages.begin(), languages.end());
  languages.erase(std::unique(languages.begin(), languages.end()),
                  languages.end());

  LidSpec filled = spec;
  if (filled.input_dim == 0) filled.input_dim = sources.front().feature_dim();
  LidModel lid(filled, languages, rng);

  // Language index per corpus.
  std::vector<size_t> label_of_corpus;
  for (const Corpus& c : sources) {
    label_of_corpus.push_back(size_t(
        std::lower_bound(languages.begin(), languages.end(), c.language) -
        languages.begin()));
  }

  std::vector<const Corpus*> ptrs = to_pointers(sources);
  std::vector<FrameRef> frames = index_frames(ptrs);
  if (frames.empty()) throw DataError("train_lid: no usable frames");

  std::vector<ParamRef> params = lid.params();
  AffineGrad hidden_grad = make_grad(lid.hidden_layer());
  HeadGrad head_grad = make_grad(lid.head());
  std::vector<ParamRef> grad_refs;
  collect_grads(&hidden_grad, "hidden", &grad_refs);
  collect_grads(&head_grad, "head", &grad_refs);
  Velocity velocity = make_velocity(params);
  FrameSchedule schedule(options.base_lr);

  for (size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    Rng epoch_rng(options.seed ^ (uint64_t(epoch) * 0x9E3779B97F4A7C15ULL));
    epoch_rng.shuffle(&frames);
    for (size_t at = 0; at < frames.size(); at += options.minibatch) {
      const size_t n = std::min(options.minibatch, frames.size() - at);
      for (ParamRef& r : grad_refs) r.tensor->fill(0.0);
      for (size_t k = 0; k < n; ++k) {
        const FrameRef& f = frames[at + k];
        const Utterance& utt = ptrs[f.corpus]->utterances[f.utterance];
        const Tensor x = utt.features.row_vector(f.frame);
        AffineCache hidden_cache;
        HeadCache head_cache;
        Tensor a = affine_forward(lid.hidden_layer(), x, &hidden_cache);
        softmax_ce(lid.head(), a, label_of_corpus[f.corpus], &head_cache);
        Tensor d = softmax_ce_backward(lid.head(), head_cache,
                                       label_of_corpus[f.corpus],
                                       1.0 / double(n), &head_grad);
        affine_backward(lid.hidden_layer(), hidden_cache, d, &hidden_grad);
      }
      sgd_update(params, grad_refs, &velocity, schedule.lr, schedule.momentum);
    }
    schedule.advance(options, epoch, false, 0.0);
  }
  return lid;
}

Tensor mean_language_posterior(const LidModel& lid, const Corpus& corpus) {
  Tensor sum({std::max<size_t>(2, lid.languages().size())});
  size_t frames = 0;
  for (const Utterance& utt : corpus.utterances) {
    for (size_t t = 0; t < utt.frames(); ++t) {
      add_inplace(&sum, lid.frame_posterior(utt.features.row_vector(t)));
      ++frames;
    }
  }
  if (frames == 0) {
    throw DataError("mean_language_posterior: corpus has no frames");
  }
  scale_inplace(&sum, 1.0 / double(frames));
  return sum;
}

std::string select_closest_language(const LidModel& lid,
                                    const Corpus& corpus) {
  const Tensor mean = mean_language_posterior(lid, corpus);
  // argmax is first-on-ties and the language list is sorted, so ties break
  // toward the lexicographically smallest tag.
  size_t best = 0;
  for (size_t i = 1; i < lid.languages().size(); ++i) {
    if (mean[i] > mean[best]) best = i;
  }
  return lid.languages()[best];
}

// ---------------------------------------------------------------------------
// Closest-language pipeline.

std::string ProvenanceRecord::to_json() const {
  nlohmann::json j;
  nlohmann::json step_list = nlohmann::json::array();
  for (const ProvenanceStep& s : steps) {
    step_list.push_back({{"name", s.name}, {"detail", s.detail}});
  }
  j["steps"] = step_list;
  j["donor_hash"] = donor_hash;
  j["seed"] = seed;
  j["schedule_summary"] = schedule_summary;
  return j.dump(2);
}

void ProvenanceRecord::write(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << to_json() << "\n";
}

ClosestLanguageResult closest_language_pipeline(
    const MultiHeadNet& stage1, const LidModel& lid,
    const std::vector<Corpus>& source_train,
    const std::vector<Corpus>& source_dev, const Corpus& target_train,
    const Corpus& target_dev, const HybridPipelineOptions& options, Rng* rng) {
  if (target_train.utterances.empty()) {
    throw DataError("closest_language_pipeline: target corpus is empty");
  }
  std::filesystem::create_directories(options.work_dir);

  ClosestLanguageResult result;
  result.provenance.seed = options.seed;

  // Step 1: adapt the first-stage net to the target language.
  Corpus target1_train = stack_corpus(target_train, options.input_half_window,
                                      options.input_step);
  Corpus target1_dev = stack_corpus(target_dev, options.input_half_window,
                                    options.input_step);
  result.adapted_stage1 = stage1;
  adapt_network(&result.adapted_stage1, target1_train, {target1_dev},
                AdaptMode::kReplaceHead, options.stage1_adapt, rng);
  result.provenance.steps.push_back(
      {"adapt_stage1_to_target",
       "target=" + target_train.language + " mode=replace_head epochs=" +
           std::to_string(options.stage1_adapt.max_epochs)});

  // Step 2: pick the closest source language via LID.
  result.closest_language = select_closest_language(lid, target1_train);
  {
    const Tensor mean = mean_language_posterior(lid, target1_train);
    std::ostringstream detail;
    detail << "closest=" << result.closest_language << " scores=[";
    for (size_t i = 0; i < lid.languages().size(); ++i) {
      if (i) detail << " ";
      detail << lid.languages()[i] << ":" << mean[i];
    }
    detail << "]";
    result.provenance.steps.push_back(
        {"select_closest_language", detail.str()});
  }

  // Step 3: train the hybrid from random initialization on the closest
  // language, on BN features from the adapted stage-1.
  const Corpus* closest_train = nullptr;
  const Corpus* closest_dev = nullptr;
  for (const Corpus& c : source_train) {
    if (c.language == result.closest_language) closest_train = &c;
  }
  for (const Corpus& c : source_dev) {
    if (c.language == result.closest_language) closest_dev = &c;
  }
  if (closest_train == nullptr || closest_dev == nullptr) {
    throw DataError("closest_language_pipeline: no corpus for closest "
                    "language '" + result.closest_language + "'");
  }

  auto prepare_hybrid = [&](const Corpus& raw) {
    Corpus stacked1 = stack_corpus(raw, options.input_half_window,
                                   options.input_step);
    Corpus bn = extract_bn_corpus(result.adapted_stage1, stacked1);
    normalize_corpus(&bn);
    PipelineOptions hp = pipeline_for_variant(options.hybrid_template.variant);
    hp.trim_sil = false;  // the raw corpora are already trimmed upstream
    hp.half_window = options.bn_half_window;
    hp.step = options.bn_step;
    return prepare_corpus(bn, hp);
  };

  Corpus donor_train = prepare_hybrid(*closest_train);
  Corpus donor_dev = prepare_hybrid(*closest_dev);

  PacRnnConfig config = options.hybrid_template;
  config.feature_dim = donor_train.feature_dim();
  config.state_classes = donor_train.state_classes;
  config.phoneme_classes = donor_train.phoneme_classes;
  result.model = PacRnnModel(config, rng);
  train_model(&result.model, donor_train, donor_dev, options.donor_train);

  const std::string donor_path =
      (std::filesystem::path(options.work_dir) / "donor.pacmodel").string();
  result.model.save(donor_path);
  result.provenance.donor_hash = hash_string(file_hash(donor_path));
  result.provenance.steps.push_back(
      {"train_hybrid_on_closest",
       "variant=" + variant_name(config.variant) + " language=" +
           result.closest_language + " donor_hash=" +
           result.provenance.donor_hash});

  // Step 4: final adaptation to the target with head replacement.
  Corpus final_train = prepare_hybrid(target_train);
  Corpus final_dev = prepare_hybrid(target_dev);
  result.model.replace_heads(final_train.state_classes,
                             final_train.phoneme_classes, rng);
  train_model(&result.model, final_train, final_dev, options.adapt_train);
  result.provenance.steps.push_back(
      {"final_adapt_to_target",
       "target=" + target_train.language + " mode=replace_head"});

  {
    std::ostringstream summary;
    summary << "donor: lr_base="
            << make_schedule(config.variant, options.donor_train.max_epochs)
                   .base_lr
            << " max_epochs=" << options.donor_train.max_epochs
            << "; adapt: max_epochs=" << options.adapt_train.max_epochs;
    result.provenance.schedule_summary = summary.str();
  }
  return result;
}

}  // namespace pacrnn
