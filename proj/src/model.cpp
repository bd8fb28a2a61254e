#include "asvkit/model.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

#include "asvkit/error.hpp"
#include "asvkit/nn/checkpoint.hpp"
#include "asvkit/nn/ops.hpp"

namespace asv {

using nn::Tensor;

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) {
    fail(Errc::InvalidArgument, "model config: " + what);
  };
  if (features.empty()) bad("feature set is empty");
  if (frames == 0) bad("frames must be positive");
  if (aff1_hidden1 == 0 || aff1_hidden2 == 0 || context_hidden == 0 ||
      fusion_hidden == 0 || dense_hidden == 0) {
    bad("layer sizes must be positive");
  }
  if (cnn_channels.empty() || cnn_blocks_per_stage == 0) {
    bad("cnn needs at least one stage with one block");
  }
  if (std::find(cnn_channels.begin(), cnn_channels.end(), 0u) != cnn_channels.end()) {
    bad("cnn channel counts must be positive");
  }
  if (image_size < 8) bad("image_size must be at least 8");
  if (n_classes != 2 && n_classes != 5 && n_classes != 7) {
    bad("n_classes must be 2, 5 or 7");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must be in [0, 1)");
}

std::size_t ModelConfig::lasv_size() const { return 2 * context_hidden; }

std::size_t ModelConfig::utterance_vector_size() const {
  return bidirectional ? 2 * aff1_hidden2 : aff1_hidden2;
}

ModelConfig ModelConfig::from(const KeyValues& kv) {
  ModelConfig c;
  c.features = dsp::FeatureSet::parse(kv.get("features", c.features.to_string()));
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get(key, static_cast<long long>(fallback));
    if (v < 0) fail(Errc::InvalidArgument, std::string("config key ") + key + " < 0");
    return static_cast<std::size_t>(v);
  };
  c.frames = size("frames", c.frames);
  c.aff1_hidden1 = size("aff1_hidden1", c.aff1_hidden1);
  c.aff1_hidden2 = size("aff1_hidden2", c.aff1_hidden2);
  c.context_hidden = size("context_hidden", c.context_hidden);
  c.fusion_hidden = size("fusion_hidden", c.fusion_hidden);
  c.dense_hidden = size("dense_hidden", c.dense_hidden);
  c.cnn_channels = kv.get_list("cnn_channels", c.cnn_channels);
  c.cnn_blocks_per_stage = size("cnn_blocks_per_stage", c.cnn_blocks_per_stage);
  c.image_size = size("image_size", c.image_size);
  c.n_classes = size("classes", c.n_classes);
  c.dropout = kv.get("dropout", c.dropout);
  c.bidirectional = kv.get("bidirectional", c.bidirectional);
  c.validate();
  return c;
}

void ModelConfig::write_to(KeyValues& kv) const {
  kv.set("features", features.to_string());
  kv.set("frames", std::to_string(frames));
  kv.set("aff1_hidden1", std::to_string(aff1_hidden1));
  kv.set("aff1_hidden2", std::to_string(aff1_hidden2));
  kv.set("context_hidden", std::to_string(context_hidden));
  kv.set("fusion_hidden", std::to_string(fusion_hidden));
  kv.set("dense_hidden", std::to_string(dense_hidden));
  std::string channels;
  for (auto ch : cnn_channels) {
    if (!channels.empty()) channels += ',';
    channels += std::to_string(ch);
  }
  kv.set("cnn_channels", channels);
  kv.set("cnn_blocks_per_stage", std::to_string(cnn_blocks_per_stage));
  kv.set("image_size", std::to_string(image_size));
  kv.set("classes", std::to_string(n_classes));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", dropout);
  kv.set("dropout", buf);
  kv.set("bidirectional", bidirectional ? "true" : "false");
}

std::string ModelConfig::to_text() const {
  KeyValues kv;
  write_to(kv);
  return kv.to_text();
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.aff1_hidden1 = 4;
  c.aff1_hidden2 = 2;
  c.context_hidden = 2;
  c.fusion_hidden = 2;
  c.dense_hidden = 8;
  c.cnn_channels = {2, 4};
  c.cnn_blocks_per_stage = 1;
  c.image_size = 32;
  return c;
}

// ---------------------------------------------------------------------------
// RecurrentLayer

RecurrentLayer RecurrentLayer::init(std::size_t input, std::size_t hidden,
                                    bool bidirectional, Rng& rng) {
  RecurrentLayer layer;
  layer.forward = nn::LstmCellParams::init(input, hidden, rng);
  if (bidirectional) layer.backward = nn::LstmCellParams::init(input, hidden, rng);
  return layer;
}

std::size_t RecurrentLayer::output_size() const {
  return backward ? 2 * forward.hidden() : forward.hidden();
}

Tensor RecurrentLayer::operator()(const Tensor& seq) const {
  if (backward) return nn::bilstm_forward(forward, *backward, seq);
  return nn::lstm_sequence(forward, seq);
}

Tensor RecurrentLayer::summary(const Tensor& outputs) const {
  const std::size_t steps = outputs.dim(0);
  const std::size_t h = forward.hidden();
  const Tensor last = nn::row(outputs, steps - 1);
  if (!backward) return last;
  return nn::concat({nn::slice(last, 0, h), nn::slice(nn::row(outputs, 0), h, h)});
}

void RecurrentLayer::collect(std::vector<nn::NamedTensor>& out,
                             const std::string& prefix) const {
  forward.collect(out, prefix + ".fwd");
  if (backward) backward->collect(out, prefix + ".bwd");
}

// ---------------------------------------------------------------------------
// Model

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), dropout_rng_(seed ^ 0x9E3779B97F4A7C15ull) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  const std::size_t width = c.features.width();

  aff1_first_ = RecurrentLayer::init(width, c.aff1_hidden1, c.bidirectional, rng);
  aff1_second_ = RecurrentLayer::init(aff1_first_.output_size(), c.aff1_hidden2,
                                      c.bidirectional, rng);
  aff2_context_ = RecurrentLayer::init(c.utterance_vector_size(), c.context_hidden,
                                       c.bidirectional, rng);
  aff2_attention_ =
      nn::AttentionParams::init(c.utterance_vector_size(), c.utterance_vector_size(), rng,
                                c.lasv_size(), aff2_context_.output_size());
  lasv_head_ = nn::Dense::init(c.lasv_size(), c.n_classes, rng);

  stem_ = nn::Conv2d::init(1, c.cnn_channels.front(), 7, 2, rng);
  std::size_t in = c.cnn_channels.front();
  for (std::size_t s = 0; s < c.cnn_channels.size(); ++s) {
    for (std::size_t b = 0; b < c.cnn_blocks_per_stage; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      blocks_.push_back(nn::ResidualBlock::init(in, c.cnn_channels[s], stride, rng));
      in = c.cnn_channels[s];
    }
  }
  casv_context_ = nn::BiLstm::init(c.cnn_channels.back(), c.context_hidden, rng);
  casv_attention_ = nn::AttentionParams::init(c.cnn_channels.back(), c.cnn_channels.back(),
                                              rng, c.casv_size(),
                                              casv_context_.output_size());
  casv_head_ = nn::Dense::init(c.casv_size(), c.n_classes, rng);

  fusion_context_ = nn::BiLstm::init(c.lasv_size(), c.fusion_hidden, rng);
  fusion_attention_ = nn::AttentionParams::init(c.lasv_size(), c.lasv_size(), rng,
                                                2 * c.fusion_hidden,
                                                fusion_context_.output_size());
  asv_dense_ = nn::Dense::init(2 * c.fusion_hidden, c.dense_hidden, rng);
  classifier_ = nn::Dense::init(c.dense_hidden, c.n_classes, rng);
}

LasvOutput Model::lasv_forward(const std::array<Tensor, kWindowSize>& features,
                               bool training) {
  const std::size_t width = config_.features.width();
  LasvOutput out;
  for (std::size_t u = 0; u < kWindowSize; ++u) {
    const Tensor& x = features[u];
    if (!x.defined() || x.rank() != 2 || x.dim(1) != width || x.dim(0) == 0) {
      fail(Errc::ShapeMismatch,
           "dimension mismatch: utterance features must be [T x " +
               std::to_string(width) + "]");
    }
    const Tensor first = aff1_first_(x);
    const Tensor second = aff1_second_(first);
    out.utterance_vectors[u] = aff1_second_.summary(second);
  }
  const Tensor seq = nn::stack_rows({out.utterance_vectors.begin(),
                                     out.utterance_vectors.end()});
  // Attention runs over the utterance vectors; the context state of the
  // center utterance is the query.
  const Tensor context = aff2_context_(seq);
  const Tensor center = nn::row(context, kWindowSize / 2);
  auto attended = nn::attention_forward(aff2_attention_, nn::transpose(seq), center);
  out.alpha = attended.alpha;
  out.lasv = nn::dropout(attended.h_star, config_.dropout, training, dropout_rng_);
  return out;
}

Tensor Model::cnn_embedding(const Tensor& image) const {
  const std::size_t s = config_.image_size;
  if (!image.defined() || image.shape() != nn::Shape{1, s, s}) {
    fail(Errc::ShapeMismatch, "dimension mismatch: image must be [1 x " +
                                  std::to_string(s) + " x " + std::to_string(s) + "]");
  }
  Tensor x = nn::maxpool2d(nn::relu(stem_(image)), 2, 2);
  for (const auto& block : blocks_) x = block(x);
  return nn::global_avg_pool(x);
}

CasvOutput Model::casv_forward(const std::array<Tensor, kWindowSize>& images,
                               bool /*training*/) {
  CasvOutput out;
  for (std::size_t u = 0; u < kWindowSize; ++u) {
    out.embeddings[u] = cnn_embedding(images[u]);
  }
  const Tensor seq = nn::stack_rows({out.embeddings.begin(), out.embeddings.end()});
  const Tensor context = nn::bilstm_forward(casv_context_, seq);
  const Tensor center = nn::row(context, kWindowSize / 2);
  auto attended = nn::attention_forward(casv_attention_, nn::transpose(seq), center);
  out.casv = attended.h_star;
  out.alpha = attended.alpha;
  return out;
}

FusionOutput Model::fuse_forward(const Tensor& lasv, const Tensor& casv,
                                 bool training) {
  const std::size_t d = config_.lasv_size();
  if (!lasv.defined() || !casv.defined() || lasv.rank() != 1 || casv.rank() != 1 ||
      lasv.size() != d || casv.size() != d) {
    fail(Errc::ShapeMismatch, "dimension mismatch: fusion expects LASV and CASV of length " +
                                  std::to_string(d));
  }
  const Tensor seq = nn::stack_rows({lasv, casv});
  const Tensor context = nn::bilstm_forward(fusion_context_, seq);
  auto attended =
      nn::attention_forward(fusion_attention_, nn::transpose(seq), nn::row(context, 0));
  FusionOutput out;
  out.alpha = attended.alpha;
  out.asv = nn::tanh(asv_dense_(attended.h_star));
  out.logits = classifier_(nn::dropout(out.asv, config_.dropout, training, dropout_rng_));
  out.probabilities = nn::softmax(out.logits);
  return out;
}

Tensor Model::logits(const WindowInput& input, Head head, bool training) {
  switch (head) {
    case Head::LstmBranch:
      return lasv_head_(lasv_forward(input.features, training).lasv);
    case Head::CnnBranch:
      return casv_head_(casv_forward(input.images, training).casv);
    case Head::Fused: {
      auto lasv = lasv_forward(input.features, training);
      auto casv = casv_forward(input.images, training);
      return fuse_forward(lasv.lasv, casv.casv, training).logits;
    }
  }
  return {};
}

void Model::collect_lstm_branch(std::vector<nn::NamedTensor>& out) const {
  aff1_first_.collect(out, "lstm.aff1_first");
  aff1_second_.collect(out, "lstm.aff1_second");
  aff2_context_.collect(out, "lstm.aff2_context");
  aff2_attention_.collect(out, "lstm.aff2_attention");
}

void Model::collect_cnn_branch(std::vector<nn::NamedTensor>& out) const {
  stem_.collect(out, "cnn.stem");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(out, "cnn.block" + std::to_string(i));
  }
  casv_context_.collect(out, "cnn.context");
  casv_attention_.collect(out, "cnn.attention");
}

std::vector<nn::NamedTensor> Model::parameters(Head head) const {
  std::vector<nn::NamedTensor> out;
  switch (head) {
    case Head::LstmBranch:
      collect_lstm_branch(out);
      lasv_head_.collect(out, "lstm.head");
      break;
    case Head::CnnBranch:
      collect_cnn_branch(out);
      casv_head_.collect(out, "cnn.head");
      break;
    case Head::Fused:
      collect_lstm_branch(out);
      collect_cnn_branch(out);
      fusion_context_.collect(out, "fusion.context");
      fusion_attention_.collect(out, "fusion.attention");
      asv_dense_.collect(out, "fusion.asv_dense");
      classifier_.collect(out, "fusion.classifier");
      break;
  }
  return out;
}

std::vector<nn::NamedTensor> Model::parameters() const {
  auto out = parameters(Head::Fused);
  lasv_head_.collect(out, "lstm.head");
  casv_head_.collect(out, "cnn.head");
  return out;
}

void save_model(const std::string& path, const Model& model,
                const nn::OptimizerState* optimizer) {
  nn::save_checkpoint(path, model.config().to_text(), model.parameters(), optimizer);
}

void load_model(const std::string& path, Model& model) {
  auto ckpt = nn::load_checkpoint(path);
  auto params = model.parameters();
  nn::restore_params(ckpt, params);
}

ModelConfig checkpoint_config(const std::string& path) {
  return ModelConfig::from(KeyValues::parse(nn::load_checkpoint(path).metadata));
}

Tensor to_tensor(const Matrix& m) {
  return Tensor::from({m.rows(), m.cols()}, m.data());
}

Tensor image_tensor(const Matrix& pixels) {
  return Tensor::from({1, pixels.rows(), pixels.cols()}, pixels.data());
}

// ---------------------------------------------------------------------------
// FeatureStore

AudioClip load_clip(const UtteranceRecord& record) {
  auto clip = load_wav(record.audio_path);
  clip.utterance_id = record.utterance_id;
  if (clip.sample_rate != kCanonicalSampleRate) {
    clip = resample(clip, kCanonicalSampleRate);
  }
  return clip;
}

FeatureStore::FeatureStore(std::size_t frames, std::size_t image_size,
                           ClipLoader loader)
    : frames_(frames), image_size_(image_size), loader_(std::move(loader)) {}

UtteranceFeatures FeatureStore::compute(const UtteranceRecord& record) const {
  const AudioClip clip = loader_(record);
  dsp::FeatureOptions options;
  options.n_frames = frames_;
  options.standardize = false;
  UtteranceFeatures f;
  f.raw_all = dsp::extract_features(clip, dsp::FeatureSet::all(), options);
  f.image = dsp::render_spectrogram_image(clip, image_size_).pixels;
  return f;
}

void FeatureStore::precompute(const Manifest& manifest, unsigned jobs) {
  std::vector<const UtteranceRecord*> todo;
  {
    std::lock_guard lock(mutex_);
    for (const auto& r : manifest.records) {
      if (!cache_.count(r.utterance_id)) todo.push_back(&r);
    }
  }
  std::vector<std::shared_ptr<const UtteranceFeatures>> results(todo.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < todo.size();) {
      try {
        results[i] = std::make_shared<const UtteranceFeatures>(compute(*todo[i]));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  jobs = std::max(1u, jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < todo.size(); ++i) {
    cache_[todo[i]->utterance_id] = std::move(results[i]);
  }
}

const UtteranceFeatures& FeatureStore::get(const UtteranceRecord& record) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(record.utterance_id); it != cache_.end()) {
      return *it->second;
    }
  }
  auto computed = std::make_shared<const UtteranceFeatures>(compute(record));
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.emplace(record.utterance_id, std::move(computed));
  return *it->second;
}

WindowInput FeatureStore::window_input(const Manifest& manifest,
                                       const std::string& utterance_id,
                                       dsp::FeatureSet kinds, bool with_images) {
  const auto window = context_window_for(manifest, utterance_id);
  WindowInput input;
  for (std::size_t u = 0; u < kWindowSize; ++u) {
    const auto& f = get(manifest.at(window[u]));
    input.features[u] = to_tensor(dsp::select_features(f.raw_all, kinds).values);
    if (with_images) input.images[u] = image_tensor(f.image);
  }
  return input;
}

// ---------------------------------------------------------------------------
// Inference

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Prediction predict(Model& model, FeatureStore& store, const Manifest& manifest,
                   const std::string& utterance_id) {
  if (store.image_size() != model.config().image_size) {
    fail(Errc::ShapeMismatch, "dimension mismatch: feature store image size differs from model");
  }
  const auto input =
      store.window_input(manifest, utterance_id, model.config().features);
  nn::NoGradGuard no_grad;
  auto lasv = model.lasv_forward(input.features, false);
  auto casv = model.casv_forward(input.images, false);
  auto fused = model.fuse_forward(lasv.lasv, casv.casv, false);
  Prediction p;
  p.probabilities.assign(fused.probabilities.data().begin(),
                         fused.probabilities.data().end());
  p.asv.assign(fused.asv.data().begin(), fused.asv.data().end());
  p.label = argmax(p.probabilities);
  return p;
}

std::vector<AsvRecord> compute_asvs(Model& model, FeatureStore& store,
                                    const Manifest& manifest) {
  std::vector<AsvRecord> records;
  records.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    auto p = predict(model, store, manifest, r.utterance_id);
    records.push_back({r.utterance_id, std::move(p.asv)});
  }
  return records;
}

void export_asv(Model& model, FeatureStore& store, const Manifest& manifest,
                const std::string& out_path) {
  write_asv_records(out_path, compute_asvs(model, store, manifest));
}

nn::GradCheckReport model_gradient_check(const ModelConfig& config,
                                         std::uint64_t seed,
                                         std::size_t per_tensor) {
  ModelConfig c = config;
  c.dropout = 0.0;
  Model model(c, seed);
  Rng rng(seed + 1);
  WindowInput input;
  for (std::size_t u = 0; u < kWindowSize; ++u) {
    std::vector<double> f(c.frames * c.features.width());
    for (double& v : f) v = rng.uniform(-1.0, 1.0);
    input.features[u] = Tensor::from({c.frames, c.features.width()}, std::move(f));
    std::vector<double> px(c.image_size * c.image_size);
    for (double& v : px) v = rng.uniform();
    input.images[u] = Tensor::from({1, c.image_size, c.image_size}, std::move(px));
  }
  // Zero-initialized biases put dead (all-zero) patches exactly on a ReLU
  // kink, where central differences are one-sided; move every parameter off
  // its initial value.
  for (auto& p : model.parameters()) {
    for (double& v : p.tensor.mutable_data()) v += rng.uniform(-0.1, 0.1);
  }
  const std::size_t target = 1;
  auto report = nn::gradient_check(
      [&] { return nn::cross_entropy(model.logits(input, Head::Fused, false), target); },
      model.parameters(Head::Fused), 1e-5, per_tensor);
  report.label = "two_branch_model";
  return report;
}

}  // namespace asv
