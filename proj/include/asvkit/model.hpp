#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asvkit/audio_io.hpp"
#include "asvkit/config.hpp"
#include "asvkit/dsp.hpp"
#include "asvkit/feature_file.hpp"
#include "asvkit/nn/gradcheck.hpp"
#include "asvkit/nn/layers.hpp"
#include "asvkit/nn/optim.hpp"
#include "asvkit/nn/tensor.hpp"
#include "asvkit/rng.hpp"

namespace asv {

inline constexpr std::size_t kWindowSize = 3;

struct ModelConfig {
  dsp::FeatureSet features = dsp::FeatureSet::best_four();
  std::size_t frames = dsp::kFeatureFrames;
  std::size_t aff1_hidden1 = 128;  // first within-utterance BiLSTM
  std::size_t aff1_hidden2 = 32;   // second within-utterance BiLSTM
  std::size_t context_hidden = 32;  // across-utterance BiLSTMs of both branches
  std::size_t fusion_hidden = 32;
  std::size_t dense_hidden = 200;   // ASV width
  std::vector<std::size_t> cnn_channels = {8, 16};  // one entry per stage
  std::size_t cnn_blocks_per_stage = 2;
  std::size_t image_size = dsp::kImageSize;
  std::size_t n_classes = 2;
  double dropout = 0.5;
  bool bidirectional = true;  // false: unidirectional LSTMs in the utterance branch

  /// Throws InvalidArgument for an inconsistent configuration.
  void validate() const;
  std::size_t lasv_size() const;
  std::size_t casv_size() const { return 2 * context_hidden; }
  std::size_t utterance_vector_size() const;

  static ModelConfig from(const KeyValues& kv);
  void write_to(KeyValues& kv) const;
  std::string to_text() const;

  /// Hidden sizes 4/2, 32x32 images, two residual blocks.
  static ModelConfig miniature();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class SentimentKind { Lasv, Casv, Asv };

struct SentimentVector {
  SentimentKind kind = SentimentKind::Asv;
  std::vector<double> values;
  std::string utterance_id;
};

/// Network inputs for one context window: three [frames x width] feature
/// matrices and three [1 x S x S] images.
struct WindowInput {
  std::array<nn::Tensor, kWindowSize> features;
  std::array<nn::Tensor, kWindowSize> images;
};

struct LasvOutput {
  nn::Tensor lasv;
  nn::Tensor alpha;
  std::array<nn::Tensor, kWindowSize> utterance_vectors;
};

struct CasvOutput {
  nn::Tensor casv;
  nn::Tensor alpha;
  std::array<nn::Tensor, kWindowSize> embeddings;
};

struct FusionOutput {
  nn::Tensor asv;
  nn::Tensor alpha;
  nn::Tensor logits;
  nn::Tensor probabilities;
};

/// Which head produces the logits. The branch heads are used for per-branch
/// pre-training and for the utterance-branch-only feature sweep.
enum class Head { Fused, LstmBranch, CnnBranch };

/// A recurrent layer that is either a BiLSTM or a forward-only LSTM.
struct RecurrentLayer {
  nn::LstmCellParams forward;
  std::optional<nn::LstmCellParams> backward;

  static RecurrentLayer init(std::size_t input, std::size_t hidden,
                             bool bidirectional, Rng& rng);
  std::size_t output_size() const;
  /// [T x input] -> [T x output_size()].
  nn::Tensor operator()(const nn::Tensor& seq) const;
  /// Final states: forward at t = T-1, backward (if any) at t = 0.
  nn::Tensor summary(const nn::Tensor& outputs) const;
  void collect(std::vector<nn::NamedTensor>& out, const std::string& prefix) const;
};

/// Two-branch model: the utterance branch (two within-utterance recurrent
/// layers, an across-utterance recurrent layer and attention) produces the
/// LASV, the spectrogram CNN branch produces the CASV, and the fusion head
/// runs a BiLSTM with attention over (LASV, CASV), a dense ASV layer and
/// the classifier. Each attention site attends over the members of its
/// sequence (utterance vectors, CNN embeddings, or LASV and CASV) and takes
/// the recurrent state at the anchor position (center utterance, or LASV) as
/// its query h_x.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  LasvOutput lasv_forward(const std::array<nn::Tensor, kWindowSize>& features,
                          bool training);
  CasvOutput casv_forward(const std::array<nn::Tensor, kWindowSize>& images,
                          bool training);
  FusionOutput fuse_forward(const nn::Tensor& lasv, const nn::Tensor& casv,
                            bool training);
  /// Per-utterance CNN embedding for one [1 x S x S] image.
  nn::Tensor cnn_embedding(const nn::Tensor& image) const;

  /// Logits for the requested head. Branch heads skip the other branch.
  nn::Tensor logits(const WindowInput& input, Head head, bool training);

  std::vector<nn::NamedTensor> parameters() const;
  /// Parameters that influence the given head.
  std::vector<nn::NamedTensor> parameters(Head head) const;

  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

 private:
  void collect_lstm_branch(std::vector<nn::NamedTensor>& out) const;
  void collect_cnn_branch(std::vector<nn::NamedTensor>& out) const;

  ModelConfig config_;
  Rng dropout_rng_;

  RecurrentLayer aff1_first_;
  RecurrentLayer aff1_second_;
  RecurrentLayer aff2_context_;
  nn::AttentionParams aff2_attention_;
  nn::Dense lasv_head_;

  nn::Conv2d stem_;
  std::vector<nn::ResidualBlock> blocks_;
  nn::BiLstm casv_context_;
  nn::AttentionParams casv_attention_;
  nn::Dense casv_head_;

  nn::BiLstm fusion_context_;
  nn::AttentionParams fusion_attention_;
  nn::Dense asv_dense_;
  nn::Dense classifier_;
};

/// Saves parameters plus the config text as checkpoint metadata.
void save_model(const std::string& path, const Model& model,
                const nn::OptimizerState* optimizer = nullptr);
/// Loads parameters into `model`; mismatched names or shapes throw
/// ShapeMismatch with a "dimension mismatch" message.
void load_model(const std::string& path, Model& model);
/// Reads the config stored in a checkpoint.
ModelConfig checkpoint_config(const std::string& path);

nn::Tensor to_tensor(const Matrix& m);
/// [S x S] pixels -> [1 x S x S].
nn::Tensor image_tensor(const Matrix& pixels);

// ---------------------------------------------------------------------------
// Per-utterance inputs

/// Acoustic inputs computed once per utterance.
struct UtteranceFeatures {
  dsp::FeatureMatrix raw_all;  // all kinds, unstandardized, fixed frame count
  Matrix image;                // [S x S] at the store's image size
};

using ClipLoader = std::function<AudioClip(const UtteranceRecord&)>;

/// Reads the WAV and resamples it to the canonical rate.
AudioClip load_clip(const UtteranceRecord& record);

/// Computes and memoizes per-utterance features and images. `precompute`
/// fills the cache for a manifest, optionally with worker threads; lookups
/// of precomputed ids are safe from several threads.
class FeatureStore {
 public:
  FeatureStore(std::size_t frames, std::size_t image_size,
               ClipLoader loader = load_clip);

  void precompute(const Manifest& manifest, unsigned jobs = 1);
  const UtteranceFeatures& get(const UtteranceRecord& record);

  /// Network input for the window centered on `utterance_id`.
  WindowInput window_input(const Manifest& manifest,
                           const std::string& utterance_id,
                           dsp::FeatureSet kinds, bool with_images = true);

  std::size_t image_size() const { return image_size_; }

 private:
  UtteranceFeatures compute(const UtteranceRecord& record) const;

  std::size_t frames_;
  std::size_t image_size_;
  ClipLoader loader_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const UtteranceFeatures>> cache_;
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
  std::vector<double> asv;
};

/// Runs both branches and the fusion head in evaluation mode on the window
/// centered on `utterance_id`. Ties in the argmax resolve to the lower
/// class index.
Prediction predict(Model& model, FeatureStore& store, const Manifest& manifest,
                   const std::string& utterance_id);

std::size_t argmax(std::span<const double> values);

/// One ASV record per manifest utterance, in manifest order.
std::vector<AsvRecord> compute_asvs(Model& model, FeatureStore& store,
                                    const Manifest& manifest);
void export_asv(Model& model, FeatureStore& store, const Manifest& manifest,
                const std::string& out_path);

/// End-to-end central-difference check of a model on random inputs with
/// dropout disabled. Checks up to `per_tensor` entries of every parameter.
nn::GradCheckReport model_gradient_check(const ModelConfig& config,
                                         std::uint64_t seed,
                                         std::size_t per_tensor = 4);

}  // namespace asv
