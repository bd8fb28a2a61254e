#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asvkit/audio_io.hpp"
#include "asvkit/config.hpp"
#include "asvkit/matrix.hpp"
#include "asvkit/model.hpp"
#include "asvkit/nn/optim.hpp"

namespace asv {

// ---------------------------------------------------------------------------
// Label schemes

/// Maps a score in [-3, 3] to a class index: the index is the number of cut
/// points that are <= the score.
class ClassScheme {
 public:
  /// score >= 0 is positive.
  static ClassScheme binary();
  /// Cuts at -1.8, -0.6, 0.6, 1.8.
  static ClassScheme five();
  /// round(score) with halves rounded up, shifted to 0..6.
  static ClassScheme seven();
  /// 2, 5 or 7; throws InvalidArgument otherwise.
  static ClassScheme for_classes(std::size_t n_classes);
  /// Strictly increasing cuts inside (-3, 3].
  static ClassScheme custom(std::vector<double> cuts);

  std::size_t n_classes() const { return cuts_.size() + 1; }
  const std::vector<double>& cuts() const { return cuts_; }
  /// Throws ScoreOutOfRange outside [-3, 3] or for NaN.
  std::size_t classify(double score) const;
  std::string class_name(std::size_t index) const;

 private:
  explicit ClassScheme(std::vector<double> cuts) : cuts_(std::move(cuts)) {}
  std::vector<double> cuts_;
};

std::size_t map_score_to_class(double score, const ClassScheme& scheme);

// ---------------------------------------------------------------------------
// Metrics. Zero denominators give 0.

double weighted_accuracy(std::span<const std::size_t> preds,
                         std::span<const std::size_t> labels);
/// Binary labels only (0/1); `positive` selects the positive class.
double f_beta(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
              std::size_t positive = 1, double beta = 1.0);
/// Mean of one-vs-rest F1 over classes 0..n-1; n >= 2.
double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                std::size_t n_classes);

struct EvalReport {
  std::size_t n_classes = 0;
  std::size_t total = 0;
  double weighted_accuracy = 0.0;
  double f1 = 0.0;        // binary schemes, positive class 1
  double macro_f1 = 0.0;  // every scheme
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred]

  std::string to_text() const;
  std::string to_json() const;
};

EvalReport make_report(std::span<const std::size_t> preds,
                       std::span<const std::size_t> labels, std::size_t n_classes);

// ---------------------------------------------------------------------------
// Splitting

struct DatasetSplit {
  Manifest train;
  Manifest test;
};

/// Whole videos go to one side. Videos are shuffled by `seed` and assigned
/// greedily to train while that brings the train utterance count closer to
/// ratio * total; both sides end up non-empty.
DatasetSplit split_dataset(const Manifest& manifest, double ratio, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 30;
  std::size_t epochs = 200;
  nn::OptimizerKind optimizer = nn::OptimizerKind::Adam;
  std::uint64_t seed = 0;
  double split_ratio = 0.7;
  /// Epochs of branch-only training for each branch before joint training.
  std::size_t pretrain_epochs = 0;
  /// Stop once an evaluation pass over the training set is fully correct.
  bool stop_when_perfect = false;

  void validate() const;
  static TrainConfig from(const KeyValues& kv);
  void write_to(KeyValues& kv) const;
};

struct Example {
  std::string utterance_id;
  std::size_t label = 0;
  WindowInput input;
};

std::vector<Example> build_examples(const Manifest& manifest, FeatureStore& store,
                                    const ModelConfig& config,
                                    const ClassScheme& scheme, bool with_images = true);

/// One row per epoch; epoch 0 is the untrained model. Losses and accuracies
/// other than `train_loss` come from evaluation-mode passes.
struct CurvePoint {
  std::size_t epoch = 0;
  std::string phase;
  double train_loss = 0.0;  // mean training-mode batch loss
  double eval_train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> test_loss;
  std::optional<double> test_accuracy;
};

using EpochCallback = std::function<void(const CurvePoint&)>;

struct TrainResult {
  std::vector<CurvePoint> curves;
  nn::OptimizerState optimizer;
};

/// Mini-batch training with per-epoch shuffling. Gradients are averaged over
/// each batch. Throws InvalidArgument for an empty training set.
TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const TrainConfig& config, Head head = Head::Fused,
                  const std::vector<Example>* test_set = nullptr,
                  const EpochCallback& on_epoch = {});

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curves);

struct EvalPass {
  double loss = 0.0;
  std::vector<std::size_t> preds;
  std::vector<std::size_t> labels;
};

EvalPass run_eval(Model& model, const std::vector<Example>& examples, Head head);
EvalReport evaluate(Model& model, const std::vector<Example>& examples,
                    Head head = Head::Fused);

}  // namespace asv
