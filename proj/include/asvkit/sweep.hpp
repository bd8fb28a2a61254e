#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "asvkit/audio_io.hpp"
#include "asvkit/dsp.hpp"
#include "asvkit/model.hpp"
#include "asvkit/train.hpp"

namespace asv {

/// Every k-element subset of the seven feature kinds, in increasing mask
/// order. k must be in 1..7.
std::vector<dsp::FeatureSet> feature_subsets(std::size_t k);

struct SweepCell {
  dsp::FeatureSet features;
  bool bidirectional = true;

  /// "<features>/<lstm|bilstm>", used as the ledger key.
  std::string key() const;
  std::string model_name() const { return bidirectional ? "bilstm" : "lstm"; }
};

struct SweepOptions {
  std::vector<std::size_t> sizes = {1, 2, 3, 4, 5, 6, 7};
  std::vector<bool> bidirectional = {false, true};
  std::vector<std::size_t> schemes = {2};  // class counts; one model per scheme
  ModelConfig model;  // features, bidirectional and n_classes are overridden
  TrainConfig train;
  std::string ledger_path;  // empty: no resume
  unsigned jobs = 1;
};

struct SweepRow {
  SweepCell cell;
  std::map<std::size_t, double> accuracy;  // class count -> test accuracy
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ranked
  std::size_t computed = 0;
  std::size_t skipped = 0;
};

std::vector<SweepCell> sweep_cells(const SweepOptions& options);

/// Trains the utterance branch alone for every cell and scheme, scoring
/// test accuracy on a video-disjoint split. Finished cells are appended to
/// the ledger as JSON lines and skipped on the next run. Rows are ranked by
/// accuracy of the first scheme, descending; ties keep cell order.
SweepResult feature_sweep(const Manifest& manifest, FeatureStore& store,
                          const SweepOptions& options);

void write_sweep_csv(const std::string& path, const SweepResult& result,
                     const std::vector<std::size_t>& schemes);

}  // namespace asv
