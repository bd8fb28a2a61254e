#include "asvkit/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "asvkit/error.hpp"
#include "json.hpp"

namespace asv {

std::vector<dsp::FeatureSet> feature_subsets(std::size_t k) {
  if (k < 1 || k > dsp::kFeatureKindCount) {
    fail(Errc::InvalidArgument, "subset size must be in 1..7");
  }
  std::vector<dsp::FeatureSet> out;
  for (unsigned mask = 1; mask < (1u << dsp::kFeatureKindCount); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) == k) {
      out.push_back(dsp::FeatureSet::from_mask(static_cast<std::uint16_t>(mask)));
    }
  }
  return out;
}

std::string SweepCell::key() const { return features.to_string() + "/" + model_name(); }

std::vector<SweepCell> sweep_cells(const SweepOptions& options) {
  if (options.schemes.empty()) fail(Errc::InvalidArgument, "sweep needs a class scheme");
  auto sizes = options.sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  auto models = options.bidirectional;
  models.erase(std::unique(models.begin(), models.end()), models.end());
  std::vector<SweepCell> cells;
  for (auto k : sizes) {
    for (const auto& set : feature_subsets(k)) {
      for (bool bi : models) cells.push_back({set, bi});
    }
  }
  return cells;
}

namespace {

using Ledger = std::map<std::string, std::map<std::size_t, double>>;

Ledger read_ledger(const std::string& path) {
  Ledger ledger;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A torn final line from an interrupted run is ignored.
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("key") ||
        !j.contains("accuracy")) {
      continue;
    }
    auto& entry = ledger[j["key"].get<std::string>()];
    for (auto& [cls, acc] : j["accuracy"].items()) {
      entry[std::stoul(cls)] = acc.get<double>();
    }
  }
  return ledger;
}

bool complete(const Ledger& ledger, const std::string& key,
              const std::vector<std::size_t>& schemes) {
  auto it = ledger.find(key);
  if (it == ledger.end()) return false;
  return std::all_of(schemes.begin(), schemes.end(),
                     [&](std::size_t s) { return it->second.count(s) != 0; });
}

}  // namespace

SweepResult feature_sweep(const Manifest& manifest, FeatureStore& store,
                          const SweepOptions& options) {
  const auto cells = sweep_cells(options);
  const auto split = split_dataset(manifest, options.train.split_ratio, options.train.seed);
  store.precompute(manifest, options.jobs);

  Ledger ledger;
  if (!options.ledger_path.empty()) ledger = read_ledger(options.ledger_path);

  SweepResult result;
  result.rows.resize(cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    result.rows[i].cell = cells[i];
    if (complete(ledger, cells[i].key(), options.schemes)) {
      for (auto s : options.schemes) {
        result.rows[i].accuracy[s] = ledger.at(cells[i].key()).at(s);
      }
      ++result.skipped;
    } else {
      todo.push_back(i);
    }
  }

  std::mutex ledger_mutex;
  std::ofstream ledger_out;
  if (!options.ledger_path.empty() && !todo.empty()) {
    ledger_out.open(options.ledger_path, std::ios::app);
    if (!ledger_out) fail(Errc::Io, "cannot open ledger " + options.ledger_path);
  }

  auto run_cell = [&](std::size_t index) {
    const auto& cell = cells[index];
    auto& row = result.rows[index];
    for (auto n_classes : options.schemes) {
      ModelConfig config = options.model;
      config.features = cell.features;
      config.bidirectional = cell.bidirectional;
      config.n_classes = n_classes;
      const auto scheme = ClassScheme::for_classes(n_classes);
      const auto train_set = build_examples(split.train, store, config, scheme, false);
      const auto test_set = build_examples(split.test, store, config, scheme, false);
      TrainConfig tc = options.train;
      tc.pretrain_epochs = 0;
      Model model(config, tc.seed);
      train(model, train_set, tc, Head::LstmBranch);
      row.accuracy[n_classes] = evaluate(model, test_set, Head::LstmBranch).weighted_accuracy;
    }
    if (ledger_out.is_open()) {
      nlohmann::json j;
      j["key"] = cell.key();
      j["mask"] = cell.features.mask();
      j["model"] = cell.model_name();
      nlohmann::json acc;
      for (const auto& [s, a] : row.accuracy) acc[std::to_string(s)] = a;
      j["accuracy"] = acc;
      std::lock_guard lock(ledger_mutex);
      ledger_out << j.dump() << '\n';
      ledger_out.flush();
    }
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < todo.size();) {
      try {
        run_cell(todo[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = todo.size();
      }
    }
  };
  const unsigned jobs = std::max(1u, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  result.computed = todo.size();

  const auto first = options.schemes.front();
  std::stable_sort(result.rows.begin(), result.rows.end(),
                   [&](const SweepRow& a, const SweepRow& b) {
                     return a.accuracy.at(first) > b.accuracy.at(first);
                   });
  return result;
}

void write_sweep_csv(const std::string& path, const SweepResult& result,
                     const std::vector<std::size_t>& schemes) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out << "rank,features,k,model";
  for (auto s : schemes) out << ",accuracy_" << s << "class";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& row = result.rows[i];
    out << i + 1 << ',' << row.cell.features.to_string() << ','
        << row.cell.features.kinds().size() << ',' << row.cell.model_name();
    for (auto s : schemes) {
      std::snprintf(buf, sizeof buf, "%.6f", row.accuracy.at(s));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) fail(Errc::Io, "error writing " + path);
}

}  // namespace asv
