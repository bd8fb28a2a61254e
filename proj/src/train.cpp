#include "asvkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "asvkit/error.hpp"
#include "asvkit/nn/ops.hpp"
#include "asvkit/rng.hpp"
#include "json.hpp"

namespace asv {

// ---------------------------------------------------------------------------
// ClassScheme

ClassScheme ClassScheme::binary() { return ClassScheme({0.0}); }
ClassScheme ClassScheme::five() { return ClassScheme({-1.8, -0.6, 0.6, 1.8}); }
ClassScheme ClassScheme::seven() {
  return ClassScheme({-2.5, -1.5, -0.5, 0.5, 1.5, 2.5});
}

ClassScheme ClassScheme::for_classes(std::size_t n_classes) {
  switch (n_classes) {
    case 2: return binary();
    case 5: return five();
    case 7: return seven();
    default:
      fail(Errc::InvalidArgument,
           "unsupported class count " + std::to_string(n_classes) + " (use 2, 5 or 7)");
  }
}

ClassScheme ClassScheme::custom(std::vector<double> cuts) {
  if (cuts.empty()) fail(Errc::InvalidArgument, "class scheme needs at least one cut");
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    if (!(cuts[i] > -3.0 && cuts[i] <= 3.0)) {
      fail(Errc::InvalidArgument, "class cut outside (-3, 3]");
    }
    if (i > 0 && !(cuts[i] > cuts[i - 1])) {
      fail(Errc::InvalidArgument, "class cuts must be strictly increasing");
    }
  }
  return ClassScheme(std::move(cuts));
}

std::size_t ClassScheme::classify(double score) const {
  if (!(score >= -3.0 && score <= 3.0)) {
    fail(Errc::ScoreOutOfRange, "score " + std::to_string(score) + " outside [-3, 3]");
  }
  std::size_t cls = 0;
  while (cls < cuts_.size() && score >= cuts_[cls]) ++cls;
  return cls;
}

std::string ClassScheme::class_name(std::size_t index) const {
  static const char* const two[] = {"negative", "positive"};
  static const char* const five[] = {"strongly negative", "negative", "neutral",
                                     "positive", "strongly positive"};
  static const char* const seven[] = {"strongly negative", "negative", "weakly negative",
                                      "neutral", "weakly positive", "positive",
                                      "strongly positive"};
  if (index >= n_classes()) fail(Errc::InvalidArgument, "class index out of range");
  switch (n_classes()) {
    case 2: return two[index];
    case 5: return five[index];
    case 7: return seven[index];
    default: return "class " + std::to_string(index);
  }
}

std::size_t map_score_to_class(double score, const ClassScheme& scheme) {
  return scheme.classify(score);
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

void check_pair(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.empty()) fail(Errc::InvalidArgument, "metric on empty input");
  if (preds.size() != labels.size()) {
    fail(Errc::InvalidArgument, "predictions and labels differ in length");
  }
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f_from_counts(double tp, double fp, double fn, double beta) {
  const double precision = ratio(tp, tp + fp);
  const double recall = ratio(tp, tp + fn);
  const double b2 = beta * beta;
  return ratio((1.0 + b2) * precision * recall, b2 * precision + recall);
}

struct OneVsRest {
  double tp = 0, fp = 0, fn = 0;
};

OneVsRest count(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                std::size_t cls) {
  OneVsRest c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = preds[i] == cls;
    const bool l = labels[i] == cls;
    if (p && l) c.tp += 1;
    else if (p) c.fp += 1;
    else if (l) c.fn += 1;
  }
  return c;
}

}  // namespace

double weighted_accuracy(std::span<const std::size_t> preds,
                         std::span<const std::size_t> labels) {
  check_pair(preds, labels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double f_beta(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
              std::size_t positive, double beta) {
  check_pair(preds, labels);
  if (positive > 1) fail(Errc::InvalidArgument, "positive class must be 0 or 1");
  if (!(beta > 0.0)) fail(Errc::InvalidArgument, "beta must be positive");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] > 1 || labels[i] > 1) {
      fail(Errc::InvalidArgument, "f_beta needs binary predictions and labels");
    }
  }
  const auto c = count(preds, labels, positive);
  return f_from_counts(c.tp, c.fp, c.fn, beta);
}

double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                std::size_t n_classes) {
  check_pair(preds, labels);
  if (n_classes < 2) fail(Errc::InvalidArgument, "macro_f1 needs at least 2 classes");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || labels[i] >= n_classes) {
      fail(Errc::InvalidArgument, "class index out of range for macro_f1");
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < n_classes; ++k) {
    const auto c = count(preds, labels, k);
    total += f_from_counts(c.tp, c.fp, c.fn, 1.0);
  }
  return total / static_cast<double>(n_classes);
}

EvalReport make_report(std::span<const std::size_t> preds,
                       std::span<const std::size_t> labels, std::size_t n_classes) {
  EvalReport r;
  r.n_classes = n_classes;
  r.total = preds.size();
  r.weighted_accuracy = weighted_accuracy(preds, labels);
  r.macro_f1 = macro_f1(preds, labels, n_classes);
  if (n_classes == 2) r.f1 = f_beta(preds, labels, 1, 1.0);
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++r.confusion[labels[i]][preds[i]];
  for (std::size_t k = 0; k < n_classes; ++k) {
    const auto c = count(preds, labels, k);
    r.precision.push_back(ratio(c.tp, c.tp + c.fp));
    r.recall.push_back(ratio(c.tp, c.tp + c.fn));
    r.support.push_back(static_cast<std::size_t>(c.tp + c.fn));
  }
  return r;
}

namespace {

// Both report formats print values rounded to 6 decimals.
double round6(double x) { return std::round(x * 1e6) / 1e6; }

std::string fmt6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", round6(x));
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  const auto scheme = ClassScheme::for_classes(n_classes);
  std::ostringstream out;
  out << "utterances          " << total << '\n';
  out << "weighted_accuracy   " << fmt6(weighted_accuracy) << '\n';
  if (n_classes == 2) out << "f1                  " << fmt6(f1) << '\n';
  out << "macro_f1            " << fmt6(macro_f1) << '\n';
  out << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-5s %-18s %10s %10s %8s\n", "class", "name",
                "precision", "recall", "support");
  out << line;
  for (std::size_t k = 0; k < n_classes; ++k) {
    std::snprintf(line, sizeof line, "%-5zu %-18s %10s %10s %8zu\n", k,
                  scheme.class_name(k).c_str(), fmt6(precision[k]).c_str(),
                  fmt6(recall[k]).c_str(), support[k]);
    out << line;
  }
  out << "\nconfusion (rows = true, cols = predicted)\n";
  for (const auto& row : confusion) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      std::snprintf(line, sizeof line, "%s%6zu", k ? " " : "", row[k]);
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["n_classes"] = n_classes;
  j["utterances"] = total;
  j["weighted_accuracy"] = round6(weighted_accuracy);
  if (n_classes == 2) j["f1"] = round6(f1);
  j["macro_f1"] = round6(macro_f1);
  auto rounded = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(round6(x));
    return out;
  };
  j["precision"] = rounded(precision);
  j["recall"] = rounded(recall);
  j["support"] = support;
  j["confusion"] = confusion;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_dataset(const Manifest& manifest, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    fail(Errc::InvalidArgument, "split ratio must be in (0, 1)");
  }
  if (manifest.videos.size() < 2) {
    fail(Errc::InvalidArgument, "split needs at least 2 videos");
  }
  std::vector<std::string> videos;
  for (const auto& [id, _] : manifest.videos) videos.push_back(id);
  Rng rng(seed);
  rng.shuffle(videos);

  const double target = ratio * static_cast<double>(manifest.records.size());
  std::vector<std::string> train_videos, test_videos;
  double train_count = 0.0;
  for (const auto& v : videos) {
    const double n = static_cast<double>(manifest.videos.at(v).size());
    if (std::abs(train_count + n - target) <= std::abs(train_count - target)) {
      train_videos.push_back(v);
      train_count += n;
    } else {
      test_videos.push_back(v);
    }
  }
  if (test_videos.empty()) {
    test_videos.push_back(train_videos.back());
    train_videos.pop_back();
  } else if (train_videos.empty()) {
    train_videos.push_back(test_videos.front());
    test_videos.erase(test_videos.begin());
  }

  auto gather = [&](std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    std::vector<std::size_t> indices;
    for (const auto& v : ids) {
      const auto& idx = manifest.videos.at(v);
      indices.insert(indices.end(), idx.begin(), idx.end());
    }
    std::sort(indices.begin(), indices.end());  // keep manifest order
    std::vector<UtteranceRecord> records;
    for (auto i : indices) records.push_back(manifest.records[i]);
    return make_manifest(std::move(records));
  };
  return {gather(train_videos), gather(test_videos)};
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(lr > 0.0)) fail(Errc::InvalidArgument, "learning rate must be positive");
  if (batch_size < 1) fail(Errc::InvalidArgument, "batch size must be at least 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    fail(Errc::InvalidArgument, "split ratio must be in (0, 1)");
  }
}

TrainConfig TrainConfig::from(const KeyValues& kv) {
  TrainConfig c;
  c.lr = kv.get("lr", c.lr);
  const long long batch = kv.get("batch_size", static_cast<long long>(c.batch_size));
  const long long epochs = kv.get("epochs", static_cast<long long>(c.epochs));
  const long long pre = kv.get("pretrain_epochs", static_cast<long long>(c.pretrain_epochs));
  const long long seed = kv.get("seed", static_cast<long long>(c.seed));
  if (batch < 0 || epochs < 0 || pre < 0 || seed < 0) {
    fail(Errc::InvalidArgument, "negative value in training config");
  }
  c.batch_size = static_cast<std::size_t>(batch);
  c.epochs = static_cast<std::size_t>(epochs);
  c.pretrain_epochs = static_cast<std::size_t>(pre);
  c.seed = static_cast<std::uint64_t>(seed);
  c.optimizer = nn::parse_optimizer_kind(kv.get("optimizer", nn::to_string(c.optimizer)));
  c.split_ratio = kv.get("split_ratio", c.split_ratio);
  c.stop_when_perfect = kv.get("stop_when_perfect", c.stop_when_perfect);
  c.validate();
  return c;
}

void TrainConfig::write_to(KeyValues& kv) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", lr);
  kv.set("lr", buf);
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("optimizer", nn::to_string(optimizer));
  kv.set("seed", std::to_string(seed));
  std::snprintf(buf, sizeof buf, "%.17g", split_ratio);
  kv.set("split_ratio", buf);
  kv.set("pretrain_epochs", std::to_string(pretrain_epochs));
  kv.set("stop_when_perfect", stop_when_perfect ? "true" : "false");
}

// ---------------------------------------------------------------------------
// Training

std::vector<Example> build_examples(const Manifest& manifest, FeatureStore& store,
                                    const ModelConfig& config, const ClassScheme& scheme,
                                    bool with_images) {
  if (scheme.n_classes() != config.n_classes) {
    fail(Errc::ShapeMismatch, "dimension mismatch: scheme has " +
                                  std::to_string(scheme.n_classes()) +
                                  " classes, model has " + std::to_string(config.n_classes));
  }
  std::vector<Example> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    Example e;
    e.utterance_id = r.utterance_id;
    e.label = scheme.classify(r.label_score);
    e.input = store.window_input(manifest, r.utterance_id, config.features, with_images);
    out.push_back(std::move(e));
  }
  return out;
}

EvalPass run_eval(Model& model, const std::vector<Example>& examples, Head head) {
  nn::NoGradGuard no_grad;
  EvalPass pass;
  double total = 0.0;
  for (const auto& e : examples) {
    const auto logits = model.logits(e.input, head, false);
    total += nn::cross_entropy(logits, e.label).item();
    pass.preds.push_back(argmax(logits.data()));
    pass.labels.push_back(e.label);
  }
  pass.loss = examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
  return pass;
}

EvalReport evaluate(Model& model, const std::vector<Example>& examples, Head head) {
  if (examples.empty()) fail(Errc::InvalidArgument, "evaluation set is empty");
  const auto pass = run_eval(model, examples, head);
  return make_report(pass.preds, pass.labels, model.config().n_classes);
}

namespace {

CurvePoint measure(Model& model, const std::vector<Example>& train_set,
                   const std::vector<Example>* test_set, Head head) {
  CurvePoint p;
  const auto tr = run_eval(model, train_set, head);
  p.eval_train_loss = tr.loss;
  p.train_accuracy = weighted_accuracy(tr.preds, tr.labels);
  if (test_set && !test_set->empty()) {
    const auto te = run_eval(model, *test_set, head);
    p.test_loss = te.loss;
    p.test_accuracy = weighted_accuracy(te.preds, te.labels);
  }
  return p;
}

const char* phase_name(Head head) {
  switch (head) {
    case Head::LstmBranch: return "lstm";
    case Head::CnnBranch: return "cnn";
    case Head::Fused: break;
  }
  return "joint";
}

}  // namespace

TrainResult train(Model& model, const std::vector<Example>& train_set,
                  const TrainConfig& config, Head head,
                  const std::vector<Example>* test_set, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) fail(Errc::InvalidArgument, "training set is empty");

  Rng order_rng(config.seed ^ 0xA5A5A5A5DEADBEEFull);
  model.reseed_dropout(config.seed + 17);
  TrainResult result;

  std::vector<std::pair<Head, std::size_t>> phases;
  if (head == Head::Fused && config.pretrain_epochs > 0) {
    phases.emplace_back(Head::LstmBranch, config.pretrain_epochs);
    phases.emplace_back(Head::CnnBranch, config.pretrain_epochs);
  }
  phases.emplace_back(head, config.epochs);

  auto record = [&](CurvePoint p) {
    if (on_epoch) on_epoch(p);
    result.curves.push_back(std::move(p));
  };

  {
    CurvePoint p = measure(model, train_set, test_set, phases.front().first);
    p.epoch = 0;
    p.phase = phase_name(phases.front().first);
    p.train_loss = p.eval_train_loss;
    record(p);
  }

  std::vector<std::size_t> order(train_set.size());
  std::size_t epoch = 0;
  for (const auto& [phase_head, phase_epochs] : phases) {
    nn::Optimizer optimizer(config.optimizer, config.lr, model.parameters(phase_head));
    for (std::size_t e = 0; e < phase_epochs; ++e) {
      ++epoch;
      std::iota(order.begin(), order.end(), std::size_t{0});
      order_rng.shuffle(order);
      double loss_sum = 0.0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        optimizer.zero_grad();
        for (std::size_t i = start; i < end; ++i) {
          const auto& ex = train_set[order[i]];
          const auto loss = nn::cross_entropy(model.logits(ex.input, phase_head, true), ex.label);
          loss_sum += loss.item();
          nn::backward(loss);
        }
        optimizer.scale_grads(static_cast<double>(end - start));
        optimizer.step();
      }
      CurvePoint p = measure(model, train_set, test_set, phase_head);
      p.epoch = epoch;
      p.phase = phase_name(phase_head);
      p.train_loss = loss_sum / static_cast<double>(order.size());
      const bool perfect = p.train_accuracy == 1.0;
      record(std::move(p));
      if (config.stop_when_perfect && perfect && phase_head == head) break;
    }
    result.optimizer = optimizer.state();
  }
  return result;
}

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curves) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out << "epoch,phase,train_loss,eval_train_loss,train_accuracy,test_loss,test_accuracy\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& p : curves) {
    out << p.epoch << ',' << p.phase << ',' << num(p.train_loss) << ','
        << num(p.eval_train_loss) << ',' << num(p.train_accuracy) << ','
        << (p.test_loss ? num(*p.test_loss) : "") << ','
        << (p.test_accuracy ? num(*p.test_accuracy) : "") << '\n';
  }
  if (!out) fail(Errc::Io, "error writing " + path);
}

}  // namespace asv
