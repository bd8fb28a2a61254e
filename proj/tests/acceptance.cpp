// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asvkit/cli.hpp"
#include "asvkit/dsp.hpp"
#include "asvkit/model.hpp"
#include "asvkit/nn/gradcheck.hpp"
#include "asvkit/sweep.hpp"
#include "asvkit/synthetic.hpp"
#include "asvkit/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace asv;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool all_zero(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return v == 0.0; });
}

nn::Tensor random_tensor(nn::Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(nn::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return nn::Tensor::from(std::move(shape), std::move(v));
}

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "asvkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

// 1
Outcome dsp_oracles() {
  Outcome o;
  const auto start = Clock::now();
  Rng rng(2024);
  double worst_stft = 0.0, worst_mfcc = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t n_fft = std::size_t{256} << rng.below(4);
    const std::size_t hop = n_fft / 4;
    const std::size_t len = n_fft / 2 + 1 + rng.below(4096 - n_fft / 2);
    AudioClip clip;
    clip.samples.resize(len);
    for (auto& v : clip.samples) v = rng.uniform(-1.0, 1.0);
    const auto spec = dsp::stft(clip, n_fft, hop);
    const auto want = oracle::stft_magnitudes(clip.samples, n_fft, hop);
    worst_stft = std::max(worst_stft, oracle::frobenius_rel_error(spec.magnitudes, want));
    const auto mfcc = dsp::mfcc(spec, 40, 13);
    const auto want_mfcc = oracle::mfcc(clip.samples, clip.sample_rate, n_fft, hop, 40, 13);
    worst_mfcc = std::max(worst_mfcc, oracle::frobenius_rel_error(mfcc, want_mfcc));
  }
  const double elapsed = seconds_since(start);
  o.require(worst_stft < 1e-9, "stft error " + fmt("%.3g", worst_stft));
  o.require(worst_mfcc < 1e-8, "mfcc error " + fmt("%.3g", worst_mfcc));
  o.require(elapsed < 30.0, "took " + fmt("%.1f s", elapsed));
  if (o.ok) {
    o.detail = "stft " + fmt("%.2g", worst_stft) + ", mfcc " + fmt("%.2g", worst_mfcc) + ", " +
               fmt("%.1f s", elapsed);
  }
  return o;
}

// 2
Outcome analytic_signals() {
  Outcome o;
  const auto a440 = testing_support::tone(440.0, 1.0);
  const auto chroma = dsp::chroma_stft(dsp::stft(a440));
  const auto energy = dsp::rmse(a440);
  std::size_t voiced = 0, hits = 0;
  for (std::size_t t = 0; t < chroma.cols(); ++t) {
    if (energy(0, t) < 1e-3) continue;
    ++voiced;
    std::size_t best = 0;
    for (std::size_t c = 1; c < 12; ++c) {
      if (chroma(c, t) > chroma(best, t)) best = c;
    }
    hits += best == 9;
  }
  const double share = static_cast<double>(hits) / static_cast<double>(voiced);
  o.require(voiced > 0 && share >= 0.95, "chroma A share " + fmt("%.3f", share));

  const auto centroid = dsp::spectral_centroid(dsp::stft(testing_support::tone(1000.0, 1.0)));
  double worst = 0.0;
  for (std::size_t t = 2; t + 3 < centroid.cols(); ++t) {
    worst = std::max(worst, std::abs(centroid(0, t) - 1000.0));
  }
  o.require(worst < 16000.0 / 2048.0, "centroid off by " + fmt("%.2f Hz", worst));

  const auto r = dsp::rmse(testing_support::tone(250.0, 1.0));
  double rms_err = 0.0;
  for (double v : r.data()) rms_err = std::max(rms_err, std::abs(v - 1.0 / std::sqrt(2.0)));
  o.require(rms_err < 1e-3, "rmse off by " + fmt("%.3g", rms_err));

  const auto quiet = testing_support::silence(16000);
  const auto spec = dsp::stft(quiet);
  const auto quiet_chroma = dsp::chroma_stft(spec);
  o.require(all_zero(quiet_chroma), "silent chroma_stft");
  o.require(all_zero(dsp::chroma_cens(spec)), "silent chroma_cens");
  o.require(all_zero(dsp::spectral_centroid(spec)), "silent centroid");
  o.require(all_zero(dsp::spectral_contrast(spec)), "silent contrast");
  o.require(all_zero(dsp::tonnetz(quiet_chroma)), "silent tonnetz");
  o.require(all_zero(dsp::rmse(quiet)), "silent rmse");
  o.require(all_zero(dsp::render_spectrogram_image(quiet).pixels), "silent image");
  if (o.ok) {
    o.detail = "A in " + fmt("%.0f%%", 100.0 * share) + " of voiced frames, centroid within " +
               fmt("%.2f Hz", worst) + ", rmse within " + fmt("%.1g", rms_err);
  }
  return o;
}

// 3
Outcome mel_formula() {
  Outcome o;
  o.require(dsp::hz_to_mel(0.0) == 0.0, "hz_to_mel(0) != 0");
  const double m = dsp::hz_to_mel(700.0);
  o.require(std::abs(m - 2595.0 * std::log10(2.0)) < 1e-9, "hz_to_mel(700) = " + fmt("%.12g", m));
  if (o.ok) o.detail = "hz_to_mel(700) = " + fmt("%.9f", m);
  return o;
}

// 4
Outcome gradient_checks() {
  Outcome o;
  const auto start = Clock::now();
  double worst_layer = 0.0;
  for (const auto& r : nn::run_layer_gradchecks(1)) {
    worst_layer = std::max(worst_layer, r.max_rel_error());
    o.require(r.max_rel_error() < 1e-4, r.label + " error " + fmt("%.3g", r.max_rel_error()));
  }
  // Every parameter element of the miniature model.
  const auto model = model_gradient_check(ModelConfig::miniature(), 1, 0);
  o.require(model.max_rel_error() < 1e-3, "model error " + fmt("%.3g", model.max_rel_error()));
  const double elapsed = seconds_since(start);
  o.require(elapsed < 120.0, "took " + fmt("%.1f s", elapsed));
  if (o.ok) {
    o.detail = "layers " + fmt("%.2g", worst_layer) + ", model " +
               fmt("%.2g", model.max_rel_error()) + ", " + fmt("%.1f s", elapsed);
  }
  return o;
}

// 5
Outcome shape_contract() {
  Outcome o;
  const auto clip = testing_support::tone(330.0, 2.0);
  const auto best = dsp::extract_features(clip, dsp::FeatureSet::best_four());
  o.require(best.values.rows() == 256 && best.values.cols() == 33, "best-four shape");
  const auto all = dsp::extract_features(clip, dsp::FeatureSet::all());
  o.require(all.values.rows() == 256 && all.values.cols() == 52, "all-kinds shape");
  const auto img = dsp::render_spectrogram_image(clip);
  o.require(img.pixels.rows() == 512 && img.pixels.cols() == 512, "image shape");
  if (o.ok) o.detail = "256x33, 256x52, 512x512";
  return o;
}

// 6
Outcome metric_oracle() {
  Outcome o;
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = std::vector<std::size_t>{2, 5, 7}[trial % 3];
    const std::size_t n = 1 + rng.below(100);
    std::vector<std::size_t> preds(n), labels(n);
    for (auto& v : preds) v = rng.below(classes);
    for (auto& v : labels) v = rng.below(classes);
    const oracle::Confusion c(preds, labels, classes);
    worst = std::max(worst, std::abs(weighted_accuracy(preds, labels) - c.accuracy()));
    worst = std::max(worst, std::abs(macro_f1(preds, labels, classes) - c.macro_f1()));
    if (classes == 2) worst = std::max(worst, std::abs(f_beta(preds, labels) - c.fbeta(1, 1.0)));
  }
  o.require(worst < 1e-12, "max deviation " + fmt("%.3g", worst));
  std::vector<std::size_t> p(583, 1), l(583, 1);
  std::fill(p.begin() + 406, p.end(), 0);
  const auto spot = fmt("%.4f", weighted_accuracy(p, l));
  o.require(spot == "0.6964", "406/583 printed as " + spot);
  if (o.ok) o.detail = "max deviation " + fmt("%.2g", worst) + ", 406/583 = " + spot;
  return o;
}

// 7
Outcome learning_sanity(const std::string& dir) {
  Outcome o;
  const auto start = Clock::now();
  const auto manifest = write_synthetic_dataset(dir);
  const auto split = split_dataset(manifest, 0.8, 1);
  const auto config = ModelConfig::miniature();
  FeatureStore store(config.frames, config.image_size);
  store.precompute(manifest);
  const auto scheme = ClassScheme::binary();
  const auto train_set = build_examples(split.train, store, config, scheme);
  const auto test_set = build_examples(split.test, store, config, scheme);
  o.require(train_set.size() == 64 && test_set.size() == 16,
            "split " + std::to_string(train_set.size()) + "/" + std::to_string(test_set.size()));

  TrainConfig tc;
  tc.lr = 1e-3;
  tc.batch_size = 8;
  tc.epochs = 200;
  tc.seed = 3;
  Model model(config, tc.seed);
  const auto result = train(model, train_set, tc, Head::Fused, &test_set);
  std::size_t first_perfect = 0;
  for (const auto& p : result.curves) {
    if (p.epoch > 0 && p.train_accuracy == 1.0) {
      first_perfect = p.epoch;
      break;
    }
  }
  const double test_acc = evaluate(model, test_set).weighted_accuracy;
  const double elapsed = seconds_since(start);
  o.require(first_perfect > 0, "train accuracy never reached 1");
  o.require(test_acc >= 0.9, "test accuracy " + fmt("%.4f", test_acc));
  o.require(elapsed < 600.0, "took " + fmt("%.0f s", elapsed));
  if (o.ok) {
    o.detail = "100% train at epoch " + std::to_string(first_perfect) + ", test " +
               fmt("%.4f", test_acc) + ", " + fmt("%.0f s", elapsed);
  }
  return o;
}

// 8
Outcome attention_invariants() {
  Outcome o;
  double worst_uniform = 0.0, worst_sum = 0.0;
  for (auto config : {ModelConfig::miniature(), ModelConfig{}}) {
    config.frames = 64;
    config.image_size = 32;
    for (bool bi : {true, false}) {
      config.bidirectional = bi;
      Model model(config, 8);
      Rng rng(8);
      const auto same = random_tensor({config.frames, config.features.width()}, rng, -2, 2);
      const auto out = model.lasv_forward({same, same, same}, false);
      for (std::size_t t = 0; t < 3; ++t) {
        worst_uniform = std::max(worst_uniform, std::abs(out.alpha[t] - 1.0 / 3.0));
      }
    }
  }
  auto config = ModelConfig::miniature();
  config.frames = 64;
  Model model(config, 9);
  Rng rng(9);
  auto mass = [](const nn::Tensor& a) {
    const auto d = a.data();
    return std::abs(std::accumulate(d.begin(), d.end(), 0.0) - 1.0);
  };
  for (int trial = 0; trial < 20; ++trial) {
    std::array<nn::Tensor, kWindowSize> feats, imgs;
    for (std::size_t i = 0; i < kWindowSize; ++i) {
      feats[i] = random_tensor({config.frames, config.features.width()}, rng, -3, 3);
      imgs[i] = random_tensor({1, config.image_size, config.image_size}, rng, 0, 1);
    }
    const auto lasv = model.lasv_forward(feats, false);
    const auto casv = model.casv_forward(imgs, false);
    const auto fused = model.fuse_forward(lasv.lasv, casv.casv, false);
    worst_sum = std::max({worst_sum, mass(lasv.alpha), mass(casv.alpha), mass(fused.alpha)});
  }
  o.require(worst_uniform < 1e-9, "uniform deviation " + fmt("%.3g", worst_uniform));
  o.require(worst_sum < 1e-12, "sum deviation " + fmt("%.3g", worst_sum));
  if (o.ok) {
    o.detail = "uniform within " + fmt("%.2g", worst_uniform) + ", sums within " +
               fmt("%.2g", worst_sum);
  }
  return o;
}

// 9
Outcome determinism(const std::string& data_dir, const std::string& dir) {
  Outcome o;
  auto config = ModelConfig::miniature();
  const auto cfg = dir + "/mini.cfg";
  std::ofstream(cfg) << config.to_text() << "lr = 0.001\nbatch_size = 8\n";
  const auto manifest = data_dir + "/manifest.csv";
  for (const char* run : {"run_a", "run_b"}) {
    const int code = cli_run({"train", "--manifest", manifest, "--classes", "2", "--seed", "11",
                              "--config", cfg, "--epochs", "3", "--out", dir + "/" + run});
    o.require(code == 0, std::string("train exit code ") + std::to_string(code));
  }
  using testing_support::read_bytes;
  const auto ckpt_a = read_bytes(dir + "/run_a/model.asvm");
  o.require(!ckpt_a.empty() && ckpt_a == read_bytes(dir + "/run_b/model.asvm"), "checkpoints differ");
  const auto curves_a = read_bytes(dir + "/run_a/curves.csv");
  o.require(!curves_a.empty() && curves_a == read_bytes(dir + "/run_b/curves.csv"), "curves differ");
  if (o.ok) o.detail = "checkpoint " + std::to_string(ckpt_a.size()) + " bytes identical, curves identical";
  return o;
}

// 10
Outcome sweep_machinery(const std::string& dir) {
  Outcome o;
  const std::size_t binom[8] = {1, 7, 21, 35, 35, 21, 7, 1};
  for (std::size_t k = 1; k <= 7; ++k) {
    const auto subsets = feature_subsets(k);
    std::set<std::uint16_t> masks;
    for (const auto& s : subsets) masks.insert(s.mask());
    o.require(subsets.size() == binom[k] && masks.size() == binom[k],
              "k=" + std::to_string(k) + " gave " + std::to_string(subsets.size()));
  }
  o.require(sweep_cells(SweepOptions{}).size() == 254, "full sweep cell count");

  SyntheticOptions so;
  so.videos = 6;
  so.utterances_per_video = 2;
  so.seconds = 0.5;
  const auto manifest = write_synthetic_dataset(dir + "/data", so);
  SweepOptions opt;
  opt.sizes = {4};
  opt.model = ModelConfig::miniature();
  opt.model.frames = 32;
  opt.train.lr = 1e-3;
  opt.train.batch_size = 4;
  opt.train.epochs = 1;
  opt.train.seed = 2;
  opt.ledger_path = dir + "/ledger.jsonl";
  opt.jobs = 2;
  FeatureStore store(opt.model.frames, opt.model.image_size);
  const auto first = feature_sweep(manifest, store, opt);
  o.require(first.rows.size() == 70 && first.computed == 70, "first run computed " +
                                                                  std::to_string(first.computed));
  write_sweep_csv(dir + "/first.csv", first, opt.schemes);
  const auto second = feature_sweep(manifest, store, opt);
  o.require(second.computed == 0 && second.skipped == 70,
            "resume computed " + std::to_string(second.computed));
  write_sweep_csv(dir + "/second.csv", second, opt.schemes);
  o.require(testing_support::read_bytes(dir + "/first.csv") ==
                testing_support::read_bytes(dir + "/second.csv"),
            "resumed table differs");

  std::ifstream in(dir + "/second.csv");
  std::string line;
  std::getline(in, line);
  o.require(line == "rank,features,k,model,accuracy_2class", "header " + line);
  std::size_t rows = 0;
  double prev = 2.0;
  std::set<std::string> keys;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) {
      o.require(false, "malformed row " + line);
      break;
    }
    const double acc = std::stod(f[4]);
    o.require(f[0] == std::to_string(rows) && f[2] == "4", "row " + line);
    o.require(f[3] == "lstm" || f[3] == "bilstm", "model " + f[3]);
    o.require(acc >= 0.0 && acc <= 1.0 && acc <= prev, "ranking at " + line);
    keys.insert(f[1] + "/" + f[3]);
    prev = acc;
  }
  o.require(rows == 70 && keys.size() == 70, "rows " + std::to_string(rows));
  if (o.ok) o.detail = "35 subsets at k=4, 70 cells, resume skipped 70, ranked CSV of 70 rows";
  return o;
}

}  // namespace

int main() {
  testing_support::TempDir work("acceptance");
  const std::string data_dir = work.file("tones");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"DSP oracle suite", dsp_oracles},
      {"analytic signal checks", analytic_signals},
      {"mel formula", mel_formula},
      {"gradient checks", gradient_checks},
      {"shape contract", shape_contract},
      {"metric oracle equivalence", metric_oracle},
      {"learning sanity", [&] { return learning_sanity(data_dir); }},
      {"attention invariants", attention_invariants},
      {"determinism", [&] { return determinism(data_dir, work.str()); }},
      {"sweep machinery", [&] { return sweep_machinery(work.file("sweep")); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += !o.ok;
    std::printf("%s %zu %s: %s\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
