#include "asvkit/cli.hpp"

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "asvkit/audio_io.hpp"
#include "asvkit/config.hpp"
#include "asvkit/dsp.hpp"
#include "asvkit/error.hpp"
#include "asvkit/feature_file.hpp"
#include "asvkit/model.hpp"
#include "asvkit/nn/checkpoint.hpp"
#include "asvkit/nn/gradcheck.hpp"
#include "asvkit/sweep.hpp"
#include "asvkit/synthetic.hpp"
#include "asvkit/train.hpp"

namespace asv::cli {
namespace {

namespace fs = std::filesystem;

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text.front() != '-') v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    fail(Errc::Usage, "invalid seed '" + text + "' in " + source);
  }
  return v;
}

/// Flag, then ASVKIT_SEED, then the config file, then 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const KeyValues& config) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ASVKIT_SEED"); env && *env) {
    return parse_seed(env, "ASVKIT_SEED");
  }
  if (config.has("seed")) return parse_seed(config.get("seed", std::string()), "config");
  return 0;
}

KeyValues load_config(const std::string& path) {
  return path.empty() ? KeyValues{} : KeyValues::load(path);
}

void reject_unknown_keys(const KeyValues& kv, const std::string& path) {
  const auto unused = kv.unused();
  if (!unused.empty()) fail(Errc::Usage, "unknown key '" + unused.front() + "' in " + path);
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex m;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

void write_pgm(const std::string& path, const Matrix& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out << "P5\n" << pixels.cols() << ' ' << pixels.rows() << "\n255\n";
  for (std::size_t r = 0; r < pixels.rows(); ++r) {
    for (std::size_t c = 0; c < pixels.cols(); ++c) {
      const double v = std::clamp(pixels(r, c), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  if (!out) fail(Errc::Io, "error writing " + path);
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto token = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                      : comma - start);
    if (!token.empty()) {
      const auto dash = token.find('-');
      try {
        if (dash != std::string::npos && dash > 0) {
          const auto lo = std::stoul(token.substr(0, dash));
          const auto hi = std::stoul(token.substr(dash + 1));
          for (auto k = lo; k <= hi; ++k) out.push_back(k);
        } else {
          out.push_back(std::stoul(token));
        }
      } catch (const std::exception&) {
        fail(Errc::Usage, std::string("invalid ") + what + " '" + token + "'");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) fail(Errc::Usage, std::string("empty ") + what);
  return out;
}

/// A one-record manifest for a bare WAV file.
Manifest single_wav_manifest(const std::string& wav) {
  UtteranceRecord r;
  r.utterance_id = fs::path(wav).stem().string();
  r.video_id = r.utterance_id;
  r.position = 0;
  r.audio_path = wav;
  r.label_score = 0.0;
  return make_manifest({r});
}

struct ModelAndTrain {
  ModelConfig model;
  TrainConfig train;
};

ModelAndTrain configs_from_checkpoint(const std::string& path) {
  const auto kv = KeyValues::parse(nn::load_checkpoint(path).metadata);
  return {ModelConfig::from(kv), TrainConfig::from(kv)};
}

Model load_trained_model(const std::string& checkpoint, const std::string& config_path,
                         std::optional<std::size_t> classes) {
  ModelConfig config;
  if (config_path.empty()) {
    config = checkpoint_config(checkpoint);
  } else {
    const auto kv = KeyValues::load(config_path);
    config = ModelConfig::from(kv);
    TrainConfig::from(kv);
    reject_unknown_keys(kv, config_path);
  }
  if (classes) config.n_classes = *classes;
  config.validate();
  Model model(config, 0);
  load_model(checkpoint, model);
  return model;
}

// ---------------------------------------------------------------------------

struct Context {
  std::ostream& out;
  std::ostream& err;
};

int cmd_extract(Context& ctx, const std::string& manifest_path, const std::string& features,
                const std::string& out_dir, std::size_t frames, bool raw, unsigned jobs) {
  const auto manifest = load_manifest(manifest_path);
  const auto kinds = dsp::FeatureSet::parse(features);
  if (kinds.empty()) fail(Errc::Usage, "no features selected");
  fs::create_directories(out_dir);
  dsp::FeatureOptions options;
  options.n_frames = frames;
  options.standardize = !raw;
  parallel_for(manifest.records.size(), jobs, [&](std::size_t i) {
    const auto& r = manifest.records[i];
    const auto clip = load_clip(r);
    write_feature_file((fs::path(out_dir) / (r.utterance_id + ".asvf")).string(),
                       dsp::extract_features(clip, kinds, options));
  });
  ctx.out << "wrote " << manifest.records.size() << " feature files ("
          << frames << " x " << kinds.width() << ", " << kinds.to_string() << ") to "
          << out_dir << '\n';
  return kExitOk;
}

int cmd_render(Context& ctx, const std::string& manifest_path, const std::string& wav,
               const std::string& out, std::size_t size, unsigned jobs) {
  if (manifest_path.empty() == wav.empty()) {
    fail(Errc::Usage, "render needs exactly one of --manifest or --wav");
  }
  if (!wav.empty()) {
    UtteranceRecord r;
    r.audio_path = wav;
    write_pgm(out, dsp::render_spectrogram_image(load_clip(r), size).pixels);
    ctx.out << "wrote " << out << '\n';
    return kExitOk;
  }
  const auto manifest = load_manifest(manifest_path);
  fs::create_directories(out);
  parallel_for(manifest.records.size(), jobs, [&](std::size_t i) {
    const auto& r = manifest.records[i];
    write_pgm((fs::path(out) / (r.utterance_id + ".pgm")).string(),
              dsp::render_spectrogram_image(load_clip(r), size).pixels);
  });
  ctx.out << "wrote " << manifest.records.size() << " images (" << size << " x " << size
          << ") to " << out << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string manifest;
  std::string config;
  std::string out = "asvkit_run";
  std::optional<std::size_t> classes;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
};

int cmd_train(Context& ctx, const TrainArgs& a) {
  auto kv = load_config(a.config);
  ModelConfig model_config = ModelConfig::from(kv);
  TrainConfig train_config = TrainConfig::from(kv);
  if (!a.config.empty()) reject_unknown_keys(kv, a.config);
  if (a.classes) model_config.n_classes = *a.classes;
  if (a.epochs) train_config.epochs = *a.epochs;
  if (a.lr) train_config.lr = *a.lr;
  if (a.batch_size) train_config.batch_size = *a.batch_size;
  train_config.seed = resolve_seed(a.seed, kv);
  model_config.validate();
  train_config.validate();

  const auto manifest = load_manifest(a.manifest);
  const auto scheme = ClassScheme::for_classes(model_config.n_classes);
  const auto split = split_dataset(manifest, train_config.split_ratio, train_config.seed);
  FeatureStore store(model_config.frames, model_config.image_size);
  store.precompute(manifest);
  const auto train_set = build_examples(split.train, store, model_config, scheme);
  const auto test_set = build_examples(split.test, store, model_config, scheme);
  ctx.err << "train " << train_set.size() << " utterances, test " << test_set.size()
          << " utterances, " << model_config.n_classes << " classes, seed "
          << train_config.seed << '\n';

  Model model(model_config, train_config.seed);
  auto result = train(model, train_set, train_config, Head::Fused, &test_set,
                      [&](const CurvePoint& p) {
                        if (p.epoch % 10 == 0) {
                          ctx.err << "epoch " << p.epoch << " loss " << p.train_loss
                                  << " train_acc " << p.train_accuracy << " test_acc "
                                  << p.test_accuracy.value_or(0.0) << '\n';
                        }
                      });

  fs::create_directories(a.out);
  const auto ckpt = (fs::path(a.out) / "model.asvm").string();
  KeyValues meta;
  model_config.write_to(meta);
  train_config.write_to(meta);
  auto params = model.parameters();
  nn::save_checkpoint(ckpt, meta.to_text(), params, &result.optimizer);
  write_curves_csv((fs::path(a.out) / "curves.csv").string(), result.curves);
  write_manifest((fs::path(a.out) / "train_manifest.csv").string(), split.train);
  write_manifest((fs::path(a.out) / "test_manifest.csv").string(), split.test);

  const auto& last = result.curves.back();
  ctx.out << "checkpoint " << ckpt << '\n'
          << "curves " << (fs::path(a.out) / "curves.csv").string() << '\n'
          << "epochs " << last.epoch << " train_accuracy " << last.train_accuracy
          << " test_accuracy " << last.test_accuracy.value_or(0.0) << '\n';
  return kExitOk;
}

int cmd_evaluate(Context& ctx, const std::string& manifest_path,
                 const std::string& checkpoint, const std::string& config_path,
                 const std::string& subset, const std::string& json_path) {
  auto model = load_trained_model(checkpoint, config_path, std::nullopt);
  const auto manifest = load_manifest(manifest_path);
  Manifest chosen = manifest;
  if (subset != "all") {
    const auto stored = configs_from_checkpoint(checkpoint).train;
    auto split = split_dataset(manifest, stored.split_ratio, stored.seed);
    chosen = subset == "train" ? split.train : split.test;
  }
  const auto& config = model.config();
  FeatureStore store(config.frames, config.image_size);
  store.precompute(chosen);
  const auto examples =
      build_examples(chosen, store, config, ClassScheme::for_classes(config.n_classes));
  const auto report = evaluate(model, examples);
  ctx.out << report.to_text() << '\n' << report.to_json() << '\n';
  if (!json_path.empty()) {
    std::ofstream out(json_path);
    if (!out) fail(Errc::Io, "cannot write " + json_path);
    out << report.to_json() << '\n';
  }
  return kExitOk;
}

int cmd_predict(Context& ctx, const std::string& checkpoint, const std::string& wav,
                const std::string& manifest_path, const std::string& utterance) {
  if (wav.empty() == manifest_path.empty()) {
    fail(Errc::Usage, "predict needs exactly one of --wav or --manifest");
  }
  if (!manifest_path.empty() && utterance.empty()) {
    fail(Errc::Usage, "predict --manifest needs --utterance");
  }
  auto model = load_trained_model(checkpoint, "", std::nullopt);
  const auto manifest = wav.empty() ? load_manifest(manifest_path) : single_wav_manifest(wav);
  const auto id = wav.empty() ? utterance : manifest.records.front().utterance_id;
  FeatureStore store(model.config().frames, model.config().image_size);
  const auto p = predict(model, store, manifest, id);
  const auto scheme = ClassScheme::for_classes(model.config().n_classes);
  ctx.out << "utterance " << id << '\n'
          << "class " << p.label << " (" << scheme.class_name(p.label) << ")\n";
  char buf[96];
  for (std::size_t k = 0; k < p.probabilities.size(); ++k) {
    std::snprintf(buf, sizeof buf, "p[%zu] %-18s %.6f\n", k, scheme.class_name(k).c_str(),
                  p.probabilities[k]);
    ctx.out << buf;
  }
  return kExitOk;
}

struct SweepArgs {
  std::string manifest;
  std::string out;
  std::string ledger;
  std::string config;
  std::string sizes = "1-7";
  std::string models = "lstm,bilstm";
  std::string classes = "2";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  unsigned jobs = 1;
};

int cmd_sweep(Context& ctx, const SweepArgs& a) {
  auto kv = load_config(a.config);
  SweepOptions options;
  options.model = ModelConfig::from(kv);
  options.train = TrainConfig::from(kv);
  if (!a.config.empty()) reject_unknown_keys(kv, a.config);
  options.train.seed = resolve_seed(a.seed, kv);
  if (a.epochs) options.train.epochs = *a.epochs;
  options.sizes = parse_size_list(a.sizes, "subset size");
  options.schemes = parse_size_list(a.classes, "class count");
  for (auto s : options.schemes) ClassScheme::for_classes(s);
  options.bidirectional.clear();
  for (const auto& name : {std::string("lstm"), std::string("bilstm")}) {
    if (("," + a.models + ",").find("," + name + ",") != std::string::npos) {
      options.bidirectional.push_back(name == "bilstm");
    }
  }
  if (options.bidirectional.empty()) fail(Errc::Usage, "--models takes lstm and/or bilstm");
  options.ledger_path = a.ledger.empty() ? a.out + ".ledger.jsonl" : a.ledger;
  options.jobs = a.jobs;

  const auto manifest = load_manifest(a.manifest);
  FeatureStore store(options.model.frames, options.model.image_size);
  const auto result = feature_sweep(manifest, store, options);
  write_sweep_csv(a.out, result, options.schemes);
  ctx.out << "cells " << result.rows.size() << " computed " << result.computed
          << " skipped " << result.skipped << '\n'
          << "table " << a.out << '\n';
  if (!result.rows.empty()) {
    ctx.out << "best " << result.rows.front().cell.key() << ' '
            << result.rows.front().accuracy.at(options.schemes.front()) << '\n';
  }
  return kExitOk;
}

int cmd_export(Context& ctx, const std::string& manifest_path, const std::string& checkpoint,
               const std::string& out) {
  auto model = load_trained_model(checkpoint, "", std::nullopt);
  const auto manifest = load_manifest(manifest_path);
  FeatureStore store(model.config().frames, model.config().image_size);
  export_asv(model, store, manifest, out);
  ctx.out << "wrote " << manifest.records.size() << " vectors of length "
          << model.config().dense_hidden << " to " << out << '\n';
  return kExitOk;
}

int cmd_gradcheck(Context& ctx, std::uint64_t seed, bool with_model) {
  constexpr double kLayerTolerance = 1e-4;
  constexpr double kModelTolerance = 1e-3;
  bool ok = true;
  char buf[128];
  ctx.out << "layer                      max_rel_error  status\n";
  auto line = [&](const nn::GradCheckReport& r, double tol) {
    const bool pass = r.passed(tol);
    ok = ok && pass;
    std::snprintf(buf, sizeof buf, "%-26s %13.3e  %s\n", r.label.c_str(), r.max_rel_error(),
                  pass ? "ok" : "FAIL");
    ctx.out << buf;
  };
  for (const auto& r : nn::run_layer_gradchecks(seed)) line(r, kLayerTolerance);
  if (with_model) line(model_gradient_check(ModelConfig::miniature(), seed), kModelTolerance);
  if (!ok) {
    ctx.err << "gradient check failed\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_synth(Context& ctx, const std::string& out, const SyntheticOptions& options) {
  const auto manifest = write_synthetic_dataset(out, options);
  ctx.out << "wrote " << manifest.records.size() << " utterances in "
          << manifest.videos.size() << " videos to " << out << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  CLI::App app{"Audio sentiment vectors: features, spectrograms, training and evaluation",
               "asvkit"};
  app.require_subcommand(1, 1);

  std::string manifest, features = "mfcc,spectral_centroid,chroma_stft,spectral_contrast",
                        out_path, wav, config, checkpoint, subset = "test", json_path,
                        utterance;
  std::size_t frames = dsp::kFeatureFrames, size = dsp::kImageSize;
  bool raw = false, no_model = false;
  unsigned jobs = 1;
  std::optional<std::uint64_t> seed;

  auto* extract = app.add_subcommand("extract", "Write per-utterance ASVF feature files");
  extract->add_option("--manifest", manifest, "Manifest CSV")->required();
  extract->add_option("--features", features, "Comma-separated feature names or 'all'");
  extract->add_option("--out", out_path, "Output directory")->required();
  extract->add_option("--frames", frames, "Frames per utterance")->check(CLI::PositiveNumber);
  extract->add_flag("--raw", raw, "Skip per-column standardization");
  extract->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* render = app.add_subcommand("render", "Write spectrogram images as PGM");
  render->add_option("--manifest", manifest, "Manifest CSV");
  render->add_option("--wav", wav, "Single WAV file");
  render->add_option("--out", out_path, "Output directory, or file with --wav")->required();
  render->add_option("--size", size, "Image side length")->check(CLI::Range(2, 8192));
  render->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the two-branch model");
  train_cmd->add_option("--manifest", train_args.manifest, "Manifest CSV")->required();
  train_cmd->add_option("--classes", train_args.classes, "2, 5 or 7");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--config", train_args.config, "key=value config file");
  train_cmd->add_option("--out", train_args.out, "Output directory");
  train_cmd->add_option("--epochs", train_args.epochs, "Override epochs");
  train_cmd->add_option("--lr", train_args.lr, "Override learning rate");
  train_cmd->add_option("--batch-size", train_args.batch_size, "Override batch size");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Report metrics for a checkpoint");
  evaluate_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  evaluate_cmd->add_option("--config", config, "Config the model is built from");
  evaluate_cmd->add_option("--subset", subset, "test, train or all")
      ->check(CLI::IsMember({"test", "train", "all"}));
  evaluate_cmd->add_option("--json", json_path, "Also write the JSON report here");

  auto* predict_cmd = app.add_subcommand("predict", "Classify one utterance");
  predict_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--wav", wav, "WAV file (no neighbours)");
  predict_cmd->add_option("--manifest", manifest, "Manifest CSV");
  predict_cmd->add_option("--utterance", utterance, "Utterance id within --manifest");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Feature-combination sweep of the utterance branch");
  sweep->add_option("--manifest", sweep_args.manifest, "Manifest CSV")->required();
  sweep->add_option("--out", sweep_args.out, "Ranked CSV table")->required();
  sweep->add_option("--ledger", sweep_args.ledger, "Resume ledger (default <out>.ledger.jsonl)");
  sweep->add_option("--config", sweep_args.config, "key=value config file");
  sweep->add_option("--sizes", sweep_args.sizes, "Subset sizes, e.g. 4 or 1-7");
  sweep->add_option("--models", sweep_args.models, "lstm, bilstm or both");
  sweep->add_option("--classes", sweep_args.classes, "Class counts, e.g. 2,5,7");
  sweep->add_option("--seed", sweep_args.seed, "Random seed");
  sweep->add_option("--epochs", sweep_args.epochs, "Override epochs");
  sweep->add_option("--jobs", sweep_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* export_cmd = app.add_subcommand("export-asv", "Write ASVs for every utterance");
  export_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  export_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  export_cmd->add_option("--out", out_path, "Output file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--seed", seed, "Random seed");
  gradcheck->add_flag("--no-model", no_model, "Skip the whole-model check");

  SyntheticOptions synth_options;
  auto* synth = app.add_subcommand("synth", "Write the synthetic tones dataset");
  synth->add_option("--out", out_path, "Output directory")->required();
  synth->add_option("--videos", synth_options.videos, "Number of videos")
      ->check(CLI::PositiveNumber);
  synth->add_option("--utterances", synth_options.utterances_per_video, "Per video")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seconds", synth_options.seconds, "Clip length")
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*extract) return cmd_extract(ctx, manifest, features, out_path, frames, raw, jobs);
    if (*render) return cmd_render(ctx, manifest, wav, out_path, size, jobs);
    if (*train_cmd) return cmd_train(ctx, train_args);
    if (*evaluate_cmd) {
      return cmd_evaluate(ctx, manifest, checkpoint, config, subset, json_path);
    }
    if (*predict_cmd) return cmd_predict(ctx, checkpoint, wav, manifest, utterance);
    if (*sweep) return cmd_sweep(ctx, sweep_args);
    if (*export_cmd) return cmd_export(ctx, manifest, checkpoint, out_path);
    if (*gradcheck) return cmd_gradcheck(ctx, resolve_seed(seed, {}), !no_model);
    if (*synth) {
      if (seed) synth_options.seed = *seed;
      return cmd_synth(ctx, out_path, synth_options);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == Errc::Usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace asv::cli
