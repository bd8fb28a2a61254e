#include "asvkit/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include "asvkit/error.hpp"
#include "asvkit/rng.hpp"

namespace asv {

AudioClip synthesize_utterance(bool positive, double seconds, int sample_rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  const double f0 = positive ? rng.uniform(700.0, 1400.0) : rng.uniform(110.0, 220.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double u = static_cast<double>(i) / static_cast<double>(n);
    const double envelope = positive ? 0.2 + 0.6 * u : 0.8 - 0.6 * u;
    double s = 0.0;
    for (int h = 1; h <= 3; ++h) {
      s += std::sin(2.0 * std::numbers::pi * f0 * h * t + phase) / h;
    }
    clip.samples[i] = 0.5 * envelope * s + 0.01 * rng.normal();
  }
  return clip;
}

Manifest write_synthetic_dataset(const std::string& dir, const SyntheticOptions& options) {
  if (options.videos == 0 || options.utterances_per_video == 0 || !(options.seconds > 0.0)) {
    fail(Errc::InvalidArgument, "synthetic dataset needs videos, utterances and duration");
  }
  namespace fs = std::filesystem;
  const fs::path root(dir);
  fs::create_directories(root / "wav");
  Rng rng(options.seed);
  std::vector<UtteranceRecord> records;
  for (std::size_t v = 0; v < options.videos; ++v) {
    char video[32];
    std::snprintf(video, sizeof video, "vid%02zu", v);
    for (std::size_t u = 0; u < options.utterances_per_video; ++u) {
      const bool positive = rng.uniform() < 0.5;
      const double magnitude = rng.uniform(0.5, 3.0);
      UtteranceRecord r;
      r.utterance_id = std::string(video) + "_u" + std::to_string(u);
      r.video_id = video;
      r.position = static_cast<int>(u);
      r.audio_path = "wav/" + r.utterance_id + ".wav";
      r.label_score = positive ? magnitude : -magnitude;
      auto clip = synthesize_utterance(positive, options.seconds, options.sample_rate, rng);
      write_wav((root / r.audio_path).string(), clip);
      records.push_back(std::move(r));
    }
  }
  const auto manifest_path = (root / "manifest.csv").string();
  write_manifest(manifest_path, make_manifest(std::move(records)));
  return load_manifest(manifest_path);
}

}  // namespace asv
