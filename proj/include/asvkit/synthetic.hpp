#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "asvkit/audio_io.hpp"
#include "asvkit/rng.hpp"

namespace asv {

/// Deterministic tone dataset. Positive utterances sit in a high pitch
/// register with a rising envelope, negative ones in a low register with a
/// falling envelope; both carry harmonics and a little noise.
struct SyntheticOptions {
  std::size_t videos = 20;
  std::size_t utterances_per_video = 4;
  double seconds = 1.0;
  int sample_rate = kCanonicalSampleRate;
  std::uint64_t seed = 7;
};

AudioClip synthesize_utterance(bool positive, double seconds, int sample_rate, Rng& rng);

/// Writes `<dir>/wav/*.wav` and `<dir>/manifest.csv` and returns the
/// manifest as loaded back from disk.
Manifest write_synthetic_dataset(const std::string& dir,
                                 const SyntheticOptions& options = {});

}  // namespace asv
