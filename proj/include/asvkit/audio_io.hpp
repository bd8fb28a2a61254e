#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace asv {

inline constexpr int kCanonicalSampleRate = 16000;

/// Mono signal for one utterance, samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;
  std::string utterance_id;
};

/// Reads a RIFF/WAVE file. Accepts PCM 8/16/24/32-bit integer and 32-bit
/// IEEE float, mono or stereo. Stereo is averaged to mono.
///
/// Throws asv::Error with FileNotFound, MalformedHeader or
/// UnsupportedEncoding.
AudioClip load_wav(const std::string& path);

/// Writes a mono 16-bit PCM WAV. Samples are clipped to [-1, 1] and mapped
/// with the same scale load_wav uses, so 16-bit content round-trips exactly.
void write_wav(const std::string& path, const AudioClip& clip);

/// Linear-interpolation resampling. Output length is
/// round(len * target / source); identity when the rates match.
AudioClip resample(const AudioClip& clip, int target_rate);

struct UtteranceRecord {
  std::string utterance_id;
  std::string video_id;
  int position = 0;
  std::string audio_path;
  double label_score = 0.0;
};

/// Dataset index. `records` keeps file order; `videos` maps each video id to
/// indices into `records`, sorted by position.
struct Manifest {
  std::vector<UtteranceRecord> records;
  std::map<std::string, std::vector<std::size_t>> videos;

  /// Index of the record with this id, or throws UnknownUtterance.
  std::size_t index_of(const std::string& utterance_id) const;
  const UtteranceRecord& at(const std::string& utterance_id) const;
};

/// Builds the grouped view and validates uniqueness, contiguity and score
/// range. Used by load_manifest and by code that assembles manifests in
/// memory.
Manifest make_manifest(std::vector<UtteranceRecord> records);

/// Parses a CSV manifest with header
/// `utterance_id,video_id,position,audio_path,label_score` (any column
/// order). Relative audio paths are resolved against the manifest's
/// directory.
Manifest load_manifest(const std::string& path);

void write_manifest(const std::string& path, const Manifest& manifest);

using ContextWindow = std::array<std::string, 3>;

/// One window per utterance, centered on it: (previous, self, next) within
/// the same video, repeating the boundary utterance at either end. Windows
/// are emitted per video in sorted video-id order, then by position.
std::vector<ContextWindow> context_windows(const Manifest& manifest);

/// The window centered on a single utterance.
ContextWindow context_window_for(const Manifest& manifest,
                                 const std::string& utterance_id);

}  // namespace asv
