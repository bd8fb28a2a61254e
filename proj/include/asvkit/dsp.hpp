#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "asvkit/audio_io.hpp"
#include "asvkit/matrix.hpp"

namespace asv::dsp {

inline constexpr std::size_t kDefaultNfft = 2048;
inline constexpr std::size_t kDefaultHop = 512;
inline constexpr std::size_t kFeatureFrames = 256;
inline constexpr std::size_t kImageSize = 512;
inline constexpr std::size_t kImageMels = 128;
inline constexpr double kLogEps = 1e-10;

enum class Window { Hann, Rectangular };

/// Short-time magnitude spectrum, [n_bins x n_frames].
struct Spectrogram {
  Matrix magnitudes;
  std::vector<double> bin_freqs;
  std::vector<double> frame_times;
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  int sample_rate = 0;

  std::size_t n_bins() const { return magnitudes.rows(); }
  std::size_t n_frames() const { return magnitudes.cols(); }
};

/// F_mel = 2595 log10(1 + F_Hz / 700). Throws InvalidArgument for f < 0.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// In-place radix-2 FFT. `re.size()` must be a power of two.
void fft(std::span<double> re, std::span<double> im);

bool is_power_of_two(std::size_t n);

/// Centered STFT: the signal is reflect-padded by n_fft/2 on both sides and
/// frame j starts at j * hop of the padded signal, giving
/// 1 + floor(len / hop) frames.
Spectrogram stft(const AudioClip& clip, std::size_t n_fft = kDefaultNfft,
                 std::size_t hop = kDefaultHop, Window window = Window::Hann);

/// Periodic Hann or all-ones window of length n.
std::vector<double> make_window(std::size_t n, Window window);

/// Mel-spaced filter center frequencies in Hz (n_mels of them); the
/// triangles' outer edges are 0 Hz and sample_rate / 2.
std::vector<double> mel_filter_centers(std::size_t n_mels, int sample_rate);

/// Triangular filters [n_mels x (n_fft/2 + 1)] with peaks of height 1.
Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate);

/// Mel-band power: filterbank * |X|^2, [n_mels x n_frames].
Matrix mel_power(const Spectrogram& spec, std::size_t n_mels);

/// Orthonormal DCT-II of log(mel power + eps), first n_coeffs rows.
Matrix mfcc(const Spectrogram& spec, std::size_t n_mels = 40,
            std::size_t n_coeffs = 13);

/// Pitch class of a positive frequency, 0 = C ... 9 = A ... 11 = B.
int pitch_class(double hz);

/// Power folded into 12 pitch classes, each frame scaled to max 1.
Matrix chroma_stft(const Spectrogram& spec);

/// Chroma energy normalized statistics, [12 x n_frames].
Matrix chroma_cens(const Spectrogram& spec, std::size_t win = 41);

/// Frame-wise root mean square over centered, reflect-padded frames.
Matrix rmse(const AudioClip& clip, std::size_t frame = kDefaultNfft,
            std::size_t hop = kDefaultHop);

/// Magnitude-weighted mean frequency per frame; silent frames give 0.
Matrix spectral_centroid(const Spectrogram& spec);

/// Octave-band peak/valley log contrast, [(n_bands + 1) x n_frames].
/// Band 0 is [0, 200) Hz; band b > 0 is [200 * 2^(b-1), 200 * 2^b), and
/// the last band extends to Nyquist.
Matrix spectral_contrast(const Spectrogram& spec, std::size_t n_bands = 6,
                         double alpha = 0.02);

/// The 6 x 12 tonal centroid basis (fifths, minor thirds, major thirds).
const std::array<std::array<double, 12>, 6>& tonnetz_basis();

/// Projects L1-normalized chroma onto the tonal centroid basis.
Matrix tonnetz(const Matrix& chroma);

// ---------------------------------------------------------------------------
// Utterance-level feature assembly

enum class FeatureKind : std::uint8_t {
  ChromaStft,
  ChromaCens,
  Mfcc,
  Rmse,
  SpectralCentroid,
  SpectralContrast,
  Tonnetz,
};

inline constexpr std::size_t kFeatureKindCount = 7;
inline constexpr std::array<FeatureKind, kFeatureKindCount> kAllFeatureKinds = {
    FeatureKind::ChromaStft,       FeatureKind::ChromaCens,
    FeatureKind::Mfcc,             FeatureKind::Rmse,
    FeatureKind::SpectralCentroid, FeatureKind::SpectralContrast,
    FeatureKind::Tonnetz};

std::size_t row_count(FeatureKind kind);
std::string_view name(FeatureKind kind);
/// Accepts the snake names (`chroma_stft`, `spectral_centroid`, ...) and
/// the short aliases `centroid`, `contrast`, `rms`.
std::optional<FeatureKind> parse_feature_kind(std::string_view text);

/// Set of feature kinds kept in canonical enum order.
class FeatureSet {
 public:
  FeatureSet() = default;
  FeatureSet(std::initializer_list<FeatureKind> kinds);
  static FeatureSet from_mask(std::uint16_t mask);
  static FeatureSet all();
  /// MFCC, spectral centroid, chroma_stft and spectral contrast.
  static FeatureSet best_four();
  /// Names separated by commas or "+"; throws InvalidArgument on an unknown name.
  static FeatureSet parse(std::string_view csv);

  void insert(FeatureKind kind);
  bool contains(FeatureKind kind) const;
  bool empty() const { return mask_ == 0; }
  std::uint16_t mask() const { return mask_; }
  std::vector<FeatureKind> kinds() const;
  std::size_t width() const;
  std::string to_string() const;

  friend bool operator==(FeatureSet, FeatureSet) = default;

 private:
  std::uint16_t mask_ = 0;
};

/// [256 x width] frames-major feature matrix.
struct FeatureMatrix {
  Matrix values;
  FeatureSet kinds;
};

struct FeatureOptions {
  std::size_t n_fft = kDefaultNfft;
  std::size_t hop = kDefaultHop;
  std::size_t n_frames = kFeatureFrames;
  bool standardize = true;
};

/// Computes the requested kinds over one shared STFT, stacks them in
/// canonical order, transposes to frames-major, pads with zeros or
/// center-truncates to a fixed frame count, then standardizes each column.
FeatureMatrix extract_features(const AudioClip& clip, FeatureSet kinds,
                               const FeatureOptions& options = {});

/// Column subset of an unstandardized all-kinds matrix, optionally
/// standardized. Lets a sweep compute the STFT once per utterance.
FeatureMatrix select_features(const FeatureMatrix& all_kinds, FeatureSet kinds,
                              bool standardize = true);

/// Zero-mean, unit-variance columns; constant columns become 0.
void standardize_columns(Matrix& m);

/// Pads with zero rows or keeps the centered block of `rows` rows.
Matrix fit_rows(const Matrix& m, std::size_t rows);

// ---------------------------------------------------------------------------
// Spectrogram image for the convolutional branch

/// Single-channel image, pixels in [0, 1]. Row 0 is the highest mel band.
struct SpectrogramImage {
  Matrix pixels;
};

/// Bilinear resampling with half-pixel centers.
Matrix resize_bilinear(const Matrix& src, std::size_t rows, std::size_t cols);

/// 128-band mel log-power spectrogram, min-max normalized and resized to
/// size x size. A constant (e.g. silent) spectrogram gives an all-zero
/// image.
SpectrogramImage render_spectrogram_image(const AudioClip& clip,
                                          std::size_t size = kImageSize);

}  // namespace asv::dsp
