#include "asvkit/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <tuple>

#include "asvkit/error.hpp"

namespace asv::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// numpy-style "reflect" indexing (edge sample not repeated), applied
// repeatedly for signals shorter than the pad.
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

std::vector<double> reflect_pad(std::span<const double> x, std::size_t pad) {
  std::vector<double> out(x.size() + 2 * pad);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[reflect_index(static_cast<std::ptrdiff_t>(i) -
                                 static_cast<std::ptrdiff_t>(pad),
                             x.size())];
  }
  return out;
}

void require_spectrogram(const Spectrogram& spec) {
  if (spec.n_bins() != spec.n_fft / 2 + 1 ||
      spec.bin_freqs.size() != spec.n_bins()) {
    fail(Errc::ShapeMismatch, "spectrogram bins do not match n_fft");
  }
}

}  // namespace

double hz_to_mel(double hz) {
  if (!(hz >= 0.0)) {
    fail(Errc::InvalidArgument, "hz_to_mel: frequency must be non-negative");
  }
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::span<double> re, std::span<double> im) {
  const std::size_t n = re.size();
  if (!is_power_of_two(n) || im.size() != n) {
    fail(Errc::InvalidArgument, "fft length must be a power of two");
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      // Twiddles computed directly rather than by recurrence keeps the
      // error at a few ulps for long transforms.
      const double wr = std::cos(ang * k);
      const double wi = std::sin(ang * k);
      for (std::size_t i = k; i < n; i += len) {
        const std::size_t j = i + half;
        const double xr = re[j] * wr - im[j] * wi;
        const double xi = re[j] * wi + im[j] * wr;
        re[j] = re[i] - xr;
        im[j] = im[i] - xi;
        re[i] += xr;
        im[i] += xi;
      }
    }
  }
}

std::vector<double> make_window(std::size_t n, Window window) {
  std::vector<double> w(n, 1.0);
  if (window == Window::Hann) {
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / static_cast<double>(n));
    }
  }
  return w;
}

Spectrogram stft(const AudioClip& clip, std::size_t n_fft, std::size_t hop,
                 Window window) {
  if (!is_power_of_two(n_fft)) {
    fail(Errc::InvalidArgument, "stft: n_fft must be a power of two");
  }
  if (hop == 0 || hop > n_fft) {
    fail(Errc::InvalidArgument, "stft: hop must be in [1, n_fft]");
  }
  if (clip.samples.empty()) fail(Errc::InvalidArgument, "stft: empty clip");

  const auto padded = reflect_pad(clip.samples, n_fft / 2);
  const std::size_t n_frames = 1 + clip.samples.size() / hop;
  const std::size_t n_bins = n_fft / 2 + 1;
  const auto w = make_window(n_fft, window);

  Spectrogram spec;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.sample_rate = clip.sample_rate;
  spec.magnitudes = Matrix(n_bins, n_frames);
  spec.bin_freqs.resize(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    spec.bin_freqs[k] = static_cast<double>(k) * clip.sample_rate / n_fft;
  }
  spec.frame_times.resize(n_frames);

  std::vector<double> re(n_fft), im(n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    spec.frame_times[t] = static_cast<double>(t * hop) / clip.sample_rate;
    const double* frame = padded.data() + t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) {
      re[i] = frame[i] * w[i];
      im[i] = 0.0;
    }
    fft(re, im);
    for (std::size_t k = 0; k < n_bins; ++k) {
      spec.magnitudes(k, t) = std::hypot(re[k], im[k]);
    }
  }
  return spec;
}

std::vector<double> mel_filter_centers(std::size_t n_mels, int sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) {
    centers[m] = mel_to_hz(top * static_cast<double>(m + 1) /
                           static_cast<double>(n_mels + 1));
  }
  return centers;
}

Matrix mel_filterbank(std::size_t n_mels, std::size_t n_fft, int sample_rate) {
  if (n_mels < 2) fail(Errc::InvalidArgument, "mel_filterbank: n_mels < 2");
  if (sample_rate <= 0 || n_fft < 2) {
    fail(Errc::InvalidArgument, "mel_filterbank: bad rate or n_fft");
  }
  const std::size_t n_bins = n_fft / 2 + 1;
  std::vector<double> edges(n_mels + 2);
  edges.front() = 0.0;
  edges.back() = sample_rate / 2.0;
  const auto centers = mel_filter_centers(n_mels, sample_rate);
  std::copy(centers.begin(), centers.end(), edges.begin() + 1);

  Matrix fb(n_mels, n_bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

Matrix mel_power(const Spectrogram& spec, std::size_t n_mels) {
  require_spectrogram(spec);
  const auto fb = mel_filterbank(n_mels, spec.n_fft, spec.sample_rate);
  Matrix out(n_mels, spec.n_frames());
  for (std::size_t m = 0; m < n_mels; ++m) {
    for (std::size_t k = 0; k < spec.n_bins(); ++k) {
      const double w = fb(m, k);
      if (w == 0.0) continue;
      for (std::size_t t = 0; t < spec.n_frames(); ++t) {
        const double a = spec.magnitudes(k, t);
        out(m, t) += w * a * a;
      }
    }
  }
  return out;
}

Matrix mfcc(const Spectrogram& spec, std::size_t n_mels,
            std::size_t n_coeffs) {
  if (n_coeffs > n_mels) {
    fail(Errc::InvalidArgument, "mfcc: more coefficients than mel bands");
  }
  Matrix logmel = mel_power(spec, n_mels);
  for (double& v : logmel.data()) v = std::log(v + kLogEps);

  Matrix out(n_coeffs, spec.n_frames());
  const double n = static_cast<double>(n_mels);
  for (std::size_t c = 0; c < n_coeffs; ++c) {
    const double scale = c == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double basis = scale * std::cos(kPi * c * (2.0 * m + 1.0) / (2.0 * n));
      for (std::size_t t = 0; t < spec.n_frames(); ++t) {
        out(c, t) += basis * logmel(m, t);
      }
    }
  }
  return out;
}

int pitch_class(double hz) {
  const double semis = std::round(12.0 * std::log2(hz / 440.0));
  const int cls = (static_cast<int>(semis) + 9) % 12;
  return cls < 0 ? cls + 12 : cls;
}

Matrix chroma_stft(const Spectrogram& spec) {
  require_spectrogram(spec);
  Matrix chroma(12, spec.n_frames());
  for (std::size_t k = 1; k < spec.n_bins(); ++k) {
    const int cls = pitch_class(spec.bin_freqs[k]);
    for (std::size_t t = 0; t < spec.n_frames(); ++t) {
      const double a = spec.magnitudes(k, t);
      chroma(cls, t) += a * a;
    }
  }
  for (std::size_t t = 0; t < spec.n_frames(); ++t) {
    double peak = 0.0;
    for (std::size_t c = 0; c < 12; ++c) peak = std::max(peak, chroma(c, t));
    if (peak <= 0.0) continue;
    for (std::size_t c = 0; c < 12; ++c) chroma(c, t) /= peak;
  }
  return chroma;
}

Matrix chroma_cens(const Spectrogram& spec, std::size_t win) {
  if (win == 0) fail(Errc::InvalidArgument, "chroma_cens: win must be >= 1");
  Matrix chroma = chroma_stft(spec);
  const std::size_t n = chroma.cols();

  static constexpr std::array<double, 4> kThresholds = {0.4, 0.2, 0.1, 0.05};
  for (std::size_t t = 0; t < n; ++t) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < 12; ++c) l1 += chroma(c, t);
    for (std::size_t c = 0; c < 12; ++c) {
      const double v = l1 > 0.0 ? chroma(c, t) / l1 : 0.0;
      double q = 0.0;
      for (double th : kThresholds) q += v > th ? 0.25 : 0.0;
      chroma(c, t) = q;
    }
  }

  Matrix smooth(12, n);
  const std::size_t half = win / 2;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(n - 1, t + half);
    const double count = static_cast<double>(hi - lo + 1);
    for (std::size_t c = 0; c < 12; ++c) {
      double acc = 0.0;
      for (std::size_t s = lo; s <= hi; ++s) acc += chroma(c, s);
      smooth(c, t) = acc / count;
    }
  }

  for (std::size_t t = 0; t < n; ++t) {
    double l2 = 0.0;
    for (std::size_t c = 0; c < 12; ++c) l2 += smooth(c, t) * smooth(c, t);
    if (l2 <= 0.0) continue;
    l2 = std::sqrt(l2);
    for (std::size_t c = 0; c < 12; ++c) smooth(c, t) /= l2;
  }
  return smooth;
}

Matrix rmse(const AudioClip& clip, std::size_t frame, std::size_t hop) {
  if (frame == 0 || hop == 0) {
    fail(Errc::InvalidArgument, "rmse: frame and hop must be positive");
  }
  if (clip.samples.empty()) fail(Errc::InvalidArgument, "rmse: empty clip");
  const auto padded = reflect_pad(clip.samples, frame / 2);
  const std::size_t n_frames = 1 + clip.samples.size() / hop;
  Matrix out(1, n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      const double v = padded[t * hop + i];
      acc += v * v;
    }
    out(0, t) = std::sqrt(acc / static_cast<double>(frame));
  }
  return out;
}

Matrix spectral_centroid(const Spectrogram& spec) {
  require_spectrogram(spec);
  Matrix out(1, spec.n_frames());
  for (std::size_t t = 0; t < spec.n_frames(); ++t) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < spec.n_bins(); ++k) {
      num += spec.bin_freqs[k] * spec.magnitudes(k, t);
      den += spec.magnitudes(k, t);
    }
    out(0, t) = den > 0.0 ? num / den : 0.0;
  }
  return out;
}

Matrix spectral_contrast(const Spectrogram& spec, std::size_t n_bands,
                         double alpha) {
  require_spectrogram(spec);
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    fail(Errc::InvalidArgument, "spectral_contrast: alpha must be in (0, 1]");
  }
  // Band b covers [edges[b], edges[b+1]); the last band is closed at Nyquist.
  std::vector<double> edges(n_bands + 2);
  edges[0] = 0.0;
  for (std::size_t b = 1; b <= n_bands; ++b) {
    edges[b] = 200.0 * std::pow(2.0, static_cast<double>(b - 1));
  }
  edges[n_bands + 1] = std::numeric_limits<double>::infinity();

  Matrix out(n_bands + 1, spec.n_frames());
  std::vector<double> band;
  for (std::size_t b = 0; b <= n_bands; ++b) {
    std::vector<std::size_t> bins;
    for (std::size_t k = 0; k < spec.n_bins(); ++k) {
      const double f = spec.bin_freqs[k];
      if (f >= edges[b] && f < edges[b + 1]) bins.push_back(k);
    }
    if (bins.empty()) continue;
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(alpha * bins.size())));
    for (std::size_t t = 0; t < spec.n_frames(); ++t) {
      band.clear();
      for (std::size_t k : bins) band.push_back(spec.magnitudes(k, t));
      std::sort(band.begin(), band.end());
      const double valley =
          std::accumulate(band.begin(), band.begin() + take, 0.0) / take;
      const double peak =
          std::accumulate(band.end() - take, band.end(), 0.0) / take;
      out(b, t) = std::log(peak + kLogEps) - std::log(valley + kLogEps);
    }
  }
  return out;
}

const std::array<std::array<double, 12>, 6>& tonnetz_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 12>, 6> phi{};
    constexpr std::array<double, 3> kStep = {7.0 / 6.0, 3.0 / 2.0, 2.0 / 3.0};
    constexpr std::array<double, 3> kRadius = {1.0, 1.0, 0.5};
    for (std::size_t circle = 0; circle < 3; ++circle) {
      for (std::size_t k = 0; k < 12; ++k) {
        const double angle = kPi * kStep[circle] * static_cast<double>(k);
        phi[2 * circle][k] = kRadius[circle] * std::sin(angle);
        phi[2 * circle + 1][k] = kRadius[circle] * std::cos(angle);
      }
    }
    return phi;
  }();
  return basis;
}

Matrix tonnetz(const Matrix& chroma) {
  if (chroma.rows() != 12) fail(Errc::ShapeMismatch, "tonnetz: need 12 rows");
  const auto& phi = tonnetz_basis();
  Matrix out(6, chroma.cols());
  for (std::size_t t = 0; t < chroma.cols(); ++t) {
    double l1 = 0.0;
    for (std::size_t c = 0; c < 12; ++c) {
      if (chroma(c, t) < 0.0) {
        fail(Errc::InvalidArgument, "tonnetz: chroma must be non-negative");
      }
      l1 += chroma(c, t);
    }
    if (l1 <= 0.0) continue;
    for (std::size_t d = 0; d < 6; ++d) {
      double acc = 0.0;
      for (std::size_t c = 0; c < 12; ++c) acc += phi[d][c] * chroma(c, t);
      out(d, t) = acc / l1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t row_count(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::ChromaStft: return 12;
    case FeatureKind::ChromaCens: return 12;
    case FeatureKind::Mfcc: return 13;
    case FeatureKind::Rmse: return 1;
    case FeatureKind::SpectralCentroid: return 1;
    case FeatureKind::SpectralContrast: return 7;
    case FeatureKind::Tonnetz: return 6;
  }
  return 0;
}

std::string_view name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::ChromaStft: return "chroma_stft";
    case FeatureKind::ChromaCens: return "chroma_cens";
    case FeatureKind::Mfcc: return "mfcc";
    case FeatureKind::Rmse: return "rmse";
    case FeatureKind::SpectralCentroid: return "spectral_centroid";
    case FeatureKind::SpectralContrast: return "spectral_contrast";
    case FeatureKind::Tonnetz: return "tonnetz";
  }
  return "?";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view text) {
  for (auto kind : kAllFeatureKinds) {
    if (text == name(kind)) return kind;
  }
  if (text == "centroid") return FeatureKind::SpectralCentroid;
  if (text == "contrast") return FeatureKind::SpectralContrast;
  if (text == "rms") return FeatureKind::Rmse;
  return std::nullopt;
}

FeatureSet::FeatureSet(std::initializer_list<FeatureKind> kinds) {
  for (auto k : kinds) insert(k);
}

FeatureSet FeatureSet::from_mask(std::uint16_t mask) {
  FeatureSet s;
  s.mask_ = mask & ((1u << kFeatureKindCount) - 1);
  return s;
}

FeatureSet FeatureSet::all() {
  return from_mask((1u << kFeatureKindCount) - 1);
}

FeatureSet FeatureSet::best_four() {
  return {FeatureKind::Mfcc, FeatureKind::SpectralCentroid,
          FeatureKind::ChromaStft, FeatureKind::SpectralContrast};
}

FeatureSet FeatureSet::parse(std::string_view csv) {
  FeatureSet s;
  while (!csv.empty()) {
    const auto comma = csv.find_first_of(",+");
    auto token = csv.substr(0, comma);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      if (token == "all") return all();
      auto kind = parse_feature_kind(token);
      if (!kind) {
        fail(Errc::InvalidArgument,
             "unknown feature '" + std::string(token) + "'");
      }
      s.insert(*kind);
    }
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return s;
}

void FeatureSet::insert(FeatureKind kind) {
  mask_ |= static_cast<std::uint16_t>(1u << static_cast<unsigned>(kind));
}

bool FeatureSet::contains(FeatureKind kind) const {
  return (mask_ >> static_cast<unsigned>(kind)) & 1u;
}

std::vector<FeatureKind> FeatureSet::kinds() const {
  std::vector<FeatureKind> out;
  for (auto k : kAllFeatureKinds) {
    if (contains(k)) out.push_back(k);
  }
  return out;
}

std::size_t FeatureSet::width() const {
  std::size_t w = 0;
  for (auto k : kinds()) w += row_count(k);
  return w;
}

std::string FeatureSet::to_string() const {
  std::string out;
  for (auto k : kinds()) {
    if (!out.empty()) out += '+';
    out += name(k);
  }
  return out;
}

void standardize_columns(Matrix& m) {
  const std::size_t n = m.rows();
  if (n == 0) return;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double lo = m(0, c), hi = m(0, c), mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      lo = std::min(lo, m(r, c));
      hi = std::max(hi, m(r, c));
      mean += m(r, c);
    }
    if (lo == hi) {
      for (std::size_t r = 0; r < n; ++r) m(r, c) = 0.0;
      continue;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = m(r, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (std::size_t r = 0; r < n; ++r) m(r, c) = (m(r, c) - mean) / sd;
  }
}

Matrix fit_rows(const Matrix& m, std::size_t rows) {
  Matrix out(rows, m.cols());
  const std::size_t keep = std::min(rows, m.rows());
  const std::size_t offset = m.rows() > rows ? (m.rows() - rows) / 2 : 0;
  for (std::size_t r = 0; r < keep; ++r) {
    std::copy(m.row(offset + r).begin(), m.row(offset + r).end(),
              out.row(r).begin());
  }
  return out;
}

namespace {

Matrix kind_rows(FeatureKind kind, const AudioClip& clip,
                 const Spectrogram& spec, const Matrix& chroma) {
  switch (kind) {
    case FeatureKind::ChromaStft: return chroma;
    case FeatureKind::ChromaCens: return chroma_cens(spec);
    case FeatureKind::Mfcc: return mfcc(spec);
    case FeatureKind::Rmse: return rmse(clip, spec.n_fft, spec.hop);
    case FeatureKind::SpectralCentroid: return spectral_centroid(spec);
    case FeatureKind::SpectralContrast: return spectral_contrast(spec);
    case FeatureKind::Tonnetz: return tonnetz(chroma);
  }
  return {};
}

}  // namespace

FeatureMatrix extract_features(const AudioClip& clip, FeatureSet kinds,
                               const FeatureOptions& options) {
  if (kinds.empty()) {
    fail(Errc::InvalidArgument, "extract_features: empty feature set");
  }
  const auto spec = stft(clip, options.n_fft, options.hop);
  Matrix chroma;
  if (kinds.contains(FeatureKind::ChromaStft) ||
      kinds.contains(FeatureKind::Tonnetz)) {
    chroma = chroma_stft(spec);
  }

  Matrix stacked(kinds.width(), spec.n_frames());
  std::size_t row = 0;
  for (auto kind : kinds.kinds()) {
    const Matrix part = kind_rows(kind, clip, spec, chroma);
    for (std::size_t r = 0; r < part.rows(); ++r, ++row) {
      std::copy(part.row(r).begin(), part.row(r).end(),
                stacked.row(row).begin());
    }
  }

  FeatureMatrix fm{fit_rows(stacked.transposed(), options.n_frames), kinds};
  if (options.standardize) standardize_columns(fm.values);
  return fm;
}

FeatureMatrix select_features(const FeatureMatrix& all_kinds, FeatureSet kinds,
                              bool standardize) {
  if (kinds.empty()) {
    fail(Errc::InvalidArgument, "select_features: empty feature set");
  }
  std::vector<std::size_t> cols;
  std::size_t offset = 0;
  for (auto kind : all_kinds.kinds.kinds()) {
    const std::size_t n = row_count(kind);
    if (kinds.contains(kind)) {
      for (std::size_t i = 0; i < n; ++i) cols.push_back(offset + i);
    }
    offset += n;
  }
  if (offset != all_kinds.values.cols() || cols.size() != kinds.width()) {
    fail(Errc::ShapeMismatch, "select_features: source lacks requested kinds");
  }
  FeatureMatrix out{Matrix(all_kinds.values.rows(), cols.size()), kinds};
  for (std::size_t r = 0; r < out.values.rows(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out.values(r, c) = all_kinds.values(r, cols[c]);
    }
  }
  if (standardize) standardize_columns(out.values);
  return out;
}

Matrix resize_bilinear(const Matrix& src, std::size_t rows, std::size_t cols) {
  if (src.empty()) fail(Errc::InvalidArgument, "resize_bilinear: empty image");
  Matrix out(rows, cols);
  auto axis = [](std::size_t dst, std::size_t n_dst, std::size_t n_src) {
    const double scale = static_cast<double>(n_src) / n_dst;
    double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(n_src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, n_src - 1);
    return std::tuple{lo, hi, s - static_cast<double>(lo)};
  };
  for (std::size_t y = 0; y < rows; ++y) {
    const auto [y0, y1, fy] = axis(y, rows, src.rows());
    for (std::size_t x = 0; x < cols; ++x) {
      const auto [x0, x1, fx] = axis(x, cols, src.cols());
      const double top = src(y0, x0) + fx * (src(y0, x1) - src(y0, x0));
      const double bottom = src(y1, x0) + fx * (src(y1, x1) - src(y1, x0));
      out(y, x) = top + fy * (bottom - top);
    }
  }
  return out;
}

SpectrogramImage render_spectrogram_image(const AudioClip& clip,
                                          std::size_t size) {
  if (clip.samples.empty()) {
    fail(Errc::InvalidArgument, "render_spectrogram_image: empty clip");
  }
  if (size == 0) fail(Errc::InvalidArgument, "image size must be positive");
  const auto spec = stft(clip);
  const Matrix power = mel_power(spec, kImageMels);

  Matrix db(power.rows(), power.cols());
  for (std::size_t m = 0; m < power.rows(); ++m) {
    for (std::size_t t = 0; t < power.cols(); ++t) {
      db(power.rows() - 1 - m, t) =
          10.0 * std::log10(std::max(power(m, t), kLogEps));
    }
  }
  // Normalize after resizing so the extremes land exactly on 0 and 1.
  SpectrogramImage image{resize_bilinear(db, size, size)};
  auto& px = image.pixels.data();
  const auto [lo_it, hi_it] = std::minmax_element(px.begin(), px.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi <= lo) {
    std::fill(px.begin(), px.end(), 0.0);
    return image;
  }
  for (double& v : px) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return image;
}

}  // namespace asv::dsp
