#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "asvkit/dsp.hpp"
#include "asvkit/error.hpp"
#include "asvkit/feature_file.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace asv;
using namespace asv::dsp;
using testing_support::silence;
using testing_support::tone;

namespace {

AudioClip random_clip(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AudioClip clip;
  clip.samples.resize(n);
  for (auto& v : clip.samples) v = u(gen);
  return clip;
}

Spectrogram flat_spectrogram(std::size_t frames, double value) {
  Spectrogram spec;
  spec.n_fft = 2048;
  spec.hop = 512;
  spec.sample_rate = 16000;
  spec.magnitudes = Matrix(spec.n_fft / 2 + 1, frames, value);
  for (std::size_t k = 0; k < spec.n_fft / 2 + 1; ++k) {
    spec.bin_freqs.push_back(static_cast<double>(k) * 16000.0 / 2048.0);
  }
  for (std::size_t t = 0; t < frames; ++t) spec.frame_times.push_back(t * 512.0 / 16000.0);
  return spec;
}

bool all_zero(const Matrix& m) {
  return std::all_of(m.data().begin(), m.data().end(), [](double v) { return v == 0.0; });
}

}  // namespace

TEST(HzToMel, KnownValues) {
  EXPECT_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 781.1728, 1e-4);
  EXPECT_NEAR(hz_to_mel(1000.0), 999.99, 0.01);
  EXPECT_THROW(hz_to_mel(-1.0), Error);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(HzToMel, StrictlyIncreasing) {
  double prev = hz_to_mel(0.0);
  for (double f = 0.5; f < 24000.0; f += 0.5) {
    const double m = hz_to_mel(f);
    ASSERT_GT(m, prev);
    prev = m;
  }
}

TEST(Stft, ZeroClip) {
  const auto spec = stft(silence(3000));
  EXPECT_EQ(spec.n_frames(), 1u + 3000u / 512u);
  EXPECT_EQ(spec.n_bins(), 1025u);
  EXPECT_TRUE(all_zero(spec.magnitudes));
}

TEST(Stft, RectangularCosineHitsOneBin) {
  const std::size_t n_fft = 256, k = 12;
  AudioClip clip;
  for (std::size_t i = 0; i < 4096; ++i) {
    clip.samples.push_back(std::cos(2.0 * std::numbers::pi * k * i / n_fft));
  }
  const auto spec = stft(clip, n_fft, 64, Window::Rectangular);
  for (std::size_t t = 4; t + 4 < spec.n_frames(); ++t) {
    EXPECT_NEAR(spec.magnitudes(k, t), n_fft / 2.0, 1e-9);
    for (std::size_t b = 0; b < spec.n_bins(); ++b) {
      if (b != k) ASSERT_LT(spec.magnitudes(b, t), 1e-9) << "bin " << b << " frame " << t;
    }
  }
}

TEST(Stft, MatchesNaiveDft) {
  for (unsigned seed = 0; seed < 6; ++seed) {
    const std::size_t n_fft = std::size_t{64} << (seed % 4);
    const auto clip = random_clip(300 + 500 * seed, seed);
    const auto spec = stft(clip, n_fft, n_fft / 4);
    const auto want = oracle::stft_magnitudes(clip.samples, n_fft, n_fft / 4);
    ASSERT_EQ(spec.magnitudes.rows(), want.rows());
    ASSERT_EQ(spec.magnitudes.cols(), want.cols());
    EXPECT_LT(oracle::frobenius_rel_error(spec.magnitudes, want), 1e-9);
  }
}

TEST(Stft, RejectsBadFftSize) {
  EXPECT_THROW(stft(silence(100), 1000, 250), Error);
  EXPECT_THROW(stft(silence(100), 256, 512), Error);
}

TEST(MelFilterbank, RowsPositiveAndOverlapping) {
  const auto fb = mel_filterbank(40, 2048, 16000);
  ASSERT_EQ(fb.rows(), 40u);
  ASSERT_EQ(fb.cols(), 1025u);
  for (std::size_t m = 0; m < fb.rows(); ++m) {
    double sum = 0.0;
    for (double v : fb.row(m)) {
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_GT(sum, 0.0);
  }
  for (std::size_t m = 0; m + 1 < fb.rows(); ++m) {
    bool overlap = false;
    for (std::size_t k = 0; k < fb.cols(); ++k) overlap |= fb(m, k) > 0 && fb(m + 1, k) > 0;
    EXPECT_TRUE(overlap) << m;
  }
  EXPECT_THROW(mel_filterbank(1, 2048, 16000), Error);
}

TEST(MelFilterbank, CentersEquallySpacedInMel) {
  const auto centers = mel_filter_centers(40, 16000);
  ASSERT_EQ(centers.size(), 40u);
  const double step = hz_to_mel(centers[0]);
  for (std::size_t i = 1; i < centers.size(); ++i) {
    EXPECT_NEAR(hz_to_mel(centers[i]) - hz_to_mel(centers[i - 1]), step, 1e-9);
  }
  EXPECT_NEAR(hz_to_mel(8000.0) - hz_to_mel(centers.back()), step, 1e-9);
}

TEST(MelFilterbank, TwoTrianglesAtTinyFft) {
  // n_fft = 8 at 8 kHz: bins at 0, 1000, 2000, 3000, 4000 Hz.
  const double top = 2595.0 * std::log10(1.0 + 4000.0 / 700.0);
  const double c1 = 700.0 * (std::pow(10.0, top / 3.0 / 2595.0) - 1.0);
  const double c2 = 700.0 * (std::pow(10.0, 2.0 * top / 3.0 / 2595.0) - 1.0);
  const double bins[5] = {0, 1000, 2000, 3000, 4000};
  double want[2][5] = {};
  for (int k = 0; k < 5; ++k) {
    const double f = bins[k];
    if (f > 0 && f <= c1) want[0][k] = f / c1;
    if (f > c1 && f < c2) want[0][k] = (c2 - f) / (c2 - c1);
    if (f > c1 && f <= c2) want[1][k] = (f - c1) / (c2 - c1);
    if (f > c2 && f < 4000) want[1][k] = (4000 - f) / (4000 - c2);
  }
  const auto fb = mel_filterbank(2, 8, 8000);
  ASSERT_EQ(fb.cols(), 5u);
  for (int m = 0; m < 2; ++m)
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(fb(m, k), want[m][k], 1e-12) << m << "," << k;
}

TEST(MelFilterbank, MatchesOracleConstruction) {
  const auto fb = mel_filterbank(40, 512, 16000);
  const auto want = oracle::mel_bank(40, 512, 16000);
  EXPECT_LT(oracle::frobenius_rel_error(fb, want), 1e-12);
}

TEST(Mfcc, IdenticalFramesIdenticalColumns) {
  auto spec = flat_spectrogram(2, 0.0);
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (std::size_t k = 0; k < spec.n_bins(); ++k) {
    spec.magnitudes(k, 0) = spec.magnitudes(k, 1) = u(gen);
  }
  const auto c = mfcc(spec);
  ASSERT_EQ(c.rows(), 13u);
  for (std::size_t i = 0; i < 13; ++i) EXPECT_EQ(c(i, 0), c(i, 1));
}

TEST(Mfcc, GainOnlyMovesCoefficientZero) {
  const auto clip = random_clip(8000, 11);
  auto loud = clip;
  for (auto& v : loud.samples) v *= 7.5;
  const auto a = mfcc(stft(clip));
  const auto b = mfcc(stft(loud));
  bool c0_moved = false;
  for (std::size_t t = 0; t < a.cols(); ++t) {
    c0_moved |= std::abs(a(0, t) - b(0, t)) > 1.0;
    for (std::size_t i = 1; i < 13; ++i) ASSERT_NEAR(a(i, t), b(i, t), 1e-8);
  }
  EXPECT_TRUE(c0_moved);
}

TEST(Mfcc, MatchesComposedOracle) {
  const auto clip = random_clip(2000, 5);
  const auto got = mfcc(stft(clip, 256, 64));
  const auto want = oracle::mfcc(clip.samples, 16000, 256, 64, 40, 13);
  EXPECT_LT(oracle::frobenius_rel_error(got, want), 1e-8);
}

TEST(Mfcc, OrthonormalDctAgainstMirroredDft) {
  // A constant log-mel vector has energy only in coefficient 0.
  const auto c = oracle::dct2_ortho(std::vector<double>(40, 2.0));
  EXPECT_NEAR(c[0], 2.0 * std::sqrt(40.0), 1e-12);
  for (std::size_t k = 1; k < c.size(); ++k) EXPECT_NEAR(c[k], 0.0, 1e-12);
}

TEST(Chroma, PitchClassOfA) {
  EXPECT_EQ(pitch_class(440.0), 9);
  EXPECT_EQ(pitch_class(880.0), 9);
  EXPECT_EQ(pitch_class(261.63), 0);
}

TEST(Chroma, ToneAtA440) {
  const auto chroma = chroma_stft(stft(tone(440.0, 1.0)));
  for (std::size_t t = 0; t < chroma.cols(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 12; ++c) {
      if (chroma(c, t) > chroma(best, t)) best = c;
    }
    EXPECT_EQ(best, 9u) << "frame " << t;
    EXPECT_DOUBLE_EQ(chroma(9, t), 1.0);
  }
}

TEST(Chroma, OctaveEquivalence) {
  auto clip = tone(440.0, 1.0, 16000, 0.5);
  const auto upper = tone(880.0, 1.0, 16000, 0.5);
  for (std::size_t i = 0; i < clip.samples.size(); ++i) clip.samples[i] += upper.samples[i];
  const auto chroma = chroma_stft(stft(clip));
  for (std::size_t t = 0; t < chroma.cols(); ++t) EXPECT_DOUBLE_EQ(chroma(9, t), 1.0);
}

TEST(Chroma, SilenceIsZero) {
  EXPECT_TRUE(all_zero(chroma_stft(stft(silence(8000)))));
  EXPECT_TRUE(all_zero(chroma_cens(stft(silence(8000)))));
}

TEST(ChromaCens, UnitNormColumns) {
  const auto cens = chroma_cens(stft(random_clip(16000, 2)));
  for (std::size_t t = 0; t < cens.cols(); ++t) {
    double l2 = 0.0;
    for (std::size_t c = 0; c < 12; ++c) l2 += cens(c, t) * cens(c, t);
    if (l2 > 0) EXPECT_NEAR(std::sqrt(l2), 1.0, 1e-9);
  }
}

TEST(ChromaCens, ConstantToneConstantColumns) {
  // Interior: the whole 41-frame smoothing span sees full-window frames.
  const auto cens = chroma_cens(stft(tone(440.0, 3.0)));
  const std::size_t first = 2 + 20, last = cens.cols() - 3 - 20;
  ASSERT_LT(first, last);
  for (std::size_t t = first; t <= last; ++t) {
    for (std::size_t c = 0; c < 12; ++c) EXPECT_NEAR(cens(c, t), cens(c, first), 1e-9);
  }
}

TEST(Rmse, Basics) {
  EXPECT_TRUE(all_zero(rmse(silence(4000))));
  AudioClip flat;
  flat.samples.assign(4000, -0.3);
  const auto r_flat = rmse(flat);
  for (double v : r_flat.data()) EXPECT_NEAR(v, 0.3, 1e-12);
  // 250 Hz completes 32 cycles in a 2048-sample frame.
  const auto r = rmse(tone(250.0, 1.0, 16000, 0.8));
  for (std::size_t t = 0; t < r.cols(); ++t) EXPECT_NEAR(r(0, t), 0.8 / std::sqrt(2.0), 1e-3);
}

TEST(SpectralCentroid, PureTone) {
  const auto spec = stft(tone(1000.0, 1.0));
  const auto c = spectral_centroid(spec);
  const double bin_width = 16000.0 / 2048.0;
  for (std::size_t t = 2; t + 3 < c.cols(); ++t) EXPECT_NEAR(c(0, t), 1000.0, bin_width);
}

TEST(SpectralCentroid, FlatSpectrumAndSilence) {
  const auto spec = flat_spectrogram(3, 0.25);
  double mean = 0.0;
  for (double f : spec.bin_freqs) mean += f;
  mean /= static_cast<double>(spec.bin_freqs.size());
  const auto c = spectral_centroid(spec);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(c(0, t), mean, 1e-9);
  EXPECT_TRUE(all_zero(spectral_centroid(flat_spectrogram(2, 0.0))));
}

TEST(SpectralContrast, FlatAndZero) {
  const auto flat = spectral_contrast(flat_spectrogram(2, 0.7));
  ASSERT_EQ(flat.rows(), 7u);
  for (double v : flat.data()) EXPECT_NEAR(v, 0.0, 1e-6);
  EXPECT_TRUE(all_zero(spectral_contrast(flat_spectrogram(2, 0.0))));
}

TEST(SpectralContrast, DominantPeakIsPositive) {
  auto spec = flat_spectrogram(1, 0.01);
  const double edges[8] = {0, 200, 400, 800, 1600, 3200, 6400, 8001};
  for (int b = 0; b < 7; ++b) {
    const double mid = 0.5 * (edges[b] + edges[b + 1]);
    spec.magnitudes(static_cast<std::size_t>(mid / (16000.0 / 2048.0)), 0) = 5.0;
  }
  const auto c = spectral_contrast(spec);
  for (std::size_t b = 0; b < 7; ++b) EXPECT_GT(c(b, 0), 0.0) << "band " << b;
}

TEST(Tonnetz, ZeroAndOneHot) {
  EXPECT_TRUE(all_zero(tonnetz(Matrix(12, 3))));
  const auto& basis = tonnetz_basis();
  for (std::size_t k = 0; k < 12; ++k) {
    Matrix chroma(12, 1);
    chroma(k, 0) = 3.0;
    const auto out = tonnetz(chroma);
    for (std::size_t d = 0; d < 6; ++d) EXPECT_NEAR(out(d, 0), basis[d][k], 1e-15);
  }
  // Circle radii: fifths and minor thirds 1, major thirds 0.5.
  EXPECT_NEAR(std::hypot(basis[0][5], basis[1][5]), 1.0, 1e-12);
  EXPECT_NEAR(std::hypot(basis[2][5], basis[3][5]), 1.0, 1e-12);
  EXPECT_NEAR(std::hypot(basis[4][5], basis[5][5]), 0.5, 1e-12);
}

TEST(Tonnetz, RepeatableOnSameChroma) {
  Matrix chroma(12, 2);
  for (std::size_t c = 0; c < 12; ++c) chroma(c, 0) = chroma(c, 1) = c * 0.1;
  const auto out = tonnetz(chroma);
  for (std::size_t d = 0; d < 6; ++d) EXPECT_EQ(out(d, 0), out(d, 1));
}

TEST(FeatureSet, ParseAndPrint) {
  EXPECT_EQ(FeatureSet::best_four().width(), 33u);
  EXPECT_EQ(FeatureSet::all().width(), 52u);
  const auto set = FeatureSet::parse("mfcc,centroid");
  EXPECT_EQ(FeatureSet::parse(set.to_string()), set);
  EXPECT_THROW(FeatureSet::parse("mfcc,loudness"), Error);
}

TEST(ExtractFeatures, Shapes) {
  const auto clip = tone(300.0, 1.0);
  const auto best = extract_features(clip, FeatureSet::best_four());
  EXPECT_EQ(best.values.rows(), 256u);
  EXPECT_EQ(best.values.cols(), 33u);
  const auto all = extract_features(clip, FeatureSet::all());
  EXPECT_EQ(all.values.rows(), 256u);
  EXPECT_EQ(all.values.cols(), 52u);
  EXPECT_THROW(extract_features(clip, FeatureSet{}), Error);
}

TEST(ExtractFeatures, ShortClipPadsWithZeros) {
  FeatureOptions raw;
  raw.standardize = false;
  const auto f = extract_features(random_clip(16000, 1), FeatureSet::all(), raw);
  const std::size_t frames = 1 + 16000 / 512;
  bool any_nonzero = false;
  for (std::size_t r = 0; r < frames; ++r)
    for (double v : f.values.row(r)) any_nonzero |= v != 0.0;
  EXPECT_TRUE(any_nonzero);
  for (std::size_t r = frames; r < 256; ++r)
    for (double v : f.values.row(r)) ASSERT_EQ(v, 0.0);
}

TEST(ExtractFeatures, StandardizedColumns) {
  const auto f = extract_features(random_clip(40000, 4), FeatureSet::all());
  for (std::size_t c = 0; c < f.values.cols(); ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < 256; ++r) mean += f.values(r, c);
    mean /= 256.0;
    for (std::size_t r = 0; r < 256; ++r) var += std::pow(f.values(r, c) - mean, 2);
    var /= 256.0;
    EXPECT_NEAR(mean, 0.0, 1e-9);
    if (var > 0) EXPECT_NEAR(var, 1.0, 1e-9);
  }
}

TEST(FitRows, PadAndCenterTruncate) {
  Matrix m(5, 1);
  for (std::size_t r = 0; r < 5; ++r) m(r, 0) = static_cast<double>(r);
  const auto cut = fit_rows(m, 3);
  EXPECT_EQ(cut(0, 0), 1.0);
  EXPECT_EQ(cut(2, 0), 3.0);
  const auto pad = fit_rows(m, 7);
  EXPECT_EQ(pad(4, 0), 4.0);
  EXPECT_EQ(pad(6, 0), 0.0);
}

TEST(SpectrogramImage, Silence) {
  const auto img = render_spectrogram_image(silence(8000));
  EXPECT_EQ(img.pixels.rows(), 512u);
  EXPECT_EQ(img.pixels.cols(), 512u);
  EXPECT_TRUE(all_zero(img.pixels));
}

TEST(SpectrogramImage, MinMaxRange) {
  const auto img = render_spectrogram_image(random_clip(12000, 8), 64);
  const auto [lo, hi] = std::minmax_element(img.pixels.data().begin(), img.pixels.data().end());
  EXPECT_NEAR(*lo, 0.0, 1e-12);
  EXPECT_NEAR(*hi, 1.0, 1e-12);
}

TEST(SpectrogramImage, TimeReversalMirrors) {
  // Frame centers are symmetric when len = k * hop + 1.
  auto clip = random_clip(20 * 512 + 1, 9);
  auto reversed = clip;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  const auto a = render_spectrogram_image(clip, 96).pixels;
  const auto b = render_spectrogram_image(reversed, 96).pixels;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      ASSERT_NEAR(a(r, c), b(r, a.cols() - 1 - c), 1e-6);
}

TEST(FeatureFile, RoundTrip) {
  Matrix m(3, 2);
  m(0, 0) = 0.5;
  m(2, 1) = -1.25;
  std::stringstream buf;
  write_asvf(buf, m, 0x15);
  const auto block = read_asvf(buf);
  EXPECT_EQ(block.kind_mask, 0x15);
  EXPECT_EQ(block.values, m);
  std::stringstream bad("ASVX");
  EXPECT_THROW(read_asvf(bad), Error);
}
