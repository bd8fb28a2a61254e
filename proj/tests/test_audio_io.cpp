#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "asvkit/audio_io.hpp"
#include "asvkit/error.hpp"
#include "support.hpp"

using namespace asv;
using testing_support::put;
using testing_support::TempDir;
using testing_support::wav_bytes;
using testing_support::write_bytes;

namespace {

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no asv::Error thrown";
  return Errc::Io;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST(LoadWav, Pcm16FullScale) {
  TempDir dir("wav16");
  std::string data;
  for (std::int16_t v : {0, 32767, -32768}) put(data, v);
  write_bytes(dir.file("a.wav"), wav_bytes(1, 1, 16000, 16, data));
  const auto clip = load_wav(dir.file("a.wav"));
  ASSERT_EQ(clip.samples.size(), 3u);
  EXPECT_EQ(clip.samples[0], 0.0);
  EXPECT_NEAR(clip.samples[1], 0.99997, 1e-5);
  EXPECT_EQ(clip.samples[2], -1.0);
  EXPECT_EQ(clip.sample_rate, 16000);
}

TEST(LoadWav, StereoFloatAveraged) {
  TempDir dir("stereo");
  std::string data;
  put(data, 1.0f);
  put(data, 0.0f);
  write_bytes(dir.file("s.wav"), wav_bytes(3, 2, 16000, 32, data));
  const auto clip = load_wav(dir.file("s.wav"));
  ASSERT_EQ(clip.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(clip.samples[0], 0.5);
}

TEST(LoadWav, OneSecondLength) {
  TempDir dir("len");
  std::string data(2 * 16000, '\0');
  write_bytes(dir.file("x.wav"), wav_bytes(1, 1, 16000, 16, data));
  EXPECT_EQ(load_wav(dir.file("x.wav")).samples.size(), 16000u);
}

TEST(LoadWav, OtherIntegerWidths) {
  TempDir dir("widths");
  std::string d8;
  for (std::uint8_t v : {128, 255, 0}) put(d8, v);
  write_bytes(dir.file("8.wav"), wav_bytes(1, 1, 8000, 8, d8));
  auto c8 = load_wav(dir.file("8.wav"));
  ASSERT_EQ(c8.samples.size(), 3u);
  EXPECT_EQ(c8.samples[0], 0.0);
  EXPECT_EQ(c8.samples[2], -1.0);
  EXPECT_GT(c8.samples[1], 0.99);

  std::string d24;
  for (int v : {0, 0x7FFFFF, -0x800000}) {
    for (int b = 0; b < 3; ++b) d24.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  write_bytes(dir.file("24.wav"), wav_bytes(1, 1, 16000, 24, d24));
  auto c24 = load_wav(dir.file("24.wav"));
  ASSERT_EQ(c24.samples.size(), 3u);
  EXPECT_EQ(c24.samples[0], 0.0);
  EXPECT_NEAR(c24.samples[1], 1.0, 1e-6);
  EXPECT_EQ(c24.samples[2], -1.0);

  std::string d32;
  for (std::int32_t v : {0, INT32_MIN}) put(d32, v);
  write_bytes(dir.file("32.wav"), wav_bytes(1, 1, 16000, 32, d32));
  auto c32 = load_wav(dir.file("32.wav"));
  EXPECT_EQ(c32.samples[1], -1.0);
}

TEST(LoadWav, DistinctErrors) {
  TempDir dir("errs");
  EXPECT_EQ(error_of([&] { load_wav(dir.file("missing.wav")); }), Errc::FileNotFound);

  write_bytes(dir.file("bad.wav"), "RIFX0000WAVEjunk");
  EXPECT_EQ(error_of([&] { load_wav(dir.file("bad.wav")); }), Errc::MalformedHeader);

  std::string data(4, '\0');
  write_bytes(dir.file("alaw.wav"), wav_bytes(6, 1, 8000, 8, data));
  EXPECT_EQ(error_of([&] { load_wav(dir.file("alaw.wav")); }), Errc::UnsupportedEncoding);

  write_bytes(dir.file("three.wav"), wav_bytes(1, 3, 8000, 16, std::string(6, '\0')));
  EXPECT_EQ(error_of([&] { load_wav(dir.file("three.wav")); }), Errc::UnsupportedEncoding);
}

TEST(WriteWav, Pcm16RoundTripsExactly) {
  TempDir dir("rt");
  AudioClip clip;
  clip.sample_rate = 22050;
  for (int k = -32768; k < 32768; k += 97) clip.samples.push_back(k / 32768.0);
  write_wav(dir.file("rt.wav"), clip);
  const auto back = load_wav(dir.file("rt.wav"));
  EXPECT_EQ(back.sample_rate, 22050);
  EXPECT_EQ(back.samples, clip.samples);
}

TEST(Resample, Identity) {
  auto clip = testing_support::tone(300.0, 0.1);
  EXPECT_EQ(resample(clip, 16000).samples, clip.samples);
}

TEST(Resample, ConstantStaysConstant) {
  AudioClip clip;
  clip.sample_rate = 44100;
  clip.samples.assign(4410, 0.5);
  for (int rate : {8000, 16000, 96000}) {
    const auto out = resample(clip, rate);
    for (double v : out.samples) ASSERT_DOUBLE_EQ(v, 0.5);
  }
}

TEST(Resample, LengthRatio) {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(8000, 0.1);
  EXPECT_EQ(resample(clip, 16000).samples.size(), 16000u);
  clip.samples.assign(1001, 0.1);
  EXPECT_EQ(resample(clip, 16000).samples.size(), 2002u);
}

TEST(Resample, RejectsNonPositiveRate) {
  AudioClip clip;
  clip.samples.assign(10, 0.0);
  EXPECT_THROW(resample(clip, 0), Error);
}

class ManifestTest : public ::testing::Test {
 protected:
  TempDir dir{"manifest"};
  std::string path() const { return dir.file("m.csv"); }
};

TEST_F(ManifestTest, OneVideoThreeRows) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\n"
             "u0,v,0,a.wav,1.0\nu1,v,1,b.wav,-2\nu2,v,2,/abs/c.wav,0\n");
  const auto m = load_manifest(path());
  ASSERT_EQ(m.videos.size(), 1u);
  EXPECT_EQ(m.videos.at("v").size(), 3u);
  EXPECT_EQ(m.records[1].label_score, -2.0);
  EXPECT_EQ(m.at("u2").audio_path, "/abs/c.wav");
  EXPECT_EQ(std::filesystem::path(m.at("u0").audio_path),
            std::filesystem::path(dir.str()) / "a.wav");
}

TEST_F(ManifestTest, AnyColumnOrder) {
  write_text(path(),
             "label_score,audio_path,position,video_id,utterance_id\n"
             "1.5,a.wav,1,v,u1\n-1,b.wav,0,v,u0\n");
  const auto m = load_manifest(path());
  EXPECT_EQ(m.records[m.videos.at("v")[0]].utterance_id, "u0");
}

TEST_F(ManifestTest, GapIsRejected) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\n"
             "u0,v,0,a.wav,1\nu2,v,2,c.wav,1\n");
  EXPECT_EQ(error_of([&] { load_manifest(path()); }), Errc::NonContiguousPositions);
}

TEST_F(ManifestTest, ScoreOutOfRange) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\nu0,v,0,a.wav,3.5\n");
  EXPECT_EQ(error_of([&] { load_manifest(path()); }), Errc::ScoreOutOfRange);
}

TEST_F(ManifestTest, DuplicatePosition) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\n"
             "u0,v,0,a.wav,1\nu1,v,0,b.wav,1\n");
  EXPECT_EQ(error_of([&] { load_manifest(path()); }), Errc::DuplicatePosition);
}

TEST_F(ManifestTest, MissingColumn) {
  write_text(path(), "utterance_id,video_id,position,audio_path\nu0,v,0,a.wav\n");
  EXPECT_EQ(error_of([&] { load_manifest(path()); }), Errc::MissingColumn);
}

TEST_F(ManifestTest, UnknownUtterance) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\nu0,v,0,a.wav,1\n");
  const auto m = load_manifest(path());
  EXPECT_EQ(error_of([&] { m.at("nope"); }), Errc::UnknownUtterance);
}

TEST_F(ManifestTest, WriteThenLoad) {
  write_text(path(),
             "utterance_id,video_id,position,audio_path,label_score\n"
             "u0,v,0,/x/a.wav,1.25\nu1,w,0,/x/b.wav,-0.5\n");
  const auto m = load_manifest(path());
  write_manifest(dir.file("copy.csv"), m);
  const auto back = load_manifest(dir.file("copy.csv"));
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[0].label_score, 1.25);
  EXPECT_EQ(back.records[1].video_id, "w");
}

namespace {

Manifest make(std::vector<std::pair<std::string, int>> videos) {
  std::vector<UtteranceRecord> recs;
  for (const auto& [vid, count] : videos) {
    for (int p = 0; p < count; ++p) {
      recs.push_back({vid + std::string(1, static_cast<char>('a' + p)), vid, p, "x.wav", 0.0});
    }
  }
  return make_manifest(std::move(recs));
}

}  // namespace

TEST(ContextWindows, FourUtterances) {
  const auto windows = context_windows(make({{"v", 4}}));
  const std::vector<ContextWindow> want = {{"va", "va", "vb"},
                                           {"va", "vb", "vc"},
                                           {"vb", "vc", "vd"},
                                           {"vc", "vd", "vd"}};
  EXPECT_EQ(windows, want);
}

TEST(ContextWindows, SingleUtterance) {
  const auto windows = context_windows(make({{"v", 1}}));
  ASSERT_EQ(windows.size(), 1u);
  EXPECT_EQ(windows[0], (ContextWindow{"va", "va", "va"}));
}

TEST(ContextWindows, VideosNeverMixed) {
  const auto m = make({{"p", 2}, {"q", 3}, {"r", 1}});
  const auto windows = context_windows(m);
  EXPECT_EQ(windows.size(), 6u);
  for (const auto& w : windows) {
    EXPECT_EQ(m.at(w[0]).video_id, m.at(w[1]).video_id);
    EXPECT_EQ(m.at(w[2]).video_id, m.at(w[1]).video_id);
  }
  EXPECT_EQ(context_window_for(m, "qc"), (ContextWindow{"qb", "qc", "qc"}));
}
