#include "asvkit/audio_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "asvkit/error.hpp"

namespace asv {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF),
                     static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF),
                     static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

double decode_sample(const unsigned char* p, std::uint16_t format,
                     int bits) {
  if (format == kFormatFloat) {
    float f;
    std::uint32_t u = read_u32(p);
    std::memcpy(&f, &u, sizeof f);
    return static_cast<double>(f);
  }
  switch (bits) {
    case 8:
      // 8-bit PCM is unsigned with a 128 offset.
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
    default:
      return 0.0;
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileNotFound, "cannot open audio file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(Errc::MalformedHeader, "not a RIFF/WAVE file: " + path);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t size = read_u32(chunk + 4);
    std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated data chunk; anything else is malformed.
      if (std::memcmp(chunk, "data", 4) != 0) {
        fail(Errc::MalformedHeader, "truncated chunk in " + path);
      }
      size = static_cast<std::uint32_t>(bytes.size() - body);
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) fail(Errc::MalformedHeader, "short fmt chunk in " + path);
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == kFormatExtensible && size >= 40) {
        format = read_u16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || data == nullptr) {
    fail(Errc::MalformedHeader, "missing fmt or data chunk in " + path);
  }
  if (rate == 0) fail(Errc::MalformedHeader, "zero sample rate in " + path);

  bool supported =
      (format == kFormatPcm &&
       (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
      (format == kFormatFloat && bits == 32);
  if (!supported || channels < 1 || channels > 2) {
    fail(Errc::UnsupportedEncoding,
         "unsupported WAV encoding (format " + std::to_string(format) +
             ", " + std::to_string(bits) + " bits, " +
             std::to_string(channels) + " channels) in " + path);
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t n_frames = data_size / frame_bytes;
  if (n_frames == 0) fail(Errc::MalformedHeader, "no samples in " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.utterance_id = std::filesystem::path(path).stem().string();
  clip.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += decode_sample(data + i * frame_bytes + c * bytes_per_sample,
                           format, bits);
    }
    double v = acc / channels;
    if (!std::isfinite(v)) {
      fail(Errc::UnsupportedEncoding, "non-finite sample in " + path);
    }
    clip.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  out.write("RIFF", 4);
  put_u32(out, 36 + n * 2);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, n * 2);
  for (double s : clip.samples) {
    double q = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    auto v = static_cast<std::int16_t>(std::clamp(q, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  if (!out) fail(Errc::Io, "write failed: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) {
    fail(Errc::InvalidArgument, "target sample rate must be positive");
  }
  if (target_rate == clip.sample_rate || clip.samples.empty()) {
    AudioClip same = clip;
    same.sample_rate = target_rate;
    return same;
  }
  const std::size_t in_len = clip.samples.size();
  const auto out_len = static_cast<std::size_t>(std::llround(
      static_cast<double>(in_len) * target_rate / clip.sample_rate));
  AudioClip out;
  out.sample_rate = target_rate;
  out.utterance_id = clip.utterance_id;
  out.samples.resize(std::max<std::size_t>(out_len, 1));
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    double src = i * step;
    auto lo = static_cast<std::size_t>(src);
    if (lo >= in_len - 1) {
      out.samples[i] = clip.samples[in_len - 1];
      continue;
    }
    double frac = src - static_cast<double>(lo);
    out.samples[i] =
        clip.samples[lo] + frac * (clip.samples[lo + 1] - clip.samples[lo]);
  }
  return out;
}

std::size_t Manifest::index_of(const std::string& utterance_id) const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].utterance_id == utterance_id) return i;
  }
  fail(Errc::UnknownUtterance, "unknown utterance: " + utterance_id);
}

const UtteranceRecord& Manifest::at(const std::string& utterance_id) const {
  return records[index_of(utterance_id)];
}

Manifest make_manifest(std::vector<UtteranceRecord> records) {
  Manifest m;
  m.records = std::move(records);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (!(r.label_score >= -3.0 && r.label_score <= 3.0)) {
      fail(Errc::ScoreOutOfRange, "label_score out of [-3, 3] for " +
                                      r.utterance_id + ": " +
                                      std::to_string(r.label_score));
    }
    if (!ids.insert(r.utterance_id).second) {
      fail(Errc::DuplicatePosition, "duplicate utterance id " + r.utterance_id);
    }
    m.videos[r.video_id].push_back(i);
  }
  for (auto& [video, idx] : m.videos) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return m.records[a].position < m.records[b].position;
    });
    for (std::size_t k = 0; k < idx.size(); ++k) {
      int p = m.records[idx[k]].position;
      if (k > 0 && p == m.records[idx[k - 1]].position) {
        fail(Errc::DuplicatePosition, "duplicate position " +
                                          std::to_string(p) + " in video " +
                                          video);
      }
      if (p != static_cast<int>(k)) {
        fail(Errc::NonContiguousPositions,
             "positions in video " + video + " are not contiguous from 0");
      }
    }
  }
  return m;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::FileNotFound, "cannot open manifest: " + path);
  const auto base = std::filesystem::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line)) fail(Errc::MissingColumn, "empty manifest");
  auto header = split_csv_line(line);
  static constexpr std::array<const char*, 5> kColumns = {
      "utterance_id", "video_id", "position", "audio_path", "label_score"};
  std::array<std::size_t, 5> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find_if(header.begin(), header.end(), [&](auto& h) {
      return trim(h) == kColumns[c];
    });
    if (it == header.end()) {
      fail(Errc::MissingColumn,
           std::string("manifest missing column '") + kColumns[c] + "'");
    }
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<UtteranceRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < header.size()) {
      fail(Errc::MissingColumn,
           "manifest line " + std::to_string(line_no) + " has too few fields");
    }
    UtteranceRecord r;
    r.utterance_id = trim(f[col[0]]);
    r.video_id = trim(f[col[1]]);
    std::string audio = trim(f[col[3]]);
    try {
      std::size_t used = 0;
      r.position = std::stoi(f[col[2]], &used);
      r.label_score = std::stod(f[col[4]]);
    } catch (const std::exception&) {
      fail(Errc::ParseError,
           "manifest line " + std::to_string(line_no) + ": bad number");
    }
    if (r.position < 0) {
      fail(Errc::NonContiguousPositions,
           "negative position on manifest line " + std::to_string(line_no));
    }
    std::filesystem::path p(audio);
    r.audio_path = (p.is_relative() && !audio.empty()) ? (base / p).string()
                                                       : audio;
    records.push_back(std::move(r));
  }
  return make_manifest(std::move(records));
}

void write_manifest(const std::string& path, const Manifest& manifest) {
  std::ofstream out(path);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out << "utterance_id,video_id,position,audio_path,label_score\n";
  out.precision(17);
  for (const auto& r : manifest.records) {
    out << r.utterance_id << ',' << r.video_id << ',' << r.position << ','
        << r.audio_path << ',' << r.label_score << '\n';
  }
  if (!out) fail(Errc::Io, "write failed: " + path);
}

namespace {

ContextWindow window_at(const Manifest& m, const std::vector<std::size_t>& idx,
                        std::size_t k) {
  std::size_t prev = k == 0 ? 0 : k - 1;
  std::size_t next = k + 1 < idx.size() ? k + 1 : k;
  return {m.records[idx[prev]].utterance_id, m.records[idx[k]].utterance_id,
          m.records[idx[next]].utterance_id};
}

}  // namespace

std::vector<ContextWindow> context_windows(const Manifest& manifest) {
  std::vector<ContextWindow> out;
  out.reserve(manifest.records.size());
  for (const auto& [video, idx] : manifest.videos) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.push_back(window_at(manifest, idx, k));
    }
  }
  return out;
}

ContextWindow context_window_for(const Manifest& manifest,
                                 const std::string& utterance_id) {
  const auto& rec = manifest.at(utterance_id);
  const auto& idx = manifest.videos.at(rec.video_id);
  return window_at(manifest, idx, static_cast<std::size_t>(rec.position));
}

}  // namespace asv
