#include "asvkit/feature_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "asvkit/error.hpp"

namespace asv {

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) {
    fail(Errc::MalformedHeader, "truncated ASVF data");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
  }
  return v;
}

}  // namespace

void write_asvf(std::ostream& out, const Matrix& values,
                std::uint16_t kind_mask) {
  out.write("ASVF", 4);
  put_le<std::uint16_t>(out, kAsvfVersion);
  put_le<std::uint16_t>(out, kind_mask);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(values.cols()));
  for (double v : values.data()) {
    put_le<std::uint32_t>(out,
                          std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

AsvfBlock read_asvf(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "ASVF", 4) != 0) {
    fail(Errc::MalformedHeader, "bad ASVF magic");
  }
  const auto version = get_le<std::uint16_t>(in);
  if (version != kAsvfVersion) {
    fail(Errc::MalformedHeader,
         "unsupported ASVF version " + std::to_string(version));
  }
  AsvfBlock block;
  block.kind_mask = get_le<std::uint16_t>(in);
  const auto rows = get_le<std::uint32_t>(in);
  const auto cols = get_le<std::uint32_t>(in);
  block.values = Matrix(rows, cols);
  for (double& v : block.values.data()) {
    v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  }
  return block;
}

void write_feature_file(const std::string& path,
                        const dsp::FeatureMatrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  write_asvf(out, features.values, features.kinds.mask());
  if (!out) fail(Errc::Io, "write failed: " + path);
}

dsp::FeatureMatrix read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileNotFound, "cannot open " + path);
  auto block = read_asvf(in);
  auto kinds = dsp::FeatureSet::from_mask(block.kind_mask);
  if (kinds.width() != block.values.cols()) {
    fail(Errc::MalformedHeader, "ASVF column count does not match kind mask");
  }
  return {std::move(block.values), kinds};
}

void write_asv_records(const std::string& path,
                       const std::vector<AsvRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  for (const auto& r : records) {
    if (r.utterance_id.size() > 0xFFFF) {
      fail(Errc::InvalidArgument, "utterance id too long");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.utterance_id.size()));
    out.write(r.utterance_id.data(),
              static_cast<std::streamsize>(r.utterance_id.size()));
    Matrix row(1, r.values.size());
    std::copy(r.values.begin(), r.values.end(), row.data().begin());
    write_asvf(out, row, 0);
  }
  if (!out) fail(Errc::Io, "write failed: " + path);
}

std::vector<AsvRecord> read_asv_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileNotFound, "cannot open " + path);
  std::vector<AsvRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    AsvRecord r;
    const auto len = get_le<std::uint16_t>(in);
    r.utterance_id.resize(len);
    if (!in.read(r.utterance_id.data(), len)) {
      fail(Errc::MalformedHeader, "truncated ASV record id");
    }
    auto block = read_asvf(in);
    r.values = block.values.data();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace asv
