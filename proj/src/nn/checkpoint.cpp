#include "asvkit/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "asvkit/error.hpp"

namespace asv::nn {

namespace {

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void le(T v) {
    char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out_.write(b, sizeof(T));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  template <typename T>
  T le() {
    unsigned char b[sizeof(T)];
    if (!in_.read(reinterpret_cast<char*>(b), sizeof(T))) {
      fail(Errc::MalformedHeader, "truncated checkpoint");
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
    }
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    if (n && !in_.read(s.data(), static_cast<std::streamsize>(n))) {
      fail(Errc::MalformedHeader, "truncated checkpoint");
    }
    return s;
  }

 private:
  std::ifstream& in_;
};

}  // namespace

void save_checkpoint(const std::string& path, const std::string& metadata,
                     const std::vector<NamedTensor>& params,
                     const OptimizerState* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  Writer w(out);
  out.write("ASVM", 4);
  w.le<std::uint16_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(metadata.size()));
  w.bytes(metadata);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : p.tensor.data()) w.f64(v);
  }
  w.le<std::uint8_t>(optimizer ? 1 : 0);
  if (optimizer) {
    w.le<std::uint8_t>(optimizer->kind == OptimizerKind::Adam ? 1 : 0);
    w.f64(optimizer->lr);
    w.le<std::uint64_t>(optimizer->step);
    for (const auto* moments : {&optimizer->m, &optimizer->v}) {
      w.le<std::uint32_t>(static_cast<std::uint32_t>(moments->size()));
      for (const auto& m : *moments) {
        w.le<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
        for (double v : m) w.f64(v);
      }
    }
  }
  if (!out) fail(Errc::Io, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileNotFound, "cannot open checkpoint " + path);
  Reader r(in);
  if (r.bytes(4) != "ASVM") fail(Errc::MalformedHeader, "bad checkpoint magic");
  const auto version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion) {
    fail(Errc::MalformedHeader, "unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.metadata = r.bytes(r.le<std::uint32_t>());
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    StoredArray a;
    a.name = r.bytes(r.le<std::uint16_t>());
    const auto rank = r.le<std::uint8_t>();
    for (std::uint8_t d = 0; d < rank; ++d) a.shape.push_back(r.le<std::uint32_t>());
    a.values.resize(numel(a.shape));
    for (double& v : a.values) v = r.f64();
    ckpt.params.push_back(std::move(a));
  }
  if (r.le<std::uint8_t>()) {
    OptimizerState s;
    s.kind = r.le<std::uint8_t>() ? OptimizerKind::Adam : OptimizerKind::Sgd;
    s.lr = r.f64();
    s.step = r.le<std::uint64_t>();
    for (auto* moments : {&s.m, &s.v}) {
      const auto n = r.le<std::uint32_t>();
      for (std::uint32_t k = 0; k < n; ++k) {
        std::vector<double> buf(r.le<std::uint32_t>());
        for (double& v : buf) v = r.f64();
        moments->push_back(std::move(buf));
      }
    }
    ckpt.optimizer = std::move(s);
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, std::vector<NamedTensor>& params) {
  std::map<std::string, const StoredArray*> by_name;
  for (const auto& a : ckpt.params) by_name[a.name] = &a;
  if (by_name.size() != params.size()) {
    fail(Errc::ShapeMismatch,
         "dimension mismatch: checkpoint has " + std::to_string(by_name.size()) +
             " parameters, model expects " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      fail(Errc::ShapeMismatch,
           "dimension mismatch: checkpoint lacks parameter " + p.name);
    }
    if (it->second->shape != p.tensor.shape()) {
      fail(Errc::ShapeMismatch, "dimension mismatch for " + p.name +
                                    ": checkpoint " + to_string(it->second->shape) +
                                    " vs model " + to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
}

}  // namespace asv::nn
