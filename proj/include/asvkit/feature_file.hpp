#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "asvkit/dsp.hpp"
#include "asvkit/matrix.hpp"

namespace asv {

/// ASVF block: "ASVF", u16 version, u16 feature-kind bitmask, u32 rows,
/// u32 cols, then rows*cols little-endian float32 values, row-major.
inline constexpr std::uint16_t kAsvfVersion = 1;

struct AsvfBlock {
  std::uint16_t kind_mask = 0;
  Matrix values;
};

void write_asvf(std::ostream& out, const Matrix& values,
                std::uint16_t kind_mask);
/// Throws MalformedHeader on bad magic, version or truncation.
AsvfBlock read_asvf(std::istream& in);

void write_feature_file(const std::string& path,
                        const dsp::FeatureMatrix& features);
dsp::FeatureMatrix read_feature_file(const std::string& path);

/// Exported sentiment vector for one utterance.
struct AsvRecord {
  std::string utterance_id;
  std::vector<double> values;
};

/// Sequence of records, each a u16 id length, the UTF-8 id bytes, and a
/// 1 x dim ASVF block with kind mask 0.
void write_asv_records(const std::string& path,
                       const std::vector<AsvRecord>& records);
std::vector<AsvRecord> read_asv_records(const std::string& path);

}  // namespace asv
