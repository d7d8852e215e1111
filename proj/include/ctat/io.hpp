#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctat {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout (all integers little-endian):
///   8 bytes  magic "TATARR1\0"
///   uint32   version (1)
///   uint32   dtype (1 = float64 little-endian)
///   uint32   rank
///   uint64   dims[rank]
///   float64  payload[prod dims], row-major
/// plus a JSON sidecar at `<path>.json` holding {"dims": [...], "meta": {...}}.
struct ArrayFile {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
  nlohmann::json meta = nlohmann::json::object();

  std::uint64_t element_count() const;
};

inline constexpr char kArrayMagic[8] = {'T', 'A', 'T', 'A', 'R', 'R', '1', '\0'};
inline constexpr std::uint32_t kArrayVersion = 1;
inline constexpr std::uint32_t kDtypeF64LE = 1;

std::string sidecar_path(const std::string& path);

void write_array(const std::string& path, const ArrayFile& a);
/// Validates magic, version, dtype, payload length and, when the sidecar
/// exists, that its dims match the header. `require_sidecar` makes a
/// missing sidecar an error.
ArrayFile read_array(const std::string& path, bool require_sidecar = false);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples as the format
/// requires). `values` is row-major with row 0 at the bottom (y up); the
/// file stores the top row first. The sidecar records min, max and the
/// quantisation step so read_pgm can undo the scaling.
void write_pgm16(const std::string& path, int width, int height, const std::vector<double>& values,
                 const nlohmann::json& meta = nlohmann::json::object());

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> levels;  // file order
  std::vector<double> values;         // dequantised, row 0 at the bottom
};

PgmImage read_pgm16(const std::string& path);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace ctat
