#include "ctat/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ctat {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::string& bytes) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace

std::uint64_t ArrayFile::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string sidecar_path(const std::string& path) { return path + ".json"; }

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_json(const std::string& path, const nlohmann::json& j) { dump(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
}

void write_array(const std::string& path, const ArrayFile& a) {
  if (a.dims.empty()) throw IoError("write_array: rank must be at least 1");
  if (a.element_count() != a.data.size()) {
    throw IoError("write_array: dims describe " + std::to_string(a.element_count()) + " elements but data has " +
                  std::to_string(a.data.size()));
  }
  std::string bytes(kArrayMagic, kArrayMagic + 8);
  put_u32(bytes, kArrayVersion);
  put_u32(bytes, kDtypeF64LE);
  put_u32(bytes, static_cast<std::uint32_t>(a.dims.size()));
  for (auto d : a.dims) put_u64(bytes, d);
  bytes.reserve(bytes.size() + 8 * a.data.size());
  for (double v : a.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bytes, bits);
  }
  dump(path, bytes);

  nlohmann::json side;
  side["format"] = "TATARR1";
  side["dtype"] = "f64le";
  side["dims"] = a.dims;
  side["meta"] = a.meta;
  write_json(sidecar_path(path), side);
}

ArrayFile read_array(const std::string& path, bool require_sidecar) {
  const std::string bytes = slurp(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t header_fixed = 8 + 4 + 4 + 4;
  if (bytes.size() < header_fixed) {
    throw IoError(path + ": truncated header (expected at least " + std::to_string(header_fixed) + " bytes, got " +
                  std::to_string(bytes.size()) + ")");
  }
  if (std::memcmp(p, kArrayMagic, 8) != 0) throw IoError(path + ": bad magic (not a TATARR1 file)");
  const auto version = static_cast<std::uint32_t>(get_le(p + 8, 4));
  if (version != kArrayVersion) {
    throw IoError(path + ": unsupported version " + std::to_string(version) + " (expected " +
                  std::to_string(kArrayVersion) + ")");
  }
  const auto dtype = static_cast<std::uint32_t>(get_le(p + 12, 4));
  if (dtype != kDtypeF64LE) throw IoError(path + ": unsupported dtype " + std::to_string(dtype));
  const auto rank = static_cast<std::uint32_t>(get_le(p + 16, 4));
  if (rank == 0 || rank > 16) throw IoError(path + ": invalid rank " + std::to_string(rank));
  const std::size_t header = header_fixed + 8 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) {
    throw IoError(path + ": truncated header (expected " + std::to_string(header) + " bytes, got " +
                  std::to_string(bytes.size()) + ")");
  }
  ArrayFile a;
  for (std::uint32_t i = 0; i < rank; ++i) a.dims.push_back(get_le(p + header_fixed + 8 * i, 8));
  const std::uint64_t count = a.element_count();
  const std::uint64_t expected = header + 8 * count;
  if (bytes.size() != expected) {
    throw IoError(path + ": payload length mismatch (expected " + std::to_string(expected) + " bytes, actual " +
                  std::to_string(bytes.size()) + ")");
  }
  a.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t bits = get_le(p + header + 8 * i, 8);
    std::memcpy(&a.data[i], &bits, 8);
  }

  const std::string side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    const nlohmann::json j = read_json(side);
    std::vector<std::uint64_t> sd;
    try {
      sd = j.at("dims").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception&) {
      throw IoError(side + ": sidecar has no valid \"dims\" entry");
    }
    if (sd != a.dims) throw IoError(side + ": sidecar dims do not match the array header");
    if (j.contains("meta")) a.meta = j["meta"];
  } else if (require_sidecar) {
    throw IoError(path + ": missing sidecar " + side);
  }
  return a;
}

void write_pgm16(const std::string& path, int width, int height, const std::vector<double>& values,
                 const nlohmann::json& meta) {
  if (width <= 0 || height <= 0 || values.size() != static_cast<std::size_t>(width) * height) {
    throw IoError("write_pgm16: image size does not match the value count");
  }
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) throw IoError("write_pgm16: non-finite value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double step = hi > lo ? (hi - lo) / 65535.0 : 0.0;
  std::string bytes = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  bytes.reserve(bytes.size() + 2 * values.size());
  for (int row = height - 1; row >= 0; --row) {
    for (int col = 0; col < width; ++col) {
      const double v = values[static_cast<std::size_t>(row) * width + col];
      const auto q = static_cast<std::uint16_t>(step > 0.0 ? std::lround((v - lo) / step) : 0);
      bytes.push_back(static_cast<char>(q >> 8));
      bytes.push_back(static_cast<char>(q & 0xff));
    }
  }
  dump(path, bytes);
  nlohmann::json side;
  side["width"] = width;
  side["height"] = height;
  side["min"] = lo;
  side["max"] = hi;
  side["step"] = step;
  side["value"] = "min + level * step";
  side["rows"] = "top row first, y decreasing";
  side["meta"] = meta;
  write_json(sidecar_path(path), side);
}

PgmImage read_pgm16(const std::string& path) {
  const std::string bytes = slurp(path);
  std::istringstream hdr(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  hdr >> magic >> w >> h >> maxval;
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 65535) throw IoError(path + ": not a 16-bit P5 PGM");
  const std::size_t off = static_cast<std::size_t>(hdr.tellg()) + 1;
  const std::size_t need = off + 2 * static_cast<std::size_t>(w) * h;
  if (bytes.size() != need) {
    throw IoError(path + ": payload length mismatch (expected " + std::to_string(need) + " bytes, actual " +
                  std::to_string(bytes.size()) + ")");
  }
  PgmImage img;
  img.width = w;
  img.height = h;
  img.levels.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < img.levels.size(); ++i) {
    img.levels[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(bytes[off + 2 * i]) << 8) |
                                               static_cast<unsigned char>(bytes[off + 2 * i + 1]));
  }
  const nlohmann::json side = read_json(sidecar_path(path));
  const double lo = side.at("min").get<double>();
  const double step = side.at("step").get<double>();
  img.values.resize(img.levels.size());
  for (int row = 0; row < h; ++row) {
    const int file_row = h - 1 - row;
    for (int col = 0; col < w; ++col) {
      img.values[static_cast<std::size_t>(row) * w + col] =
          lo + step * img.levels[static_cast<std::size_t>(file_row) * w + col];
    }
  }
  return img;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw IoError("write_csv: row width differs from the header");
    line(r);
  }
  dump(path, out);
}

}  // namespace ctat
