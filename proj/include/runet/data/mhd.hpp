#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "runet/data/volume.hpp"

namespace runet {

/// MetaImage (.mhd/.raw) subset: 3-D, MET_SHORT, one uncompressed data file.
class MhdError : public std::runtime_error {
public:
  enum class Kind { missing_key, unsupported, length_mismatch, malformed, io };

  MhdError(Kind kind, std::string key, const std::string& msg)
      : std::runtime_error(msg), kind_(kind), key_(std::move(key)) {}

  Kind kind() const { return kind_; }
  /// Header key the error refers to (empty for I/O errors).
  const std::string& key() const { return key_; }

private:
  Kind kind_;
  std::string key_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::map<std::string, std::string, std::less<>> mhd_fields(std::string_view text) {
  std::map<std::string, std::string, std::less<>> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw MhdError(MhdError::Kind::malformed, std::string(line), "mhd: line without '=': " + std::string(line));
    }
    out[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

template <typename Map>
const std::string& mhd_require(const Map& f, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = f.find(k);
    if (it != f.end()) return it->second;
  }
  const std::string key = *keys.begin();
  throw MhdError(MhdError::Kind::missing_key, key, "mhd: missing key " + key);
}

template <typename V>
std::vector<V> mhd_numbers(const std::string& key, const std::string& value, std::size_t count) {
  std::vector<V> out;
  std::istringstream is(value);
  std::string tok;
  while (is >> tok) {
    V v{};
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw MhdError(MhdError::Kind::malformed, key, "mhd: " + key + " has non-numeric value '" + tok + "'");
    }
    out.push_back(v);
  }
  if (out.size() != count) {
    throw MhdError(MhdError::Kind::malformed, key,
                   "mhd: " + key + " needs " + std::to_string(count) + " values, got '" + value + "'");
  }
  return out;
}

inline bool mhd_bool(const std::string& key, const std::string& v) {
  if (v == "True" || v == "true" || v == "1") return true;
  if (v == "False" || v == "false" || v == "0") return false;
  throw MhdError(MhdError::Kind::malformed, key, "mhd: " + key + " must be True or False, got '" + v + "'");
}

inline std::string shortest(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace detail

struct MhdImage {
  CtVolume volume;
  std::string data_file;  // value of ElementDataFile
};

/// Parses header text plus the raw payload. Little-endian unless
/// ElementByteOrderMSB (or BinaryDataByteOrderMSB) is True.
inline MhdImage parse_mhd(std::string_view header_text, std::span<const std::uint8_t> raw) {
  const auto f = detail::mhd_fields(header_text);
  using K = MhdError::Kind;
  const auto& ndims = detail::mhd_require(f, {"NDims"});
  if (ndims != "3") throw MhdError(K::unsupported, "NDims", "mhd: NDims must be 3, got " + ndims);
  const auto dims = detail::mhd_numbers<std::size_t>("DimSize", detail::mhd_require(f, {"DimSize"}), 3);
  const auto& type = detail::mhd_require(f, {"ElementType"});
  if (type != "MET_SHORT") throw MhdError(K::unsupported, "ElementType", "mhd: unsupported ElementType " + type);
  const auto spacing =
      detail::mhd_numbers<double>("ElementSpacing", detail::mhd_require(f, {"ElementSpacing"}), 3);
  const auto origin = detail::mhd_numbers<double>("Offset", detail::mhd_require(f, {"Offset", "Origin", "Position"}), 3);
  const auto& data_file = detail::mhd_require(f, {"ElementDataFile"});
  if (auto it = f.find("CompressedData"); it != f.end() && detail::mhd_bool("CompressedData", it->second)) {
    throw MhdError(K::unsupported, "CompressedData", "mhd: compressed data is not supported");
  }
  if (auto it = f.find("TransformMatrix"); it != f.end()) {
    const auto m = detail::mhd_numbers<double>("TransformMatrix", it->second, 9);
    for (int i = 0; i < 9; ++i) {
      if (m[i] != ((i % 4 == 0) ? 1.0 : 0.0)) {
        throw MhdError(K::unsupported, "TransformMatrix", "mhd: only the identity TransformMatrix is supported");
      }
    }
  }
  bool msb = false;
  if (auto it = f.find("ElementByteOrderMSB"); it != f.end()) msb = detail::mhd_bool(it->first, it->second);
  if (auto it = f.find("BinaryDataByteOrderMSB"); it != f.end()) msb = detail::mhd_bool(it->first, it->second);

  MhdImage img;
  img.data_file = data_file;
  auto& v = img.volume;
  v.dims = {dims[0], dims[1], dims[2]};
  v.spacing = {spacing[0], spacing[1], spacing[2]};
  v.origin = {origin[0], origin[1], origin[2]};
  for (double s : v.spacing) {
    if (!(s > 0.0)) throw MhdError(K::malformed, "ElementSpacing", "mhd: ElementSpacing must be positive");
  }
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (raw.size() != 2 * n) {
    throw MhdError(K::length_mismatch, "DimSize",
                   "mhd: raw payload has " + std::to_string(raw.size()) + " bytes, DimSize needs " +
                       std::to_string(2 * n));
  }
  v.hu.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t lo = raw[2 * i + (msb ? 1 : 0)], hi = raw[2 * i + (msb ? 0 : 1)];
    v.hu[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  return img;
}

/// Canonical header and little-endian payload for `vol`.
inline std::pair<std::string, std::vector<std::uint8_t>> write_mhd(const CtVolume& vol, const std::string& data_file) {
  vol.validate();
  auto triple = [](const Vec3& a) {
    return detail::shortest(a[0]) + " " + detail::shortest(a[1]) + " " + detail::shortest(a[2]);
  };
  std::ostringstream h;
  h << "ObjectType = Image\n"
    << "NDims = 3\n"
    << "BinaryData = True\n"
    << "BinaryDataByteOrderMSB = False\n"
    << "CompressedData = False\n"
    << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n"
    << "Offset = " << triple(vol.origin) << "\n"
    << "ElementSpacing = " << triple(vol.spacing) << "\n"
    << "DimSize = " << vol.dims[0] << " " << vol.dims[1] << " " << vol.dims[2] << "\n"
    << "ElementType = MET_SHORT\n"
    << "ElementDataFile = " << data_file << "\n";
  std::vector<std::uint8_t> raw(2 * vol.hu.size());
  for (std::size_t i = 0; i < vol.hu.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(vol.hu[i]);
    raw[2 * i] = static_cast<std::uint8_t>(u & 0xFF);
    raw[2 * i + 1] = static_cast<std::uint8_t>(u >> 8);
  }
  return {h.str(), std::move(raw)};
}

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw MhdError(MhdError::Kind::io, "", "cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

/// Reads `path` (.mhd) and the ElementDataFile it names, relative to the header.
inline MhdImage load_mhd(const std::filesystem::path& path) {
  const auto hb = detail::read_bytes(path);
  const std::string header(hb.begin(), hb.end());
  const auto fields = detail::mhd_fields(header);
  const auto& data_file = detail::mhd_require(fields, {"ElementDataFile"});
  if (data_file == "LOCAL") {
    throw MhdError(MhdError::Kind::unsupported, "ElementDataFile", "mhd: ElementDataFile = LOCAL is not supported");
  }
  const auto raw = detail::read_bytes(path.parent_path() / data_file);
  return parse_mhd(header, raw);
}

/// Writes `<stem>.mhd` and `<stem>.raw` into `dir`.
inline void save_mhd(const CtVolume& vol, const std::filesystem::path& dir, const std::string& stem) {
  auto [header, raw] = write_mhd(vol, stem + ".raw");
  std::ofstream h(dir / (stem + ".mhd"), std::ios::binary);
  std::ofstream r(dir / (stem + ".raw"), std::ios::binary);
  if (!h || !r) throw MhdError(MhdError::Kind::io, "", "cannot write " + (dir / stem).string() + ".{mhd,raw}");
  h << header;
  r.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!h || !r) throw MhdError(MhdError::Kind::io, "", "write failed for " + (dir / stem).string());
}

}  // namespace runet
