#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "runet/model/network.hpp"

namespace runet {

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Little-endian byte writer.
class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u32(u);
  }
  void f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u64(u);
  }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

private:
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view data, std::string what = "file") : d_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }
  float f32() {
    const std::uint32_t u = u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double f64() {
    const std::uint64_t u = u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string_view bytes(std::size_t n) { return take(n); }
  std::string str() { return std::string(take(u32())); }
  bool done() const { return pos_ == d_.size(); }
  void expect_done() const {
    if (!done()) throw FormatError(what_ + ": " + std::to_string(d_.size() - pos_) + " trailing bytes");
  }

private:
  std::string_view take(std::size_t n) {
    if (d_.size() - pos_ < n) throw FormatError(what_ + ": truncated");
    auto s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string_view d_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// u32 count, then per entry: name, u32 rank, u32 dims..., float32 payload.
inline void write_tensor_table(ByteWriter& w, const Registry<float>& reg) {
  w.u32(static_cast<std::uint32_t>(reg.size()));
  for (const auto& e : reg) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : e.tensor.data()) w.f32(v);
  }
}

inline Registry<float> read_tensor_table(ByteReader& r) {
  Registry<float> out;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor<float> e;
    e.name = r.str();
    Shape s(r.u32());
    for (auto& d : s) d = r.u32();
    std::vector<float> data(numel(s));
    for (auto& v : data) v = r.f32();
    e.tensor = Tensor(std::move(s), std::move(data));
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace runet
