#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "runet/io/binary.hpp"
#include "runet/model/network.hpp"
#include "runet/optim/adam.hpp"

namespace runet {

inline constexpr std::string_view kCheckpointMagic = "RUNCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to resume training or run inference.
///
/// Layout (little-endian): magic "RUNCKPT1", u32 version, architecture
/// block, parameter table, buffer table (BN running statistics), u8 has_adam
/// [u64 t, m table, v table], u8 has_mean [mean image table of one entry],
/// u64 epoch, u64 seed.
struct Checkpoint {
  ArchSpec spec;
  Registry<float> params;
  Registry<float> buffers;
  std::optional<AdamState<float>> adam;
  std::optional<Tensor> mean_image;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::string serialize_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto& s = c.spec;
  w.str(std::string(to_string(s.kind)));
  for (std::size_t v : {s.base_channels, s.depth, s.input_h, s.input_w, s.in_channels, s.upconv_kernel})
    w.u32(static_cast<std::uint32_t>(v));
  w.f64(s.dropout);
  w.f64(s.bn_momentum);
  w.f64(s.bn_eps);
  write_tensor_table(w, c.params);
  write_tensor_table(w, c.buffers);
  w.u8(c.adam ? 1 : 0);
  if (c.adam) {
    w.u64(c.adam->t);
    write_tensor_table(w, c.adam->m);
    write_tensor_table(w, c.adam->v);
  }
  w.u8(c.mean_image ? 1 : 0);
  if (c.mean_image) write_tensor_table(w, {{"mean_image", *c.mean_image}});
  w.u64(c.epoch);
  w.u64(c.seed);
  return w.take();
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  ByteReader r(data, "checkpoint");
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  auto& s = c.spec;
  s.kind = parse_arch_kind(r.str());
  for (std::size_t* v : {&s.base_channels, &s.depth, &s.input_h, &s.input_w, &s.in_channels, &s.upconv_kernel})
    *v = r.u32();
  s.dropout = r.f64();
  s.bn_momentum = r.f64();
  s.bn_eps = r.f64();
  s.validate();
  c.params = read_tensor_table(r);
  c.buffers = read_tensor_table(r);
  if (r.u8()) {
    AdamState<float> a;
    a.t = r.u64();
    a.m = read_tensor_table(r);
    a.v = read_tensor_table(r);
    c.adam = std::move(a);
  }
  if (r.u8()) {
    auto t = read_tensor_table(r);
    if (t.size() != 1) throw FormatError("checkpoint: mean image table must hold one tensor");
    c.mean_image = std::move(t.front().tensor);
  }
  c.epoch = r.u64();
  c.seed = r.u64();
  r.expect_done();
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& p) {
  write_file(p, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return deserialize_checkpoint(read_file(p)); }

/// Parameters and buffers of `net` in registry order.
inline Checkpoint capture(Network<float>& net) {
  Checkpoint c;
  c.spec = net.spec();
  for (const auto& [n, t] : net.params()) c.params.push_back({n, *t});
  for (const auto& [n, t] : net.buffers()) c.buffers.push_back({n, *t});
  return c;
}

namespace detail {

inline void assign_table(const std::vector<std::pair<std::string, Tensor*>>& dst, const Registry<float>& src,
                         const char* what) {
  if (dst.size() != src.size()) {
    throw FormatError(std::string("checkpoint: ") + what + " table has " + std::to_string(src.size()) +
                      " tensors, network has " + std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].name || dst[i].second->shape() != src[i].tensor.shape()) {
      throw FormatError(std::string("checkpoint: ") + what + " '" + src[i].name + "' " +
                        to_string(src[i].tensor.shape()) + " does not match network tensor '" + dst[i].first + "' " +
                        to_string(dst[i].second->shape()));
    }
    *dst[i].second = src[i].tensor;
  }
}

}  // namespace detail

/// Network rebuilt from a checkpoint's architecture and tensors.
inline Network<float> restore_network(const Checkpoint& c) {
  Rng unused(0);
  Network<float> net(c.spec, unused);
  detail::assign_table(net.params(), c.params, "parameter");
  detail::assign_table(net.buffers(), c.buffers, "buffer");
  return net;
}

}  // namespace runet
