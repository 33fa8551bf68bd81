#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "runet/tensor.hpp"

namespace runet {

using Vec3 = std::array<double, 3>;

/// CT volume in HU, x fastest: hu[(k*ny + j)*nx + i].
struct CtVolume {
  std::array<std::size_t, 3> dims{0, 0, 0};  // nx, ny, nz
  Vec3 spacing{1.0, 1.0, 1.0};               // mm per voxel
  Vec3 origin{0.0, 0.0, 0.0};                // mm
  std::vector<std::int16_t> hu;

  std::size_t nx() const { return dims[0]; }
  std::size_t ny() const { return dims[1]; }
  std::size_t nz() const { return dims[2]; }

  std::int16_t at(std::size_t i, std::size_t j, std::size_t k) const { return hu[(k * dims[1] + j) * dims[0] + i]; }

  void validate() const {
    if (hu.size() != dims[0] * dims[1] * dims[2]) {
      throw std::invalid_argument("CtVolume: " + std::to_string(hu.size()) + " voxels for dims " +
                                  std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
                                  std::to_string(dims[2]));
    }
    for (double s : spacing)
      if (!(s > 0.0)) throw std::invalid_argument("CtVolume: spacing must be positive");
  }

  /// Axial slice k as an (ny, nx) tensor of HU values.
  Tensor slice(std::size_t k) const {
    if (k >= nz()) throw std::out_of_range("CtVolume: slice " + std::to_string(k) + " of " + std::to_string(nz()));
    Tensor out({ny(), nx()});
    const std::size_t plane = nx() * ny();
    for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<float>(hu[k * plane + i]);
    return out;
  }

  friend bool operator==(const CtVolume&, const CtVolume&) = default;
};

struct NoduleAnnotation {
  std::string series_id;
  Vec3 world{0.0, 0.0, 0.0};  // mm
  double diameter_mm = 0.0;

  friend bool operator==(const NoduleAnnotation&, const NoduleAnnotation&) = default;
};

/// (world - origin) / spacing, componentwise; continuous voxel indices.
inline Vec3 world_to_voxel(const CtVolume& vol, const Vec3& world) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    if (!(vol.spacing[a] > 0.0)) throw std::invalid_argument("world_to_voxel: spacing must be positive");
    out[a] = (world[a] - vol.origin[a]) / vol.spacing[a];
  }
  return out;
}

inline Vec3 voxel_to_world(const CtVolume& vol, const Vec3& voxel) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) out[a] = voxel[a] * vol.spacing[a] + vol.origin[a];
  return out;
}

}  // namespace runet
