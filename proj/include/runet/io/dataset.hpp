#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "runet/data/synthetic.hpp"
#include "runet/io/binary.hpp"

namespace runet {

inline constexpr std::string_view kDatasetMagic = "RUNDATA1";
inline constexpr std::string_view kPredictionMagic = "RUNPRED1";
inline constexpr const char* kDatasetFile = "slices.bin";
inline constexpr const char* kPredictionFile = "predictions.bin";
inline constexpr const char* kManifestFile = "manifest.csv";

/// Provenance of one slice in a dataset or prediction set.
struct ManifestRow {
  std::string series_id;
  std::int64_t slice = -1;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

namespace detail {

inline std::string entry_name(const char* kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s/%05zu", kind, i);
  return buf;
}

inline std::string manifest_text(const std::vector<ManifestRow>& rows) {
  std::ostringstream os;
  os << "index,series_id,slice,seed\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].series_id.find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("manifest: series id '" + rows[i].series_id + "' contains a comma or newline");
    }
    os << i << "," << rows[i].series_id << "," << rows[i].slice << "," << rows[i].seed << "\n";
  }
  return os.str();
}

inline std::vector<ManifestRow> parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "index,series_id,slice,seed") throw FormatError("manifest: bad header");
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string idx, id, slice, seed;
    if (!std::getline(ls, idx, ',') || !std::getline(ls, id, ',') || !std::getline(ls, slice, ',') ||
        !std::getline(ls, seed)) {
      throw FormatError("manifest: malformed row '" + line + "'");
    }
    if (std::stoull(idx) != rows.size()) throw FormatError("manifest: rows out of order at '" + line + "'");
    rows.push_back({id, std::stoll(slice), std::stoull(seed)});
  }
  return rows;
}

inline void save_table(const std::filesystem::path& file, std::string_view magic, const Registry<float>& reg) {
  ByteWriter w;
  w.bytes(magic);
  w.u32(1);
  write_tensor_table(w, reg);
  write_file(file, w.data());
}

inline Registry<float> load_table(const std::filesystem::path& file, std::string_view magic) {
  const std::string data = read_file(file);
  ByteReader r(data, file.string());
  if (r.bytes(magic.size()) != magic) throw FormatError(file.string() + ": bad magic");
  if (const auto v = r.u32(); v != 1) throw FormatError(file.string() + ": unsupported version " + std::to_string(v));
  auto reg = read_tensor_table(r);
  r.expect_done();
  return reg;
}

}  // namespace detail

/// Writes `dir/slices.bin` (image/NNNNN and mask/NNNNN tensors) and
/// `dir/manifest.csv`.
inline void save_dataset(const std::filesystem::path& dir, const std::vector<SlicePair>& pairs) {
  std::filesystem::create_directories(dir);
  Registry<float> reg;
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    reg.push_back({detail::entry_name("image", i), pairs[i].image});
    reg.push_back({detail::entry_name("mask", i), pairs[i].mask});
    rows.push_back({pairs[i].series_id, pairs[i].slice, pairs[i].seed});
  }
  detail::save_table(dir / kDatasetFile, kDatasetMagic, reg);
  write_file(dir / kManifestFile, detail::manifest_text(rows));
}

inline std::vector<SlicePair> load_dataset(const std::filesystem::path& dir) {
  const auto reg = detail::load_table(dir / kDatasetFile, kDatasetMagic);
  const auto rows = detail::parse_manifest(read_file(dir / kManifestFile));
  if (reg.size() != 2 * rows.size()) {
    throw FormatError(dir.string() + ": manifest lists " + std::to_string(rows.size()) + " slices, payload holds " +
                      std::to_string(reg.size()) + " tensors");
  }
  std::vector<SlicePair> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& img = reg[2 * i];
    const auto& msk = reg[2 * i + 1];
    if (img.name != detail::entry_name("image", i) || msk.name != detail::entry_name("mask", i)) {
      throw FormatError(dir.string() + ": unexpected tensor '" + img.name + "' at slice " + std::to_string(i));
    }
    if (img.tensor.shape() != msk.tensor.shape() || img.tensor.rank() != 3 || img.tensor.dim(0) != 1) {
      throw FormatError(dir.string() + ": slice " + std::to_string(i) + " has image " +
                        to_string(img.tensor.shape()) + " and mask " + to_string(msk.tensor.shape()));
    }
    out.push_back({img.tensor, msk.tensor, rows[i].series_id, rows[i].slice, rows[i].seed});
  }
  return out;
}

struct Predictions {
  std::vector<ManifestRow> rows;
  std::vector<Tensor> prob;  // (1, H, W) each
};

/// Writes `dir/predictions.bin` (prob/NNNNN) and `dir/manifest.csv`.
inline void save_predictions(const std::filesystem::path& dir, const Predictions& p) {
  std::filesystem::create_directories(dir);
  Registry<float> reg;
  for (std::size_t i = 0; i < p.prob.size(); ++i) reg.push_back({detail::entry_name("prob", i), p.prob[i]});
  detail::save_table(dir / kPredictionFile, kPredictionMagic, reg);
  write_file(dir / kManifestFile, detail::manifest_text(p.rows));
}

inline Predictions load_predictions(const std::filesystem::path& dir) {
  Predictions p;
  auto reg = detail::load_table(dir / kPredictionFile, kPredictionMagic);
  p.rows = detail::parse_manifest(read_file(dir / kManifestFile));
  if (reg.size() != p.rows.size()) throw FormatError(dir.string() + ": manifest and payload sizes differ");
  for (auto& e : reg) p.prob.push_back(std::move(e.tensor));
  return p;
}

}  // namespace runet
