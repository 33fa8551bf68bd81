#pragma once

#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "runet/data/mhd.hpp"
#include "runet/data/volume.hpp"

namespace runet {

inline constexpr const char* kAnnotationHeader = "seriesuid,coordX,coordY,coordZ,diameter_mm";

/// Reads `seriesuid,coordX,coordY,coordZ,diameter_mm` rows. Nodules under
/// 3 mm are rejected.
inline std::vector<NoduleAnnotation> read_annotations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("annotations: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kAnnotationHeader) throw std::runtime_error("annotations: bad header '" + line + "'");
  std::vector<NoduleAnnotation> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      const std::size_t c = line.find(',', pos);
      f.push_back(line.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    const std::string where = "annotations line " + std::to_string(lineno);
    if (f.size() != 5) throw std::runtime_error(where + ": expected 5 fields, got " + std::to_string(f.size()));
    NoduleAnnotation a;
    a.series_id = f[0];
    double v[4];
    for (int i = 0; i < 4; ++i) {
      const std::string& s = f[static_cast<std::size_t>(i) + 1];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v[i]);
      if (ec != std::errc() || p != s.data() + s.size()) throw std::runtime_error(where + ": bad number '" + s + "'");
    }
    a.world = {v[0], v[1], v[2]};
    a.diameter_mm = v[3];
    if (!(a.diameter_mm >= 3.0)) {
      throw std::runtime_error(where + ": diameter_mm " + detail::shortest(a.diameter_mm) + " below the 3 mm inclusion size");
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline void write_annotations(std::ostream& out, const std::vector<NoduleAnnotation>& rows) {
  out << kAnnotationHeader << "\n";
  for (const auto& a : rows) {
    out << a.series_id << "," << detail::shortest(a.world[0]) << "," << detail::shortest(a.world[1]) << ","
        << detail::shortest(a.world[2]) << "," << detail::shortest(a.diameter_mm) << "\n";
  }
}

}  // namespace runet
