#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stugn/data.hpp"

namespace stugn::test {

inline data::StationMeta station(const std::string& id, double lat, double lon) { return {id, lat, lon}; }

/// Stations on a small irregular layout in the North Sea box.
inline std::vector<data::StationMeta> stations(std::size_t n) {
  std::vector<data::StationMeta> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "S%02zu", i + 1);
    out.push_back({id, 54.0 + 0.7 * static_cast<double>(i) + 0.13 * static_cast<double>(i * i % 5),
                   2.0 + 1.1 * static_cast<double>(i) - 0.21 * static_cast<double>(i * i % 3)});
  }
  return out;
}

/// Fully present 10-minute series of smooth random values.
inline data::SeriesSet random_series(std::size_t n_stations, std::size_t length, std::uint64_t seed,
                                     std::int64_t start = 0) {
  data::SeriesSet s(stations(n_stations), data::kTenMinutes, start, length);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  for (std::size_t st = 0; st < n_stations; ++st) {
    double ws = 7.0 + st, dir = 200.0, temp = 8.0, pres = 1010.0;
    for (std::size_t t = 0; t < length; ++t) {
      ws = std::max(0.0, ws + 0.3 * z(rng));
      dir = std::fmod(dir + 5.0 * z(rng) + 360.0, 360.0);
      temp += 0.1 * z(rng);
      pres += 0.2 * z(rng);
      s.set(st, t, {ws, dir, temp, pres});
    }
  }
  return s;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace stugn::test
