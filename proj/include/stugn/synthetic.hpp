#pragma once

// Synthetic multi-station wind data with distance-dependent correlation.
//
// A few regional AR(2) processes are mixed into every station with weights
// that decay with distance to the region centre. Stations east of a centre
// see its signal later (advection), so upstream stations carry information
// about downstream futures. Each station adds its own AR(2) component, an
// affine transform and a diurnal cycle; wind speed is clipped at zero.

#include <cstdint>
#include <string>

#include "stugn/data.hpp"

namespace stugn::synthetic {

struct SyntheticSpec {
  std::size_t stations = 6;
  std::size_t grid_length = 10000;     // 10-minute steps
  std::string start = "2020-01-01T00:00:00Z";
  std::size_t regions = 3;
  double ar1 = 1.7;
  double ar2 = -0.72;
  double noise_std = 0.1;              // innovation and measurement noise, m/s
  double mean_speed = 8.0;
  double offset_std = 1.0;             // per-station level offsets
  double scale_mean = 2.0;             // per-station gain on the latent signal
  double scale_std = 0.2;
  double local_share = 0.5;            // weight of each station's own component
  double correlation_km = 150.0;       // decay length of regional weights
  double advection_steps_per_100km = 2.0;
  double diurnal_amplitude = 0.5;      // m/s
  double seasonal_scale = 1.0;         // multiplies the yearly temperature and pressure cycles
  double lat_min = 54.0, lat_max = 58.0;
  double lon_min = 2.0, lon_max = 9.0;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Deterministic for a given spec. Every slot is present.
data::FrequencyPair generate_synthetic(const SyntheticSpec& spec);

}  // namespace stugn::synthetic
