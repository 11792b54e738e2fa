#include "stugn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "stugn/error.hpp"
#include "stugn/graph.hpp"

namespace stugn::synthetic {

void SyntheticSpec::validate() const {
  if (stations == 0) throw ValidationError("synthetic data needs at least one station");
  if (grid_length == 0) throw ValidationError("synthetic grid length must be positive");
  if (regions == 0) throw ValidationError("synthetic data needs at least one region");
  // Stationarity triangle of AR(2).
  if (!(ar2 > -1.0 && ar2 < 1.0 - ar1 && ar2 < 1.0 + ar1) && !(ar1 == 0.0 && ar2 == 0.0))
    throw ValidationError("AR(2) coefficients are not stationary");
  if (noise_std < 0.0 || offset_std < 0.0 || scale_std < 0.0 || local_share < 0.0)
    throw ValidationError("synthetic spreads must be non-negative");
  if (seasonal_scale < 0.0) throw ValidationError("seasonal_scale must be non-negative");
  if (!(correlation_km > 0.0)) throw ValidationError("correlation_km must be positive");
  if (advection_steps_per_100km < 0.0) throw ValidationError("advection must be non-negative");
  if (!(lat_min < lat_max && lon_min < lon_max)) throw ValidationError("empty station box");
}

namespace {

std::vector<double> ar2_series(std::size_t n, double a1, double a2, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> eps(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  // Burn-in so the series starts near stationarity.
  double p1 = 0.0, p2 = 0.0;
  for (int k = 0; k < 500; ++k) {
    const double v = a1 * p1 + a2 * p2 + sigma * eps(rng);
    p2 = p1;
    p1 = v;
  }
  for (std::size_t t = 0; t < n; ++t) {
    x[t] = a1 * p1 + a2 * p2 + sigma * eps(rng);
    p2 = p1;
    p1 = x[t];
  }
  return x;
}

double wrap_degrees(double d) {
  d = std::fmod(d, 360.0);
  if (d < 0.0) d += 360.0;
  return d >= 360.0 ? 0.0 : d;
}

}  // namespace

data::FrequencyPair generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> lat(spec.lat_min, spec.lat_max);
  std::uniform_real_distribution<double> lon(spec.lon_min, spec.lon_max);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<data::StationMeta> stations;
  for (std::size_t s = 0; s < spec.stations; ++s) {
    char id[16];
    std::snprintf(id, sizeof id, "S%02zu", s + 1);
    const double la = lat(rng);
    stations.push_back({id, la, lon(rng)});
  }
  std::vector<data::StationMeta> centres;
  for (std::size_t r = 0; r < spec.regions; ++r) {
    const double la = lat(rng);
    centres.push_back({"R" + std::to_string(r), la, lon(rng)});
  }

  // Per station: weights over regions (unit sum of squares) and lags.
  const std::size_t n_st = spec.stations, n_r = spec.regions;
  std::vector<std::vector<double>> weight(n_st, std::vector<double>(n_r));
  std::vector<std::vector<std::size_t>> lag(n_st, std::vector<std::size_t>(n_r));
  std::size_t max_lag = 0;
  for (std::size_t s = 0; s < n_st; ++s) {
    double norm = 0.0;
    for (std::size_t r = 0; r < n_r; ++r) {
      const double d = graph::haversine(stations[s], centres[r]);
      weight[s][r] = std::exp(-d / spec.correlation_km);
      norm += weight[s][r] * weight[s][r];
      const double east_km = graph::haversine({"", centres[r].latitude, stations[s].longitude}, centres[r]) *
                             (stations[s].longitude >= centres[r].longitude ? 1.0 : 0.0);
      lag[s][r] = static_cast<std::size_t>(std::lround(east_km / 100.0 * spec.advection_steps_per_100km));
      max_lag = std::max(max_lag, lag[s][r]);
    }
    norm = std::sqrt(norm);
    for (double& w : weight[s]) w = norm > 0.0 ? w / norm : 0.0;
  }

  std::vector<double> offset(n_st), gain(n_st);
  for (std::size_t s = 0; s < n_st; ++s) {
    offset[s] = spec.offset_std * unit(rng);
    gain[s] = std::max(0.0, spec.scale_mean + spec.scale_std * unit(rng));
  }

  const std::size_t n = spec.grid_length;
  std::vector<std::vector<double>> regional;
  for (std::size_t r = 0; r < n_r; ++r)
    regional.push_back(ar2_series(n + max_lag, spec.ar1, spec.ar2, spec.noise_std, rng));
  std::vector<std::vector<double>> local;
  for (std::size_t s = 0; s < n_st; ++s)
    local.push_back(ar2_series(n, spec.ar1, spec.ar2, spec.noise_std, rng));

  const std::int64_t start = data::parse_iso8601(spec.start);
  if (start % data::kTenMinutes != 0) throw ValidationError("synthetic start must be on the 10-minute grid");
  data::SeriesSet series(stations, data::kTenMinutes, start, n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t s = 0; s < n_st; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      double latent = spec.local_share * local[s][t];
      for (std::size_t r = 0; r < n_r; ++r) latent += weight[s][r] * regional[r][t + max_lag - lag[s][r]];
      const std::int64_t ts = series.timestamp(t);
      const data::CivilTime c = data::to_civil(ts);
      const double day_phase = two_pi * (c.hour * 60 + c.minute) / 1440.0;
      const double year_phase = two_pi * static_cast<double>(ts) / (365.25 * 1440.0);

      data::Observation obs{};
      const double ws = spec.mean_speed + offset[s] + gain[s] * latent +
                        spec.diurnal_amplitude * std::sin(day_phase - std::numbers::pi / 2.0) +
                        spec.noise_std * unit(rng);
      obs[data::kWindSpeed] = std::max(0.0, ws);
      obs[data::kWindDirection] = wrap_degrees(240.0 + 25.0 * latent + 5.0 * spec.noise_std * unit(rng));
      obs[data::kTemperature] = 9.0 + 5.0 * spec.seasonal_scale * std::sin(year_phase) + 1.5 * std::sin(day_phase) +
                                0.5 * latent + spec.noise_std * unit(rng);
      obs[data::kPressure] = 1013.0 - 4.0 * latent + 3.0 * spec.seasonal_scale * std::cos(year_phase) + spec.noise_std * unit(rng);
      series.set(s, t, obs);
    }
  }
  return data::with_hourly(std::move(series));
}

}  // namespace stugn::synthetic
