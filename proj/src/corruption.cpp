#include "stugn/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "stugn/error.hpp"
#include "stugn/graph.hpp"

namespace stugn::corruption {

using data::Observation;
using data::SeriesSet;

std::vector<double> burst_probabilities(const BurstModel& model) {
  if (model.max_burst < 1) throw ValidationError("max_burst must be at least 1");
  if (!(model.decay_scale > 0.0)) throw ValidationError("decay_scale must be positive");
  std::vector<double> p(static_cast<std::size_t>(model.max_burst));
  double total = 0.0;
  for (int n = 1; n <= model.max_burst; ++n) total += std::exp(-n / model.decay_scale);
  for (int n = 1; n <= model.max_burst; ++n) p[n - 1] = std::exp(-n / model.decay_scale) / total;
  return p;
}

BurstDraws draw_bursts(std::size_t entries, const BurstModel& model) {
  const std::vector<double> p = burst_probabilities(model);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  std::mt19937_64 rng(model.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BurstDraws d;
  d.uniform.resize(entries);
  d.burst_length.resize(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    d.uniform[i] = unit(rng);
    const double u = unit(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), p.size() - 1);
    d.burst_length[i] = static_cast<std::uint8_t>(n + 1);
  }
  return d;
}

std::vector<std::uint8_t> removal_flags(const SeriesSet& series, const BurstDraws& draws,
                                        double base_rate) {
  const std::size_t len = series.grid_length();
  std::vector<std::uint8_t> removed(series.entry_count(), 0);
  for (std::size_t s = 0; s < series.station_count(); ++s) {
    std::size_t burst_until = 0;  // exclusive slot bound of the current burst
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t idx = s * len + t;
      if (!series.present(s, t)) continue;
      const bool seed = draws.uniform[idx] < base_rate;
      if (seed || t < burst_until) removed[idx] = 1;
      // Only seeds start bursts; burst-removed entries do not cascade.
      if (seed) burst_until = std::max(burst_until, t + 1 + draws.burst_length[idx]);
    }
  }
  return removed;
}

namespace {

double realized(const std::vector<std::uint8_t>& flags, std::size_t entries) {
  const auto n = static_cast<double>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
  return entries == 0 ? 0.0 : n / static_cast<double>(entries);
}

}  // namespace

Corrupted inject_missing(const SeriesSet& series, const BurstModel& model) {
  if (!(model.target_rate >= 0.0 && model.target_rate < 1.0))
    throw ValidationError("target missing rate must lie in [0, 1)");
  Corrupted out{series, {}};
  if (model.target_rate == 0.0 || series.entry_count() == 0) return out;

  const BurstDraws draws = draw_bursts(series.entry_count(), model);
  // The realized rate is non-decreasing in the base rate, so bisection applies.
  double lo = 0.0, hi = 1.0;
  double best_b = 0.0, best_err = model.target_rate;
  std::vector<std::uint8_t> best_flags(series.entry_count(), 0);
  for (int iter = 0; iter < 60; ++iter) {
    const double b = 0.5 * (lo + hi);
    auto flags = removal_flags(series, draws, b);
    const double r = realized(flags, series.entry_count());
    if (std::abs(r - model.target_rate) < best_err) {
      best_err = std::abs(r - model.target_rate);
      best_b = b;
      best_flags = std::move(flags);
    }
    if (best_err <= 5e-4) break;
    (r < model.target_rate ? lo : hi) = b;
  }

  const std::size_t len = series.grid_length();
  for (std::size_t s = 0; s < series.station_count(); ++s)
    for (std::size_t t = 0; t < len; ++t)
      if (best_flags[s * len + t]) {
        out.data.clear(s, t);
        out.log.removed.push_back(
            {series.stations()[s].station_id, series.frequency_minutes(), series.timestamp(t)});
      }
  out.log.base_rate = best_b;
  out.log.realized_rate = realized(best_flags, series.entry_count());
  return out;
}

SeriesSet apply_log(const SeriesSet& series, const CorruptionLog& log) {
  SeriesSet out = series;
  for (const RemovedEntry& e : log.removed) {
    if (e.frequency_minutes != series.frequency_minutes()) continue;
    const auto s = series.station_index(e.station_id);
    const auto t = series.slot_of(e.timestamp);
    if (!s || !t) throw ValidationError("corruption log entry outside the series: " + e.station_id);
    out.clear(*s, *t);
  }
  return out;
}

void write_log_csv(std::ostream& out, const CorruptionLog& log) {
  out << "station_id,frequency_minutes,timestamp\n";
  for (const RemovedEntry& e : log.removed)
    out << e.station_id << ',' << e.frequency_minutes << ',' << data::format_iso8601(e.timestamp)
        << '\n';
}

CorruptionLog read_log_csv(std::istream& in) {
  CorruptionLog log;
  std::string line;
  if (!std::getline(in, line) || line != "station_id,frequency_minutes,timestamp")
    throw ValidationError("corruption log: unexpected header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    RemovedEntry e;
    std::string freq, ts;
    if (!std::getline(ss, e.station_id, ',') || !std::getline(ss, freq, ',') ||
        !std::getline(ss, ts))
      throw ValidationError("corruption log: malformed line " + std::to_string(lineno));
    e.frequency_minutes = std::stoi(freq);
    e.timestamp = data::parse_iso8601(ts);
    log.removed.push_back(std::move(e));
  }
  return log;
}

namespace {

double lerp_direction(double a, double b, double w) {
  double diff = std::fmod(b - a + 540.0, 360.0) - 180.0;  // shorter arc in (-180, 180]
  double v = a + w * diff;
  v = std::fmod(v + 360.0, 360.0);
  return v >= 360.0 ? 0.0 : v;
}

// Fills one station in place; returns false if it has no value at all.
bool fill_station(const SeriesSet& in, std::size_t s, std::vector<Observation>& out) {
  const std::size_t len = in.grid_length();
  std::vector<std::size_t> avail;
  for (std::size_t t = 0; t < len; ++t)
    if (in.present(s, t)) avail.push_back(t);
  if (avail.empty()) return false;
  out.assign(len, Observation{});
  std::size_t k = 0;  // first available index >= t
  for (std::size_t t = 0; t < len; ++t) {
    while (k < avail.size() && avail[k] < t) ++k;
    if (k < avail.size() && avail[k] == t) {
      out[t] = in.at(s, t);
    } else if (k == 0) {
      out[t] = in.at(s, avail.front());
    } else if (k == avail.size()) {
      out[t] = in.at(s, avail.back());
    } else {
      const std::size_t t0 = avail[k - 1], t1 = avail[k];
      const double w = static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
      const Observation& a = in.at(s, t0);
      const Observation& b = in.at(s, t1);
      for (std::size_t c = 0; c < data::kRawChannels; ++c) out[t][c] = a[c] + w * (b[c] - a[c]);
      out[t][data::kWindDirection] = lerp_direction(a[data::kWindDirection], b[data::kWindDirection], w);
    }
  }
  return true;
}

}  // namespace

SeriesSet interpolate_impute(const SeriesSet& series) {
  const std::size_t n = series.station_count();
  std::vector<std::vector<Observation>> filled(n);
  std::vector<bool> has(n, false);
  for (std::size_t s = 0; s < n; ++s) has[s] = fill_station(series, s, filled[s]);
  if (n > 0 && std::none_of(has.begin(), has.end(), [](bool b) { return b; }))
    throw ImputationError("imputation impossible: no station has data in the window");

  SeriesSet out(series.stations(), series.frequency_minutes(), series.grid_start(),
                series.grid_length());
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t src = s;
    if (!has[s]) {
      for (std::size_t cand : graph::stations_by_distance(series.stations(), s))
        if (has[cand]) {
          src = cand;
          break;
        }
    }
    for (std::size_t t = 0; t < series.grid_length(); ++t) {
      if (series.present(s, t))
        out.set(s, t, series.at(s, t));
      else
        out.set(s, t, filled[src][t]);
    }
  }
  return out;
}

ImputedWindow impute_window(const data::FrequencyPair& series, const data::Window& w) {
  ImputedWindow out;
  out.inputs.ten_min =
      interpolate_impute(series.ten_min.slice(w.ten_min_begin, w.ten_min_begin + w.ten_min_count));
  out.inputs.hourly =
      interpolate_impute(series.hourly.slice(w.hourly_begin, w.hourly_begin + w.hourly_count));
  out.window = w;
  out.window.ten_min_begin = 0;
  out.window.hourly_begin = 0;
  out.window.anchor = w.ten_min_count;
  return out;
}

}  // namespace stugn::corruption
