#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stugn/data.hpp"

namespace stugn::corruption {

/// Burst missingness: seeds drawn independently per entry at a base rate,
/// each seed additionally removing the n following entries of the same
/// station with probability p_n = exp(-n/decay) / sum_j exp(-j/decay).
struct BurstModel {
  double target_rate = 0.0;
  double decay_scale = 10.0;
  int max_burst = 10;
  std::uint64_t seed = 0;
};

/// p_1 .. p_max (index 0 holds p_1).
std::vector<double> burst_probabilities(const BurstModel& model);

/// Per-entry random draws, fixed by the seed and independent of the base rate.
/// An entry seeds a burst at base rate b iff `uniform[i] < b`.
struct BurstDraws {
  std::vector<double> uniform;
  std::vector<std::uint8_t> burst_length;  // n in 1..max_burst
};

BurstDraws draw_bursts(std::size_t entries, const BurstModel& model);

struct RemovedEntry {
  std::string station_id;
  int frequency_minutes = data::kTenMinutes;
  std::int64_t timestamp = 0;

  bool operator==(const RemovedEntry&) const = default;
};

struct CorruptionLog {
  std::vector<RemovedEntry> removed;
  double realized_rate = 0.0;
  double base_rate = 0.0;
};

struct Corrupted {
  data::SeriesSet data;
  CorruptionLog log;
};

/// Removal flags (station-major, matching SeriesSet slot order) for a fixed base rate.
std::vector<std::uint8_t> removal_flags(const data::SeriesSet& series, const BurstDraws& draws,
                                        double base_rate);

/// Removes entries with the burst model, calibrating the base rate by
/// bisection so the realized rate matches `target_rate`.
Corrupted inject_missing(const data::SeriesSet& series, const BurstModel& model);

/// Re-applies a log to a series (entries already missing stay missing).
data::SeriesSet apply_log(const data::SeriesSet& series, const CorruptionLog& log);

void write_log_csv(std::ostream& out, const CorruptionLog& log);
CorruptionLog read_log_csv(std::istream& in);

/// Linear-in-time interpolation of every missing slot from the nearest
/// available values before and after it; one-sided gaps hold the nearest
/// value. Stations without any value copy the filled series of the closest
/// station (haversine, ties by smaller station id). Direction is
/// interpolated along the shorter arc. Throws ImputationError when no
/// station has data.
data::SeriesSet interpolate_impute(const data::SeriesSet& series);

/// Input slots of one window, imputed, with the window re-indexed to the
/// local grids (targets are not part of the local grids).
struct ImputedWindow {
  data::FrequencyPair inputs;
  data::Window window;
};

ImputedWindow impute_window(const data::FrequencyPair& series, const data::Window& window);

}  // namespace stugn::corruption
