#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stugn::data {

inline constexpr int kTenMinutes = 10;
inline constexpr int kOneHour = 60;

// Raw channel layout of an observation.
inline constexpr std::size_t kRawChannels = 4;
enum RawChannel : std::size_t { kWindSpeed = 0, kWindDirection = 1, kTemperature = 2, kPressure = 3 };

// Encoded feature layout: wind speed, direction sin, direction cos, temperature, pressure.
inline constexpr std::size_t kFeatureChannels = 5;
inline constexpr std::size_t kTimeFeatures = 8;

using Observation = std::array<double, kRawChannels>;
using FeatureVector = std::array<double, kFeatureChannels>;
using TimeEncoding = std::array<double, kTimeFeatures>;

struct StationMeta {
  std::string station_id;
  double latitude = 0.0;   // degrees
  double longitude = 0.0;  // degrees

  bool operator==(const StationMeta&) const = default;
};

/// Throws ValidationError if coordinates are out of range or the id is empty.
void validate(const StationMeta& station);

/// One parsed measurement row.
struct RawRecord {
  std::string station_id;
  std::int64_t timestamp = 0;  // minutes since the Unix epoch, UTC
  Observation values{};
};

/// Calendar fields used by the timestamp encoding.
struct CalendarStamp {
  int minute = 0;
  int hour = 0;
  int day = 1;
  int month = 1;
};

struct CivilTime {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
};

CivilTime to_civil(std::int64_t minutes_since_epoch);
std::int64_t from_civil(const CivilTime& t);
CalendarStamp calendar_stamp(std::int64_t minutes_since_epoch);

/// Parses `YYYY-MM-DDTHH:MM[:SS][Z]`; seconds must be zero.
std::int64_t parse_iso8601(const std::string& text);
std::string format_iso8601(std::int64_t minutes_since_epoch);

/// Multi-station series on one shared, regular time grid.
///
/// A slot is either present (mask set, observation stored) or missing.
/// Grid timestamps are `grid_start + i * frequency`, and `grid_start` must be
/// a multiple of the frequency.
class SeriesSet {
 public:
  SeriesSet() = default;
  SeriesSet(std::vector<StationMeta> stations, int frequency_minutes, std::int64_t grid_start,
            std::size_t grid_length);

  const std::vector<StationMeta>& stations() const { return stations_; }
  std::size_t station_count() const { return stations_.size(); }
  int frequency_minutes() const { return frequency_; }
  std::int64_t grid_start() const { return grid_start_; }
  std::size_t grid_length() const { return length_; }
  std::int64_t timestamp(std::size_t slot) const {
    return grid_start_ + static_cast<std::int64_t>(slot) * frequency_;
  }
  /// Grid slot of `timestamp`, if it lies on the grid.
  std::optional<std::size_t> slot_of(std::int64_t timestamp) const;
  std::optional<std::size_t> station_index(const std::string& station_id) const;

  bool present(std::size_t station, std::size_t slot) const {
    return mask_[station * length_ + slot] != 0;
  }
  const Observation& at(std::size_t station, std::size_t slot) const {
    return values_[station * length_ + slot];
  }
  void set(std::size_t station, std::size_t slot, const Observation& value);
  void clear(std::size_t station, std::size_t slot);

  std::size_t entry_count() const { return stations_.size() * length_; }
  std::size_t present_count() const;

  /// Present records for one station, in time order.
  std::vector<RawRecord> records(std::size_t station) const;

  /// Copy of slots [begin, end).
  SeriesSet slice(std::size_t begin, std::size_t end) const;

  bool operator==(const SeriesSet& other) const;

 private:
  std::vector<StationMeta> stations_;
  int frequency_ = kTenMinutes;
  std::int64_t grid_start_ = 0;
  std::size_t length_ = 0;
  std::vector<Observation> values_;
  std::vector<std::uint8_t> mask_;
};

/// 10-minute series with the hourly series derived from it.
struct FrequencyPair {
  SeriesSet ten_min;
  SeriesSet hourly;
};

FrequencyPair with_hourly(SeriesSet ten_min);

/// [sin, cos] pairs for minute/60, hour/24, day/31, month/12.
TimeEncoding encode_timestamp(const CalendarStamp& stamp);
TimeEncoding encode_timestamp(std::int64_t minutes_since_epoch);

std::pair<double, double> decompose_direction(double degrees);

/// Raw observation to the five encoded feature channels (unscaled).
FeatureVector encode_features(const Observation& obs);

/// Per-channel standardisation with population standard deviation.
class Scaler {
 public:
  Scaler() = default;
  Scaler(std::vector<double> mean, std::vector<double> stddev, std::string fit_source);

  /// Fits over rows of equal width. Throws DegenerateScaleError on a constant channel.
  static Scaler fit(std::span<const std::vector<double>> rows, std::string fit_source = "train");

  std::size_t channels() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }
  const std::string& fit_source() const { return fit_source_; }

  double apply(std::size_t channel, double x) const { return (x - mean_[channel]) / std_[channel]; }
  double invert(std::size_t channel, double z) const { return z * std_[channel] + mean_[channel]; }
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> invert(std::span<const double> z) const;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
  std::string fit_source_;
};

/// Fits the five feature channels over the present entries of `train`.
Scaler fit_scaler(const SeriesSet& train);
FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& features);
FeatureVector invert_scaler(const Scaler& scaler, const FeatureVector& features);

/// Hourly means over available 10-minute samples; hours are aligned to
/// multiples of 60 minutes and must lie fully inside the 10-minute grid.
/// Direction is averaged on the unit circle.
SeriesSet aggregate_hourly(const SeriesSet& series10);

struct WindowSpec {
  std::size_t lookback_ten_min = 18;
  std::size_t lookback_hourly = 12;
  std::size_t horizon = 6;
};

/// Look-back and target slots for one forecast anchor. All stations share
/// the same slots; availability is read from each series' mask.
struct Window {
  std::size_t anchor = 0;  // 10-minute slot of the first target
  std::int64_t anchor_timestamp = 0;
  std::size_t ten_min_begin = 0;
  std::size_t ten_min_count = 0;
  std::size_t hourly_begin = 0;
  std::size_t hourly_count = 0;
  std::size_t horizon = 0;

  std::vector<std::size_t> ten_min_inputs() const;
  std::vector<std::size_t> hourly_inputs() const;
  std::vector<std::size_t> targets() const;
};

/// Anchor validity: full 10-minute look-back, full horizon, and
/// `lookback_hourly` complete hours ending at or before the anchor time.
std::vector<Window> make_windows(const SeriesSet& ten_min, const SeriesSet& hourly,
                                 const WindowSpec& spec = {}, std::size_t stride = 1);
std::vector<Window> make_windows(const FrequencyPair& data, const WindowSpec& spec = {},
                                 std::size_t stride = 1);

struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;
};

/// Chronological 60/20/20 boundaries of a grid.
SplitBounds split_bounds(std::size_t grid_length);

struct DatasetSplits {
  FrequencyPair train;
  FrequencyPair val;
  FrequencyPair test;
};

/// Splits the 10-minute grid and re-derives hourly series per split, so no
/// window can straddle a boundary. Throws InsufficientDataError if any split
/// yields no window.
DatasetSplits split_dataset(const SeriesSet& full10, const WindowSpec& spec = {});

}  // namespace stugn::data
