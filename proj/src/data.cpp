#include "stugn/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <tuple>

#include "stugn/error.hpp"

namespace stugn::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

}  // namespace

void validate(const StationMeta& station) {
  if (station.station_id.empty()) throw ValidationError("station id must not be empty");
  if (!(station.latitude >= -90.0 && station.latitude <= 90.0))
    throw ValidationError("latitude out of range for station " + station.station_id);
  if (!(station.longitude >= -180.0 && station.longitude <= 180.0))
    throw ValidationError("longitude out of range for station " + station.station_id);
}

CivilTime to_civil(std::int64_t minutes_since_epoch) {
  using namespace std::chrono;
  const std::int64_t days = floor_div(minutes_since_epoch, 24 * 60);
  const std::int64_t rem = minutes_since_epoch - days * 24 * 60;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  return CivilTime{static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
                   static_cast<int>(static_cast<unsigned>(ymd.day())), static_cast<int>(rem / 60),
                   static_cast<int>(rem % 60)};
}

std::int64_t from_civil(const CivilTime& t) {
  using namespace std::chrono;
  const year_month_day ymd{year{t.year}, month{static_cast<unsigned>(t.month)},
                           day{static_cast<unsigned>(t.day)}};
  if (!ymd.ok()) throw ValidationError("invalid calendar date");
  if (t.hour < 0 || t.hour > 23 || t.minute < 0 || t.minute > 59)
    throw ValidationError("invalid time of day");
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * 24 * 60 + t.hour * 60 + t.minute;
}

CalendarStamp calendar_stamp(std::int64_t minutes_since_epoch) {
  const CivilTime c = to_civil(minutes_since_epoch);
  return CalendarStamp{c.minute, c.hour, c.day, c.month};
}

std::int64_t parse_iso8601(const std::string& text) {
  CivilTime t;
  int second = 0;
  char tail[8] = {0};
  const int n = std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%7s", &t.year, &t.month, &t.day,
                            &t.hour, &t.minute, &second, tail);
  if (n == 5) {
    // Accept "...THH:MM" and "...THH:MMZ".
    char tail2[8] = {0};
    std::sscanf(text.c_str(), "%*4d-%*2d-%*2dT%*2d:%*2d%7s", tail2);
    if (tail2[0] != '\0' && std::string(tail2) != "Z")
      throw ValidationError("malformed timestamp '" + text + "'");
  } else if (n == 6 || n == 7) {
    if (n == 7 && std::string(tail) != "Z") throw ValidationError("malformed timestamp '" + text + "'");
    if (second != 0) throw ValidationError("timestamp with non-zero seconds '" + text + "'");
  } else {
    throw ValidationError("malformed timestamp '" + text + "'");
  }
  return from_civil(t);
}

std::string format_iso8601(std::int64_t minutes_since_epoch) {
  const CivilTime c = to_civil(minutes_since_epoch);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:00Z", c.year, c.month, c.day, c.hour,
                c.minute);
  return buf;
}

SeriesSet::SeriesSet(std::vector<StationMeta> stations, int frequency_minutes,
                     std::int64_t grid_start, std::size_t grid_length)
    : stations_(std::move(stations)),
      frequency_(frequency_minutes),
      grid_start_(grid_start),
      length_(grid_length),
      values_(stations_.size() * grid_length),
      mask_(stations_.size() * grid_length, 0) {
  if (frequency_ <= 0) throw ValidationError("sampling period must be positive");
  if (grid_start % frequency_ != 0)
    throw ValidationError("grid start is not a multiple of the sampling period");
  for (std::size_t i = 0; i < stations_.size(); ++i) {
    validate(stations_[i]);
    for (std::size_t j = 0; j < i; ++j)
      if (stations_[j].station_id == stations_[i].station_id)
        throw ValidationError("duplicate station id " + stations_[i].station_id);
  }
}

std::optional<std::size_t> SeriesSet::slot_of(std::int64_t ts) const {
  const std::int64_t off = ts - grid_start_;
  if (off < 0 || off % frequency_ != 0) return std::nullopt;
  const auto slot = static_cast<std::size_t>(off / frequency_);
  if (slot >= length_) return std::nullopt;
  return slot;
}

std::optional<std::size_t> SeriesSet::station_index(const std::string& id) const {
  for (std::size_t i = 0; i < stations_.size(); ++i)
    if (stations_[i].station_id == id) return i;
  return std::nullopt;
}

void SeriesSet::set(std::size_t station, std::size_t slot, const Observation& value) {
  if (!(value[kWindSpeed] >= 0.0)) throw ValidationError("wind speed must be non-negative");
  if (!(value[kWindDirection] >= 0.0 && value[kWindDirection] < 360.0))
    throw ValidationError("wind direction must be in [0, 360)");
  values_[station * length_ + slot] = value;
  mask_[station * length_ + slot] = 1;
}

void SeriesSet::clear(std::size_t station, std::size_t slot) {
  values_[station * length_ + slot] = Observation{};
  mask_[station * length_ + slot] = 0;
}

std::size_t SeriesSet::present_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

std::vector<RawRecord> SeriesSet::records(std::size_t station) const {
  std::vector<RawRecord> out;
  for (std::size_t t = 0; t < length_; ++t)
    if (present(station, t)) out.push_back({stations_[station].station_id, timestamp(t), at(station, t)});
  return out;
}

SeriesSet SeriesSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length_) throw ValidationError("slice bounds out of range");
  SeriesSet out(stations_, frequency_, timestamp(begin), end - begin);
  for (std::size_t s = 0; s < stations_.size(); ++s)
    for (std::size_t t = begin; t < end; ++t)
      if (present(s, t)) {
        out.values_[s * out.length_ + (t - begin)] = at(s, t);
        out.mask_[s * out.length_ + (t - begin)] = 1;
      }
  return out;
}

bool SeriesSet::operator==(const SeriesSet& o) const {
  if (stations_ != o.stations_ || frequency_ != o.frequency_ || grid_start_ != o.grid_start_ ||
      length_ != o.length_ || mask_ != o.mask_)
    return false;
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i] && values_[i] != o.values_[i]) return false;
  return true;
}

FrequencyPair with_hourly(SeriesSet ten_min) {
  SeriesSet hourly = aggregate_hourly(ten_min);
  return FrequencyPair{std::move(ten_min), std::move(hourly)};
}

TimeEncoding encode_timestamp(const CalendarStamp& s) {
  if (s.minute < 0 || s.minute > 59) throw ValidationError("minute out of range");
  if (s.hour < 0 || s.hour > 23) throw ValidationError("hour out of range");
  if (s.day < 1 || s.day > 31) throw ValidationError("day out of range");
  if (s.month < 1 || s.month > 12) throw ValidationError("month out of range");
  const std::array<std::pair<int, int>, 4> parts{
      {{s.minute, 60}, {s.hour, 24}, {s.day, 31}, {s.month, 12}}};
  TimeEncoding out{};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto [value, period] = parts[i];
    if ((4 * value) % period == 0) {
      // Quarter turns are exact.
      constexpr std::array<std::pair<double, double>, 4> quarter{{{0.0, 1.0}, {1.0, 0.0}, {0.0, -1.0}, {-1.0, 0.0}}};
      std::tie(out[2 * i], out[2 * i + 1]) = quarter[static_cast<std::size_t>((4 * value) / period) % 4];
      continue;
    }
    const double angle = value * (kTwoPi / period);
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

TimeEncoding encode_timestamp(std::int64_t minutes_since_epoch) {
  return encode_timestamp(calendar_stamp(minutes_since_epoch));
}

std::pair<double, double> decompose_direction(double degrees) {
  if (!(degrees >= 0.0 && degrees < 360.0)) throw ValidationError("direction must be in [0, 360)");
  const double rad = degrees * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

FeatureVector encode_features(const Observation& obs) {
  const auto [s, c] = decompose_direction(obs[kWindDirection]);
  return {obs[kWindSpeed], s, c, obs[kTemperature], obs[kPressure]};
}

Scaler::Scaler(std::vector<double> mean, std::vector<double> stddev, std::string fit_source)
    : mean_(std::move(mean)), std_(std::move(stddev)), fit_source_(std::move(fit_source)) {
  if (mean_.size() != std_.size()) throw ValidationError("scaler mean/std size mismatch");
  for (double s : std_)
    if (!(s > 0.0)) throw DegenerateScaleError("scaler standard deviation must be positive");
}

Scaler Scaler::fit(std::span<const std::vector<double>> rows, std::string fit_source) {
  if (rows.size() < 2) throw DegenerateScaleError("scaler needs at least two rows");
  const std::size_t width = rows.front().size();
  std::vector<double> mean(width, 0.0), var(width, 0.0);
  for (const auto& r : rows) {
    if (r.size() != width) throw ValidationError("ragged rows passed to scaler");
    for (std::size_t c = 0; c < width; ++c) mean[c] += r[c];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t c = 0; c < width; ++c) var[c] += (r[c] - mean[c]) * (r[c] - mean[c]);
  std::vector<double> stddev(width);
  for (std::size_t c = 0; c < width; ++c) {
    stddev[c] = std::sqrt(var[c] / static_cast<double>(rows.size()));
    if (!(stddev[c] > 0.0))
      throw DegenerateScaleError("channel " + std::to_string(c) + " is constant; cannot scale");
  }
  return Scaler(std::move(mean), std::move(stddev), std::move(fit_source));
}

std::vector<double> Scaler::apply(std::span<const double> x) const {
  if (x.size() != channels()) throw ValidationError("scaler width mismatch");
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) out[c] = apply(c, x[c]);
  return out;
}

std::vector<double> Scaler::invert(std::span<const double> z) const {
  if (z.size() != channels()) throw ValidationError("scaler width mismatch");
  std::vector<double> out(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) out[c] = invert(c, z[c]);
  return out;
}

Scaler fit_scaler(const SeriesSet& train) {
  std::vector<std::vector<double>> rows;
  rows.reserve(train.present_count());
  for (std::size_t s = 0; s < train.station_count(); ++s)
    for (std::size_t t = 0; t < train.grid_length(); ++t)
      if (train.present(s, t)) {
        const FeatureVector f = encode_features(train.at(s, t));
        rows.emplace_back(f.begin(), f.end());
      }
  return Scaler::fit(rows, "train");
}

FeatureVector apply_scaler(const Scaler& scaler, const FeatureVector& f) {
  FeatureVector out{};
  for (std::size_t c = 0; c < f.size(); ++c) out[c] = scaler.apply(c, f[c]);
  return out;
}

FeatureVector invert_scaler(const Scaler& scaler, const FeatureVector& f) {
  FeatureVector out{};
  for (std::size_t c = 0; c < f.size(); ++c) out[c] = scaler.invert(c, f[c]);
  return out;
}

SeriesSet aggregate_hourly(const SeriesSet& s10) {
  if (s10.frequency_minutes() != kTenMinutes)
    throw ValidationError("aggregate_hourly expects a 10-minute series");
  const std::int64_t start = s10.grid_start();
  const std::int64_t end = start + static_cast<std::int64_t>(s10.grid_length()) * kTenMinutes;
  const std::int64_t hstart = ceil_div(start, kOneHour) * kOneHour;
  const std::int64_t hours = end > hstart ? (end - hstart) / kOneHour : 0;
  SeriesSet out(s10.stations(), kOneHour, hstart, static_cast<std::size_t>(hours));
  constexpr std::size_t kPerHour = kOneHour / kTenMinutes;
  for (std::size_t st = 0; st < s10.station_count(); ++st) {
    for (std::size_t h = 0; h < out.grid_length(); ++h) {
      const std::size_t first = static_cast<std::size_t>((out.timestamp(h) - start) / kTenMinutes);
      double ws = 0, temp = 0, pres = 0, dsin = 0, dcos = 0;
      int n = 0;
      for (std::size_t k = 0; k < kPerHour; ++k) {
        if (!s10.present(st, first + k)) continue;
        const Observation& o = s10.at(st, first + k);
        ws += o[kWindSpeed];
        temp += o[kTemperature];
        pres += o[kPressure];
        const auto [ds, dc] = decompose_direction(o[kWindDirection]);
        dsin += ds;
        dcos += dc;
        ++n;
      }
      if (n == 0) continue;
      double dir = std::atan2(dsin, dcos) * 180.0 / std::numbers::pi;
      if (dir < 0.0) dir += 360.0;
      if (dir >= 360.0) dir -= 360.0;
      out.set(st, h, Observation{ws / n, dir, temp / n, pres / n});
    }
  }
  return out;
}

std::vector<std::size_t> Window::ten_min_inputs() const {
  std::vector<std::size_t> v(ten_min_count);
  for (std::size_t i = 0; i < ten_min_count; ++i) v[i] = ten_min_begin + i;
  return v;
}

std::vector<std::size_t> Window::hourly_inputs() const {
  std::vector<std::size_t> v(hourly_count);
  for (std::size_t i = 0; i < hourly_count; ++i) v[i] = hourly_begin + i;
  return v;
}

std::vector<std::size_t> Window::targets() const {
  std::vector<std::size_t> v(horizon);
  for (std::size_t i = 0; i < horizon; ++i) v[i] = anchor + i;
  return v;
}

std::vector<Window> make_windows(const SeriesSet& ten, const SeriesSet& hourly,
                                 const WindowSpec& spec, std::size_t stride) {
  if (ten.frequency_minutes() != kTenMinutes || hourly.frequency_minutes() != kOneHour)
    throw ValidationError("make_windows expects 10-minute and hourly series");
  if (stride == 0) throw ValidationError("window stride must be positive");
  std::vector<Window> out;
  const std::size_t len = ten.grid_length();
  if (len < spec.horizon) return out;
  for (std::size_t anchor = spec.lookback_ten_min; anchor + spec.horizon <= len; anchor += stride) {
    const std::int64_t ts = ten.timestamp(anchor);
    // Hourly slots [0, complete) end at or before the anchor time.
    std::int64_t complete =
        hourly.grid_length() == 0 || ts < hourly.grid_start() ? 0 : (ts - hourly.grid_start()) / kOneHour;
    complete = std::min<std::int64_t>(complete, static_cast<std::int64_t>(hourly.grid_length()));
    if (complete < static_cast<std::int64_t>(spec.lookback_hourly)) continue;
    Window w;
    w.anchor = anchor;
    w.anchor_timestamp = ts;
    w.ten_min_begin = anchor - spec.lookback_ten_min;
    w.ten_min_count = spec.lookback_ten_min;
    w.hourly_count = spec.lookback_hourly;
    w.hourly_begin = static_cast<std::size_t>(complete) - spec.lookback_hourly;
    w.horizon = spec.horizon;
    out.push_back(w);
  }
  return out;
}

std::vector<Window> make_windows(const FrequencyPair& data, const WindowSpec& spec,
                                 std::size_t stride) {
  return make_windows(data.ten_min, data.hourly, spec, stride);
}

SplitBounds split_bounds(std::size_t n) {
  return SplitBounds{n * 6 / 10, n * 8 / 10, n};
}

DatasetSplits split_dataset(const SeriesSet& full10, const WindowSpec& spec) {
  const SplitBounds b = split_bounds(full10.grid_length());
  DatasetSplits out{with_hourly(full10.slice(0, b.train_end)),
                    with_hourly(full10.slice(b.train_end, b.val_end)),
                    with_hourly(full10.slice(b.val_end, b.total))};
  const std::array<std::pair<const char*, const FrequencyPair*>, 3> parts{
      {{"train", &out.train}, {"validation", &out.val}, {"test", &out.test}}};
  for (const auto& [name, pair] : parts)
    if (make_windows(*pair, spec).empty())
      throw InsufficientDataError(std::string("series too short: ") + name +
                                  " split yields no forecast window");
  return out;
}

}  // namespace stugn::data
