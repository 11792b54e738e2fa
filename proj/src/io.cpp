#include "stugn/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "stugn/error.hpp"

namespace stugn::io {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, std::size_t lineno, const char* what) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v))
    throw ValidationError("line " + std::to_string(lineno) + ": bad " + what + " '" + text + "'");
  return v;
}

struct Row {
  std::size_t line = 0;
  std::int64_t timestamp = 0;
  std::optional<data::Observation> values;
};

std::string line_tag(std::size_t lineno) { return "line " + std::to_string(lineno) + ": "; }

}  // namespace

data::SeriesSet read_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty measurement file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader)
    throw ValidationError(std::string("line 1: expected header '") + kCsvHeader + "'");

  std::map<std::string, data::StationMeta> stations;
  std::map<std::string, std::vector<Row>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 8)
      throw ValidationError(line_tag(lineno) + "expected 8 fields, found " + std::to_string(f.size()));
    data::StationMeta meta{f[0], parse_number(f[1], lineno, "latitude"),
                           parse_number(f[2], lineno, "longitude")};
    try {
      data::validate(meta);
    } catch (const ValidationError& e) {
      throw ValidationError(line_tag(lineno) + e.what());
    }
    if (auto it = stations.find(meta.station_id); it == stations.end()) {
      stations.emplace(meta.station_id, meta);
    } else if (!(it->second == meta)) {
      throw ValidationError(line_tag(lineno) + "coordinates of station " + meta.station_id +
                            " differ from an earlier row");
    }

    Row row;
    row.line = lineno;
    try {
      row.timestamp = data::parse_iso8601(f[3]);
    } catch (const ValidationError& e) {
      throw ValidationError(line_tag(lineno) + e.what());
    }
    if (row.timestamp % data::kTenMinutes != 0)
      throw ValidationError(line_tag(lineno) + "timestamp is not on the 10-minute grid");
    const bool any_empty = std::any_of(f.begin() + 4, f.end(), [](const std::string& s) { return s.empty(); });
    if (!any_empty) {
      data::Observation obs{};
      obs[data::kWindSpeed] = parse_number(f[4], lineno, "wind_speed");
      obs[data::kWindDirection] = parse_number(f[5], lineno, "wind_direction");
      obs[data::kTemperature] = parse_number(f[6], lineno, "temperature");
      obs[data::kPressure] = parse_number(f[7], lineno, "pressure");
      if (obs[data::kWindSpeed] < 0.0) throw ValidationError(line_tag(lineno) + "negative wind speed");
      if (obs[data::kWindDirection] < 0.0 || obs[data::kWindDirection] >= 360.0)
        throw ValidationError(line_tag(lineno) + "wind direction outside [0, 360)");
      row.values = obs;
    }
    auto& list = rows[meta.station_id];
    if (!list.empty()) {
      if (row.timestamp == list.back().timestamp)
        throw ValidationError(line_tag(lineno) + "duplicate timestamp for station " + meta.station_id +
                              " (first seen on line " + std::to_string(list.back().line) + ")");
      if (row.timestamp < list.back().timestamp)
        throw ValidationError(line_tag(lineno) + "timestamps of station " + meta.station_id +
                              " are not increasing");
    }
    list.push_back(row);
  }
  if (stations.empty()) throw ValidationError("measurement file has no rows");

  std::int64_t first = rows.begin()->second.front().timestamp;
  std::int64_t last = first;
  for (const auto& [id, list] : rows) {
    first = std::min(first, list.front().timestamp);
    last = std::max(last, list.back().timestamp);
  }
  std::vector<data::StationMeta> metas;
  for (const auto& [id, meta] : stations) metas.push_back(meta);
  const auto length = static_cast<std::size_t>((last - first) / data::kTenMinutes + 1);
  data::SeriesSet series(metas, data::kTenMinutes, first, length);
  for (std::size_t s = 0; s < metas.size(); ++s)
    for (const Row& r : rows[metas[s].station_id])
      if (r.values) series.set(s, *series.slot_of(r.timestamp), *r.values);
  return series;
}

data::SeriesSet read_series_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return read_series_csv(in);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

data::FrequencyPair ingest_csv(const std::string& path) {
  return data::with_hourly(read_series_csv_file(path));
}

void write_series_csv(std::ostream& out, const data::SeriesSet& series) {
  if (series.frequency_minutes() != data::kTenMinutes)
    throw ValidationError("only 10-minute series are written to measurement files");
  out << kCsvHeader << '\n';
  char buf[256];
  for (std::size_t s = 0; s < series.station_count(); ++s) {
    const auto& st = series.stations()[s];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", st.latitude, st.longitude);
    const std::string prefix = st.station_id + "," + buf + ",";
    for (std::size_t t = 0; t < series.grid_length(); ++t) {
      out << prefix << data::format_iso8601(series.timestamp(t)) << ',';
      if (series.present(s, t)) {
        const auto& v = series.at(s, t);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", v[data::kWindSpeed],
                      v[data::kWindDirection], v[data::kTemperature], v[data::kPressure]);
        out << buf << '\n';
      } else {
        out << ",,,\n";
      }
    }
  }
}

void write_series_csv_file(const std::string& path, const data::SeriesSet& series) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write " + path);
  write_series_csv(out, series);
  if (!out) throw RuntimeFailure("cannot write " + path);
}

}  // namespace stugn::io
