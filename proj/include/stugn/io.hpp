#pragma once

// Measurement CSV files.
//
//     station_id,lat,lon,timestamp,wind_speed,wind_direction,temperature,pressure
//     S01,56.1,3.2,2020-01-01T00:00:00Z,7.9,231.0,8.4,1012.7
//
// Timestamps are UTC on the 10-minute grid. A row whose value fields are
// all empty marks its slot as missing; a row with only some fields empty
// is missing as well, since a slot is present only with every channel.
// Rows of one station must have strictly increasing timestamps.

#include <iosfwd>
#include <string>

#include "stugn/data.hpp"

namespace stugn::io {

inline constexpr const char* kCsvHeader =
    "station_id,lat,lon,timestamp,wind_speed,wind_direction,temperature,pressure";

/// Parses a 10-minute file onto one grid spanning the earliest to the
/// latest timestamp. Stations are ordered by id. Errors name the line.
data::SeriesSet read_series_csv(std::istream& in);
data::SeriesSet read_series_csv_file(const std::string& path);

/// Parsed 10-minute series plus the derived hourly series.
data::FrequencyPair ingest_csv(const std::string& path);

/// Writes every grid slot of every station; missing slots have empty
/// value fields, so the grid survives a round trip.
void write_series_csv(std::ostream& out, const data::SeriesSet& series);
void write_series_csv_file(const std::string& path, const data::SeriesSet& series);

}  // namespace stugn::io
