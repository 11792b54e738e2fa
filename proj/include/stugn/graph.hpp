#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stugn/data.hpp"

namespace stugn::graph {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in kilometres.
double haversine(const data::StationMeta& a, const data::StationMeta& b);

/// Station indices ordered by distance from `from` (ties by smaller station
/// id), excluding `from` itself.
std::vector<std::size_t> stations_by_distance(const std::vector<data::StationMeta>& stations,
                                              std::size_t from);

/// Fixed per-station neighbourhood: k nearest stations.
struct SpatialGraph {
  std::vector<std::vector<std::size_t>> neighbors;   // neighbors[i]: senders into i
  std::vector<std::vector<double>> distance_km;      // parallel to neighbors
};

SpatialGraph knn_stations(const std::vector<data::StationMeta>& stations, std::size_t k = 3);

enum class Frequency : std::uint8_t { kTenMinute = 0, kHourly = 1 };
enum class NodeKind : std::uint8_t { kObserved = 0, kPlaceholder = 1 };

struct NodeRecord {
  std::size_t node_id = 0;
  std::size_t station = 0;  // index into the station list
  std::int64_t timestamp = 0;
  Frequency frequency = Frequency::kTenMinute;
  NodeKind kind = NodeKind::kObserved;
  data::FeatureVector features{};  // scaled channels
  data::TimeEncoding time{};
  std::size_t position = 0;  // index within the station's sequence of that frequency
};

struct EdgeRecord {
  std::size_t src = 0;
  std::size_t dst = 0;
  double dlat = 0.0;  // degrees, src - dst
  double dlon = 0.0;  // degrees, src - dst
  double dt = 0.0;    // minutes, src - dst
};

EdgeRecord edge_deltas(const NodeRecord& src, const NodeRecord& dst,
                       const std::vector<data::StationMeta>& stations);

/// Sample-per-node graph for one window.
struct UnifiedGraph {
  std::vector<data::StationMeta> stations;
  std::vector<NodeRecord> nodes;
  std::vector<std::vector<EdgeRecord>> in_edges;           // per destination node
  std::vector<std::vector<std::size_t>> forecast_nodes;    // [station][horizon step]
  std::vector<double> last_value;                          // scaled wind speed per station
  std::vector<std::size_t> fallback_stations;              // stations that borrowed a neighbour's value

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const;
  std::size_t observed_count() const;
};

/// Window data already encoded and scaled, with a presence mask.
/// Built once per split; graph construction reads from it.
class EncodedSeries {
 public:
  EncodedSeries() = default;
  EncodedSeries(const data::SeriesSet& series, const data::Scaler& scaler);

  const std::vector<data::StationMeta>& stations() const { return stations_; }
  std::size_t station_count() const { return stations_.size(); }
  std::size_t grid_length() const { return length_; }
  int frequency_minutes() const { return frequency_; }
  std::int64_t timestamp(std::size_t slot) const {
    return grid_start_ + static_cast<std::int64_t>(slot) * frequency_;
  }
  bool present(std::size_t s, std::size_t t) const { return mask_[s * length_ + t] != 0; }
  const data::FeatureVector& features(std::size_t s, std::size_t t) const {
    return features_[s * length_ + t];
  }
  const data::TimeEncoding& time(std::size_t t) const { return time_[t]; }

 private:
  std::vector<data::StationMeta> stations_;
  int frequency_ = data::kTenMinutes;
  std::int64_t grid_start_ = 0;
  std::size_t length_ = 0;
  std::vector<data::FeatureVector> features_;
  std::vector<std::uint8_t> mask_;
  std::vector<data::TimeEncoding> time_;
};

struct EncodedPair {
  EncodedSeries ten_min;
  EncodedSeries hourly;
};

EncodedPair encode_pair(const data::FrequencyPair& pair, const data::Scaler& scaler);

struct UnifiedGraphOptions {
  std::size_t temporal_neighbors = 3;  // per direction, same station and frequency
  std::size_t spatial_stations = 3;
  bool include_hourly = true;
};

/// Builds the unified graph: one node per available sample of both
/// frequencies, six forecast placeholders per station, and the in-edge
/// lists described in the README. Deterministic.
UnifiedGraph build_unified_graph(const data::Window& window, const EncodedPair& data,
                                 const SpatialGraph& spatial, const UnifiedGraphOptions& options = {});

/// Dense per-station view of one window for the aligned baselines.
struct AlignedWindow {
  std::size_t stations = 0;
  std::size_t steps = 0;        // look-back length T
  std::size_t channels = 0;     // features per step (10-min + held hourly)
  std::vector<double> values;   // [station][step][channel]
  std::vector<data::TimeEncoding> time;         // per step
  std::vector<data::TimeEncoding> target_time;  // per horizon step
  std::vector<double> last_value;               // scaled wind speed per station

  double at(std::size_t s, std::size_t t, std::size_t c) const {
    return values[(s * steps + t) * channels + c];
  }
};

/// Aligned tensors for a complete (imputed) window; the hourly series is
/// held step-wise onto the 10-minute grid and concatenated channel-wise.
/// Only input slots are read. Throws ValidationError if any is missing.
AlignedWindow build_spatial_graph(const data::Window& window, const data::FrequencyPair& imputed,
                                  const data::Scaler& scaler);

/// Debug dumps.
void write_nodes_csv(std::ostream& out, const UnifiedGraph& g);
void write_edges_csv(std::ostream& out, const UnifiedGraph& g);

}  // namespace stugn::graph
