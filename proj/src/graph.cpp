#include "stugn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <tuple>

#include "stugn/error.hpp"

namespace stugn::graph {

using data::StationMeta;

double haversine(const StationMeta& a, const StationMeta& b) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (b.latitude - a.latitude) * kDeg;
  const double dlon = (b.longitude - a.longitude) * kDeg;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.latitude * kDeg) * std::cos(b.latitude * kDeg) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(s)));
}

std::vector<std::size_t> stations_by_distance(const std::vector<StationMeta>& stations,
                                              std::size_t from) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t j = 0; j < stations.size(); ++j)
    if (j != from) order.emplace_back(haversine(stations[from], stations[j]), j);
  std::sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    return stations[x.second].station_id < stations[y.second].station_id;
  });
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (const auto& [d, j] : order) out.push_back(j);
  return out;
}

SpatialGraph knn_stations(const std::vector<StationMeta>& stations, std::size_t k) {
  if (stations.size() < 2) throw ValidationError("knn_stations needs at least two stations");
  SpatialGraph g;
  g.neighbors.resize(stations.size());
  g.distance_km.resize(stations.size());
  for (std::size_t i = 0; i < stations.size(); ++i) {
    auto order = stations_by_distance(stations, i);
    order.resize(std::min(k, order.size()));
    for (std::size_t j : order) g.distance_km[i].push_back(haversine(stations[i], stations[j]));
    g.neighbors[i] = std::move(order);
  }
  return g;
}

EdgeRecord edge_deltas(const NodeRecord& src, const NodeRecord& dst,
                       const std::vector<StationMeta>& stations) {
  const StationMeta& a = stations[src.station];
  const StationMeta& b = stations[dst.station];
  return EdgeRecord{src.node_id, dst.node_id, a.latitude - b.latitude, a.longitude - b.longitude,
                    static_cast<double>(src.timestamp - dst.timestamp)};
}

std::size_t UnifiedGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& e : in_edges) n += e.size();
  return n;
}

std::size_t UnifiedGraph::observed_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const NodeRecord& n) {
    return n.kind == NodeKind::kObserved;
  }));
}

EncodedSeries::EncodedSeries(const data::SeriesSet& series, const data::Scaler& scaler)
    : stations_(series.stations()),
      frequency_(series.frequency_minutes()),
      grid_start_(series.grid_start()),
      length_(series.grid_length()),
      features_(series.entry_count()),
      mask_(series.entry_count(), 0),
      time_(series.grid_length()) {
  for (std::size_t t = 0; t < length_; ++t) time_[t] = data::encode_timestamp(series.timestamp(t));
  for (std::size_t s = 0; s < stations_.size(); ++s)
    for (std::size_t t = 0; t < length_; ++t)
      if (series.present(s, t)) {
        features_[s * length_ + t] = data::apply_scaler(scaler, data::encode_features(series.at(s, t)));
        mask_[s * length_ + t] = 1;
      }
}

EncodedPair encode_pair(const data::FrequencyPair& pair, const data::Scaler& scaler) {
  return EncodedPair{EncodedSeries(pair.ten_min, scaler), EncodedSeries(pair.hourly, scaler)};
}

namespace {

struct StationNodes {
  std::vector<std::size_t> ten_min;  // node ids in time order
  std::vector<std::size_t> hourly;
  const std::vector<std::size_t>& of(Frequency f) const {
    return f == Frequency::kTenMinute ? ten_min : hourly;
  }
};

std::optional<std::size_t> last_present(const EncodedSeries& s, std::size_t station,
                                        std::size_t begin, std::size_t count) {
  for (std::size_t k = count; k-- > 0;)
    if (s.present(station, begin + k)) return begin + k;
  return std::nullopt;
}

}  // namespace

UnifiedGraph build_unified_graph(const data::Window& w, const EncodedPair& data,
                                 const SpatialGraph& spatial, const UnifiedGraphOptions& opt) {
  const EncodedSeries& ten = data.ten_min;
  const EncodedSeries& hr = data.hourly;
  const std::size_t n_st = ten.station_count();
  if (spatial.neighbors.size() != n_st) throw ValidationError("spatial graph does not match stations");

  UnifiedGraph g;
  g.stations = ten.stations();
  std::vector<StationNodes> per(n_st);

  for (std::size_t s = 0; s < n_st; ++s) {
    for (std::size_t k = 0; k < w.ten_min_count; ++k) {
      const std::size_t slot = w.ten_min_begin + k;
      if (!ten.present(s, slot)) continue;
      NodeRecord n;
      n.node_id = g.nodes.size();
      n.station = s;
      n.timestamp = ten.timestamp(slot);
      n.frequency = Frequency::kTenMinute;
      n.features = ten.features(s, slot);
      n.time = ten.time(slot);
      n.position = k;
      per[s].ten_min.push_back(n.node_id);
      g.nodes.push_back(n);
    }
    if (!opt.include_hourly) continue;
    for (std::size_t k = 0; k < w.hourly_count; ++k) {
      const std::size_t slot = w.hourly_begin + k;
      if (!hr.present(s, slot)) continue;
      NodeRecord n;
      n.node_id = g.nodes.size();
      n.station = s;
      n.timestamp = hr.timestamp(slot);
      n.frequency = Frequency::kHourly;
      n.features = hr.features(s, slot);
      n.time = hr.time(slot);
      n.position = k;
      per[s].hourly.push_back(n.node_id);
      g.nodes.push_back(n);
    }
  }
  const std::size_t n_observed = g.nodes.size();

  // Placeholder features: the station's last 10-minute record, else the
  // closest station's, else the station's last hourly record.
  std::vector<data::FeatureVector> last(n_st);
  g.last_value.assign(n_st, 0.0);
  for (std::size_t s = 0; s < n_st; ++s) {
    if (auto slot = last_present(ten, s, w.ten_min_begin, w.ten_min_count)) {
      last[s] = ten.features(s, *slot);
      continue;
    }
    g.fallback_stations.push_back(s);
    bool found = false;
    for (std::size_t c : stations_by_distance(g.stations, s))
      if (auto slot = last_present(ten, c, w.ten_min_begin, w.ten_min_count)) {
        last[s] = ten.features(c, *slot);
        found = true;
        break;
      }
    if (!found)
      if (auto slot = last_present(hr, s, w.hourly_begin, w.hourly_count)) last[s] = hr.features(s, *slot);
  }

  g.forecast_nodes.assign(n_st, {});
  for (std::size_t s = 0; s < n_st; ++s) {
    g.last_value[s] = last[s][data::kWindSpeed];
    for (std::size_t k = 0; k < w.horizon; ++k) {
      NodeRecord n;
      n.node_id = g.nodes.size();
      n.station = s;
      n.timestamp = w.anchor_timestamp + static_cast<std::int64_t>(k) * data::kTenMinutes;
      n.frequency = Frequency::kTenMinute;
      n.kind = NodeKind::kPlaceholder;
      n.features = last[s];
      n.time = data::encode_timestamp(n.timestamp);
      n.position = w.ten_min_count + k;
      g.forecast_nodes[s].push_back(n.node_id);
      g.nodes.push_back(n);
    }
  }

  g.in_edges.assign(g.nodes.size(), {});
  auto add_edge = [&](std::size_t src, std::size_t dst) {
    g.in_edges[dst].push_back(edge_deltas(g.nodes[src], g.nodes[dst], g.stations));
  };

  for (std::size_t i = 0; i < n_observed; ++i) {
    const NodeRecord& node = g.nodes[i];
    const auto& same = per[node.station].of(node.frequency);
    const auto pos = static_cast<std::size_t>(std::find(same.begin(), same.end(), i) - same.begin());
    for (std::size_t k = 1; k <= opt.temporal_neighbors && k <= pos; ++k) add_edge(same[pos - k], i);
    for (std::size_t k = 1; k <= opt.temporal_neighbors && pos + k < same.size(); ++k)
      add_edge(same[pos + k], i);

    const auto& nbrs = spatial.neighbors[node.station];
    for (std::size_t q = 0; q < nbrs.size() && q < opt.spatial_stations; ++q) {
      const StationNodes& other = per[nbrs[q]];
      const Frequency alt =
          node.frequency == Frequency::kTenMinute ? Frequency::kHourly : Frequency::kTenMinute;
      const auto& pool = !other.of(node.frequency).empty() ? other.of(node.frequency) : other.of(alt);
      std::optional<std::size_t> best;
      for (std::size_t cand : pool) {
        const auto dt = std::llabs(g.nodes[cand].timestamp - node.timestamp);
        if (!best || dt < std::llabs(g.nodes[*best].timestamp - node.timestamp) ||
            (dt == std::llabs(g.nodes[*best].timestamp - node.timestamp) &&
             g.nodes[cand].timestamp < g.nodes[*best].timestamp))
          best = cand;
      }
      if (best) add_edge(*best, i);
    }
  }

  for (std::size_t s = 0; s < n_st; ++s) {
    for (std::size_t k = 0; k < g.forecast_nodes[s].size(); ++k) {
      const std::size_t dst = g.forecast_nodes[s][k];
      for (std::size_t src : per[s].ten_min) add_edge(src, dst);
      for (std::size_t src : per[s].hourly) add_edge(src, dst);
      for (std::size_t j = 0; j < k; ++j) add_edge(g.forecast_nodes[s][j], dst);
    }
  }

  for (auto& edges : g.in_edges)
    std::sort(edges.begin(), edges.end(), [&](const EdgeRecord& a, const EdgeRecord& b) {
      const double da = std::abs(a.dt), db = std::abs(b.dt);
      if (da != db) return da < db;
      const auto& ida = g.stations[g.nodes[a.src].station].station_id;
      const auto& idb = g.stations[g.nodes[b.src].station].station_id;
      if (ida != idb) return ida < idb;
      return a.src < b.src;
    });
  return g;
}

AlignedWindow build_spatial_graph(const data::Window& w, const data::FrequencyPair& imputed,
                                  const data::Scaler& scaler) {
  const data::SeriesSet& ten = imputed.ten_min;
  const data::SeriesSet& hr = imputed.hourly;
  AlignedWindow a;
  a.stations = ten.station_count();
  a.steps = w.ten_min_count;
  a.channels = 2 * data::kFeatureChannels;
  a.values.assign(a.stations * a.steps * a.channels, 0.0);
  a.last_value.assign(a.stations, 0.0);
  if (w.hourly_count == 0) throw ValidationError("aligned window needs hourly inputs");

  // Latest complete hour at the end of each 10-minute step.
  std::vector<std::size_t> held(a.steps);
  for (std::size_t k = 0; k < a.steps; ++k) {
    const std::int64_t step_end = ten.timestamp(w.ten_min_begin + k) + data::kTenMinutes;
    std::size_t h = w.hourly_begin;
    for (std::size_t j = 0; j < w.hourly_count; ++j)
      if (hr.timestamp(w.hourly_begin + j) + data::kOneHour <= step_end) h = w.hourly_begin + j;
    held[k] = h;
  }

  for (std::size_t s = 0; s < a.stations; ++s) {
    for (std::size_t k = 0; k < a.steps; ++k) {
      const std::size_t slot = w.ten_min_begin + k;
      if (!ten.present(s, slot) || !hr.present(s, held[k]))
        throw ValidationError("aligned window has a missing entry; impute first");
      const auto f10 = data::apply_scaler(scaler, data::encode_features(ten.at(s, slot)));
      const auto f60 = data::apply_scaler(scaler, data::encode_features(hr.at(s, held[k])));
      double* row = &a.values[(s * a.steps + k) * a.channels];
      std::copy(f10.begin(), f10.end(), row);
      std::copy(f60.begin(), f60.end(), row + data::kFeatureChannels);
    }
    a.last_value[s] = a.at(s, a.steps - 1, data::kWindSpeed);
  }
  for (std::size_t k = 0; k < a.steps; ++k)
    a.time.push_back(data::encode_timestamp(ten.timestamp(w.ten_min_begin + k)));
  for (std::size_t k = 0; k < w.horizon; ++k)
    a.target_time.push_back(data::encode_timestamp(w.anchor_timestamp +
                                                   static_cast<std::int64_t>(k) * data::kTenMinutes));
  return a;
}

void write_nodes_csv(std::ostream& out, const UnifiedGraph& g) {
  out << "node_id,station_id,timestamp,frequency,kind,position,wind_speed,dir_sin,dir_cos,"
         "temperature,pressure\n";
  for (const NodeRecord& n : g.nodes) {
    out << n.node_id << ',' << g.stations[n.station].station_id << ','
        << data::format_iso8601(n.timestamp) << ','
        << (n.frequency == Frequency::kTenMinute ? 10 : 60) << ','
        << (n.kind == NodeKind::kObserved ? "observed" : "placeholder") << ',' << n.position;
    for (double f : n.features) out << ',' << f;
    out << '\n';
  }
}

void write_edges_csv(std::ostream& out, const UnifiedGraph& g) {
  out << "src,dst,dlat,dlon,dt_minutes\n";
  for (const auto& edges : g.in_edges)
    for (const EdgeRecord& e : edges)
      out << e.src << ',' << e.dst << ',' << e.dlat << ',' << e.dlon << ',' << e.dt << '\n';
}

}  // namespace stugn::graph
