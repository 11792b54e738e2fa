#include "stugn/models.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include "stugn/error.hpp"

namespace stugn::models {

std::string family_name(Family f) {
  switch (f) {
    case Family::kStugn: return "STUGN";
    case Family::kStLstm: return "ST-LSTM";
    case Family::kStTransformer: return "ST-Transformer";
    case Family::kTsfLinear: return "TSF-Linear";
    case Family::kPersistence: return "Persistence";
  }
  return "?";
}

Family parse_family(const std::string& text) {
  for (Family f : {Family::kStugn, Family::kStLstm, Family::kStTransformer, Family::kTsfLinear,
                   Family::kPersistence})
    if (family_name(f) == text) return f;
  throw ValidationError("unknown model family '" + text + "'");
}

std::string norm_name(Norm n) {
  switch (n) {
    case Norm::kReZero: return "ReZero";
    case Norm::kPreLayerNorm: return "PreLayerNorm";
    case Norm::kNone: return "none";
  }
  return "?";
}

Norm parse_norm(const std::string& text) {
  for (Norm n : {Norm::kReZero, Norm::kPreLayerNorm, Norm::kNone})
    if (norm_name(n) == text) return n;
  throw ValidationError("unknown normalisation '" + text + "'");
}

ModelConfig ModelConfig::defaults(Family family, Block block) {
  ModelConfig c;
  c.family = family;
  c.block = block;
  c.ffn_edge = block != Block::kTgat;
  switch (family) {
    case Family::kStugn:
      break;
    case Family::kStLstm:
      c.learning_rate = 1e-5;
      c.ffn_node = false;
      c.normalisation = Norm::kNone;
      break;
    case Family::kStTransformer:
      c.learning_rate = 1e-5;
      c.normalisation = Norm::kPreLayerNorm;
      break;
    case Family::kTsfLinear:
    case Family::kPersistence:
      c.learning_rate = 1e-3;
      c.ffn_node = false;
      c.ffn_edge = false;
      c.normalisation = Norm::kNone;
      c.dropout = 0.0;
      break;
  }
  return c;
}

std::string ModelConfig::name() const {
  return has_block() ? family_name(family) + "-" + block_name(block) : family_name(family);
}

void ModelConfig::validate() const {
  if (latent_dim == 0 || heads == 0 || latent_dim % heads != 0)
    throw ValidationError("latent_dim must be a positive multiple of heads");
  if (layers == 0) throw ValidationError("layers must be at least 1");
  if (ffn_hidden == 0) throw ValidationError("ffn_hidden must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (lookback == 0 || horizon == 0) throw ValidationError("lookback and horizon must be positive");
}

std::string to_text(const ModelConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "family = " << family_name(c.family) << '\n'
      << "block = " << block_name(c.block) << '\n'
      << "latent_dim = " << c.latent_dim << '\n'
      << "layers = " << c.layers << '\n'
      << "heads = " << c.heads << '\n'
      << "ffn_hidden = " << c.ffn_hidden << '\n'
      << "dropout = " << c.dropout << '\n'
      << "ffn_node = " << (c.ffn_node ? "true" : "false") << '\n'
      << "ffn_edge = " << (c.ffn_edge ? "true" : "false") << '\n'
      << "normalisation = " << norm_name(c.normalisation) << '\n'
      << "learning_rate = " << c.learning_rate << '\n'
      << "lookback = " << c.lookback << '\n'
      << "horizon = " << c.horizon << '\n';
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("model config: expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    try {
      if (key == "family") c.family = parse_family(v);
      else if (key == "block") c.block = parse_block(v);
      else if (key == "latent_dim") c.latent_dim = std::stoul(v);
      else if (key == "layers") c.layers = std::stoul(v);
      else if (key == "heads") c.heads = std::stoul(v);
      else if (key == "ffn_hidden") c.ffn_hidden = std::stoul(v);
      else if (key == "dropout") c.dropout = std::stod(v);
      else if (key == "ffn_node") c.ffn_node = parse_bool(key, v);
      else if (key == "ffn_edge") c.ffn_edge = parse_bool(key, v);
      else if (key == "normalisation") c.normalisation = parse_norm(v);
      else if (key == "learning_rate") c.learning_rate = std::stod(v);
      else if (key == "lookback") c.lookback = std::stoul(v);
      else if (key == "horizon") c.horizon = std::stoul(v);
      else throw ValidationError("model config: unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ValidationError*>(&e)) throw;
      throw ValidationError("model config: bad value for " + key + ": '" + v + "'");
    }
  }
  c.validate();
  return c;
}

std::vector<ModelConfig> table_rows() {
  std::vector<ModelConfig> rows;
  rows.push_back(ModelConfig::defaults(Family::kPersistence));
  rows.push_back(ModelConfig::defaults(Family::kTsfLinear));
  for (Family f : {Family::kStLstm, Family::kStTransformer, Family::kStugn})
    for (Block b : {Block::kMpnn, Block::kGatv2, Block::kTgat}) rows.push_back(ModelConfig::defaults(f, b));
  return rows;
}

namespace {

double spread_or_one(double v) { return v > 1e-12 ? v : 1.0; }

}  // namespace

InputScale fit_input_scale(const std::vector<data::StationMeta>& stations,
                           const graph::SpatialGraph& spatial,
                           std::span<const graph::UnifiedGraph> sample_graphs) {
  InputScale s;
  if (!stations.empty()) {
    const auto n = static_cast<double>(stations.size());
    for (const auto& st : stations) {
      s.lat_mean += st.latitude / n;
      s.lon_mean += st.longitude / n;
    }
    double vlat = 0.0, vlon = 0.0;
    for (const auto& st : stations) {
      vlat += (st.latitude - s.lat_mean) * (st.latitude - s.lat_mean) / n;
      vlon += (st.longitude - s.lon_mean) * (st.longitude - s.lon_mean) / n;
    }
    s.lat_std = spread_or_one(std::sqrt(vlat));
    s.lon_std = spread_or_one(std::sqrt(vlon));
  }
  double dist2 = 0.0;
  std::size_t dist_n = 0;
  for (const auto& row : spatial.distance_km)
    for (double d : row) {
      dist2 += d * d;
      ++dist_n;
    }
  if (dist_n > 0) s.distance_rms = spread_or_one(std::sqrt(dist2 / static_cast<double>(dist_n)));

  double a = 0.0, b = 0.0, c = 0.0;
  std::size_t n = 0;
  for (const auto& g : sample_graphs)
    for (const auto& edges : g.in_edges)
      for (const auto& e : edges) {
        a += e.dlat * e.dlat;
        b += e.dlon * e.dlon;
        c += e.dt * e.dt;
        ++n;
      }
  if (n > 0) {
    const auto dn = static_cast<double>(n);
    s.dlat_rms = spread_or_one(std::sqrt(a / dn));
    s.dlon_rms = spread_or_one(std::sqrt(b / dn));
    s.dt_rms = spread_or_one(std::sqrt(c / dn));
  }
  return s;
}

namespace {

void warn_if_unscaled(const Tensor& features) {
  static std::atomic<bool> warned{false};
  for (double v : features.data())
    if (std::abs(v) > 50.0) {
      if (!warned.exchange(true))
        std::cerr << "warning: node features exceed |50|; inputs look unscaled\n";
      return;
    }
}

void persistence_rows(std::span<const double> last, std::size_t horizon, Tensor& out,
                      std::size_t row0) {
  for (std::size_t s = 0; s < last.size(); ++s)
    for (std::size_t k = 0; k < horizon; ++k) out(row0 + s, k) = last[s];
}

}  // namespace

Batch make_unified_batch(std::span<const graph::UnifiedGraph> graphs, std::size_t horizon) {
  if (graphs.empty()) throw ValidationError("empty batch");
  Batch batch;
  batch.windows = graphs.size();
  batch.stations = graphs[0].stations.size();
  batch.horizon = horizon;
  const std::size_t rows = batch.windows * batch.stations;
  batch.persistence = Tensor(rows, horizon);
  batch.target = Tensor(rows, horizon);
  batch.mask = Tensor(rows, horizon);

  std::size_t m = 0, e = 0;
  for (const auto& g : graphs) {
    if (g.stations.size() != batch.stations) throw ValidationError("batch mixes station sets");
    m += g.node_count();
    e += g.edge_count();
  }
  UnifiedBatch u;
  u.features = Tensor(m, data::kFeatureChannels);
  u.coords = Tensor(m, 2);
  u.time = Tensor(m, data::kTimeFeatures);
  u.positions.reserve(m);
  u.edges = Tensor(e, 3);
  std::vector<std::uint32_t> freq, src, dst, readout;
  freq.reserve(m);
  src.reserve(e);
  dst.reserve(e);
  readout.reserve(rows * horizon);

  std::size_t node_off = 0, edge_row = 0;
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const auto& g = graphs[b];
    for (const auto& n : g.nodes) {
      const std::size_t r = node_off + n.node_id;
      std::copy(n.features.begin(), n.features.end(), u.features.row(r));
      u.coords(r, 0) = g.stations[n.station].latitude;
      u.coords(r, 1) = g.stations[n.station].longitude;
      std::copy(n.time.begin(), n.time.end(), u.time.row(r));
      u.positions.push_back(n.position);
      freq.push_back(n.frequency == graph::Frequency::kHourly ? 1u : 0u);
    }
    for (const auto& edges : g.in_edges)
      for (const auto& ed : edges) {
        src.push_back(static_cast<std::uint32_t>(node_off + ed.src));
        dst.push_back(static_cast<std::uint32_t>(node_off + ed.dst));
        u.edges(edge_row, 0) = ed.dlat;
        u.edges(edge_row, 1) = ed.dlon;
        u.edges(edge_row, 2) = ed.dt;
        ++edge_row;
      }
    if (g.forecast_nodes.size() != batch.stations)
      throw RuntimeFailure("internal invariant violated: forecast placeholders missing");
    for (std::size_t s = 0; s < batch.stations; ++s) {
      if (g.forecast_nodes[s].size() != horizon)
        throw RuntimeFailure("internal invariant violated: placeholder missing for a horizon step");
      for (std::size_t k = 0; k < horizon; ++k)
        readout.push_back(static_cast<std::uint32_t>(node_off + g.forecast_nodes[s][k]));
    }
    persistence_rows(g.last_value, horizon, batch.persistence, b * batch.stations);
    node_off += g.node_count();
  }
  warn_if_unscaled(u.features);
  u.frequency = ad::make_index(std::move(freq));
  u.topology = make_topology(std::move(src), std::move(dst), m);
  u.readout = ad::make_index(std::move(readout));
  batch.unified = std::move(u);
  return batch;
}

Batch make_aligned_batch(std::span<const graph::AlignedWindow> windows,
                         const std::vector<data::StationMeta>& stations,
                         const graph::SpatialGraph& spatial, std::size_t horizon) {
  if (windows.empty()) throw ValidationError("empty batch");
  Batch batch;
  batch.windows = windows.size();
  batch.stations = stations.size();
  batch.horizon = horizon;
  const std::size_t rows = batch.windows * batch.stations;
  batch.persistence = Tensor(rows, horizon);
  batch.target = Tensor(rows, horizon);
  batch.mask = Tensor(rows, horizon);

  AlignedBatch a;
  a.steps = windows[0].steps;
  a.channels = windows[0].channels;
  a.inputs = Tensor(rows * a.steps, a.channels);
  a.time = Tensor(batch.windows * a.steps, data::kTimeFeatures);
  a.target_time = Tensor(batch.windows * horizon, data::kTimeFeatures);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& w = windows[b];
    if (w.stations != batch.stations || w.steps != a.steps || w.channels != a.channels ||
        w.target_time.size() != horizon)
      throw ValidationError("batch mixes window shapes");
    std::copy(w.values.begin(), w.values.end(), a.inputs.row(b * batch.stations * a.steps));
    for (std::size_t t = 0; t < a.steps; ++t)
      std::copy(w.time[t].begin(), w.time[t].end(), a.time.row(b * a.steps + t));
    for (std::size_t k = 0; k < horizon; ++k)
      std::copy(w.target_time[k].begin(), w.target_time[k].end(), a.target_time.row(b * horizon + k));
    persistence_rows(w.last_value, horizon, batch.persistence, b * batch.stations);
  }
  warn_if_unscaled(a.inputs);
  a.coords = Tensor(stations.size(), 2);
  for (std::size_t s = 0; s < stations.size(); ++s) {
    a.coords(s, 0) = stations[s].latitude;
    a.coords(s, 1) = stations[s].longitude;
  }
  a.spatial = spatial;
  batch.aligned = std::move(a);
  return batch;
}

NodeEmbedder::NodeEmbedder(ParameterStore& store, const std::string& name, std::size_t channels,
                           std::size_t d, bool frequency_flag, bool sequence_position_, Init& init)
    : feature(store, name + ".feature", channels, d, init),
      position(store, name + ".position", 2, d, init),
      time(store, name + ".time", data::kTimeFeatures, d, init),
      sequence_position(sequence_position_) {
  if (frequency_flag)
    frequency_table = &store.add(name + ".frequency", init.uniform(2, d, std::sqrt(0.5)));
}

Var NodeEmbedder::operator()(Tape& tape, const Inputs& in) const {
  Var x = ad::add(feature(tape, tape.constant(in.features)), position(tape, tape.constant(in.coords)));
  x = ad::add(x, time(tape, tape.constant(in.time)));
  if (frequency_table) {
    if (!in.frequency) throw ValidationError("frequency flags missing");
    x = ad::add(x, ad::gather_rows(tape.param(*frequency_table), in.frequency));
  }
  if (sequence_position) {
    const std::size_t d = x.cols();
    Tensor pe(in.positions.size(), d);
    for (std::size_t r = 0; r < in.positions.size(); ++r)
      sinusoidal_position(in.positions[r], std::span<double>(pe.row(r), d));
    x = ad::add(x, tape.constant(std::move(pe)));
  }
  return x;
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  scale_ = &store_.add("input_scale", Tensor(1, 8), false);
  set_input_scale(InputScale{});
}

void Model::set_input_scale(const InputScale& s) {
  scale_->value = Tensor(1, 8, {s.lat_mean, s.lat_std, s.lon_mean, s.lon_std, s.dlat_rms, s.dlon_rms,
                                s.dt_rms, s.distance_rms});
}

InputScale Model::input_scale() const {
  const Tensor& v = scale_->value;
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
}

Tensor Model::predict(const Batch& batch) const {
  Tape tape;
  DropoutStream off = DropoutStream::eval();
  return forward(tape, batch, off).value();
}

namespace {

/// Residual wiring by normalisation: gated (ReZero), pre-normalised, or,
/// without normalisation, replacement for the main updates and a plain
/// residual for feed-forward branches.
Var residual(Tape& tape, Norm norm, const ScalarGate& gate, Var x,
             const std::function<Var(Var)>& branch, bool replace_without_norm) {
  switch (norm) {
    case Norm::kReZero: return ad::add(x, gate(tape, branch(x)));
    case Norm::kPreLayerNorm: return ad::add(x, branch(ad::layer_norm(x)));
    case Norm::kNone: return replace_without_norm ? branch(x) : ad::add(x, branch(x));
  }
  return x;
}

Tensor standardised_coords(const Tensor& raw, const InputScale& s) {
  Tensor out = raw;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    out(r, 0) = (out(r, 0) - s.lat_mean) / s.lat_std;
    out(r, 1) = (out(r, 1) - s.lon_mean) / s.lon_std;
  }
  return out;
}

std::string layer_name(std::size_t l, const char* part) {
  return "layer" + std::to_string(l) + "." + part;
}

}  // namespace

StugnModel::StugnModel(ModelConfig config, std::uint64_t init_seed) : Model(std::move(config)) {
  const auto& c = config_;
  const std::size_t d = c.latent_dim;
  Init init(init_seed);
  embed_nodes_ = NodeEmbedder(store_, "embed", data::kFeatureChannels, d, true, true, init);
  embed_edges_ = Linear(store_, "embed.edge", 3, d, init);
  gates_.resize(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) {
    blocks_.push_back(make_block(c.block, store_, layer_name(l, "block"), d, c.heads, init));
    if (c.normalisation == Norm::kReZero) {
      gates_[l].graph = ScalarGate(store_, layer_name(l, "alpha_graph"));
      if (c.ffn_node) gates_[l].node = ScalarGate(store_, layer_name(l, "alpha_node"));
      if (c.ffn_edge) gates_[l].edge = ScalarGate(store_, layer_name(l, "alpha_edge"));
    }
    if (c.ffn_node) node_ffn_.emplace_back(store_, layer_name(l, "ffn_node"), d, c.ffn_hidden, d, init);
    if (c.ffn_edge) edge_ffn_.emplace_back(store_, layer_name(l, "ffn_edge"), d, c.ffn_hidden, d, init);
  }
  readout_ = Ffn(store_, "readout", d, c.ffn_hidden, 1, init);
  out_gate_ = ScalarGate(store_, "alpha_out");
}

std::pair<Var, Var> StugnModel::embed(Tape& tape, const UnifiedBatch& u) const {
  const InputScale s = input_scale();
  NodeEmbedder::Inputs in{u.features, standardised_coords(u.coords, s), u.time, u.positions,
                          u.frequency};
  Tensor edges = u.edges;
  for (std::size_t r = 0; r < edges.rows(); ++r) {
    edges(r, 0) /= s.dlat_rms;
    edges(r, 1) /= s.dlon_rms;
    edges(r, 2) /= s.dt_rms;
  }
  return {embed_nodes_(tape, in), embed_edges_(tape, tape.constant(std::move(edges)))};
}

Var StugnModel::forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const {
  return forward_traced(tape, batch, dropout, nullptr);
}

Var StugnModel::forward_traced(Tape& tape, const Batch& batch, DropoutStream& dropout,
                               std::vector<Var>* attention) const {
  if (!batch.unified) throw ValidationError("STUGN needs a unified-graph batch");
  const UnifiedBatch& u = *batch.unified;
  const auto& c = config_;
  auto [h, e] = embed(tape, u);
  for (std::size_t l = 0; l < c.layers; ++l) {
    h = residual(tape, c.normalisation, gates_[l].graph, h,
                 [&](Var x) {
                   BlockOutput out = blocks_[l]->forward(tape, x, e, u.topology);
                   if (attention && out.attention) attention->push_back(*out.attention);
                   return dropout(out.h);
                 },
                 true);
    if (c.ffn_node)
      h = residual(tape, c.normalisation, gates_[l].node, h,
                   [&](Var x) { return dropout(node_ffn_[l](tape, x)); }, false);
    if (c.ffn_edge)
      e = residual(tape, c.normalisation, gates_[l].edge, e,
                   [&](Var x) { return dropout(edge_ffn_[l](tape, x)); }, false);
  }
  Var r = readout_(tape, ad::gather_rows(h, u.readout));
  r = ad::reshape(r, batch.windows * batch.stations, batch.horizon);
  return ad::add(out_gate_(tape, r), tape.constant(batch.persistence));
}

StLayout make_st_layout(std::size_t windows, std::size_t stations, std::size_t positions,
                        const graph::SpatialGraph& spatial, bool temporal_attention) {
  if (spatial.neighbors.size() != stations) throw ValidationError("spatial graph does not match stations");
  StLayout L;
  L.windows = windows;
  L.stations = stations;
  L.positions = positions;
  const std::size_t nodes = windows * stations * positions;
  auto node = [&](std::size_t b, std::size_t s, std::size_t t) {
    return static_cast<std::uint32_t>((b * stations + s) * positions + t);
  };

  std::vector<std::uint32_t> src, dst;
  std::vector<double> dist;
  for (std::size_t b = 0; b < windows; ++b)
    for (std::size_t s = 0; s < stations; ++s)
      for (std::size_t t = 0; t < positions; ++t)
        for (std::size_t q = 0; q < spatial.neighbors[s].size(); ++q) {
          src.push_back(node(b, spatial.neighbors[s][q], t));
          dst.push_back(node(b, s, t));
          dist.push_back(spatial.distance_km[s][q]);
        }
  const std::size_t edge_count = dist.size();
  L.distance = Tensor(edge_count, 1, std::move(dist));
  L.spatial = make_topology(std::move(src), std::move(dst), nodes);

  std::vector<std::uint32_t> tsrc, tdst;
  if (temporal_attention)
    for (std::size_t b = 0; b < windows; ++b)
      for (std::size_t s = 0; s < stations; ++s)
        for (std::size_t t = 0; t < positions; ++t)
          for (std::size_t u = 0; u < positions; ++u) {
            tsrc.push_back(node(b, s, u));
            tdst.push_back(node(b, s, t));
          }
  L.temporal = make_topology(std::move(tsrc), std::move(tdst), nodes);

  const std::size_t series = windows * stations;
  for (std::size_t t = 0; t < positions; ++t) {
    std::vector<std::uint32_t> rows(series);
    for (std::size_t i = 0; i < series; ++i) rows[i] = static_cast<std::uint32_t>(i * positions + t);
    L.rows_at_step.push_back(ad::make_index(std::move(rows)));
  }
  std::vector<std::uint32_t> back(nodes);
  for (std::size_t i = 0; i < series; ++i)
    for (std::size_t t = 0; t < positions; ++t)
      back[i * positions + t] = static_cast<std::uint32_t>(t * series + i);
  L.step_major_to_node = ad::make_index(std::move(back));
  return L;
}

namespace {

TemporalKind temporal_for(Family f) {
  switch (f) {
    case Family::kStLstm: return TemporalKind::kLstm;
    case Family::kStTransformer: return TemporalKind::kSelfAttention;
    default: throw ValidationError("not an aligned spatio-temporal family");
  }
}

}  // namespace

StBaselineModel::StBaselineModel(ModelConfig config, std::uint64_t init_seed)
    : StBaselineModel(config, init_seed, temporal_for(config.family)) {}

StBaselineModel::StBaselineModel(ModelConfig config, std::uint64_t init_seed, TemporalKind temporal)
    : Model(std::move(config)), temporal_(temporal) {
  const auto& c = config_;
  if (c.normalisation == Norm::kReZero)
    throw ValidationError("aligned baselines support PreLayerNorm or none");
  const std::size_t d = c.latent_dim;
  Init init(init_seed);
  embed_nodes_ = NodeEmbedder(store_, "embed", 2 * data::kFeatureChannels, d, false,
                              temporal_ == TemporalKind::kSelfAttention, init);
  embed_edges_ = Linear(store_, "embed.edge", 1, d, init);
  for (std::size_t l = 0; l < c.layers; ++l) {
    blocks_.push_back(make_block(c.block, store_, layer_name(l, "block"), d, c.heads, init));
    if (temporal_ == TemporalKind::kLstm) lstm_.emplace_back(store_, layer_name(l, "lstm"), d, d, init);
    if (temporal_ == TemporalKind::kSelfAttention)
      attention_.emplace_back(store_, layer_name(l, "self_attention"), d, c.heads, init);
    if (c.ffn_node) node_ffn_.emplace_back(store_, layer_name(l, "ffn_node"), d, c.ffn_hidden, d, init);
    if (c.ffn_edge) edge_ffn_.emplace_back(store_, layer_name(l, "ffn_edge"), d, c.ffn_hidden, d, init);
  }
  const bool placeholders = temporal_ == TemporalKind::kSelfAttention;
  readout_ = Ffn(store_, "readout", d, c.ffn_hidden, placeholders ? 1 : c.horizon, init);
  out_gate_ = ScalarGate(store_, "alpha_out");
}

std::pair<Var, Var> StBaselineModel::embed(Tape& tape, const Batch& batch,
                                           const StLayout& layout) const {
  const AlignedBatch& a = *batch.aligned;
  const std::size_t T = a.steps, P = layout.positions, N = batch.stations;
  const std::size_t M = batch.windows * N * P;
  const InputScale s = input_scale();
  const Tensor coords = standardised_coords(a.coords, s);

  NodeEmbedder::Inputs in;
  in.features = Tensor(M, a.channels);
  in.coords = Tensor(M, 2);
  in.time = Tensor(M, data::kTimeFeatures);
  in.positions.resize(M);
  for (std::size_t b = 0; b < batch.windows; ++b)
    for (std::size_t st = 0; st < N; ++st)
      for (std::size_t t = 0; t < P; ++t) {
        const std::size_t r = (b * N + st) * P + t;
        const std::size_t src_t = std::min(t, T - 1);  // placeholders copy the last step
        const double* f = a.inputs.row((b * N + st) * T + src_t);
        std::copy(f, f + a.channels, in.features.row(r));
        in.coords(r, 0) = coords(st, 0);
        in.coords(r, 1) = coords(st, 1);
        const double* tm = t < T ? a.time.row(b * T + t) : a.target_time.row(b * batch.horizon + (t - T));
        std::copy(tm, tm + data::kTimeFeatures, in.time.row(r));
        in.positions[r] = t;
      }
  Tensor dist = layout.distance;
  for (double& v : dist.data()) v /= s.distance_rms;
  return {embed_nodes_(tape, in), embed_edges_(tape, tape.constant(std::move(dist)))};
}

Var StBaselineModel::layer(Tape& tape, std::size_t l, Var h, Var& e, const StLayout& layout,
                           DropoutStream& dropout) const {
  const auto& c = config_;
  const ScalarGate none;
  h = residual(tape, c.normalisation, none, h,
               [&](Var x) { return dropout(blocks_[l]->forward(tape, x, e, layout.spatial).h); }, true);
  switch (temporal_) {
    case TemporalKind::kIdentity:
      break;
    case TemporalKind::kLstm:
      h = residual(tape, c.normalisation, none, h,
                   [&](Var x) {
                     const LstmCell& cell = lstm_[l];
                     LstmCell::State state = cell.zero_state(tape, layout.windows * layout.stations);
                     std::vector<Var> outs;
                     for (std::size_t t = 0; t < layout.positions; ++t) {
                       state = cell.step(tape, ad::gather_rows(x, layout.rows_at_step[t]), state);
                       outs.push_back(state.h);
                     }
                     return ad::gather_rows(ad::concat_rows(outs), layout.step_major_to_node);
                   },
                   true);
      break;
    case TemporalKind::kSelfAttention:
      h = residual(tape, c.normalisation, none, h,
                   [&](Var x) { return dropout(attention_[l].forward(tape, x, layout.temporal).h); },
                   true);
      break;
  }
  if (c.ffn_node)
    h = residual(tape, c.normalisation, none, h, [&](Var x) { return dropout(node_ffn_[l](tape, x)); },
                 false);
  if (c.ffn_edge)
    e = residual(tape, c.normalisation, none, e, [&](Var x) { return dropout(edge_ffn_[l](tape, x)); },
                 false);
  return h;
}

Var StBaselineModel::forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const {
  if (!batch.aligned) throw ValidationError("aligned baselines need an aligned batch");
  const AlignedBatch& a = *batch.aligned;
  const std::size_t P = positions(a.steps);
  const StLayout layout = make_st_layout(batch.windows, batch.stations, P, a.spatial,
                                         temporal_ == TemporalKind::kSelfAttention);
  auto [h, e] = embed(tape, batch, layout);
  for (std::size_t l = 0; l < config_.layers; ++l) h = layer(tape, l, h, e, layout, dropout);

  const std::size_t series = batch.windows * batch.stations;
  Var r;
  if (temporal_ == TemporalKind::kSelfAttention) {
    std::vector<std::uint32_t> rows;
    rows.reserve(series * batch.horizon);
    for (std::size_t i = 0; i < series; ++i)
      for (std::size_t k = 0; k < batch.horizon; ++k)
        rows.push_back(static_cast<std::uint32_t>(i * P + a.steps + k));
    r = readout_(tape, ad::gather_rows(h, ad::make_index(std::move(rows))));
    r = ad::reshape(r, series, batch.horizon);
  } else {
    r = readout_(tape, ad::gather_rows(h, layout.rows_at_step[P - 1]));
  }
  return ad::add(out_gate_(tape, r), tape.constant(batch.persistence));
}

TsfLinearModel::TsfLinearModel(ModelConfig config, std::uint64_t init_seed) : Model(std::move(config)) {
  Init init(init_seed);
  q_ = &store_.add("tsf.q", init.uniform(config_.lookback, config_.horizon,
                                         std::sqrt(1.0 / static_cast<double>(config_.lookback))));
  gate_ = ScalarGate(store_, "alpha_out");
}

Var TsfLinearModel::forward(Tape& tape, const Batch& batch, DropoutStream&) const {
  if (!batch.aligned) throw ValidationError("TSF-Linear needs an aligned batch");
  const AlignedBatch& a = *batch.aligned;
  if (a.steps != config_.lookback) throw ValidationError("TSF-Linear lookback does not match the batch");
  const std::size_t series = batch.windows * batch.stations;
  Tensor x(series, a.steps);
  for (std::size_t i = 0; i < series; ++i)
    for (std::size_t t = 0; t < a.steps; ++t) x(i, t) = a.inputs(i * a.steps + t, data::kWindSpeed);
  Var r = ad::matmul(tape.constant(std::move(x)), tape.param(*q_));
  return ad::add(gate_(tape, r), tape.constant(batch.persistence));
}

PersistenceModel::PersistenceModel(ModelConfig config) : Model(std::move(config)) {}

Var PersistenceModel::forward(Tape& tape, const Batch& batch, DropoutStream&) const {
  return tape.constant(batch.persistence);
}

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t init_seed) {
  switch (config.family) {
    case Family::kStugn: return std::make_unique<StugnModel>(config, init_seed);
    case Family::kStLstm:
    case Family::kStTransformer: return std::make_unique<StBaselineModel>(config, init_seed);
    case Family::kTsfLinear: return std::make_unique<TsfLinearModel>(config, init_seed);
    case Family::kPersistence: return std::make_unique<PersistenceModel>(config);
  }
  throw ValidationError("unknown model family");
}

void save_model(std::ostream& out, const Model& model) {
  ad::save_checkpoint(out, model.parameters(), to_text(model.config()));
}

std::unique_ptr<Model> load_model(std::istream& in) {
  const std::string all{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::istringstream probe(all);
  std::string line;
  std::getline(probe, line);
  if (line != "STUGN-CHECKPOINT 1") throw ValidationError("not a version-1 model checkpoint");
  std::size_t header_lines = 0;
  if (!(probe >> header_lines)) throw ValidationError("checkpoint: bad header length");
  std::getline(probe, line);
  std::string header;
  for (std::size_t i = 0; i < header_lines && std::getline(probe, line); ++i) header += line + '\n';
  auto model = make_model(model_config_from_text(header), 0);
  std::istringstream body(all);
  ad::load_checkpoint(body, model->parameters());
  return model;
}

}  // namespace stugn::models
