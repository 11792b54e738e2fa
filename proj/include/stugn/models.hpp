#pragma once

// Model families: the unified-graph network, the two aligned
// spatio-temporal baselines, the linear time-series baseline and the
// persistence forecast. All forecasts are (windows * stations) x horizon
// in scaled wind-speed units, rows ordered (window, station).

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stugn/graph.hpp"
#include "stugn/layers.hpp"

namespace stugn::models {

enum class Family { kStugn, kStLstm, kStTransformer, kTsfLinear, kPersistence };
enum class TemporalKind { kIdentity, kLstm, kSelfAttention };
enum class InputKind { kUnified, kAligned };

std::string family_name(Family f);
Family parse_family(const std::string& text);
std::string norm_name(Norm n);
Norm parse_norm(const std::string& text);

struct ModelConfig {
  Family family = Family::kStugn;
  Block block = Block::kGatv2;
  std::size_t latent_dim = 64;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  double dropout = 0.05;
  bool ffn_node = true;
  bool ffn_edge = true;
  Norm normalisation = Norm::kReZero;
  double learning_rate = 5e-5;
  std::size_t lookback = 18;
  std::size_t horizon = 6;

  /// Tuned defaults per family and block.
  static ModelConfig defaults(Family family, Block block = Block::kGatv2);

  /// Table label, e.g. "STUGN-GATv2", "ST-LSTM-MPNN", "Persistence".
  std::string name() const;
  bool has_block() const {
    return family == Family::kStugn || family == Family::kStLstm || family == Family::kStTransformer;
  }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// "key = value" lines, one per field.
std::string to_text(const ModelConfig& config);
ModelConfig model_config_from_text(const std::string& text);

/// The eleven table rows in report order.
std::vector<ModelConfig> table_rows();

/// Normalisation of inputs that are not covered by the feature scaler.
struct InputScale {
  double lat_mean = 0.0, lat_std = 1.0;
  double lon_mean = 0.0, lon_std = 1.0;
  double dlat_rms = 1.0, dlon_rms = 1.0, dt_rms = 1.0;  // unified-graph edge deltas
  double distance_rms = 1.0;                             // spatial edges, km

  bool operator==(const InputScale&) const = default;
};

/// Station coordinates standardised over the station set; edge features
/// divided by their root mean square over `sample_graphs` and the spatial
/// graph. Zero spreads fall back to 1.
InputScale fit_input_scale(const std::vector<data::StationMeta>& stations,
                           const graph::SpatialGraph& spatial,
                           std::span<const graph::UnifiedGraph> sample_graphs);

/// Disjoint union of unified graphs.
struct UnifiedBatch {
  Tensor features;  // M x 5
  Tensor coords;    // M x 2, raw lat/lon
  Tensor time;      // M x 8
  std::vector<std::size_t> positions;
  Index frequency;  // 0 ten-minute, 1 hourly
  Tensor edges;     // E x 3 raw (dlat, dlon, dt)
  Topology topology;
  Index readout;    // placeholder rows ordered (window, station, step)
};

/// Stacked aligned windows.
struct AlignedBatch {
  std::size_t steps = 0;
  std::size_t channels = 0;
  Tensor inputs;       // rows (window, station, step)
  Tensor time;         // rows (window, step)
  Tensor target_time;  // rows (window, horizon step)
  Tensor coords;       // stations x 2, raw lat/lon
  graph::SpatialGraph spatial;
};

struct Batch {
  std::size_t windows = 0;
  std::size_t stations = 0;
  std::size_t horizon = 0;
  Tensor persistence;  // last value repeated, (windows*stations) x horizon
  Tensor target;       // filled by the caller; same shape
  Tensor mask;         // 1 where the target is scored
  std::optional<UnifiedBatch> unified;
  std::optional<AlignedBatch> aligned;
};

Batch make_unified_batch(std::span<const graph::UnifiedGraph> graphs, std::size_t horizon);
Batch make_aligned_batch(std::span<const graph::AlignedWindow> windows,
                         const std::vector<data::StationMeta>& stations,
                         const graph::SpatialGraph& spatial, std::size_t horizon);

/// Learned linear embeddings of measurements, station position and time,
/// plus an optional frequency flag and sinusoidal sequence position; the
/// terms are summed.
class NodeEmbedder {
 public:
  NodeEmbedder() = default;
  NodeEmbedder(ParameterStore& store, const std::string& name, std::size_t channels, std::size_t d,
               bool frequency_flag, bool sequence_position, Init& init);

  struct Inputs {
    Tensor features;      // M x channels, scaled
    Tensor coords;        // M x 2, standardised
    Tensor time;          // M x 8
    std::vector<std::size_t> positions;
    Index frequency;      // may be null when the flag is off
  };
  Var operator()(Tape& tape, const Inputs& in) const;

  Linear feature, position, time;
  Parameter* frequency_table = nullptr;  // 2 x d
  bool sequence_position = false;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  virtual InputKind input_kind() const = 0;

  virtual Var forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const = 0;
  /// Evaluation-mode forecast.
  Tensor predict(const Batch& batch) const;

  void set_input_scale(const InputScale& scale);
  InputScale input_scale() const;

 protected:
  ModelConfig config_;
  ParameterStore store_;
  Parameter* scale_ = nullptr;  // non-trainable, saved with the weights
};

class StugnModel final : public Model {
 public:
  StugnModel(ModelConfig config, std::uint64_t init_seed);
  InputKind input_kind() const override { return InputKind::kUnified; }
  Var forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const override;

  /// Forward pass that also returns each layer's attention weights.
  Var forward_traced(Tape& tape, const Batch& batch, DropoutStream& dropout,
                     std::vector<Var>* attention) const;

  const GraphBlock& block(std::size_t layer) const { return *blocks_[layer]; }
  /// Node embeddings and edge embeddings before the first layer.
  std::pair<Var, Var> embed(Tape& tape, const UnifiedBatch& batch) const;

  struct LayerGates {
    ScalarGate graph, node, edge;
  };
  const LayerGates& gates(std::size_t layer) const { return gates_[layer]; }
  const ScalarGate& output_gate() const { return out_gate_; }

 private:
  NodeEmbedder embed_nodes_;
  Linear embed_edges_;
  std::vector<std::unique_ptr<GraphBlock>> blocks_;
  std::vector<LayerGates> gates_;
  std::vector<Ffn> node_ffn_, edge_ffn_;
  Ffn readout_;
  ScalarGate out_gate_;
};

/// Node layout for the aligned baselines: node (window, station, position)
/// has row (window * stations + station) * positions + position. Spatial
/// edges join the k nearest stations at equal (window, position).
struct StLayout {
  std::size_t windows = 0, stations = 0, positions = 0;
  Topology spatial;
  Tensor distance;                  // per spatial edge, km
  Topology temporal;                // complete graph per (window, station); empty for LSTM
  std::vector<Index> rows_at_step;  // rows of all (window, station) at one position
  Index step_major_to_node;         // reorders step-major stacking to node rows
};

StLayout make_st_layout(std::size_t windows, std::size_t stations, std::size_t positions,
                        const graph::SpatialGraph& spatial, bool temporal_attention);

class StBaselineModel final : public Model {
 public:
  StBaselineModel(ModelConfig config, std::uint64_t init_seed);
  StBaselineModel(ModelConfig config, std::uint64_t init_seed, TemporalKind temporal);
  InputKind input_kind() const override { return InputKind::kAligned; }
  Var forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const override;

  TemporalKind temporal() const { return temporal_; }
  std::size_t positions(std::size_t steps) const {
    return temporal_ == TemporalKind::kSelfAttention ? steps + config_.horizon : steps;
  }
  /// Embedded nodes and spatial edges for a batch.
  std::pair<Var, Var> embed(Tape& tape, const Batch& batch, const StLayout& layout) const;
  /// One spatial update at every position followed by the temporal function.
  Var layer(Tape& tape, std::size_t index, Var h, Var& e, const StLayout& layout,
            DropoutStream& dropout) const;
  const GraphBlock& block(std::size_t layer) const { return *blocks_[layer]; }

 private:
  TemporalKind temporal_;
  NodeEmbedder embed_nodes_;
  Linear embed_edges_;
  std::vector<std::unique_ptr<GraphBlock>> blocks_;
  std::vector<LstmCell> lstm_;
  std::vector<SelfAttention> attention_;
  std::vector<Ffn> node_ffn_, edge_ffn_;
  Ffn readout_;
  ScalarGate out_gate_;
};

/// Per-station linear map along time added to the last value through a
/// zero-initialised gate. No spatial mixing.
class TsfLinearModel final : public Model {
 public:
  TsfLinearModel(ModelConfig config, std::uint64_t init_seed);
  InputKind input_kind() const override { return InputKind::kAligned; }
  Var forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const override;

  Parameter& time_map() const { return *q_; }  // lookback x horizon
  const ScalarGate& gate() const { return gate_; }

 private:
  Parameter* q_ = nullptr;
  ScalarGate gate_;
};

class PersistenceModel final : public Model {
 public:
  explicit PersistenceModel(ModelConfig config);
  InputKind input_kind() const override { return InputKind::kAligned; }
  Var forward(Tape& tape, const Batch& batch, DropoutStream& dropout) const override;
};

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t init_seed);

/// Parameter checkpoint whose header carries the model configuration.
void save_model(std::ostream& out, const Model& model);
std::unique_ptr<Model> load_model(std::istream& in);

}  // namespace stugn::models
