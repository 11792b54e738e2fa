#pragma once

// Trainable building blocks shared by every model family.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "stugn/autodiff.hpp"

namespace stugn::models {

using ad::Index;
using ad::Parameter;
using ad::ParameterStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

enum class Block { kMpnn, kGatv2, kTgat };
enum class Norm { kReZero, kPreLayerNorm, kNone };

std::string block_name(Block b);   // "MPNN", "GATv2", "TGAT"
Block parse_block(const std::string& text);

/// Weight initialisation source.
class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(std::size_t rows, std::size_t cols, double bound);

 private:
  std::mt19937_64 rng_;
};

/// Dropout switch and seed stream for one forward pass. Each call draws a
/// fresh seed, so masks differ between sites but repeat across runs.
class DropoutStream {
 public:
  DropoutStream(double rate, bool train, std::uint64_t seed) : rate_(rate), train_(train), state_(seed) {}
  static DropoutStream eval() { return DropoutStream(0.0, false, 0); }

  Var operator()(Var x);
  bool training() const { return train_; }

 private:
  double rate_;
  bool train_;
  std::uint64_t state_;
};

/// y = x W + b, with W and b uniform in ±sqrt(1/fan_in).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Init& init,
         bool bias = true);

  Var operator()(Tape& tape, Var x) const;
  Parameter& weight() const { return *w_; }
  Parameter* bias() const { return b_; }
  std::size_t in() const { return w_->value.rows(); }
  std::size_t out() const { return w_->value.cols(); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

/// Two linear maps with a GELU between them.
class Ffn {
 public:
  Ffn() = default;
  Ffn(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out, Init& init);

  Var operator()(Tape& tape, Var x) const;

 private:
  Linear first_;
  Linear second_;
};

/// Zero-initialised scalar gate (ReZero residual, persistence connection).
class ScalarGate {
 public:
  ScalarGate() = default;
  ScalarGate(ParameterStore& store, const std::string& name);

  Var operator()(Tape& tape, Var x) const { return ad::mul_scalar(x, tape.param(*alpha_)); }
  Parameter& alpha() const { return *alpha_; }

 private:
  Parameter* alpha_ = nullptr;
};

/// Message-passing topology: edge k carries src[k] -> dst[k].
struct Topology {
  Index src;
  Index dst;
  std::size_t nodes = 0;

  std::size_t edges() const { return src->size(); }
};

Topology make_topology(std::vector<std::uint32_t> src, std::vector<std::uint32_t> dst,
                       std::size_t nodes);

struct BlockOutput {
  Var h;
  std::optional<Var> attention;  // edges x heads, softmax-normalised per destination
};

class GraphBlock {
 public:
  virtual ~GraphBlock() = default;
  virtual BlockOutput forward(Tape& tape, Var h, Var e, const Topology& topo) const = 0;
  virtual Block kind() const = 0;
};

/// Mean-aggregated message passing. The message is linear in
/// [h_dst | h_src | e] and the update linear in [h | aggregate].
class MpnnBlock final : public GraphBlock {
 public:
  MpnnBlock(ParameterStore& store, const std::string& name, std::size_t d, Init& init);
  BlockOutput forward(Tape& tape, Var h, Var e, const Topology& topo) const override;
  Block kind() const override { return Block::kMpnn; }

  // Weight slices of the message map (rows of the 3d x d matrix) and the update map.
  Linear message_dst, message_src, message_edge, update_self, update_agg;
};

/// GATv2 scoring with edge features entering the scored concatenation.
class Gatv2Block final : public GraphBlock {
 public:
  Gatv2Block(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads,
             Init& init);
  BlockOutput forward(Tape& tape, Var h, Var e, const Topology& topo) const override;
  Block kind() const override { return Block::kGatv2; }

  std::size_t heads;
  Linear score_dst, score_src, score_edge;  // W split over [h_dst | h_src | e]
  Parameter* score_vector = nullptr;        // 1 x d, head-major blocks of d/heads
  Linear value, output;
};

/// Scaled dot-product graph attention whose keys are sender features
/// modulated elementwise by projected edge features.
class TgatBlock final : public GraphBlock {
 public:
  TgatBlock(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads,
            Init& init);
  BlockOutput forward(Tape& tape, Var h, Var e, const Topology& topo) const override;
  Block kind() const override { return Block::kTgat; }

  std::size_t heads;
  Linear query, edge_key, value, output;
};

std::unique_ptr<GraphBlock> make_block(Block kind, ParameterStore& store, const std::string& name,
                                       std::size_t d, std::size_t heads, Init& init);

/// Multi-head self-attention over an explicit topology (complete temporal
/// graphs in the transformer baseline).
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads,
                Init& init);
  BlockOutput forward(Tape& tape, Var h, const Topology& topo) const;

 private:
  std::size_t heads_ = 1;
  Linear query_, key_, value_, output_;
};

/// Standard LSTM cell; gate order in the fused maps is input, forget,
/// candidate, output. The forget bias starts at +1.
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
           Init& init);

  struct State {
    Var h;
    Var c;
  };
  State step(Tape& tape, Var x, const State& prev) const;
  State zero_state(Tape& tape, std::size_t batch) const;
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Linear input_map_;
  Linear hidden_map_;
};

/// Constant d x heads matrix summing each head's slice of a row.
Tensor head_sum_matrix(std::size_t d, std::size_t heads);
/// Transpose of head_sum_matrix: broadcasts a per-head value over its slice.
Tensor head_broadcast_matrix(std::size_t d, std::size_t heads);

/// Sinusoidal sequence-position encoding of width d.
void sinusoidal_position(std::size_t position, std::span<double> out);

}  // namespace stugn::models
