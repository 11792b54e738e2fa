#include "stugn/layers.hpp"

#include <cmath>

#include "stugn/error.hpp"

namespace stugn::models {

std::string block_name(Block b) {
  switch (b) {
    case Block::kMpnn: return "MPNN";
    case Block::kGatv2: return "GATv2";
    case Block::kTgat: return "TGAT";
  }
  return "?";
}

Block parse_block(const std::string& text) {
  if (text == "MPNN") return Block::kMpnn;
  if (text == "GATv2") return Block::kGatv2;
  if (text == "TGAT") return Block::kTgat;
  throw ValidationError("unknown graph block '" + text + "' (expected MPNN, GATv2 or TGAT)");
}

Tensor Init::uniform(std::size_t rows, std::size_t cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng_);
  return t;
}

Var DropoutStream::operator()(Var x) {
  if (!train_ || rate_ == 0.0) return x;
  // splitmix64 step
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return ad::dropout(x, rate_, z ^ (z >> 31), true);
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Init& init, bool bias) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  w_ = &store.add(name + ".w", init.uniform(in, out, bound));
  if (bias) b_ = &store.add(name + ".b", init.uniform(1, out, bound));
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = ad::matmul(x, tape.param(*w_));
  return b_ ? ad::add_row(y, tape.param(*b_)) : y;
}

Ffn::Ffn(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t out, Init& init)
    : first_(store, name + ".0", in, hidden, init), second_(store, name + ".1", hidden, out, init) {}

Var Ffn::operator()(Tape& tape, Var x) const { return second_(tape, ad::gelu(first_(tape, x))); }

ScalarGate::ScalarGate(ParameterStore& store, const std::string& name)
    : alpha_(&store.add(name, Tensor::scalar(0.0))) {}

Topology make_topology(std::vector<std::uint32_t> src, std::vector<std::uint32_t> dst,
                       std::size_t nodes) {
  if (src.size() != dst.size()) throw ValidationError("edge source and destination lists differ in length");
  for (std::size_t k = 0; k < src.size(); ++k)
    if (src[k] >= nodes || dst[k] >= nodes) throw ValidationError("edge endpoint out of range");
  return {ad::make_index(std::move(src)), ad::make_index(std::move(dst)), nodes};
}

Tensor head_sum_matrix(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) throw ValidationError("latent size must be divisible by heads");
  const std::size_t dk = d / heads;
  Tensor m(d, heads);
  for (std::size_t j = 0; j < d; ++j) m(j, j / dk) = 1.0;
  return m;
}

Tensor head_broadcast_matrix(std::size_t d, std::size_t heads) {
  const Tensor s = head_sum_matrix(d, heads);
  Tensor m(heads, d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t h = 0; h < heads; ++h) m(h, j) = s(j, h);
  return m;
}

void sinusoidal_position(std::size_t position, std::span<double> out) {
  const auto d = static_cast<double>(out.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(j - j % 2) / d);
    const double angle = static_cast<double>(position) * freq;
    out[j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
}

MpnnBlock::MpnnBlock(ParameterStore& store, const std::string& name, std::size_t d, Init& init)
    : message_dst(store, name + ".msg_dst", d, d, init),
      message_src(store, name + ".msg_src", d, d, init, false),
      message_edge(store, name + ".msg_edge", d, d, init, false),
      update_self(store, name + ".upd_self", d, d, init),
      update_agg(store, name + ".upd_agg", d, d, init, false) {}

BlockOutput MpnnBlock::forward(Tape& tape, Var h, Var e, const Topology& topo) const {
  // Projecting nodes before gathering is the same linear map over the
  // concatenation, evaluated per node instead of per edge.
  Var msg = ad::add(ad::gather_rows(message_dst(tape, h), topo.dst),
                    ad::gather_rows(message_src(tape, h), topo.src));
  msg = ad::add(msg, message_edge(tape, e));
  Var agg = ad::segment_mean(msg, topo.dst, topo.nodes);
  return {ad::add(update_self(tape, h), update_agg(tape, agg)), std::nullopt};
}

Gatv2Block::Gatv2Block(ParameterStore& store, const std::string& name, std::size_t d,
                       std::size_t heads_, Init& init)
    : heads(heads_),
      score_dst(store, name + ".score_dst", d, d, init),
      score_src(store, name + ".score_src", d, d, init, false),
      score_edge(store, name + ".score_edge", d, d, init, false),
      value(store, name + ".value", d, d, init, false),
      output(store, name + ".out", d, d, init) {
  head_sum_matrix(d, heads);  // validates divisibility
  score_vector = &store.add(name + ".a", init.uniform(1, d, std::sqrt(1.0 / static_cast<double>(d / heads))));
}

BlockOutput Gatv2Block::forward(Tape& tape, Var h, Var e, const Topology& topo) const {
  const std::size_t d = h.cols();
  Var z = ad::add(ad::gather_rows(score_dst(tape, h), topo.dst),
                  ad::gather_rows(score_src(tape, h), topo.src));
  z = ad::leaky_relu(ad::add(z, score_edge(tape, e)), 0.2);
  Var scores = ad::matmul(ad::mul_row(z, tape.param(*score_vector)),
                          tape.constant(head_sum_matrix(d, heads)));
  Var alpha = ad::segment_softmax(scores, topo.dst, topo.nodes);
  Var weights = ad::matmul(alpha, tape.constant(head_broadcast_matrix(d, heads)));
  Var msg = ad::mul(weights, ad::gather_rows(value(tape, h), topo.src));
  Var agg = ad::segment_sum(msg, topo.dst, topo.nodes);
  return {output(tape, agg), alpha};
}

TgatBlock::TgatBlock(ParameterStore& store, const std::string& name, std::size_t d,
                     std::size_t heads_, Init& init)
    : heads(heads_),
      query(store, name + ".query", d, d, init, false),
      edge_key(store, name + ".edge_key", d, d, init, false),
      value(store, name + ".value", d, d, init, false),
      output(store, name + ".out", d, d, init) {
  head_sum_matrix(d, heads);
}

BlockOutput TgatBlock::forward(Tape& tape, Var h, Var e, const Topology& topo) const {
  const std::size_t d = h.cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d / heads));
  Var key = ad::mul(ad::gather_rows(h, topo.src), edge_key(tape, e));
  Var q = ad::gather_rows(query(tape, h), topo.dst);
  Var scores = ad::scale(ad::matmul(ad::mul(key, q), tape.constant(head_sum_matrix(d, heads))),
                         inv_sqrt_dk);
  Var alpha = ad::segment_softmax(scores, topo.dst, topo.nodes);
  Var weights = ad::matmul(alpha, tape.constant(head_broadcast_matrix(d, heads)));
  Var msg = ad::mul(weights, ad::gather_rows(value(tape, h), topo.src));
  Var agg = ad::segment_sum(msg, topo.dst, topo.nodes);
  return {output(tape, agg), alpha};
}

std::unique_ptr<GraphBlock> make_block(Block kind, ParameterStore& store, const std::string& name,
                                       std::size_t d, std::size_t heads, Init& init) {
  switch (kind) {
    case Block::kMpnn: return std::make_unique<MpnnBlock>(store, name, d, init);
    case Block::kGatv2: return std::make_unique<Gatv2Block>(store, name, d, heads, init);
    case Block::kTgat: return std::make_unique<TgatBlock>(store, name, d, heads, init);
  }
  throw ValidationError("unknown graph block");
}

SelfAttention::SelfAttention(ParameterStore& store, const std::string& name, std::size_t d,
                             std::size_t heads, Init& init)
    : heads_(heads),
      query_(store, name + ".query", d, d, init, false),
      key_(store, name + ".key", d, d, init, false),
      value_(store, name + ".value", d, d, init, false),
      output_(store, name + ".out", d, d, init) {
  head_sum_matrix(d, heads);
}

BlockOutput SelfAttention::forward(Tape& tape, Var h, const Topology& topo) const {
  const std::size_t d = h.cols();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d / heads_));
  Var q = ad::gather_rows(query_(tape, h), topo.dst);
  Var k = ad::gather_rows(key_(tape, h), topo.src);
  Var scores = ad::scale(ad::matmul(ad::mul(q, k), tape.constant(head_sum_matrix(d, heads_))),
                         inv_sqrt_dk);
  Var alpha = ad::segment_softmax(scores, topo.dst, topo.nodes);
  Var weights = ad::matmul(alpha, tape.constant(head_broadcast_matrix(d, heads_)));
  Var msg = ad::mul(weights, ad::gather_rows(value_(tape, h), topo.src));
  return {output_(tape, ad::segment_sum(msg, topo.dst, topo.nodes)), alpha};
}

LstmCell::LstmCell(ParameterStore& store, const std::string& name, std::size_t in,
                   std::size_t hidden, Init& init)
    : hidden_(hidden),
      input_map_(store, name + ".x", in, 4 * hidden, init),
      hidden_map_(store, name + ".h", hidden, 4 * hidden, init, false) {
  Tensor& b = input_map_.bias()->value;
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
}

LstmCell::State LstmCell::step(Tape& tape, Var x, const State& prev) const {
  Var z = ad::add(input_map_(tape, x), hidden_map_(tape, prev.h));
  Var i = ad::sigmoid(ad::slice_cols(z, 0, hidden_));
  Var f = ad::sigmoid(ad::slice_cols(z, hidden_, hidden_));
  Var g = ad::tanh(ad::slice_cols(z, 2 * hidden_, hidden_));
  Var o = ad::sigmoid(ad::slice_cols(z, 3 * hidden_, hidden_));
  Var c = ad::add(ad::mul(f, prev.c), ad::mul(i, g));
  return {ad::mul(o, ad::tanh(c)), c};
}

LstmCell::State LstmCell::zero_state(Tape& tape, std::size_t batch) const {
  return {tape.constant(Tensor(batch, hidden_)), tape.constant(Tensor(batch, hidden_))};
}

}  // namespace stugn::models
