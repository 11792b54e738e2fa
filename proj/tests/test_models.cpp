#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "stugn/corruption.hpp"
#include "stugn/error.hpp"
#include "stugn/models.hpp"
#include "stugn/training.hpp"

using namespace stugn;
using namespace stugn::models;

namespace {

ModelConfig small(ModelConfig c, std::size_t lookback = 18) {
  c.latent_dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.lookback = lookback;
  return c;
}

training::PreparedData prepare(std::size_t stations, std::size_t length, double rate, std::uint64_t seed,
                               const data::WindowSpec& spec = {}) {
  const auto truth = test::random_series(stations, length, seed);
  const auto observed = corruption::inject_missing(truth, {rate, 10.0, 10, seed + 1}).data;
  training::TrainConfig tc;
  return training::prepare_data(truth, observed, tc, spec);
}

std::vector<std::size_t> pick(std::size_t available, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> u(0, available - 1);
  std::vector<std::size_t> ids(count);
  for (auto& i : ids) i = u(rng);
  return ids;
}

// Moves every trainable parameter off its initial value, gates included.
void perturb(ParameterStore& store, std::uint64_t seed, double sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    for (double& v : store[i].value.data()) v += z(rng);
  }
}

}  // namespace

TEST(ModelConfigTest, TableRowsInReportOrder) {
  std::vector<std::string> names;
  for (const auto& c : table_rows()) names.push_back(c.name());
  const std::vector<std::string> want{"Persistence",        "TSF-Linear",         "ST-LSTM-MPNN",
                                      "ST-LSTM-GATv2",      "ST-LSTM-TGAT",       "ST-Transformer-MPNN",
                                      "ST-Transformer-GATv2", "ST-Transformer-TGAT", "STUGN-MPNN",
                                      "STUGN-GATv2",        "STUGN-TGAT"};
  EXPECT_EQ(names, want);
}

TEST(ModelConfigTest, TextRoundTrip) {
  for (const auto& c : table_rows()) EXPECT_EQ(model_config_from_text(to_text(c)), c);
}

TEST(ModelConfigTest, Validation) {
  ModelConfig c = ModelConfig::defaults(Family::kStugn);
  c.heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ModelConfig::defaults(Family::kStugn);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(parse_family("GNN"), ValidationError);
}

TEST(PersistenceAtInit, EveryModelOnRandomWindows) {
  for (double rate : {0.0, 0.2}) {
    const auto data = prepare(4, 1500, rate, 3);
    const auto ids = pick(data.test.windows.size(), 12, 4);
    for (const auto& row : table_rows()) {
      auto model = make_model(small(row), 17);
      model->set_input_scale(data.input_scale);
      const Batch batch = training::make_batch(*model, data, data.test, ids);
      const Tensor pred = model->predict(batch);
      ASSERT_TRUE(pred.same_shape(batch.persistence)) << row.name();
      for (std::size_t k = 0; k < pred.size(); ++k)
        ASSERT_NEAR(pred[k], batch.persistence[k], 1e-9) << row.name() << " rate " << rate;
    }
  }
}

TEST(PersistenceAtInit, PersistenceIsLastObservedValue) {
  const auto data = prepare(3, 1500, 0.0, 5);
  auto model = make_model(ModelConfig::defaults(Family::kPersistence), 1);
  const std::vector<std::size_t> ids{0, 7};
  const Batch batch = training::make_batch(*model, data, data.test, ids);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& w = data.test.windows[ids[b]];
      const double last = data.scaler.apply(data::kWindSpeed, data.test.observed.ten_min.at(s, w.anchor - 1)[0]);
      for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(batch.persistence(b * 3 + s, k), last, 1e-12);
    }
}

TEST(GradientCheck, FullForwardAtToyScale) {
  const data::WindowSpec spec{6, 2, 6};
  const auto data = prepare(3, 600, 0.1, 7, spec);
  const std::vector<std::size_t> ids{1, 4};
  const std::vector<ModelConfig> configs{ModelConfig::defaults(Family::kStugn, Block::kTgat),
                                         ModelConfig::defaults(Family::kStugn, Block::kGatv2),
                                         ModelConfig::defaults(Family::kStLstm, Block::kGatv2),
                                         ModelConfig::defaults(Family::kStTransformer, Block::kTgat)};
  for (const auto& base : configs) {
    ModelConfig c = small(base, 6);
    c.layers = 1;
    auto model = make_model(c, 21);
    model->set_input_scale(data.input_scale);
    perturb(model->parameters(), 22);
    const Batch batch = training::make_batch(*model, data, data.train, ids);
    ASSERT_LE(batch.stations, 3u);
    const double err = ad::grad_check_parameters(model->parameters(), [&](Tape& t) {
      DropoutStream off = DropoutStream::eval();
      return training::mse_loss(model->forward(t, batch, off), batch.target, batch.mask);
    });
    EXPECT_LT(err, 1e-4) << c.name();
  }
}

TEST(Robustness, StugnEmitsAllForecastsAtEveryRate) {
  for (double rate : {0.1, 0.2, 0.3}) {
    const auto data = prepare(4, 3000, rate, 11);
    ModelConfig c = small(ModelConfig::defaults(Family::kStugn, Block::kGatv2));
    auto model = make_model(c, 3);
    model->set_input_scale(data.input_scale);
    perturb(model->parameters(), 4);
    std::size_t reduced = 0;
    for (std::size_t id : pick(data.test.windows.size(), 100, 12)) {
      const auto g = graph::build_unified_graph(data.test.windows[id], data.test.encoded, data.spatial);
      const std::vector<graph::UnifiedGraph> one{g};
      const Batch batch = make_unified_batch(one, 6);
      const Tensor pred = model->predict(batch);
      ASSERT_EQ(pred.rows(), 4u);
      ASSERT_EQ(pred.cols(), 6u);
      ASSERT_TRUE(pred.all_finite());
      const std::size_t total = 4 * (18 + 12);
      if (g.observed_count() < total) ++reduced;
      ASSERT_LE(g.observed_count(), total);
    }
    EXPECT_GT(reduced, 0u) << rate;
  }
}

TEST(StugnModelTest, AttentionTraceSumsToOne) {
  const auto data = prepare(3, 1500, 0.2, 13);
  auto model = std::make_unique<StugnModel>(small(ModelConfig::defaults(Family::kStugn, Block::kTgat)), 5);
  model->set_input_scale(data.input_scale);
  perturb(model->parameters(), 6);
  const std::vector<std::size_t> ids{2, 9};
  const Batch batch = training::make_batch(*model, data, data.test, ids);
  Tape t;
  DropoutStream off = DropoutStream::eval();
  std::vector<Var> attention;
  model->forward_traced(t, batch, off, &attention);
  ASSERT_EQ(attention.size(), 2u);
  const auto& dst = *batch.unified->topology.dst;
  for (const Var& a : attention) {
    std::vector<double> tot(batch.unified->topology.nodes * 2, 0.0);
    for (std::size_t k = 0; k < dst.size(); ++k)
      for (std::size_t h = 0; h < 2; ++h) tot[dst[k] * 2 + h] += a.value()(k, h);
    for (double v : tot)
      if (v != 0.0) {
        EXPECT_NEAR(v, 1.0, 1e-9);
      }
  }
}

TEST(StugnModelTest, BatchingIsIndependentPerWindow) {
  const auto data = prepare(3, 1500, 0.2, 14);
  auto model = make_model(small(ModelConfig::defaults(Family::kStugn, Block::kGatv2)), 5);
  model->set_input_scale(data.input_scale);
  perturb(model->parameters(), 7);
  const std::vector<std::size_t> both{3, 8}, first{3}, second{8};
  const Tensor pb = model->predict(training::make_batch(*model, data, data.test, both));
  const Tensor p1 = model->predict(training::make_batch(*model, data, data.test, first));
  const Tensor p2 = model->predict(training::make_batch(*model, data, data.test, second));
  for (std::size_t k = 0; k < p1.size(); ++k) {
    EXPECT_NEAR(pb[k], p1[k], 1e-12);
    EXPECT_NEAR(pb[p1.size() + k], p2[k], 1e-12);
  }
}

TEST(TsfLinearTest, MatchesHandComputation) {
  const auto data = prepare(2, 1500, 0.0, 15);
  auto model = std::make_unique<TsfLinearModel>(small(ModelConfig::defaults(Family::kTsfLinear)), 9);
  model->gate().alpha().value[0] = 0.5;
  const std::vector<std::size_t> ids{4};
  const Batch batch = training::make_batch(*model, data, data.test, ids);
  const Tensor pred = model->predict(batch);
  const Tensor& q = model->time_map().value;
  const auto& w = data.test.windows[4];
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t k = 0; k < 6; ++k) {
      double r = 0.0;
      for (std::size_t t = 0; t < 18; ++t)
        r += data.scaler.apply(data::kWindSpeed, data.test.observed.ten_min.at(s, w.ten_min_begin + t)[0]) * q(t, k);
      EXPECT_NEAR(pred(s, k), batch.persistence(s, 0) + 0.5 * r, 1e-12);
    }
}

TEST(TsfLinearTest, NoSpatialMixing) {
  const auto a = prepare(2, 1500, 0.0, 16);
  auto model = make_model(small(ModelConfig::defaults(Family::kTsfLinear)), 9);
  perturb(model->parameters(), 1);
  const std::vector<std::size_t> ids{5};
  Batch batch = training::make_batch(*model, a, a.test, ids);
  const Tensor before = model->predict(batch);
  // Overwrite station 1's inputs; station 0's forecast must not move.
  AlignedBatch& al = *batch.aligned;
  for (std::size_t t = 0; t < al.steps; ++t) al.inputs(al.steps + t, 0) += 3.0;
  const Tensor after = model->predict(batch);
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(before(0, k), after(0, k));
    EXPECT_NE(before(1, k), after(1, k));
  }
}

TEST(NodeEmbedderTest, TermsAreAdditive) {
  ParameterStore store;
  Init init(3);
  NodeEmbedder emb(store, "e", 5, 8, true, true, init);
  NodeEmbedder::Inputs in;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  in.features = Tensor(3, 5);
  in.coords = Tensor(3, 2);
  in.time = Tensor(3, 8);
  for (Tensor* t : {&in.features, &in.coords, &in.time})
    for (double& v : t->data()) v = z(rng);
  in.positions = {0, 4, 9};
  in.frequency = ad::make_index({0, 1, 1});
  Tape t;
  const Tensor full = emb(t, in).value();
  const Tensor f = emb.feature(t, t.constant(in.features)).value();
  const Tensor p = emb.position(t, t.constant(in.coords)).value();
  const Tensor tm = emb.time(t, t.constant(in.time)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> pe(8);
    sinusoidal_position(in.positions[r], pe);
    for (std::size_t c = 0; c < 8; ++c) {
      const double want = f(r, c) + p(r, c) + tm(r, c) + emb.frequency_table->value((*in.frequency)[r], c) + pe[c];
      EXPECT_NEAR(full(r, c), want, 1e-12);
    }
  }
}

TEST(StLayoutTest, EdgesJoinNearestStationsAtEqualPosition) {
  const auto st = test::stations(4);
  const auto sp = graph::knn_stations(st, 3);
  const StLayout layout = make_st_layout(2, 4, 5, sp, true);
  const auto& src = *layout.spatial.src;
  const auto& dst = *layout.spatial.dst;
  ASSERT_EQ(src.size(), 2u * 4u * 5u * 3u);
  for (std::size_t k = 0; k < src.size(); ++k) {
    const std::size_t s_pos = src[k] % 5, d_pos = dst[k] % 5;
    const std::size_t s_ws = src[k] / 5, d_ws = dst[k] / 5;
    EXPECT_EQ(s_pos, d_pos);
    EXPECT_EQ(s_ws / 4, d_ws / 4);
    const auto& nb = sp.neighbors[d_ws % 4];
    EXPECT_NE(std::find(nb.begin(), nb.end(), s_ws % 4), nb.end());
    EXPECT_DOUBLE_EQ(layout.distance[k], graph::haversine(st[s_ws % 4], st[d_ws % 4]));
  }
  // Complete temporal graph per (window, station).
  EXPECT_EQ(layout.temporal.src->size(), 2u * 4u * 25u);
  EXPECT_EQ(make_st_layout(2, 4, 5, sp, false).temporal.src->size(), 0u);
}

TEST(Checkpoints, ModelRoundTrip) {
  const auto data = prepare(3, 1500, 0.1, 18);
  for (const auto& row : table_rows()) {
    auto model = make_model(small(row), 8);
    model->set_input_scale(data.input_scale);
    perturb(model->parameters(), 9);
    std::stringstream ss;
    save_model(ss, *model);
    auto back = load_model(ss);
    EXPECT_EQ(back->config(), model->config());
    EXPECT_EQ(back->input_scale(), data.input_scale);
    const std::vector<std::size_t> ids{1};
    const Batch batch = training::make_batch(*model, data, data.test, ids);
    EXPECT_EQ(back->predict(batch), model->predict(batch)) << row.name();
  }
}
