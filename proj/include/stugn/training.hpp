#pragma once

// Loss, optimiser, per-split data preparation, the epoch loop and the
// experiment matrix.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stugn/data.hpp"
#include "stugn/evaluation.hpp"
#include "stugn/graph.hpp"
#include "stugn/models.hpp"

namespace stugn::training {

using ad::Tensor;
using ad::Var;

/// Mean of squared residuals over entries where `mask` is non-zero.
Var mse_loss(Var pred, const Tensor& target, const Tensor& mask);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update of every trainable parameter; moment
/// buffers are allocated on first use.
void adam_step(ad::ParameterStore& params, AdamState& state, double lr);

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 25;
  std::vector<std::uint64_t> seeds = {11, 23, 37, 51, 73};
  std::vector<double> missing_rates = {0.0, 0.1, 0.2, 0.3};
  std::size_t window_stride = 1;  // training windows
  std::size_t eval_stride = 1;    // validation and test windows

  void validate() const;
};

/// One split's data: the (possibly corrupted) inputs the models see, the
/// uncorrupted series that supplies targets, and its windows.
struct SplitData {
  data::FrequencyPair observed;
  data::FrequencyPair truth;
  graph::EncodedPair encoded;  // of `observed`
  std::vector<data::Window> windows;
};

struct PreparedData {
  std::vector<data::StationMeta> stations;
  data::WindowSpec spec;
  data::Scaler scaler;  // fitted on the observed training split
  graph::SpatialGraph spatial;
  models::InputScale input_scale;
  SplitData train, val, test;
};

/// Splits both series chronologically and prepares every split. `truth`
/// and `observed` share stations and grid; `observed` is `truth` with
/// entries removed.
PreparedData prepare_data(const data::SeriesSet& truth, const data::SeriesSet& observed,
                          const TrainConfig& config, const data::WindowSpec& spec = {});

/// Inputs, persistence and scaled targets for a set of windows of a split,
/// in the form the model consumes.
models::Batch make_batch(const models::Model& model, const PreparedData& data, const SplitData& split,
                         std::span<const std::size_t> window_ids);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Epoch 0 scores the initial model. Each later epoch shuffles the
/// training windows, steps Adam once per batch with dropout active, then
/// scores the validation split. The model is left holding the
/// best-validation parameters. Throws NumericError with the epoch and
/// batch if the loss diverges.
TrainResult train(models::Model& model, const PreparedData& data, const TrainConfig& config,
                  std::uint64_t seed);

/// Masked MSE in scaled units over a split, batched.
double evaluate_mse(const models::Model& model, const PreparedData& data, const SplitData& split,
                    std::size_t batch_size);

/// Test forecasts in m/s.
evaluation::ForecastSet forecast_split(const models::Model& model, const PreparedData& data,
                                       const SplitData& split, std::size_t batch_size);

struct CellResult {
  models::ModelConfig model;
  double rate = 0.0;
  std::uint64_t seed = 0;
  TrainResult training;
  evaluation::TestMetrics test;
  std::string error;  // non-empty if the cell failed
  std::string checkpoint;
};

struct ExperimentOptions {
  std::size_t jobs = 1;
  std::string checkpoint_dir;  // empty: no checkpoints
  bool score_test = true;
  std::function<void(const CellResult&)> on_cell_done;
  evaluation::PowerCurve curve;
};

/// Trains and tests every (model, rate, seed) cell. Cells are independent;
/// up to `jobs` run concurrently and results are returned in matrix order
/// (model, rate, seed). A failing cell records its error and the matrix
/// continues.
std::vector<CellResult> run_experiment(const std::vector<models::ModelConfig>& models,
                                       const std::map<double, PreparedData>& data,
                                       const TrainConfig& config, const ExperimentOptions& options);

/// Per-epoch CSV `model,block,rate,seed,epoch,train_mse,val_mse`.
void write_epoch_header(std::ostream& out);
void write_epoch_rows(std::ostream& out, const CellResult& cell);

evaluation::CellMetrics cell_metrics(const CellResult& cell);

/// Checkpoint file name of one cell.
std::string checkpoint_name(const models::ModelConfig& model, double rate, std::uint64_t seed);

}  // namespace stugn::training
