#include "stugn/training.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "stugn/corruption.hpp"
#include "stugn/error.hpp"

namespace stugn::training {

Var mse_loss(Var pred, const Tensor& target, const Tensor& mask) {
  if (!pred.value().same_shape(target) || !target.same_shape(mask))
    throw ValidationError("loss shapes differ: " + ad::shape_string(pred.value()) + " vs " +
                          ad::shape_string(target));
  double n = 0.0;
  for (double m : mask.data()) n += (m != 0.0);
  if (n == 0.0) throw ValidationError("loss over an empty mask");
  ad::Tape& tape = *pred.tape;
  Var diff = ad::sub(pred, tape.constant(target));
  Var sq = ad::mul(ad::mul(diff, diff), tape.constant(mask));
  return ad::scale(ad::sum(sq), 1.0 / n);
}

void adam_step(ad::ParameterStore& params, AdamState& s, double lr) {
  if (s.m.size() != params.size()) {
    s.m.clear();
    s.v.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor& p = params[i].value;
      s.m.emplace_back(p.rows(), p.cols());
      s.v.emplace_back(p.rows(), p.cols());
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = params[i];
    if (!p.trainable) continue;
    Tensor& m = s.m[i];
    Tensor& v = s.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + s.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (missing_rates.empty()) throw ValidationError("at least one missing rate is required");
  for (double r : missing_rates)
    if (!(r >= 0.0 && r < 1.0)) throw ValidationError("missing rates must lie in [0, 1)");
  if (window_stride == 0 || eval_stride == 0) throw ValidationError("window strides must be positive");
}

namespace {

SplitData make_split(const data::FrequencyPair& truth, const data::FrequencyPair& observed,
                     const data::Scaler& scaler, const data::WindowSpec& spec, std::size_t stride) {
  SplitData s;
  s.truth = truth;
  s.observed = observed;
  s.encoded = graph::encode_pair(observed, scaler);
  s.windows = data::make_windows(truth, spec, stride);
  if (s.windows.empty()) throw InsufficientDataError("a split has no complete window at this stride");
  return s;
}

}  // namespace

PreparedData prepare_data(const data::SeriesSet& truth, const data::SeriesSet& observed,
                          const TrainConfig& config, const data::WindowSpec& spec) {
  if (truth.stations() != observed.stations() || truth.grid_start() != observed.grid_start() ||
      truth.grid_length() != observed.grid_length() ||
      truth.frequency_minutes() != observed.frequency_minutes())
    throw ValidationError("observed and ground-truth series must share stations and grid");
  const data::DatasetSplits t = data::split_dataset(truth, spec);
  const data::DatasetSplits o = data::split_dataset(observed, spec);

  PreparedData d;
  d.stations = truth.stations();
  d.spec = spec;
  d.scaler = data::fit_scaler(o.train.ten_min);
  d.spatial = graph::knn_stations(d.stations, 3);
  d.train = make_split(t.train, o.train, d.scaler, spec, config.window_stride);
  d.val = make_split(t.val, o.val, d.scaler, spec, config.eval_stride);
  d.test = make_split(t.test, o.test, d.scaler, spec, config.eval_stride);

  std::vector<graph::UnifiedGraph> sample;
  const std::size_t n = d.train.windows.size();
  const std::size_t count = std::min<std::size_t>(32, n);
  for (std::size_t i = 0; i < count; ++i)
    sample.push_back(graph::build_unified_graph(d.train.windows[i * n / count], d.train.encoded, d.spatial));
  d.input_scale = models::fit_input_scale(d.stations, d.spatial, sample);
  return d;
}

models::Batch make_batch(const models::Model& model, const PreparedData& data, const SplitData& split,
                         std::span<const std::size_t> window_ids) {
  const std::size_t horizon = data.spec.horizon;
  models::Batch batch;
  if (model.input_kind() == models::InputKind::kUnified) {
    std::vector<graph::UnifiedGraph> graphs;
    graphs.reserve(window_ids.size());
    for (std::size_t id : window_ids)
      graphs.push_back(graph::build_unified_graph(split.windows[id], split.encoded, data.spatial));
    batch = models::make_unified_batch(graphs, horizon);
  } else {
    std::vector<graph::AlignedWindow> windows;
    windows.reserve(window_ids.size());
    for (std::size_t id : window_ids) {
      const auto imputed = corruption::impute_window(split.observed, split.windows[id]);
      windows.push_back(graph::build_spatial_graph(imputed.window, imputed.inputs, data.scaler));
    }
    batch = models::make_aligned_batch(windows, data.stations, data.spatial, horizon);
  }

  const data::SeriesSet& truth = split.truth.ten_min;
  for (std::size_t b = 0; b < window_ids.size(); ++b) {
    const data::Window& w = split.windows[window_ids[b]];
    for (std::size_t s = 0; s < batch.stations; ++s)
      for (std::size_t k = 0; k < horizon; ++k) {
        const std::size_t slot = w.anchor + k;
        const std::size_t row = b * batch.stations + s;
        if (!truth.present(s, slot)) continue;
        batch.target(row, k) = data.scaler.apply(data::kWindSpeed, truth.at(s, slot)[data::kWindSpeed]);
        batch.mask(row, k) = 1.0;
      }
  }
  return batch;
}

namespace {

struct SquaredError {
  double sum = 0.0;
  double count = 0.0;
};

SquaredError squared_error(const Tensor& pred, const models::Batch& batch) {
  SquaredError e;
  for (std::size_t k = 0; k < pred.size(); ++k)
    if (batch.mask[k] != 0.0) {
      const double r = pred[k] - batch.target[k];
      e.sum += r * r;
      e.count += 1.0;
    }
  return e;
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return ids;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool has_trainable(const ad::ParameterStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store[i].trainable) return true;
  return false;
}

}  // namespace

double evaluate_mse(const models::Model& model, const PreparedData& data, const SplitData& split,
                    std::size_t batch_size) {
  const auto ids = iota_ids(split.windows.size());
  SquaredError total;
  for (std::size_t b = 0; b < ids.size(); b += batch_size) {
    const std::size_t len = std::min(batch_size, ids.size() - b);
    const models::Batch batch = make_batch(model, data, split, std::span(ids).subspan(b, len));
    const SquaredError e = squared_error(model.predict(batch), batch);
    total.sum += e.sum;
    total.count += e.count;
  }
  if (total.count == 0.0) throw ValidationError("split has no scored target");
  return total.sum / total.count;
}

evaluation::ForecastSet forecast_split(const models::Model& model, const PreparedData& data,
                                       const SplitData& split, std::size_t batch_size) {
  evaluation::ForecastSet f;
  f.horizon = data.spec.horizon;
  const auto ids = iota_ids(split.windows.size());
  const data::SeriesSet& truth = split.truth.ten_min;
  for (std::size_t b = 0; b < ids.size(); b += batch_size) {
    const std::size_t len = std::min(batch_size, ids.size() - b);
    const models::Batch batch = make_batch(model, data, split, std::span(ids).subspan(b, len));
    const Tensor pred = model.predict(batch);
    for (std::size_t w = 0; w < len; ++w) {
      const data::Window& win = split.windows[ids[b + w]];
      for (std::size_t s = 0; s < batch.stations; ++s)
        for (std::size_t k = 0; k < f.horizon; ++k) {
          const std::size_t row = w * batch.stations + s;
          const std::size_t slot = win.anchor + k;
          f.prediction.push_back(data.scaler.invert(data::kWindSpeed, pred(row, k)));
          f.persistence.push_back(data.scaler.invert(data::kWindSpeed, batch.persistence(row, k)));
          const bool present = truth.present(s, slot);
          f.truth.push_back(present ? truth.at(s, slot)[data::kWindSpeed] : 0.0);
          f.mask.push_back(present ? 1.0 : 0.0);
        }
    }
  }
  return f;
}

TrainResult train(models::Model& model, const PreparedData& data, const TrainConfig& config,
                  std::uint64_t seed) {
  config.validate();
  model.set_input_scale(data.input_scale);
  ad::ParameterStore& store = model.parameters();
  TrainResult result;
  const std::size_t bs = config.batch_size;
  EpochRecord first{0, evaluate_mse(model, data, data.train, bs), evaluate_mse(model, data, data.val, bs)};
  result.history.push_back(first);
  result.best_epoch = 0;
  result.best_val_mse = first.val_mse;
  if (!has_trainable(store)) return result;

  std::vector<Tensor> best = store.snapshot();
  AdamState adam;
  std::mt19937_64 rng(mix(seed, 0x7261696e));
  std::vector<std::size_t> ids = iota_ids(data.train.windows.size());
  const double lr = model.config().learning_rate;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(ids[i - 1], ids[pick(rng)]);
    }
    SquaredError epoch_err;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < ids.size(); b += bs, ++batch_no) {
      const std::size_t len = std::min(bs, ids.size() - b);
      const models::Batch batch = make_batch(model, data, data.train, std::span(ids).subspan(b, len));
      double n = 0.0;
      for (double m : batch.mask.data()) n += m;
      if (n == 0.0) continue;
      try {
        store.zero_grad();
        ad::Tape tape;
        models::DropoutStream dropout(model.config().dropout, true, mix(mix(seed, epoch), batch_no));
        Var pred = model.forward(tape, batch, dropout);
        Var loss = mse_loss(pred, batch.target, batch.mask);
        tape.backward(loss);
        for (std::size_t p = 0; p < store.size(); ++p)
          if (!store[p].grad.all_finite()) throw NumericError("non-finite gradient in " + store[p].name);
        adam_step(store, adam, lr);
        epoch_err.sum += loss.value()[0] * n;
        epoch_err.count += n;
      } catch (const NumericError& e) {
        throw NumericError(model.config().name() + " diverged at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_no) + ": " + e.what());
      }
    }
    EpochRecord rec{epoch, epoch_err.count > 0 ? epoch_err.sum / epoch_err.count : 0.0,
                    evaluate_mse(model, data, data.val, bs)};
    result.history.push_back(rec);
    if (rec.val_mse < result.best_val_mse) {
      result.best_val_mse = rec.val_mse;
      result.best_epoch = epoch;
      best = store.snapshot();
    }
  }
  store.restore(best);
  return result;
}

std::string checkpoint_name(const models::ModelConfig& model, double rate, std::uint64_t seed) {
  return model.name() + "_r" + evaluation::format_rate(rate) + "_s" + std::to_string(seed) + ".ckpt";
}

evaluation::CellMetrics cell_metrics(const CellResult& cell) {
  evaluation::CellMetrics m;
  m.model = cell.model.name();
  m.block = cell.model.has_block() ? models::block_name(cell.model.block) : "-";
  m.rate = cell.rate;
  m.seed = cell.seed;
  m.mse = cell.test.mse;
  m.mae = cell.test.mae;
  m.saving_kwh = cell.test.saving_kwh;
  return m;
}

void write_epoch_header(std::ostream& out) { out << "model,block,rate,seed,epoch,train_mse,val_mse\n"; }

void write_epoch_rows(std::ostream& out, const CellResult& cell) {
  const auto m = cell_metrics(cell);
  for (const auto& e : cell.training.history)
    out << m.model << ',' << m.block << ',' << evaluation::format_rate(cell.rate) << ',' << cell.seed
        << ',' << e.epoch << ',' << evaluation::format_metric(e.train_mse) << ','
        << evaluation::format_metric(e.val_mse) << '\n';
}

std::vector<CellResult> run_experiment(const std::vector<models::ModelConfig>& models,
                                       const std::map<double, PreparedData>& data,
                                       const TrainConfig& config, const ExperimentOptions& options) {
  config.validate();
  std::vector<CellResult> cells;
  for (const auto& m : models)
    for (double rate : config.missing_rates)
      for (std::uint64_t seed : config.seeds) {
        CellResult c;
        c.model = m;
        c.rate = rate;
        c.seed = seed;
        cells.push_back(std::move(c));
      }
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      CellResult& cell = cells[i];
      try {
        const auto it = data.find(cell.rate);
        if (it == data.end())
          throw ValidationError("no prepared data for missing rate " + evaluation::format_rate(cell.rate));
        auto model = models::make_model(cell.model, cell.seed);
        cell.training = train(*model, it->second, config, cell.seed);
        if (options.score_test)
          cell.test = evaluation::score(
              forecast_split(*model, it->second, it->second.test, config.batch_size), options.curve);
        if (!options.checkpoint_dir.empty()) {
          const auto path = std::filesystem::path(options.checkpoint_dir) /
                            checkpoint_name(cell.model, cell.rate, cell.seed);
          std::ofstream out(path);
          models::save_model(out, *model);
          if (!out) throw RuntimeFailure("cannot write checkpoint " + path.string());
          cell.checkpoint = path.string();
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (options.on_cell_done) {
        std::lock_guard lock(done_mutex);
        options.on_cell_done(cell);
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return cells;
}

}  // namespace stugn::training
