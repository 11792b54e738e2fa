#include "stugn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "stugn/corruption.hpp"
#include "stugn/error.hpp"
#include "stugn/io.hpp"
#include "stugn/synthetic.hpp"
#include "stugn/training.hpp"

namespace stugn::pipeline {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw RuntimeFailure("cannot write " + path.string());
}

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path))
    throw ValidationError(path.string() + " does not exist; run `" + producer + "` first");
}

void say(const CommandOptions& options, const std::string& line) {
  if (options.progress) *options.progress << line << '\n' << std::flush;
}

std::string cell_stem(const models::ModelConfig& model, double rate, std::uint64_t seed) {
  return fs::path(training::checkpoint_name(model, rate, seed)).stem().string();
}

std::map<double, training::PreparedData> prepare_all(const config::RunConfig& config, const Layout& layout) {
  require(layout.truth_csv(), "generate");
  const data::SeriesSet truth = io::read_series_csv_file(layout.truth_csv().string());
  std::map<double, training::PreparedData> prepared;
  for (double rate : config.training.missing_rates) {
    require(layout.corrupted_csv(rate), "corrupt");
    const data::SeriesSet observed = io::read_series_csv_file(layout.corrupted_csv(rate).string());
    if (observed.stations() != truth.stations() || observed.grid_start() != truth.grid_start() ||
        observed.grid_length() != truth.grid_length())
      throw ValidationError(layout.corrupted_csv(rate).string() + " does not match " +
                            layout.truth_csv().string() + "; rerun `corrupt`");
    prepared.emplace(rate, training::prepare_data(truth, observed, config.training));
  }
  return prepared;
}

// Position of a cell in the full experiment matrix; cells outside it sort last.
struct MatrixOrder {
  std::vector<std::string> models;
  std::vector<double> rates;
  std::vector<std::uint64_t> seeds;

  explicit MatrixOrder(const config::RunConfig& c) : rates(c.training.missing_rates), seeds(c.training.seeds) {
    for (const auto& m : c.model_configs()) models.push_back(m.name());
  }
  std::tuple<std::size_t, std::size_t, double, std::size_t, std::uint64_t> key(const std::string& model, double rate,
                                                                               std::uint64_t seed) const {
    const auto mi = static_cast<std::size_t>(std::find(models.begin(), models.end(), model) - models.begin());
    const auto ri = static_cast<std::size_t>(
        std::find_if(rates.begin(), rates.end(),
                     [&](double r) { return evaluation::format_rate(r) == evaluation::format_rate(rate); }) -
        rates.begin());
    const auto si = static_cast<std::size_t>(std::find(seeds.begin(), seeds.end(), seed) - seeds.begin());
    return {mi, ri, rate, si, seed};
  }
};

}  // namespace

Layout::Layout(const config::RunConfig& config)
    : root(config.output_dir), training_text_(config::canonical_training_text(config)) {}

fs::path Layout::run_dir() const {
  if (!run_dir_) {
    require(truth_csv(), "generate");
    const std::string text = training_text_ + "truth=" + config::fnv1a_hex(slurp(truth_csv())) + '\n';
    run_dir_ = root / "runs" / config::fnv1a_hex(text);
  }
  return *run_dir_;
}

fs::path Layout::corrupted_csv(double rate) const {
  return data_dir() / ("corrupted_r" + evaluation::format_rate(rate) + ".csv");
}

fs::path Layout::corruption_log_csv(double rate) const {
  return data_dir() / ("corruption_log_r" + evaluation::format_rate(rate) + ".csv");
}

config::RunConfig apply_options(config::RunConfig config, const CommandOptions& options) {
  if (options.out) config.output_dir = *options.out;
  if (options.jobs) config.jobs = *options.jobs;
  if (options.rate) {
    if (!(*options.rate >= 0.0 && *options.rate < 1.0)) throw ValidationError("--rate must lie in [0, 1)");
    config.training.missing_rates = {*options.rate};
  }
  if (options.seed) config.training.seeds = {*options.seed};
  config.validate();
  return config;
}

std::vector<fs::path> generate(const config::RunConfig& base, const CommandOptions& options) {
  config::RunConfig config = base;
  if (options.out) config.output_dir = *options.out;
  if (options.seed) config.synthetic.seed = *options.seed;
  const Layout layout(config);
  data::SeriesSet series;
  if (config.input_csv.empty()) {
    say(options, "generating " + std::to_string(config.synthetic.stations) + " synthetic stations");
    series = synthetic::generate_synthetic(config.synthetic).ten_min;
  } else {
    say(options, "ingesting " + config.input_csv);
    series = io::ingest_csv(config.input_csv).ten_min;
  }
  std::ostringstream out;
  io::write_series_csv(out, series);
  write_file(layout.truth_csv(), out.str());
  return {layout.truth_csv()};
}

std::vector<fs::path> corrupt(const config::RunConfig& base, const CommandOptions& options) {
  config::RunConfig config = base;
  if (options.out) config.output_dir = *options.out;
  if (options.seed) config.corruption.seed = *options.seed;
  std::vector<double> rates = config.training.missing_rates;
  if (options.rate) rates = {*options.rate};
  const Layout layout(config);
  require(layout.truth_csv(), "generate");
  const data::SeriesSet truth = io::read_series_csv_file(layout.truth_csv().string());

  std::vector<fs::path> written;
  for (double rate : rates) {
    corruption::BurstModel model = config.corruption;
    model.target_rate = rate;
    const auto result = corruption::inject_missing(truth, model);
    std::ostringstream series, log;
    io::write_series_csv(series, result.data);
    corruption::write_log_csv(log, result.log);
    write_file(layout.corrupted_csv(rate), series.str());
    write_file(layout.corruption_log_csv(rate), log.str());
    written.push_back(layout.corrupted_csv(rate));
    written.push_back(layout.corruption_log_csv(rate));
    char line[96];
    std::snprintf(line, sizeof line, "rate %s: removed %zu entries (realized %.4f)",
                  evaluation::format_rate(rate).c_str(), result.log.removed.size(), result.log.realized_rate);
    say(options, line);
  }
  return written;
}

std::vector<fs::path> train(const config::RunConfig& base, const CommandOptions& options) {
  const config::RunConfig full = [&] {
    config::RunConfig c = base;
    if (options.out) c.output_dir = *options.out;
    return c;
  }();
  const config::RunConfig config = apply_options(base, options);
  const Layout layout(full);
  const auto prepared = prepare_all(config, layout);
  const auto model_list = config.model_configs();

  std::vector<fs::path> written;
  training::ExperimentOptions exp;
  exp.jobs = config.jobs;
  exp.checkpoint_dir = layout.checkpoint_dir().string();
  exp.score_test = false;
  exp.curve = config.power;
  exp.on_cell_done = [&](const training::CellResult& cell) {
    const std::string stem = cell_stem(cell.model, cell.rate, cell.seed);
    if (!cell.error.empty()) {
      say(options, stem + ": FAILED: " + cell.error);
      return;
    }
    std::ostringstream rows;
    training::write_epoch_rows(rows, cell);
    const fs::path path = layout.epochs_dir() / (stem + ".epochs.csv");
    write_file(path, rows.str());
    char line[160];
    std::snprintf(line, sizeof line, "%s: best epoch %zu, validation MSE %s", stem.c_str(),
                  cell.training.best_epoch, evaluation::format_metric(cell.training.best_val_mse).c_str());
    say(options, line);
  };
  const auto cells = training::run_experiment(model_list, prepared, config.training, exp);

  // Rebuild the combined history from every cell trained so far.
  const MatrixOrder order(full);
  std::vector<std::pair<decltype(order.key("", 0, 0)), fs::path>> parts;
  fs::create_directories(layout.epochs_dir());
  for (const auto& m : full.model_configs())
    for (const auto& entry : fs::directory_iterator(layout.epochs_dir())) {
      const std::string name = entry.path().filename().string();
      const std::string prefix = m.name() + "_r";
      if (name.rfind(prefix, 0) != 0) continue;
      double rate = 0.0;
      unsigned long long seed = 0;
      if (std::sscanf(name.c_str() + prefix.size(), "%lf_s%llu", &rate, &seed) != 2) continue;
      parts.emplace_back(order.key(m.name(), rate, seed), entry.path());
    }
  std::sort(parts.begin(), parts.end());
  std::ostringstream all;
  training::write_epoch_header(all);
  for (const auto& [key, path] : parts) all << slurp(path);
  write_file(layout.epochs_csv(), all.str());

  std::string failed;
  for (const auto& cell : cells) {
    if (!cell.error.empty()) {
      failed += "\n  " + cell_stem(cell.model, cell.rate, cell.seed) + ": " + cell.error;
      continue;
    }
    written.push_back(cell.checkpoint);
    written.push_back(layout.epochs_dir() / (cell_stem(cell.model, cell.rate, cell.seed) + ".epochs.csv"));
  }
  written.push_back(layout.epochs_csv());
  if (!failed.empty()) throw RuntimeFailure("training failed for:" + failed);
  return written;
}

std::vector<fs::path> evaluate(const config::RunConfig& base, const CommandOptions& options) {
  const config::RunConfig full = [&] {
    config::RunConfig c = base;
    if (options.out) c.output_dir = *options.out;
    return c;
  }();
  const config::RunConfig config = apply_options(base, options);
  const Layout layout(full);
  const auto model_list = config.model_configs();
  for (const auto& m : model_list)
    for (double rate : config.training.missing_rates)
      for (std::uint64_t seed : config.training.seeds)
        require(layout.checkpoint_dir() / training::checkpoint_name(m, rate, seed), "train");
  const auto prepared = prepare_all(config, layout);

  std::vector<evaluation::CellMetrics> cells;
  if (fs::exists(layout.cells_csv())) {
    std::ifstream in(layout.cells_csv());
    cells = evaluation::read_cells_csv(in);
  }
  for (const auto& m : model_list)
    for (double rate : config.training.missing_rates)
      for (std::uint64_t seed : config.training.seeds) {
        const fs::path path = layout.checkpoint_dir() / training::checkpoint_name(m, rate, seed);
        std::ifstream in(path);
        auto model = models::load_model(in);
        if (!(model->config() == m))
          throw ValidationError(path.string() + " holds a different model configuration; rerun `train`");
        const auto& data = prepared.at(rate);
        training::CellResult cell;
        cell.model = m;
        cell.rate = rate;
        cell.seed = seed;
        cell.test = evaluation::score(training::forecast_split(*model, data, data.test, config.training.batch_size),
                                      config.power);
        const auto metrics = training::cell_metrics(cell);
        std::erase_if(cells, [&](const evaluation::CellMetrics& c) {
          return c.model == metrics.model && evaluation::format_rate(c.rate) == evaluation::format_rate(rate) &&
                 c.seed == seed;
        });
        cells.push_back(metrics);
        say(options, cell_stem(m, rate, seed) + ": test MSE " + evaluation::format_metric(metrics.mse) + ", MAE " +
                         evaluation::format_metric(metrics.mae) + ", saving " +
                         evaluation::format_metric(metrics.saving_kwh) + " kWh");
      }
  const MatrixOrder order(full);
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
    return order.key(a.model, a.rate, a.seed) < order.key(b.model, b.rate, b.seed);
  });
  std::ostringstream out;
  evaluation::write_cells_csv(out, cells);
  write_file(layout.cells_csv(), out.str());
  return {layout.cells_csv()};
}

std::vector<fs::path> report(const config::RunConfig& base, const CommandOptions& options) {
  config::RunConfig config = base;
  if (options.out) config.output_dir = *options.out;
  const Layout layout(config);
  require(layout.cells_csv(), "evaluate");
  std::ifstream in(layout.cells_csv());
  const auto cells = evaluation::read_cells_csv(in);

  std::vector<std::string> names;
  for (const auto& m : config.model_configs()) names.push_back(m.name());
  const auto& rates = config.training.missing_rates;
  const auto rows = evaluation::aggregate(cells, names, rates);

  std::ostringstream accuracy, energy, longform, summary;
  evaluation::write_accuracy_csv(accuracy, rows);
  evaluation::write_energy_csv(energy, rows);
  evaluation::write_long_csv(longform, rows);
  evaluation::write_summary(summary, rows, rates);
  const fs::path dir = layout.report_dir();
  write_file(dir / "table2.csv", accuracy.str());
  write_file(dir / "table3.csv", energy.str());
  write_file(dir / "long.csv", longform.str());
  write_file(dir / "summary.txt", summary.str());
  say(options, summary.str());
  return {dir / "table2.csv", dir / "table3.csv", dir / "long.csv", dir / "summary.txt"};
}

}  // namespace stugn::pipeline
