#pragma once

// Test metrics in m/s, power-curve energy conversion and the report tables.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stugn::evaluation {

/// Masked mean absolute / squared error. Throws ValidationError on an
/// empty mask or mismatched lengths.
double mae(std::span<const double> pred, std::span<const double> target, std::span<const double> mask);
double mse(std::span<const double> pred, std::span<const double> target, std::span<const double> mask);

/// Turbine power curve. Between cut-in and rated speed the power is cubic
/// in wind speed unless a tabulated curve is supplied, in which case it is
/// interpolated linearly between (speed, kW) points.
struct PowerCurve {
  double cut_in = 3.0;        // m/s
  double rated_speed = 11.4;  // m/s
  double cut_out = 25.0;      // m/s
  double rated_power = 5000.0;  // kW
  std::vector<std::pair<double, double>> table;

  void validate() const;
};

double power_from_wind(double v, const PowerCurve& curve);

/// kWh over consecutive 10-minute steps.
double energy_over_horizon(std::span<const double> forecast, const PowerCurve& curve);

/// Mean over rows of |E_true - E_reference| - |E_true - E_model|, where
/// each row is one (window, station) horizon of `horizon` values.
double energy_saving_vs_persistence(std::span<const double> model, std::span<const double> reference,
                                    std::span<const double> truth, std::size_t horizon,
                                    const PowerCurve& curve);

/// Test forecasts of one model in m/s, rows (window, station).
struct ForecastSet {
  std::size_t horizon = 6;
  std::vector<double> prediction;
  std::vector<double> persistence;
  std::vector<double> truth;
  std::vector<double> mask;  // 1 where the truth exists
};

struct TestMetrics {
  double mse = 0.0;
  double mae = 0.0;
  double saving_kwh = 0.0;
  std::size_t scored = 0;       // masked-in target values
  std::size_t energy_rows = 0;  // horizons with complete truth
};

/// MSE/MAE over every masked-in value; energy saving over horizons whose
/// truth is complete, with negative forecasts clamped to zero first.
TestMetrics score(const ForecastSet& forecasts, const PowerCurve& curve);

/// Test result of one trained model for one (rate, seed).
struct CellMetrics {
  std::string model;  // table label
  std::string block;  // graph block or "-"
  double rate = 0.0;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double mae = 0.0;
  double saving_kwh = 0.0;
};

void write_cells_csv(std::ostream& out, const std::vector<CellMetrics>& cells);
std::vector<CellMetrics> read_cells_csv(std::istream& in);

/// Seed-averaged metrics of one (model, rate).
struct ReportRow {
  std::string model;
  double rate = 0.0;
  double mse = 0.0;
  double mae = 0.0;
  double saving_kwh = 0.0;
  std::size_t seeds = 0;
};

/// Means over seeds, ordered by `model_order` then by rate.
std::vector<ReportRow> aggregate(const std::vector<CellMetrics>& cells,
                                 const std::vector<std::string>& model_order,
                                 const std::vector<double>& rates);

void write_accuracy_csv(std::ostream& out, const std::vector<ReportRow>& rows);  // model,rate,mse,mae
void write_energy_csv(std::ostream& out, const std::vector<ReportRow>& rows);    // model,rate,saving_kwh
void write_long_csv(std::ostream& out, const std::vector<ReportRow>& rows);      // model,rate,metric,value
/// Wide plain-text table: one line per model, MSE/MAE per rate, then savings.
void write_summary(std::ostream& out, const std::vector<ReportRow>& rows, const std::vector<double>& rates);

/// Fixed-precision formatting used by every report file.
std::string format_metric(double v);
std::string format_rate(double r);

}  // namespace stugn::evaluation
