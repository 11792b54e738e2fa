#include "stugn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "stugn/error.hpp"

namespace stugn::evaluation {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::span<const double> m) {
  if (a.size() != b.size() || a.size() != m.size())
    throw ValidationError("metric inputs differ in length");
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> target, std::span<const double> mask) {
  check_lengths(pred, target, mask);
  double acc = 0.0, n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.0) {
      acc += std::abs(target[i] - pred[i]);
      n += 1.0;
    }
  if (n == 0.0) throw ValidationError("metric over an empty mask");
  return acc / n;
}

double mse(std::span<const double> pred, std::span<const double> target, std::span<const double> mask) {
  check_lengths(pred, target, mask);
  double acc = 0.0, n = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (mask[i] != 0.0) {
      const double r = target[i] - pred[i];
      acc += r * r;
      n += 1.0;
    }
  if (n == 0.0) throw ValidationError("metric over an empty mask");
  return acc / n;
}

void PowerCurve::validate() const {
  if (!(0.0 < cut_in && cut_in < rated_speed && rated_speed < cut_out))
    throw ValidationError("power curve needs 0 < cut_in < rated_speed < cut_out");
  if (!(rated_power > 0.0)) throw ValidationError("rated power must be positive");
  for (std::size_t i = 1; i < table.size(); ++i)
    if (!(table[i].first > table[i - 1].first))
      throw ValidationError("power curve table speeds must increase");
}

double power_from_wind(double v, const PowerCurve& c) {
  if (!(v >= 0.0)) throw ValidationError("wind speed must be non-negative");
  if (v < c.cut_in || v >= c.cut_out) return 0.0;
  if (!c.table.empty()) {
    const auto& t = c.table;
    if (v <= t.front().first) return t.front().first == v ? t.front().second : 0.0;
    if (v >= t.back().first) return t.back().second;
    const auto hi = std::upper_bound(t.begin(), t.end(), v,
                                     [](double x, const auto& p) { return x < p.first; });
    const auto lo = hi - 1;
    const double w = (v - lo->first) / (hi->first - lo->first);
    return lo->second + w * (hi->second - lo->second);
  }
  if (v >= c.rated_speed) return c.rated_power;
  const double ci3 = c.cut_in * c.cut_in * c.cut_in;
  const double r3 = c.rated_speed * c.rated_speed * c.rated_speed;
  return c.rated_power * (v * v * v - ci3) / (r3 - ci3);
}

double energy_over_horizon(std::span<const double> forecast, const PowerCurve& curve) {
  double kwh = 0.0;
  for (double v : forecast) kwh += power_from_wind(v, curve) / 6.0;
  return kwh;
}

double energy_saving_vs_persistence(std::span<const double> model, std::span<const double> reference,
                                    std::span<const double> truth, std::size_t horizon,
                                    const PowerCurve& curve) {
  if (model.size() != truth.size() || reference.size() != truth.size() || horizon == 0 ||
      truth.size() % horizon != 0)
    throw ValidationError("energy inputs must be whole horizons of equal length");
  const std::size_t rows = truth.size() / horizon;
  if (rows == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t o = r * horizon;
    const double e_true = energy_over_horizon(truth.subspan(o, horizon), curve);
    const double e_ref = energy_over_horizon(reference.subspan(o, horizon), curve);
    const double e_model = energy_over_horizon(model.subspan(o, horizon), curve);
    acc += std::abs(e_true - e_ref) - std::abs(e_true - e_model);
  }
  return acc / static_cast<double>(rows);
}

TestMetrics score(const ForecastSet& f, const PowerCurve& curve) {
  TestMetrics m;
  m.mse = mse(f.prediction, f.truth, f.mask);
  m.mae = mae(f.prediction, f.truth, f.mask);
  m.scored = static_cast<std::size_t>(std::count_if(f.mask.begin(), f.mask.end(),
                                                    [](double x) { return x != 0.0; }));
  std::vector<double> model, ref, truth;
  const std::size_t h = f.horizon;
  for (std::size_t o = 0; o + h <= f.truth.size(); o += h) {
    bool complete = true;
    for (std::size_t k = 0; k < h; ++k) complete = complete && f.mask[o + k] != 0.0;
    if (!complete) continue;
    for (std::size_t k = 0; k < h; ++k) {
      model.push_back(std::max(0.0, f.prediction[o + k]));
      ref.push_back(std::max(0.0, f.persistence[o + k]));
      truth.push_back(std::max(0.0, f.truth[o + k]));
    }
    ++m.energy_rows;
  }
  m.saving_kwh = energy_saving_vs_persistence(model, ref, truth, h, curve);
  return m;
}

std::string format_metric(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  return s == "-0.000000" ? "0.000000" : s;
}

std::string format_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

void write_cells_csv(std::ostream& out, const std::vector<CellMetrics>& cells) {
  out << "model,block,rate,seed,mse,mae,saving_kwh\n";
  char buf[256];
  for (const auto& c : cells) {
    // Hexadecimal floats keep the cell file exact for re-aggregation.
    std::snprintf(buf, sizeof buf, "%a,%a,%a", c.mse, c.mae, c.saving_kwh);
    out << c.model << ',' << c.block << ',' << format_rate(c.rate) << ',' << c.seed << ',' << buf << '\n';
  }
}

std::vector<CellMetrics> read_cells_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "model,block,rate,seed,mse,mae,saving_kwh")
    throw ValidationError("cell metrics: unexpected header");
  std::vector<CellMetrics> cells;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 7) throw ValidationError("cell metrics: line " + std::to_string(lineno) + " has " +
                                             std::to_string(f.size()) + " fields, expected 7");
    CellMetrics c;
    c.model = f[0];
    c.block = f[1];
    char* end = nullptr;
    c.rate = std::strtod(f[2].c_str(), &end);
    c.seed = std::strtoull(f[3].c_str(), nullptr, 10);
    c.mse = std::strtod(f[4].c_str(), nullptr);
    c.mae = std::strtod(f[5].c_str(), nullptr);
    c.saving_kwh = std::strtod(f[6].c_str(), nullptr);
    cells.push_back(c);
  }
  return cells;
}

std::vector<ReportRow> aggregate(const std::vector<CellMetrics>& cells,
                                 const std::vector<std::string>& model_order,
                                 const std::vector<double>& rates) {
  std::vector<ReportRow> rows;
  for (const auto& model : model_order)
    for (double rate : rates) {
      ReportRow r{model, rate, 0.0, 0.0, 0.0, 0};
      for (const auto& c : cells)
        if (c.model == model && format_rate(c.rate) == format_rate(rate)) {
          r.mse += c.mse;
          r.mae += c.mae;
          r.saving_kwh += c.saving_kwh;
          ++r.seeds;
        }
      if (r.seeds == 0) {
        r.mse = r.mae = r.saving_kwh = std::numeric_limits<double>::quiet_NaN();
      } else {
        const auto n = static_cast<double>(r.seeds);
        r.mse /= n;
        r.mae /= n;
        r.saving_kwh /= n;
      }
      rows.push_back(r);
    }
  return rows;
}

void write_accuracy_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "model,rate,mse,mae\n";
  for (const auto& r : rows)
    out << r.model << ',' << format_rate(r.rate) << ',' << format_metric(r.mse) << ','
        << format_metric(r.mae) << '\n';
}

void write_energy_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "model,rate,saving_kwh\n";
  for (const auto& r : rows)
    out << r.model << ',' << format_rate(r.rate) << ',' << format_metric(r.saving_kwh) << '\n';
}

void write_long_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "model,rate,metric,value\n";
  for (const auto& r : rows) {
    out << r.model << ',' << format_rate(r.rate) << ",mse," << format_metric(r.mse) << '\n';
    out << r.model << ',' << format_rate(r.rate) << ",mae," << format_metric(r.mae) << '\n';
    out << r.model << ',' << format_rate(r.rate) << ",saving_kwh," << format_metric(r.saving_kwh) << '\n';
  }
}

void write_summary(std::ostream& out, const std::vector<ReportRow>& rows, const std::vector<double>& rates) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, const ReportRow*>> by;
  for (const auto& r : rows) {
    if (by.find(r.model) == by.end()) order.push_back(r.model);
    by[r.model][format_rate(r.rate)] = &r;
  }
  char buf[128];
  auto cell = [&](const ReportRow* r, double ReportRow::*field) {
    return r ? format_metric(r->*field) : std::string("NA");
  };

  out << "Forecast accuracy on the test split (m/s), mean over seeds\n\n";
  std::snprintf(buf, sizeof buf, "%-22s", "model");
  out << buf;
  for (double rate : rates) {
    char label[32];
    std::snprintf(label, sizeof label, "%.0f%% mse", rate * 100.0);
    std::snprintf(buf, sizeof buf, " | %9s %9s", label, "mae");
    out << buf;
  }
  out << '\n';
  for (const auto& m : order) {
    std::snprintf(buf, sizeof buf, "%-22s", m.c_str());
    out << buf;
    for (double rate : rates) {
      const auto it = by[m].find(format_rate(rate));
      const ReportRow* r = it == by[m].end() ? nullptr : it->second;
      std::snprintf(buf, sizeof buf, " | %9s %9s", cell(r, &ReportRow::mse).c_str(),
                    cell(r, &ReportRow::mae).c_str());
      out << buf;
    }
    out << '\n';
  }

  out << "\nEnergy saving against persistence (kWh per 1-hour horizon)\n\n";
  std::snprintf(buf, sizeof buf, "%-22s", "model");
  out << buf;
  for (double rate : rates) {
    char label[32];
    std::snprintf(label, sizeof label, "%.0f%%", rate * 100.0);
    std::snprintf(buf, sizeof buf, " | %9s", label);
    out << buf;
  }
  out << '\n';
  for (const auto& m : order) {
    std::snprintf(buf, sizeof buf, "%-22s", m.c_str());
    out << buf;
    for (double rate : rates) {
      const auto it = by[m].find(format_rate(rate));
      const ReportRow* r = it == by[m].end() ? nullptr : it->second;
      std::snprintf(buf, sizeof buf, " | %9s", cell(r, &ReportRow::saving_kwh).c_str());
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace stugn::evaluation
