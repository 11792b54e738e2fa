#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "stugn/error.hpp"
#include "stugn/evaluation.hpp"

using namespace stugn;
using namespace stugn::evaluation;

namespace {

std::vector<double> uniform(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST(Metrics, HandArithmetic) {
  const std::vector<double> y{1, 2}, p{1, 3}, m{1, 1};
  EXPECT_DOUBLE_EQ(mae(p, y, m), 0.5);
  EXPECT_DOUBLE_EQ(mse(p, y, m), 0.5);
  EXPECT_EQ(mae(y, y, m), 0.0);
  EXPECT_EQ(mse(y, y, m), 0.0);
}

TEST(Metrics, MatchDirectFormulaAndAreSymmetric) {
  const auto a = uniform(500, -3, 3, 1), b = uniform(500, -3, 3, 2);
  std::vector<double> mask(500);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 == 0 ? 0.0 : 1.0;
  double sa = 0.0, ss = 0.0, n = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i] != 0.0) {
      sa += std::fabs(a[i] - b[i]);
      ss += (a[i] - b[i]) * (a[i] - b[i]);
      n += 1.0;
    }
  EXPECT_NEAR(mae(a, b, mask), sa / n, 1e-12);
  EXPECT_NEAR(mse(a, b, mask), ss / n, 1e-12);
  EXPECT_EQ(mae(a, b, mask), mae(b, a, mask));
  EXPECT_EQ(mse(a, b, mask), mse(b, a, mask));
}

TEST(Metrics, Errors) {
  const std::vector<double> y{1, 2}, z{0, 0};
  EXPECT_THROW(mse(y, y, z), ValidationError);
  EXPECT_THROW(mae(y, std::vector<double>{1}, y), ValidationError);
}

TEST(PowerCurveTest, ReferencePoints) {
  const PowerCurve c;
  EXPECT_EQ(power_from_wind(3.0, c), 0.0);
  EXPECT_EQ(power_from_wind(11.4, c), 5000.0);
  EXPECT_EQ(power_from_wind(26.0, c), 0.0);
  EXPECT_EQ(power_from_wind(25.0, c), 0.0);
  EXPECT_EQ(power_from_wind(20.0, c), 5000.0);
  EXPECT_EQ(power_from_wind(0.0, c), 0.0);
  // Cubic between cut-in and rated.
  const double v = 8.0;
  EXPECT_NEAR(power_from_wind(v, c), 5000.0 * (512.0 - 27.0) / (11.4 * 11.4 * 11.4 - 27.0), 1e-9);
  EXPECT_THROW(power_from_wind(-0.1, c), ValidationError);
}

TEST(PowerCurveTest, MonotoneAndContinuousBelowCutOut) {
  const PowerCurve c;
  double prev = 0.0;
  for (double v = 0.0; v < 25.0; v += 0.001) {
    const double p = power_from_wind(v, c);
    EXPECT_GE(p, prev);
    EXPECT_LE(p - prev, 5.0) << v;  // no jumps
    prev = p;
  }
}

TEST(PowerCurveTest, TabulatedCurveInterpolates) {
  PowerCurve c;
  c.table = {{3.0, 0.0}, {5.0, 400.0}, {11.4, 5000.0}};
  c.validate();
  EXPECT_DOUBLE_EQ(power_from_wind(4.0, c), 200.0);
  EXPECT_DOUBLE_EQ(power_from_wind(11.4, c), 5000.0);
  EXPECT_DOUBLE_EQ(power_from_wind(15.0, c), 5000.0);
  EXPECT_EQ(power_from_wind(2.0, c), 0.0);
  c.table = {{5.0, 0.0}, {4.0, 1.0}};
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(PowerCurveTest, Validation) {
  PowerCurve c;
  c.cut_in = 12.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = PowerCurve{};
  c.rated_power = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Energy, HorizonSums) {
  const PowerCurve c;
  EXPECT_DOUBLE_EQ(energy_over_horizon(std::vector<double>(6, 11.4), c), 5000.0);
  EXPECT_EQ(energy_over_horizon(std::vector<double>(6, 0.0), c), 0.0);
  EXPECT_DOUBLE_EQ(energy_over_horizon(std::vector<double>{0, 0, 0, 11.4, 11.4, 11.4}, c), 2500.0);
}

TEST(Energy, LinearInStepPower) {
  const PowerCurve c;
  const auto v = uniform(6, 0, 20, 3);
  double acc = 0.0;
  for (double x : v) acc += power_from_wind(x, c);
  EXPECT_NEAR(energy_over_horizon(v, c), acc / 6.0, 1e-9);
}

TEST(Energy, SavingAgainstItselfIsZero) {
  const PowerCurve c;
  const auto p = uniform(60, 0, 15, 4), y = uniform(60, 0, 15, 5);
  EXPECT_EQ(energy_saving_vs_persistence(p, p, y, 6, c), 0.0);
}

TEST(Energy, PerfectForecastBound) {
  const PowerCurve c;
  const auto p = uniform(60, 0, 15, 6), y = uniform(60, 0, 15, 7);
  double expect = 0.0;
  for (std::size_t r = 0; r < 10; ++r) {
    const std::span<const double> ys(y.data() + 6 * r, 6), ps(p.data() + 6 * r, 6);
    expect += std::fabs(energy_over_horizon(ys, c) - energy_over_horizon(ps, c));
  }
  EXPECT_NEAR(energy_saving_vs_persistence(y, p, y, 6, c), expect / 10.0, 1e-9);
}

TEST(Energy, Antisymmetry) {
  const PowerCurve c;
  const auto a = uniform(60, 0, 15, 8), b = uniform(60, 0, 15, 9), y = uniform(60, 0, 15, 10);
  EXPECT_NEAR(energy_saving_vs_persistence(a, b, y, 6, c), -energy_saving_vs_persistence(b, a, y, 6, c), 1e-9);
}

TEST(Energy, TwoWindowHandCase) {
  const PowerCurve c;
  const std::vector<double> truth{11.4, 11.4, 11.4, 11.4, 11.4, 11.4, 0, 0, 0, 0, 0, 0};
  const std::vector<double> pers{0, 0, 0, 0, 0, 0, 11.4, 11.4, 11.4, 11.4, 11.4, 11.4};
  const std::vector<double> model{11.4, 11.4, 11.4, 0, 0, 0, 0, 0, 0, 11.4, 0, 0};
  // Window 1: |5000 - 0| - |5000 - 2500| = 2500. Window 2: |0 - 5000| - |0 - 5000/6| = 25000/6.
  EXPECT_NEAR(energy_saving_vs_persistence(model, pers, truth, 6, c), (2500.0 + 25000.0 / 6.0) / 2.0, 1e-9);
  EXPECT_THROW(energy_saving_vs_persistence(model, pers, truth, 5, c), ValidationError);
}

TEST(Score, SkipsIncompleteHorizonsAndClampsNegatives) {
  ForecastSet f;
  f.truth = {11.4, 11.4, 11.4, 11.4, 11.4, 11.4, 5, 5, 5, 5, 5, 5};
  f.persistence = std::vector<double>(12, 0.0);
  f.prediction = {-1, -1, -1, -1, -1, -1, 5, 5, 5, 5, 5, 5};
  f.mask = std::vector<double>(12, 1.0);
  f.mask[7] = 0.0;
  const auto m = score(f, PowerCurve{});
  EXPECT_EQ(m.scored, 11u);
  EXPECT_EQ(m.energy_rows, 1u);
  // Clamped prediction equals persistence on the only complete horizon.
  EXPECT_EQ(m.saving_kwh, 0.0);
  double ss = 6 * 12.4 * 12.4;
  EXPECT_NEAR(m.mse, ss / 11.0, 1e-12);
}

TEST(Report, FormattingIsFixed) {
  EXPECT_EQ(format_metric(0.978), "0.978000");
  EXPECT_EQ(format_metric(-1e-12), "0.000000");
  EXPECT_EQ(format_metric(std::numeric_limits<double>::quiet_NaN()), "NA");
  EXPECT_EQ(format_rate(0.3), "0.30");
  EXPECT_EQ(format_rate(0.0), "0.00");
}

TEST(Report, CellsRoundTripExactly) {
  std::vector<CellMetrics> cells{{"STUGN-GATv2", "GATv2", 0.1, 3, 1.0 / 3.0, 0.1 + 0.2, -41.7},
                                 {"Persistence", "-", 0.0, 4, 2.5, 1.25, 0.0}};
  std::stringstream s;
  write_cells_csv(s, cells);
  const auto back = read_cells_csv(s);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].model, cells[i].model);
    EXPECT_EQ(back[i].block, cells[i].block);
    EXPECT_EQ(format_rate(back[i].rate), format_rate(cells[i].rate));
    EXPECT_EQ(back[i].seed, cells[i].seed);
    EXPECT_EQ(back[i].mse, cells[i].mse);
    EXPECT_EQ(back[i].mae, cells[i].mae);
    EXPECT_EQ(back[i].saving_kwh, cells[i].saving_kwh);
  }
  std::stringstream bad("model,block,rate,seed,mse,mae,saving_kwh\nA,-,0.00,1,1\n");
  EXPECT_THROW(read_cells_csv(bad), ValidationError);
}

TEST(Report, AggregateMeansOverSeedsInOrder) {
  const std::vector<CellMetrics> cells{{"B", "-", 0.1, 1, 1.0, 2.0, 3.0},
                                       {"B", "-", 0.1, 2, 3.0, 4.0, 5.0},
                                       {"A", "-", 0.0, 1, 7.0, 8.0, 0.0}};
  const auto rows = aggregate(cells, {"A", "B"}, {0.0, 0.1});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].model, "A");
  EXPECT_EQ(rows[0].mse, 7.0);
  EXPECT_TRUE(std::isnan(rows[1].mse));
  EXPECT_EQ(rows[1].seeds, 0u);
  EXPECT_EQ(rows[3].model, "B");
  EXPECT_EQ(rows[3].seeds, 2u);
  EXPECT_EQ(rows[3].mse, 2.0);
  EXPECT_EQ(rows[3].mae, 3.0);
  EXPECT_EQ(rows[3].saving_kwh, 4.0);
}

TEST(Report, TableCsvText) {
  const std::vector<ReportRow> rows{{"Persistence", 0.0, 1.5, 0.75, 0.0, 1}, {"STUGN-TGAT", 0.2, 1.0, 0.5, 41.25, 1}};
  std::ostringstream acc, en, lng, sum;
  write_accuracy_csv(acc, rows);
  write_energy_csv(en, rows);
  write_long_csv(lng, rows);
  EXPECT_EQ(acc.str(), "model,rate,mse,mae\nPersistence,0.00,1.500000,0.750000\nSTUGN-TGAT,0.20,1.000000,0.500000\n");
  EXPECT_EQ(en.str(), "model,rate,saving_kwh\nPersistence,0.00,0.000000\nSTUGN-TGAT,0.20,41.250000\n");
  EXPECT_EQ(lng.str(),
            "model,rate,metric,value\n"
            "Persistence,0.00,mse,1.500000\nPersistence,0.00,mae,0.750000\nPersistence,0.00,saving_kwh,0.000000\n"
            "STUGN-TGAT,0.20,mse,1.000000\nSTUGN-TGAT,0.20,mae,0.500000\nSTUGN-TGAT,0.20,saving_kwh,41.250000\n");
  write_summary(sum, rows, {0.0, 0.2});
  const std::string text = sum.str();
  EXPECT_NE(text.find("Persistence"), std::string::npos);
  EXPECT_NE(text.find("41.250000"), std::string::npos);
  EXPECT_NE(text.find("NA"), std::string::npos);  // Persistence has no 20% row
}

TEST(Report, SummaryColumnsLineUp) {
  const std::vector<ReportRow> rows{{"Persistence", 0.0, 1.5, 0.75, 0.0, 1}, {"Persistence", 0.1, 1.6, 0.8, 0.0, 1}};
  std::ostringstream out;
  write_summary(out, rows, {0.0, 0.1});
  std::istringstream in(out.str());
  std::vector<std::size_t> widths;
  for (std::string line; std::getline(in, line);)
    if (line.find(" | ") != std::string::npos) widths.push_back(line.size());
  ASSERT_EQ(widths.size(), 4u);
  EXPECT_EQ(widths[0], widths[1]);
  EXPECT_EQ(widths[2], widths[3]);
}
