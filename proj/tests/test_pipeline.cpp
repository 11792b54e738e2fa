#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "stugn/error.hpp"
#include "stugn/io.hpp"
#include "stugn/pipeline.hpp"

using namespace stugn;
namespace fs = std::filesystem;

namespace {

const char* kSmall =
    "[synthetic]\nstations = 3\ngrid_length = 1200\nseed = 3\n"
    "[corruption]\nseed = 4\nrates = 0.0, 0.2\n"
    "[training]\nseeds = 1\nepochs = 1\nbatch_size = 8\nwindow_stride = 12\neval_stride = 12\n"
    "[model]\nnames = Persistence, TSF-Linear, STUGN-GATv2\nlatent_dim = 8\nlayers = 1\nheads = 2\n"
    "ffn_hidden = 16\n";

config::RunConfig small_config(const fs::path& out) {
  std::istringstream in(kSmall);
  auto c = config::parse_run_config(in);
  c.output_dir = out.string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

void run_all(const config::RunConfig& c) {
  const pipeline::CommandOptions none;
  pipeline::generate(c, none);
  pipeline::corrupt(c, none);
  pipeline::train(c, none);
  pipeline::evaluate(c, none);
  pipeline::report(c, none);
}

}  // namespace

TEST(Pipeline, CorruptAtRateZeroCopiesTruth) {
  const auto dir = fresh_dir("stugn_pipe_zero");
  const auto c = small_config(dir);
  pipeline::generate(c, {});
  pipeline::corrupt(c, {});
  const pipeline::Layout layout(c);
  EXPECT_EQ(slurp(layout.corrupted_csv(0.0)), slurp(layout.truth_csv()));
  EXPECT_NE(slurp(layout.corrupted_csv(0.2)), slurp(layout.truth_csv()));
  fs::remove_all(dir);
}

TEST(Pipeline, TwoRunsAreByteIdentical) {
  const auto a = fresh_dir("stugn_pipe_a"), b = fresh_dir("stugn_pipe_b");
  run_all(small_config(a));
  run_all(small_config(b));
  const pipeline::Layout la(small_config(a)), lb(small_config(b));
  EXPECT_EQ(la.run_dir().filename(), lb.run_dir().filename());
  for (const char* f : {"table2.csv", "table3.csv", "long.csv", "summary.txt"})
    EXPECT_EQ(slurp(la.report_dir() / f), slurp(lb.report_dir() / f)) << f;
  EXPECT_EQ(slurp(la.cells_csv()), slurp(lb.cells_csv()));
  EXPECT_EQ(slurp(la.epochs_csv()), slurp(lb.epochs_csv()));

  // Re-running evaluate and report changes nothing.
  const std::string table2 = slurp(la.report_dir() / "table2.csv"), cells = slurp(la.cells_csv());
  pipeline::evaluate(small_config(a), {});
  pipeline::report(small_config(a), {});
  EXPECT_EQ(slurp(la.cells_csv()), cells);
  EXPECT_EQ(slurp(la.report_dir() / "table2.csv"), table2);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, RestrictedTrainingMergesIntoTheMatrix) {
  const auto dir = fresh_dir("stugn_pipe_rate");
  const auto c = small_config(dir);
  pipeline::generate(c, {});
  pipeline::corrupt(c, {});
  pipeline::CommandOptions one;
  one.rate = 0.2;
  pipeline::train(c, one);
  const pipeline::Layout layout(c);
  EXPECT_THROW(pipeline::evaluate(c, {}), ValidationError);  // rate 0 not trained yet
  one.rate = 0.0;
  pipeline::train(c, one);
  pipeline::evaluate(c, {});
  std::ifstream in(layout.epochs_csv());
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(first.rfind("Persistence,-,0.00,", 0), 0u) << first;
  fs::remove_all(dir);
}

TEST(Pipeline, MissingArtifactsNameTheProducer) {
  const auto dir = fresh_dir("stugn_pipe_missing");
  const auto c = small_config(dir);
  auto message = [&](auto fn) {
    try {
      fn(c, pipeline::CommandOptions{});
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(pipeline::corrupt).find("`generate`"), std::string::npos);
  pipeline::generate(c, {});
  EXPECT_NE(message(pipeline::train).find("`corrupt`"), std::string::npos);
  pipeline::corrupt(c, {});
  EXPECT_NE(message(pipeline::evaluate).find("`train`"), std::string::npos);
  EXPECT_NE(message(pipeline::report).find("`evaluate`"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Pipeline, ReportMatchesGoldenTables) {
  const auto dir = fresh_dir("stugn_pipe_golden");
  auto c = small_config(dir);
  c.model.names = {"Persistence", "TSF-Linear", "STUGN-TGAT"};
  c.training.missing_rates = {0.0, 0.1};
  pipeline::generate(c, {});
  const pipeline::Layout layout(c);
  const fs::path fixtures = STUGN_FIXTURES;
  fs::create_directories(layout.run_dir());
  fs::copy_file(fixtures / "cells.csv", layout.cells_csv());
  pipeline::report(c, {});
  EXPECT_EQ(slurp(layout.report_dir() / "table2.csv"), slurp(fixtures / "table2.csv"));
  EXPECT_EQ(slurp(layout.report_dir() / "table3.csv"), slurp(fixtures / "table3.csv"));
  fs::remove_all(dir);
}

TEST(Pipeline, OptionsValidateRate) {
  pipeline::CommandOptions o;
  o.rate = 1.0;
  EXPECT_THROW(pipeline::apply_options(small_config("x"), o), ValidationError);
}
