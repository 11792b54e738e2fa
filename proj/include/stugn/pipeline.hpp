#pragma once

// The five end-user commands. Every command reads its inputs from, and
// writes its outputs under, the configured output directory:
//
//     data/truth.csv                       generate
//     data/corrupted_r<rate>.csv           corrupt
//     data/corruption_log_r<rate>.csv      corrupt
//     runs/<hash>/checkpoints/*.ckpt       train
//     runs/<hash>/epochs/*.epochs.csv      train
//     runs/<hash>/epochs.csv               train
//     runs/<hash>/cells.csv                evaluate
//     report/{table2,table3,long}.csv      report
//     report/summary.txt                   report
//
// <hash> covers the truth file and every setting that influences trained
// weights, so runs with different models or data never share checkpoints.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stugn/run_config.hpp"

namespace stugn::pipeline {

struct CommandOptions {
  std::optional<double> rate;           // restricts to one missing rate
  std::optional<std::uint64_t> seed;    // generate/corrupt: data seed; train/evaluate: one training seed
  std::optional<std::size_t> jobs;
  std::optional<std::string> out;       // overrides output_dir
  std::ostream* progress = nullptr;
};

struct Layout {
  std::filesystem::path root;

  explicit Layout(const config::RunConfig& config);
  /// Needs data/truth.csv.
  std::filesystem::path run_dir() const;
  std::filesystem::path data_dir() const { return root / "data"; }
  std::filesystem::path truth_csv() const { return data_dir() / "truth.csv"; }
  std::filesystem::path corrupted_csv(double rate) const;
  std::filesystem::path corruption_log_csv(double rate) const;
  std::filesystem::path checkpoint_dir() const { return run_dir() / "checkpoints"; }
  std::filesystem::path epochs_dir() const { return run_dir() / "epochs"; }
  std::filesystem::path epochs_csv() const { return run_dir() / "epochs.csv"; }
  std::filesystem::path cells_csv() const { return run_dir() / "cells.csv"; }
  std::filesystem::path report_dir() const { return root / "report"; }

 private:
  std::string training_text_;
  mutable std::optional<std::filesystem::path> run_dir_;
};

/// Applies `--out`, `--jobs`, and the rate/seed restrictions of train and evaluate.
config::RunConfig apply_options(config::RunConfig config, const CommandOptions& options);

/// Each returns the files it wrote.
std::vector<std::filesystem::path> generate(const config::RunConfig& config, const CommandOptions& options);
std::vector<std::filesystem::path> corrupt(const config::RunConfig& config, const CommandOptions& options);
/// Throws RuntimeFailure naming the failed cells after finishing the rest.
std::vector<std::filesystem::path> train(const config::RunConfig& config, const CommandOptions& options);
std::vector<std::filesystem::path> evaluate(const config::RunConfig& config, const CommandOptions& options);
std::vector<std::filesystem::path> report(const config::RunConfig& config, const CommandOptions& options);

}  // namespace stugn::pipeline
