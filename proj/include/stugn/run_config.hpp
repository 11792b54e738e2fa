#pragma once

// Run configuration: flat `key = value` lines grouped under [section]
// headers, `#` comments. Every key has a default; unknown keys are errors.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stugn/corruption.hpp"
#include "stugn/evaluation.hpp"
#include "stugn/models.hpp"
#include "stugn/synthetic.hpp"
#include "stugn/training.hpp"

namespace stugn::config {

struct ModelOverrides {
  std::vector<std::string> names;  // table labels; empty selects all eleven
  std::size_t latent_dim = 64;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t ffn_hidden = 256;
  double dropout = 0.05;
  double stugn_learning_rate = 5e-5;
  double baseline_learning_rate = 1e-5;  // ST-LSTM and ST-Transformer
  double linear_learning_rate = 1e-3;    // TSF-Linear
};

struct RunConfig {
  std::string input_csv;  // empty: synthetic data from [synthetic]
  std::string output_dir = "out";
  synthetic::SyntheticSpec synthetic;
  corruption::BurstModel corruption;  // target_rate unused; rates come from training
  training::TrainConfig training;
  std::size_t jobs = 1;
  ModelOverrides model;
  evaluation::PowerCurve power;

  /// Model configurations selected by [model], in table order.
  std::vector<models::ModelConfig> model_configs() const;
  void validate() const;
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "config");
RunConfig load_run_config(const std::string& path);

/// Canonical text of every setting other than the input data that affects
/// trained weights.
std::string canonical_training_text(const RunConfig& config);
/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace stugn::config
