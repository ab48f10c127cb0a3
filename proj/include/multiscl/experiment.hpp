#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiscl/trainer.hpp"

namespace multiscl {

struct DataSplits {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;
};

struct SplitSizes {
  std::size_t train_per_class = 20;
  std::size_t dev_per_class = 20;
  std::size_t test_per_class = 100;
};

// Three independently seeded synthetic splits.
DataSplits synthetic_splits(const SplitSizes& sizes, std::uint64_t seed, const SynthLexicon& lex);

enum class SweepAxis { Tau, Eta, AlphaBeta };

std::string_view axis_name(SweepAxis a);
std::optional<SweepAxis> parse_axis(std::string_view name);
// Default sweep grids. alpha_beta values are written "alpha:beta".
std::vector<std::string> preset_values(SweepAxis a);
// Throws ConfigError for a malformed value.
TrainConfig apply_sweep_value(TrainConfig base, SweepAxis a, const std::string& value);

struct SeedResult {
  std::uint64_t seed = 0;
  double test_acc = 0.0;
  double best_dev_acc = 0.0;
};

struct SweepRow {
  std::string value;
  std::vector<SeedResult> runs;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};

void summarize(SweepRow& row);

// Trains with model seed base.seed + i for i in [0, seeds). `splits_for(i)`
// supplies the data of run i. `on_run` sees every trained model.
std::vector<SeedResult> run_seeds(const TrainConfig& base, std::size_t seeds,
                                  const std::function<DataSplits(std::size_t)>& splits_for,
                                  const TrainOptions& options = {},
                                  const std::function<void(std::size_t, const TrainedModel&, const DataSplits&)>&
                                      on_run = nullptr);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace multiscl
