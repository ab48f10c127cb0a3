#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "multiscl/augment.hpp"
#include "multiscl/corpus.hpp"
#include "multiscl/model.hpp"

namespace multiscl {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 5e-5;
  double weight_decay = 1e-5;
  double tau = kDefaultTau;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  double eta = kDefaultEta;
  std::pair<StrategyKind, StrategyKind> strategies{StrategyKind::Reordering, StrategyKind::Dropout};
  std::uint64_t seed = 0;
  std::size_t k = 64;
  std::size_t d = 64;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  std::size_t min_count = 1;
  std::string back_translate_cmd;

  // Throws ConfigError on a violated invariant.
  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& c);
// Keys absent from j keep the values in `base`. Unknown keys are an error.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

// Decoupled weight decay p -= lr*wd*p, then a bias-corrected Adam update.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr, double weight_decay);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double ce = 0.0;
  double scl_sent = 0.0;
  double scl_pair = 0.0;
  double total = 0.0;
  std::optional<double> dev_acc;
};

std::string metrics_line(const MetricsRecord& r);

struct TrainedModel {
  TrainConfig config;
  Vocab vocab;
  Model model;
  std::vector<MetricsRecord> metrics;
  double best_dev_acc = 0.0;
  std::size_t best_epoch = 0;
};

struct TrainOptions {
  std::ostream* metrics_out = nullptr;  // one JSON line per batch
  const SynonymLexicon* synonyms = &default_synonyms();
};

// Consecutive chunks of batch_size; a trailing chunk of one sample joins the
// previous chunk.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size);

// Returns the parameters of the epoch with the best dev accuracy (the first
// such epoch on ties); with no dev data, the final parameters.
TrainedModel train(const TrainConfig& config, std::span<const SentencePair> train_pairs,
                   std::span<const SentencePair> dev_pairs, const TrainOptions& options = {});

double evaluate(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs);

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path);
void save_checkpoint(const TrainedModel& m, std::ostream& out);
TrainedModel load_checkpoint(const std::filesystem::path& path);
TrainedModel load_checkpoint(std::istream& in);

inline constexpr int kCheckpointVersion = 1;

void export_embeddings(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs,
                       std::ostream& out);
void export_embeddings(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs,
                       const std::filesystem::path& path);

}  // namespace multiscl
