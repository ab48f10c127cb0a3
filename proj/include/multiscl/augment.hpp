#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "multiscl/corpus.hpp"

namespace multiscl {

enum class StrategyKind {
  SynonymReplacement,
  Reordering,
  WordInsertion,
  WordDeletion,
  Dropout,
  BackTranslation,
};

inline constexpr double kDefaultEta = 0.1;

struct Strategy {
  StrategyKind kind = StrategyKind::Reordering;
  double eta = kDefaultEta;
};

std::string_view strategy_name(StrategyKind k);
std::optional<StrategyKind> parse_strategy(std::string_view name);
const std::vector<StrategyKind>& all_strategies();

struct AugmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using SynonymLexicon = std::map<std::string, std::vector<std::string>>;

SynonymLexicon parse_synonyms(std::string_view json_text);
SynonymLexicon load_synonyms(const std::filesystem::path& path);
// Covers the words of the built-in synthetic lexicon.
const SynonymLexicon& default_synonyms();

const std::set<std::string, std::less<>>& stopwords();

// n = max(1, round_half_up(eta * l)), capped at l.
std::size_t change_budget(std::size_t l, double eta);

// splitmix64 finalizer over seed + stream * golden-ratio increment. Gives each
// (sample, view, sentence) its own independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

Tokens synonym_replace(const Tokens& tokens, const SynonymLexicon& lex, double eta,
                       std::uint64_t seed);
Tokens reorder(const Tokens& tokens, double eta, std::uint64_t seed);
Tokens word_insert(const Tokens& tokens, const SynonymLexicon& lex, double eta,
                   std::uint64_t seed);
Tokens word_delete(const Tokens& tokens, double eta, std::uint64_t seed);

// Row-major rows x cols grid of 0/1 multipliers over a token embedding matrix.
struct DropoutMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::size_t zeros() const;
  bool operator==(const DropoutMask&) const = default;
};

// Exactly change_budget(l * k, eta) entries are zero.
DropoutMask dropout_mask(std::size_t k, std::size_t l, double eta, std::uint64_t seed);

// Pipes the sentence as one line to `/bin/sh -c command` and retokenizes the
// first line of output. An empty command is the identity (with a one-time
// warning). Nonzero exit throws AugmentError carrying the command's stderr.
Tokens back_translate(const Tokens& tokens, const std::string& command);

struct AugmentContext {
  const SynonymLexicon* synonyms = &default_synonyms();
  std::string back_translate_cmd;
  std::size_t embed_dim = 64;  // width of the dropout mask
};

struct AugmentedView {
  SentencePair pair;
  StrategyKind strategy = StrategyKind::Reordering;
  // Set only for the Dropout strategy.
  std::optional<DropoutMask> premise_mask;
  std::optional<DropoutMask> hypothesis_mask;
};

// Premise and hypothesis are augmented independently with seeds
// derive_seed(seed, 1) and derive_seed(seed, 2). The label is copied.
AugmentedView augment_pair(const SentencePair& pair, const Strategy& strategy,
                           const AugmentContext& ctx, std::uint64_t seed);

}  // namespace multiscl
