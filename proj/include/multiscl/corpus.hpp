#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace multiscl {

enum class Label : int { Entailment = 0, Contradiction = 1, Neutral = 2 };
inline constexpr int kNumLabels = 3;

std::string_view label_name(Label l);
std::optional<Label> parse_label(std::string_view s);

using Tokens = std::vector<std::string>;

struct SentencePair {
  Tokens premise;
  Tokens hypothesis;
  Label label = Label::Neutral;

  bool operator==(const SentencePair&) const = default;
};

struct CorpusError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kDefaultMaxSeqLen = 128;

// Lowercase (ASCII), split on Unicode whitespace, strip leading/trailing ASCII
// punctuation from each token, drop tokens left empty.
Tokens tokenize(std::string_view text);
std::string detokenize(const Tokens& tokens);

// One JSON object per line with string fields "premise", "hypothesis",
// "label". Every malformed line is collected; the thrown CorpusError lists
// them all with 1-based line numbers. Sentences longer than max_seq_len
// tokens are truncated.
std::vector<SentencePair> parse_jsonl(std::istream& in, std::size_t max_seq_len = kDefaultMaxSeqLen);
std::vector<SentencePair> load_jsonl(const std::filesystem::path& path,
                                     std::size_t max_seq_len = kDefaultMaxSeqLen);
void write_jsonl(std::ostream& out, const std::vector<SentencePair>& pairs);
void write_jsonl(const std::filesystem::path& path, const std::vector<SentencePair>& pairs);

class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kDel = 2;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kUnkToken = "[UNK]";
  static constexpr std::string_view kDelToken = "[DEL]";

  Vocab();
  explicit Vocab(std::vector<std::string> tokens);  // must start with the reserved three

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<std::size_t> encode(const Tokens& toks) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens with frequency >= min_count, ordered by descending frequency then
// lexicographically, after the reserved ids.
Vocab build_vocab(const std::vector<SentencePair>& pairs, std::size_t min_count = 1);

// ---- synthetic corpus ----

// Templates are whitespace-separated words with slots {subject}, {verb},
// {attr}, {object}. "a"/"an" articles are re-agreed with the word that
// follows after filling.
struct SynthLexicon {
  std::map<std::string, std::string> hypernyms;
  std::map<std::string, std::string> antonyms;  // symmetric after load
  std::vector<std::string> subjects;
  std::vector<std::string> verbs;
  std::vector<std::string> objects;
  std::vector<std::string> templates;

  // Antonym entries that are not verbs.
  std::vector<std::string> attributes() const;
};

inline const std::vector<std::string> kDefaultTemplates = {
    "a {attr} {subject} {verb} the {object}",
    "the {subject} {verb} a {attr} {object}",
};

SynthLexicon parse_lexicon(std::string_view json_text);
SynthLexicon load_lexicon(const std::filesystem::path& path);
// Built-in lexicon shipped for desk-scale runs.
const SynthLexicon& default_lexicon();

struct SynthConfig {
  std::size_t n_per_class = 20;
  std::uint64_t seed = 0;
};

// Entailment: an entity becomes its hypernym. Contradiction: an attribute or
// verb becomes its antonym. Neutral: the object becomes another object.
// Throws CorpusError when the lexicon cannot realize `label` for `tmpl`.
SentencePair synthesize_pair(const SynthLexicon& lex, std::string_view tmpl, Label label,
                             std::mt19937_64& rng);

// Exactly n_per_class pairs of each label, shuffled; deterministic in seed.
std::vector<SentencePair> gen_synthetic(const SynthConfig& cfg, const SynthLexicon& lex);

}  // namespace multiscl
