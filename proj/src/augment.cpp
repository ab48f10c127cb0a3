#include "multiscl/augment.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "multiscl/log.hpp"

namespace multiscl {

using nlohmann::json;

std::string_view strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::SynonymReplacement: return "synonym_replacement";
    case StrategyKind::Reordering: return "reordering";
    case StrategyKind::WordInsertion: return "word_insertion";
    case StrategyKind::WordDeletion: return "word_deletion";
    case StrategyKind::Dropout: return "dropout";
    case StrategyKind::BackTranslation: return "back_translation";
  }
  return "?";
}

const std::vector<StrategyKind>& all_strategies() {
  static const std::vector<StrategyKind> all{
      StrategyKind::SynonymReplacement, StrategyKind::Reordering, StrategyKind::WordInsertion,
      StrategyKind::WordDeletion,       StrategyKind::Dropout,    StrategyKind::BackTranslation,
  };
  return all;
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
  for (auto k : all_strategies())
    if (strategy_name(k) == name) return k;
  return std::nullopt;
}

// ---- lexicons ----

SynonymLexicon parse_synonyms(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw AugmentError("synonym lexicon is not a JSON object");
  SynonymLexicon lex;
  for (const auto& [tok, syns] : j.items()) {
    if (!syns.is_array()) throw AugmentError("synonyms of \"" + tok + "\" must be an array");
    auto& out = lex[tok];
    for (const auto& s : syns) {
      if (!s.is_string()) throw AugmentError("synonyms of \"" + tok + "\" must be strings");
      auto v = s.get<std::string>();
      if (v != tok) out.push_back(std::move(v));
    }
    if (out.empty()) lex.erase(tok);
  }
  return lex;
}

SynonymLexicon load_synonyms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AugmentError("cannot open synonym lexicon " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synonyms(ss.str());
}

const SynonymLexicon& default_synonyms() {
  static const SynonymLexicon lex = parse_synonyms(R"({
    "dog": ["hound", "pup"], "cat": ["kitty"], "horse": ["pony"], "bird": ["sparrow"],
    "man": ["gentleman", "guy"], "woman": ["lady"], "boy": ["lad"], "girl": ["lass"],
    "doctor": ["physician"], "singer": ["vocalist"], "painter": ["artist"],
    "big": ["large", "huge"], "small": ["little", "tiny"], "fast": ["quick", "rapid"],
    "slow": ["sluggish"], "happy": ["glad", "cheerful"], "sad": ["unhappy"],
    "old": ["elderly"], "young": ["youthful"], "tall": ["high"], "hot": ["warm"],
    "cold": ["chilly"], "loud": ["noisy"], "quiet": ["silent"], "clean": ["tidy"],
    "dirty": ["messy"], "likes": ["enjoys"], "hates": ["detests"], "buys": ["purchases"],
    "finds": ["discovers"], "catches": ["grabs"], "drops": ["releases"],
    "ball": ["sphere"], "box": ["crate"], "book": ["novel"], "bag": ["sack"],
    "hat": ["cap"], "lamp": ["light"], "table": ["desk"], "chair": ["seat"]
  })");
  return lex;
}

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words{
      "a",     "an",   "the",   "and",  "or",   "but",  "if",    "of",   "at",    "by",
      "for",   "with", "about", "to",   "from", "in",   "on",    "off",  "over",  "under",
      "is",    "are",  "was",   "were", "be",   "been", "being", "am",   "do",    "does",
      "did",   "have", "has",   "had",  "i",    "you",  "he",    "she",  "it",    "we",
      "they",  "me",   "him",   "her",  "them", "my",   "your",  "his",  "its",   "our",
      "their", "this", "that",  "these", "those", "not", "no",   "so",   "than",  "too",
      "very",  "can",  "will",  "just",
  };
  return words;
}

// ---- budgets and seeds ----

std::size_t change_budget(std::size_t l, double eta) {
  const double raw = std::floor(eta * static_cast<double>(l) + 0.5);
  const auto n = static_cast<std::size_t>(std::max(1.0, raw));
  return std::min(n, l);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// k distinct indices from `pool`, uniformly.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k,
                                                    std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[uniform(rng, i, pool.size() - 1)]);
  pool.resize(k);
  return pool;
}

bool has_synonyms(const SynonymLexicon& lex, const std::string& tok) {
  if (stopwords().count(tok)) return false;
  auto it = lex.find(tok);
  return it != lex.end() && !it->second.empty();
}

}  // namespace

Tokens synonym_replace(const Tokens& tokens, const SynonymLexicon& lex, double eta,
                       std::uint64_t seed) {
  if (tokens.empty()) return tokens;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (has_synonyms(lex, tokens[i])) candidates.push_back(i);
  Tokens out = tokens;
  for (std::size_t pos : sample_without_replacement(candidates, change_budget(tokens.size(), eta), rng)) {
    const auto& syns = lex.at(tokens[pos]);
    out[pos] = syns[uniform(rng, 0, syns.size() - 1)];
  }
  return out;
}

Tokens reorder(const Tokens& tokens, double eta, std::uint64_t seed) {
  const std::size_t l = tokens.size();
  if (l < 2) return tokens;
  std::mt19937_64 rng(seed);
  const std::size_t n = change_budget(l, eta);
  const std::size_t max_span = std::max<std::size_t>(1, l / 4);
  std::vector<bool> used(l, false);
  Tokens out = tokens;

  auto free_span = [&](std::size_t start, std::size_t len) {
    for (std::size_t i = start; i < start + len; ++i)
      if (used[i]) return false;
    return true;
  };

  for (std::size_t round = 0; round < n; ++round) {
    bool swapped = false;
    // Shrink the drawn span length until two disjoint free spans fit.
    for (std::size_t len = uniform(rng, 1, max_span); len >= 1 && !swapped; --len) {
      std::vector<std::pair<std::size_t, std::size_t>> options;
      for (std::size_t a = 0; a + 2 * len <= l; ++a) {
        if (!free_span(a, len)) continue;
        for (std::size_t b = a + len; b + len <= l; ++b)
          if (free_span(b, len)) options.emplace_back(a, b);
      }
      if (options.empty()) continue;
      auto [a, b] = options[uniform(rng, 0, options.size() - 1)];
      std::swap_ranges(out.begin() + static_cast<std::ptrdiff_t>(a),
                       out.begin() + static_cast<std::ptrdiff_t>(a + len),
                       out.begin() + static_cast<std::ptrdiff_t>(b));
      for (std::size_t i = 0; i < len; ++i) used[a + i] = used[b + i] = true;
      swapped = true;
    }
    if (!swapped) break;
  }
  return out;
}

Tokens word_insert(const Tokens& tokens, const SynonymLexicon& lex, double eta,
                   std::uint64_t seed) {
  if (tokens.empty()) return tokens;
  std::mt19937_64 rng(seed);
  Tokens out = tokens;
  const std::size_t n = change_budget(tokens.size(), eta);
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (has_synonyms(lex, out[i])) candidates.push_back(i);
    if (candidates.empty()) break;
    const auto& syns = lex.at(out[candidates[uniform(rng, 0, candidates.size() - 1)]]);
    std::string word = syns[uniform(rng, 0, syns.size() - 1)];
    const std::size_t at = uniform(rng, 0, out.size());
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), std::move(word));
  }
  return out;
}

Tokens word_delete(const Tokens& tokens, double eta, std::uint64_t seed) {
  if (tokens.empty()) return tokens;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] != Vocab::kDelToken) candidates.push_back(i);
  Tokens out = tokens;
  for (std::size_t pos : sample_without_replacement(candidates, change_budget(tokens.size(), eta), rng)) {
    out[pos] = std::string(Vocab::kDelToken);
  }
  return out;
}

std::size_t DropoutMask::zeros() const {
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 0.0));
}

DropoutMask dropout_mask(std::size_t k, std::size_t l, double eta, std::uint64_t seed) {
  const std::size_t total = k * l;
  if (total == 0) throw AugmentError("dropout mask needs a non-empty grid");
  std::mt19937_64 rng(seed);
  DropoutMask m{l, k, std::vector<double>(total, 1.0)};
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t idx : sample_without_replacement(std::move(all), change_budget(total, eta), rng)) {
    m.values[idx] = 0.0;
  }
  return m;
}

// ---- back translation ----

namespace {

struct Fd {
  int fd = -1;
  ~Fd() {
    if (fd >= 0) ::close(fd);
  }
  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
};

struct CommandResult {
  int status = 0;
  std::string out;
  std::string err;
};

CommandResult run_command(const std::string& command, const std::string& input) {
  char tmpl[] = "/tmp/multiscl_bt_XXXXXX";
  Fd in{::mkstemp(tmpl)};
  if (in.fd < 0) throw AugmentError("back translation: cannot create temp file");
  ::unlink(tmpl);
  if (::write(in.fd, input.data(), input.size()) != static_cast<ssize_t>(input.size()) ||
      ::lseek(in.fd, 0, SEEK_SET) != 0) {
    throw AugmentError("back translation: cannot stage input");
  }
  int out_pipe[2], err_pipe[2];
  if (::pipe(out_pipe) != 0) throw AugmentError("back translation: pipe failed");
  if (::pipe(err_pipe) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw AugmentError("back translation: pipe failed");
  }
  Fd out_r{out_pipe[0]}, out_w{out_pipe[1]}, err_r{err_pipe[0]}, err_w{err_pipe[1]};

  const pid_t pid = ::fork();
  if (pid < 0) throw AugmentError("back translation: fork failed");
  if (pid == 0) {
    ::dup2(in.fd, 0);
    ::dup2(out_w.fd, 1);
    ::dup2(err_w.fd, 2);
    ::close(out_r.fd);
    ::close(err_r.fd);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  out_w.reset();
  err_w.reset();

  CommandResult res;
  pollfd fds[2] = {{out_r.fd, POLLIN, 0}, {err_r.fd, POLLIN, 0}};
  std::string* sinks[2] = {&res.out, &res.err};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    if (::poll(fds, 2, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t r = ::read(fds[i].fd, buf, sizeof buf);
      if (r > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(r));
      } else {
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  int wstatus = 0;
  while (::waitpid(pid, &wstatus, 0) < 0 && errno == EINTR) {
  }
  res.status = WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : 128 + WTERMSIG(wstatus);
  return res;
}

}  // namespace

Tokens back_translate(const Tokens& tokens, const std::string& command) {
  if (command.empty()) {
    logging::warn_once("back_translate_null",
                   "back translation requested without back_translate_cmd; views are unchanged");
    return tokens;
  }
  auto res = run_command(command, detokenize(tokens) + "\n");
  if (res.status != 0) {
    throw AugmentError("back translation command exited with status " + std::to_string(res.status) +
                       ": " + res.err);
  }
  const std::string first = res.out.substr(0, res.out.find('\n'));
  Tokens out = tokenize(first);
  if (out.empty()) throw AugmentError("back translation command produced an empty sentence");
  return out;
}

// ---- pair augmentation ----

AugmentedView augment_pair(const SentencePair& pair, const Strategy& strategy,
                           const AugmentContext& ctx, std::uint64_t seed) {
  const std::uint64_t sp = derive_seed(seed, 1);
  const std::uint64_t sh = derive_seed(seed, 2);
  const double eta = strategy.eta;
  if (!(eta > 0.0 && eta <= 1.0)) throw AugmentError("eta must lie in (0, 1]");
  AugmentedView v{pair, strategy.kind, std::nullopt, std::nullopt};
  switch (strategy.kind) {
    case StrategyKind::SynonymReplacement:
      v.pair.premise = synonym_replace(pair.premise, *ctx.synonyms, eta, sp);
      v.pair.hypothesis = synonym_replace(pair.hypothesis, *ctx.synonyms, eta, sh);
      break;
    case StrategyKind::Reordering:
      v.pair.premise = reorder(pair.premise, eta, sp);
      v.pair.hypothesis = reorder(pair.hypothesis, eta, sh);
      break;
    case StrategyKind::WordInsertion:
      v.pair.premise = word_insert(pair.premise, *ctx.synonyms, eta, sp);
      v.pair.hypothesis = word_insert(pair.hypothesis, *ctx.synonyms, eta, sh);
      break;
    case StrategyKind::WordDeletion:
      v.pair.premise = word_delete(pair.premise, eta, sp);
      v.pair.hypothesis = word_delete(pair.hypothesis, eta, sh);
      break;
    case StrategyKind::Dropout:
      v.premise_mask = dropout_mask(ctx.embed_dim, pair.premise.size(), eta, sp);
      v.hypothesis_mask = dropout_mask(ctx.embed_dim, pair.hypothesis.size(), eta, sh);
      break;
    case StrategyKind::BackTranslation:
      v.pair.premise = back_translate(pair.premise, ctx.back_translate_cmd);
      v.pair.hypothesis = back_translate(pair.hypothesis, ctx.back_translate_cmd);
      break;
  }
  v.pair.label = pair.label;
  return v;
}

}  // namespace multiscl
