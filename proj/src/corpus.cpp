#include "multiscl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace multiscl {

using nlohmann::json;

std::string_view label_name(Label l) {
  switch (l) {
    case Label::Entailment: return "entailment";
    case Label::Contradiction: return "contradiction";
    case Label::Neutral: return "neutral";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view s) {
  if (s == "entailment") return Label::Entailment;
  if (s == "contradiction") return Label::Contradiction;
  if (s == "neutral") return Label::Neutral;
  return std::nullopt;
}

// ---- tokenizer ----

namespace {

// Decodes one UTF-8 code point at s[i]; advances i. Invalid bytes decode as
// themselves so they never count as whitespace.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1) >= 0) {
    char32_t cp = ((b0 & 0x1F) << 6) | cont(1);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) >= 0 && cont(2) >= 0) {
    char32_t cp = ((b0 & 0x0F) << 12) | (cont(1) << 6) | cont(2);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) >= 0 && cont(2) >= 0 && cont(3) >= 0) {
    char32_t cp = ((b0 & 0x07) << 18) | (cont(1) << 12) | (cont(2) << 6) | cont(3);
    i += 4;
    return cp;
  }
  ++i;
  return b0;
}

// Unicode White_Space property.
bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_ascii_punct(char c) { return c >= 0 && std::ispunct(static_cast<unsigned char>(c)); }

void push_token(std::string_view raw, Tokens& out) {
  std::size_t b = 0, e = raw.size();
  while (b < e && is_ascii_punct(raw[b])) ++b;
  while (e > b && is_ascii_punct(raw[e - 1])) --e;
  if (b == e) return;
  std::string tok(raw.substr(b, e - b));
  for (char& c : tok) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  out.push_back(std::move(tok));
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0, start = 0;
  while (i < text.size()) {
    const std::size_t here = i;
    const char32_t cp = next_code_point(text, i);
    if (is_unicode_space(cp)) {
      if (here > start) push_token(text.substr(start, here - start), out);
      start = i;
    }
  }
  if (start < text.size()) push_token(text.substr(start), out);
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

// ---- JSONL ----

std::vector<SentencePair> parse_jsonl(std::istream& in, std::size_t max_seq_len) {
  std::vector<SentencePair> pairs;
  std::vector<std::string> problems;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      problems.push_back("line " + std::to_string(lineno) + ": " + why);
    };
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      fail("not a JSON object");
      continue;
    }
    bool ok = true;
    for (const char* key : {"premise", "hypothesis", "label"}) {
      if (!obj.contains(key) || !obj[key].is_string()) {
        fail(std::string("missing string field \"") + key + "\"");
        ok = false;
      }
    }
    if (!ok) continue;
    const auto label_str = obj["label"].get<std::string>();
    auto label = parse_label(label_str);
    if (!label) {
      fail("unknown label \"" + label_str + "\"");
      continue;
    }
    SentencePair p{tokenize(obj["premise"].get<std::string>()),
                   tokenize(obj["hypothesis"].get<std::string>()), *label};
    if (p.premise.empty()) {
      fail("premise is empty after tokenization");
      continue;
    }
    if (p.hypothesis.empty()) {
      fail("hypothesis is empty after tokenization");
      continue;
    }
    if (p.premise.size() > max_seq_len) p.premise.resize(max_seq_len);
    if (p.hypothesis.size() > max_seq_len) p.hypothesis.resize(max_seq_len);
    pairs.push_back(std::move(p));
  }
  if (!problems.empty()) {
    std::string msg = "malformed corpus (" + std::to_string(problems.size()) + " bad line(s)):";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CorpusError(msg);
  }
  return pairs;
}

std::vector<SentencePair> load_jsonl(const std::filesystem::path& path, std::size_t max_seq_len) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  try {
    return parse_jsonl(in, max_seq_len);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

void write_jsonl(std::ostream& out, const std::vector<SentencePair>& pairs) {
  for (const auto& p : pairs) {
    json obj = {{"premise", detokenize(p.premise)},
                {"hypothesis", detokenize(p.hypothesis)},
                {"label", std::string(label_name(p.label))}};
    out << obj.dump() << '\n';
  }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<SentencePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file " + path.string());
  write_jsonl(out, pairs);
}

// ---- vocab ----

Vocab::Vocab()
    : Vocab(std::vector<std::string>{std::string(kPadToken), std::string(kUnkToken),
                                     std::string(kDelToken)}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken ||
      tokens_[kDel] != kDelToken) {
    throw CorpusError("vocabulary must begin with [PAD], [UNK], [DEL]");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw CorpusError("duplicate vocabulary entry \"" + tokens_[i] + "\"");
    }
  }
}

std::size_t Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::vector<std::size_t> Vocab::encode(const Tokens& toks) const {
  std::vector<std::size_t> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(id(t));
  return ids;
}

Vocab build_vocab(const std::vector<SentencePair>& pairs, std::size_t min_count) {
  if (min_count < 1) throw CorpusError("min_count must be >= 1");
  if (pairs.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (const auto& t : p.premise) ++counts[t];
    for (const auto& t : p.hypothesis) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, c] : counts) {
    if (c >= min_count && tok != Vocab::kPadToken && tok != Vocab::kUnkToken &&
        tok != Vocab::kDelToken) {
      kept.emplace_back(tok, c);
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens{std::string(Vocab::kPadToken), std::string(Vocab::kUnkToken),
                                  std::string(Vocab::kDelToken)};
  for (auto& [tok, c] : kept) tokens.push_back(tok);
  return Vocab(std::move(tokens));
}

// ---- synthetic corpus ----

std::vector<std::string> SynthLexicon::attributes() const {
  std::set<std::string> verb_set(verbs.begin(), verbs.end());
  std::vector<std::string> out;
  for (const auto& [a, b] : antonyms) {
    if (!verb_set.count(a)) out.push_back(a);
  }
  return out;
}

namespace {

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_array()) throw CorpusError(std::string("lexicon: \"") + key + "\" must be an array");
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw CorpusError(std::string("lexicon: \"") + key + "\" must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::map<std::string, std::string> string_map(const json& j, const char* key) {
  std::map<std::string, std::string> out;
  if (!j.contains(key)) return out;
  if (!j[key].is_object()) throw CorpusError(std::string("lexicon: \"") + key + "\" must be an object");
  for (const auto& [k, v] : j[key].items()) {
    if (!v.is_string()) throw CorpusError(std::string("lexicon: \"") + key + "\" values must be strings");
    out.emplace(k, v.get<std::string>());
  }
  return out;
}

constexpr std::string_view kDefaultLexiconJson = R"({
  "hypernyms": {
    "dog": "animal", "cat": "animal", "horse": "animal", "bird": "animal",
    "man": "person", "woman": "person", "boy": "child", "girl": "child",
    "doctor": "worker", "farmer": "worker", "singer": "artist", "painter": "artist"
  },
  "antonyms": {
    "big": "small", "fast": "slow", "happy": "sad", "old": "young",
    "tall": "short", "hot": "cold", "loud": "quiet", "clean": "dirty",
    "likes": "hates", "opens": "closes", "buys": "sells", "pushes": "pulls",
    "finds": "loses", "catches": "drops"
  },
  "subjects": ["dog", "cat", "horse", "bird", "man", "woman", "boy", "girl",
               "doctor", "farmer", "singer", "painter"],
  "verbs": ["likes", "hates", "opens", "closes", "buys", "sells", "pushes",
            "pulls", "finds", "loses", "catches", "drops"],
  "objects": ["ball", "box", "door", "book", "apple", "bottle", "chair", "hat",
              "kite", "bag", "lamp", "table"]
})";

bool starts_with_vowel(const std::string& w) {
  return !w.empty() && std::string_view("aeiou").find(w[0]) != std::string_view::npos;
}

void agree_articles(Tokens& toks) {
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
    if (toks[i] == "a" || toks[i] == "an") toks[i] = starts_with_vowel(toks[i + 1]) ? "an" : "a";
  }
}

template <typename T>
const T& pick(const std::vector<T>& pool, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

bool has_slot(std::string_view tmpl, std::string_view slot) {
  return tmpl.find(slot) != std::string_view::npos;
}

struct LabelSupport {
  std::vector<std::string> hyper_subjects;
  std::vector<std::string> anto_verbs;
  std::vector<std::string> attrs;
};

LabelSupport support_of(const SynthLexicon& lex) {
  LabelSupport s;
  for (const auto& subj : lex.subjects)
    if (lex.hypernyms.count(subj)) s.hyper_subjects.push_back(subj);
  for (const auto& v : lex.verbs)
    if (lex.antonyms.count(v)) s.anto_verbs.push_back(v);
  s.attrs = lex.attributes();
  return s;
}

bool template_supports(const SynthLexicon& lex, const LabelSupport& s, std::string_view tmpl,
                       Label label) {
  switch (label) {
    case Label::Entailment: return has_slot(tmpl, "{subject}") && !s.hyper_subjects.empty();
    case Label::Contradiction:
      return (has_slot(tmpl, "{attr}") && !s.attrs.empty()) ||
             (has_slot(tmpl, "{verb}") && !s.anto_verbs.empty());
    case Label::Neutral: return has_slot(tmpl, "{object}") && lex.objects.size() >= 2;
  }
  return false;
}

}  // namespace

SynthLexicon parse_lexicon(std::string_view json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw CorpusError("lexicon is not a JSON object");
  for (const auto& [k, v] : j.items()) {
    static const std::set<std::string> known{"hypernyms", "antonyms", "subjects", "verbs", "objects",
                                             "templates"};
    if (!known.count(k)) throw CorpusError("lexicon: unknown key \"" + k + "\"");
  }
  SynthLexicon lex;
  lex.hypernyms = string_map(j, "hypernyms");
  for (const auto& [a, b] : string_map(j, "antonyms")) {
    lex.antonyms[a] = b;
    lex.antonyms.emplace(b, a);
  }
  lex.subjects = string_list(j, "subjects");
  lex.verbs = string_list(j, "verbs");
  lex.objects = string_list(j, "objects");
  lex.templates = string_list(j, "templates");
  if (lex.templates.empty()) lex.templates = kDefaultTemplates;
  for (const auto& [a, b] : lex.hypernyms)
    if (a == b) throw CorpusError("lexicon: \"" + a + "\" is its own hypernym");
  for (const auto& [a, b] : lex.antonyms)
    if (a == b) throw CorpusError("lexicon: \"" + a + "\" is its own antonym");
  return lex;
}

SynthLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open lexicon file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_lexicon(ss.str());
}

const SynthLexicon& default_lexicon() {
  static const SynthLexicon lex = parse_lexicon(kDefaultLexiconJson);
  return lex;
}

SentencePair synthesize_pair(const SynthLexicon& lex, std::string_view tmpl, Label label,
                             std::mt19937_64& rng) {
  const LabelSupport s = support_of(lex);
  if (!template_supports(lex, s, tmpl, label)) {
    throw CorpusError("lexicon cannot realize a " + std::string(label_name(label)) +
                      " pair for template \"" + std::string(tmpl) + "\"");
  }
  auto need = [&](const std::vector<std::string>& pool, const char* slot) {
    if (pool.empty()) throw CorpusError(std::string("lexicon has no fillers for ") + slot);
  };

  std::string subject, verb, attr, object;
  std::string slot_to_change;
  if (label == Label::Entailment) {
    subject = pick(s.hyper_subjects, rng);
    slot_to_change = "{subject}";
  } else if (label == Label::Contradiction) {
    std::vector<std::string> options;
    if (has_slot(tmpl, "{attr}") && !s.attrs.empty()) options.push_back("{attr}");
    if (has_slot(tmpl, "{verb}") && !s.anto_verbs.empty()) options.push_back("{verb}");
    slot_to_change = pick(options, rng);
    if (slot_to_change == "{attr}") attr = pick(s.attrs, rng);
    if (slot_to_change == "{verb}") verb = pick(s.anto_verbs, rng);
  } else {
    slot_to_change = "{object}";
  }
  if (subject.empty() && has_slot(tmpl, "{subject}")) {
    need(lex.subjects, "{subject}");
    subject = pick(lex.subjects, rng);
  }
  if (verb.empty() && has_slot(tmpl, "{verb}")) {
    need(lex.verbs, "{verb}");
    verb = pick(lex.verbs, rng);
  }
  if (attr.empty() && has_slot(tmpl, "{attr}")) {
    need(s.attrs, "{attr}");
    attr = pick(s.attrs, rng);
  }
  if (has_slot(tmpl, "{object}")) {
    need(lex.objects, "{object}");
    object = pick(lex.objects, rng);
  }

  std::string new_word;
  if (slot_to_change == "{subject}") {
    new_word = lex.hypernyms.at(subject);
  } else if (slot_to_change == "{attr}") {
    new_word = lex.antonyms.at(attr);
  } else if (slot_to_change == "{verb}") {
    new_word = lex.antonyms.at(verb);
  } else {
    std::vector<std::string> others;
    for (const auto& o : lex.objects)
      if (o != object) others.push_back(o);
    new_word = pick(others, rng);
  }

  auto fill = [&](bool hyp) {
    Tokens out;
    std::istringstream ws{std::string(tmpl)};
    std::string w;
    while (ws >> w) {
      std::string v = w;
      if (w == "{subject}") v = subject;
      else if (w == "{verb}") v = verb;
      else if (w == "{attr}") v = attr;
      else if (w == "{object}") v = object;
      if (hyp && w == slot_to_change) v = new_word;
      out.push_back(v);
    }
    agree_articles(out);
    return out;
  };
  return SentencePair{fill(false), fill(true), label};
}

std::vector<SentencePair> gen_synthetic(const SynthConfig& cfg, const SynthLexicon& lex) {
  std::mt19937_64 rng(cfg.seed);
  const LabelSupport s = support_of(lex);
  std::vector<SentencePair> out;
  out.reserve(cfg.n_per_class * kNumLabels);
  for (int li = 0; li < kNumLabels; ++li) {
    const Label label = static_cast<Label>(li);
    std::vector<std::string> usable;
    for (const auto& t : lex.templates)
      if (template_supports(lex, s, t, label)) usable.push_back(t);
    if (usable.empty() && cfg.n_per_class > 0) {
      throw CorpusError("lexicon has no template able to produce " + std::string(label_name(label)) +
                        " pairs");
    }
    for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
      out.push_back(synthesize_pair(lex, pick(usable, rng), label, rng));
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace multiscl
