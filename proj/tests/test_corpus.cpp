#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "multiscl/corpus.hpp"

using namespace multiscl;

TEST_CASE("tokenize") {
  CHECK(tokenize("A  B") == Tokens{"a", "b"});
  CHECK(tokenize("Two men on bicycles competing in a race.") ==
        Tokens{"two", "men", "on", "bicycles", "competing", "in", "a", "race"});
  CHECK(tokenize("  \"Hello,\" she said... ") == Tokens{"hello", "she", "said"});
  CHECK(tokenize("don't stop") == Tokens{"don't", "stop"});
  // U+00A0 and U+3000 are whitespace.
  CHECK(tokenize("x\xC2\xA0y\xE3\x80\x80z") == Tokens{"x", "y", "z"});
  CHECK(tokenize("caf\xC3\xA9!") == Tokens{"caf\xC3\xA9"});
  CHECK(tokenize("... !!") == Tokens{});
}

TEST_CASE("parse_jsonl maps the documented example") {
  std::istringstream in(
      R"({"premise":"Two men on bicycles competing in a race.","hypothesis":"People are riding bikes.","label":"entailment"})"
      "\n");
  auto pairs = parse_jsonl(in);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].label == Label::Entailment);
  CHECK(static_cast<int>(pairs[0].label) == 0);
  CHECK(pairs[0].hypothesis == Tokens{"people", "are", "riding", "bikes"});
}

TEST_CASE("parse_jsonl reports every bad line with its number") {
  std::istringstream in(
      R"({"premise":"a","hypothesis":"b","label":"neutral"})"
      "\n"
      R"({"premise":"a","hypothesis":"b","label":"maybe"})"
      "\n"
      "not json\n"
      "\n"
      R"({"premise":"...","hypothesis":"b","label":"neutral"})"
      "\n"
      R"({"premise":"a","label":"neutral"})"
      "\n");
  try {
    parse_jsonl(in);
    FAIL("expected CorpusError");
  } catch (const CorpusError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2: unknown label \"maybe\"") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("line 5: premise is empty") != std::string::npos);
    CHECK(msg.find("line 6: missing string field \"hypothesis\"") != std::string::npos);
    CHECK(msg.find("line 1") == std::string::npos);
  }
}

TEST_CASE("parse_jsonl truncates to max_seq_len") {
  std::istringstream in(R"({"premise":"a b c d e","hypothesis":"b","label":"neutral"})");
  auto pairs = parse_jsonl(in, 3);
  CHECK(pairs[0].premise == Tokens{"a", "b", "c"});
}

TEST_CASE("write_jsonl then load_jsonl is the identity on tokens and labels") {
  auto pairs = gen_synthetic({30, 5}, default_lexicon());
  pairs.push_back({tokenize("Hello, World!"), tokenize("caf\xC3\xA9 \"quoted\""), Label::Neutral});
  const auto path = std::filesystem::temp_directory_path() / "multiscl_roundtrip.jsonl";
  write_jsonl(path, pairs);
  CHECK(load_jsonl(path) == pairs);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_jsonl("/nonexistent/x.jsonl"), CorpusError);
}

TEST_CASE("build_vocab") {
  std::vector<SentencePair> one{{tokenize("a a b"), tokenize("a"), Label::Neutral}};
  auto v2 = build_vocab({{tokenize("a a b"), tokenize("c"), Label::Neutral}}, 2);
  CHECK(v2.size() == 4);
  CHECK(v2.id("a") == 3);
  CHECK(v2.id("b") == Vocab::kUnk);

  auto v = build_vocab(one, 1);
  CHECK(v.token(0) == "[PAD]");
  CHECK(v.token(1) == "[UNK]");
  CHECK(v.token(2) == "[DEL]");
  CHECK(v.id("[DEL]") == Vocab::kDel);

  auto tie = build_vocab({{tokenize("zeta alpha"), tokenize("mid"), Label::Neutral}}, 1);
  CHECK(tie.id("alpha") < tie.id("mid"));
  CHECK(tie.id("mid") < tie.id("zeta"));

  auto freq = build_vocab({{tokenize("z z y"), tokenize("y y"), Label::Neutral}}, 1);
  CHECK(freq.id("y") == 3);
  CHECK(freq.id("z") == 4);

  CHECK_THROWS_AS(build_vocab({}, 1), CorpusError);
  CHECK_THROWS_AS(build_vocab(one, 0), CorpusError);
  CHECK(v.encode(Tokens{"a", "nope", "[DEL]"}) == std::vector<std::size_t>{v.id("a"), 1, 2});
}

TEST_CASE("vocab ids are a bijection over non-reserved tokens") {
  auto pairs = gen_synthetic({40, 9}, default_lexicon());
  auto v = build_vocab(pairs, 1);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(seen.insert(v.token(i)).second);
    CHECK(v.id(v.token(i)) == i);
  }
}

TEST_CASE("synthesize_pair applies the lexical rules") {
  SynthLexicon lex = parse_lexicon(R"({
    "hypernyms": {"dog": "animal"},
    "antonyms": {"fast": "slow"},
    "subjects": ["dog", "car"],
    "verbs": ["runs"],
    "objects": ["ball", "kite"]
  })");
  std::mt19937_64 rng(1);

  SynthLexicon dog = lex;
  dog.subjects = {"dog"};
  auto e = synthesize_pair(dog, "a {subject} {verb}", Label::Entailment, rng);
  CHECK(e.premise == Tokens{"a", "dog", "runs"});
  CHECK(e.hypothesis == Tokens{"an", "animal", "runs"});
  CHECK(e.label == Label::Entailment);

  SynthLexicon car = lex;
  car.subjects = {"car"};
  auto c = synthesize_pair(car, "a {subject} is {attr}", Label::Contradiction, rng);
  const bool fast_to_slow = c.premise == Tokens{"a", "car", "is", "fast"} &&
                            c.hypothesis == Tokens{"a", "car", "is", "slow"};
  const bool slow_to_fast = c.premise == Tokens{"a", "car", "is", "slow"} &&
                            c.hypothesis == Tokens{"a", "car", "is", "fast"};
  CHECK((fast_to_slow || slow_to_fast));

  auto n = synthesize_pair(lex, "a {subject} likes the {object}", Label::Neutral, rng);
  CHECK(n.premise.back() != n.hypothesis.back());

  CHECK_THROWS_AS(synthesize_pair(lex, "a {subject} {verb}", Label::Neutral, rng), CorpusError);
  CHECK_THROWS_AS(synthesize_pair(lex, "a {subject} {verb}", Label::Contradiction, rng), CorpusError);
}

TEST_CASE("gen_synthetic is balanced, deterministic and never trivial") {
  auto a = gen_synthetic({25, 3}, default_lexicon());
  auto b = gen_synthetic({25, 3}, default_lexicon());
  auto c = gen_synthetic({25, 4}, default_lexicon());
  CHECK(a == b);
  CHECK(a != c);
  int counts[3] = {0, 0, 0};
  for (const auto& p : a) {
    ++counts[static_cast<int>(p.label)];
    CHECK(p.premise != p.hypothesis);
    CHECK(p.premise.size() == p.hypothesis.size());
  }
  CHECK(counts[0] == 25);
  CHECK(counts[1] == 25);
  CHECK(counts[2] == 25);
}

TEST_CASE("gen_synthetic rejects a lexicon that cannot realize a label") {
  auto lex = parse_lexicon(R"({"subjects": ["dog"], "verbs": ["runs"], "objects": ["a", "b"],
                               "antonyms": {"fast": "slow"}})");
  CHECK_THROWS_AS(gen_synthetic({2, 1}, lex), CorpusError);
  CHECK_THROWS_AS(parse_lexicon(R"({"colours": []})"), CorpusError);
  CHECK_THROWS_AS(parse_lexicon(R"({"hypernyms": {"x": "x"}})"), CorpusError);
}
