#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "multiscl/corpus.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr
};

Result run(const std::string& args) {
  const std::string cmd = std::string("\"") + MULTISCL_CLI_PATH + "\" " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("multiscl_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const char* name) const { return (path / name).string(); }
};

const char* kSmall = "--k 8 --d 8 --epochs 2 --lr 3e-3 ";

}  // namespace

TEST_CASE("help lists every subcommand and config key with defaults") {
  auto top = run("--help");
  CHECK(top.code == 0);
  for (const char* sub : {"train", "eval", "sweep", "augment-preview", "gradcheck", "export-embeddings"}) {
    CHECK(top.out.find(sub) != std::string::npos);
  }
  auto train = run("train --help");
  CHECK(train.code == 0);
  for (const char* key : {"--tau FLOAT [0.08]", "--eta FLOAT [0.1]", "--lr FLOAT [5e-05]", "--seeds INT [5]", "--k INT [64]",
                          "--strategies LIST"}) {
    CAPTURE(key);
    CHECK(train.out.find(key) != std::string::npos);
  }
}

TEST_CASE("config errors exit 1") {
  TempDir t;
  CHECK(run("train --no_such_key 3").code == 1);
  CHECK(run("").code == 1);
  auto neg = run("train --tau -1");
  CHECK(neg.code == 1);
  CHECK(neg.out.find("tau") != std::string::npos);
  CHECK(run("train --strategies reordering,bogus").code == 1);
  CHECK(run("train --epochs abc").code == 1);

  std::ofstream(t.path / "bad.json") << R"({"tau": 0.5, "mystery": 1})";
  auto unknown = run("train --config " + t.str("bad.json"));
  CHECK(unknown.code == 1);
  CHECK(unknown.out.find("mystery") != std::string::npos);
  CHECK(run("train --config " + t.str("missing.json")).code == 1);
  CHECK(run("sweep --axis nope").code == 1);
  CHECK(run("gradcheck --inject_fault nope").code == 1);
}

TEST_CASE("data errors exit 2, numeric errors exit 3") {
  TempDir t;
  CHECK(run("train --train_path " + t.str("absent.jsonl")).code == 2);
  std::ofstream(t.path / "broken.jsonl") << "{\"premise\": \"a\"}\nnot json\n";
  auto broken = run("train --train_path " + t.str("broken.jsonl"));
  CHECK(broken.code == 2);
  CHECK(broken.out.find("line 2") != std::string::npos);
  CHECK(run("eval --checkpoint " + t.str("absent.bin")).code == 2);

  auto nan = run("train --k 8 --d 8 --epochs 2 --lr 1e300 --out_dir " + t.str("nan"));
  CHECK(nan.code == 3);
  CHECK(nan.out.find("numeric") != std::string::npos);
}

TEST_CASE("train, eval and export-embeddings on JSONL files") {
  TempDir t;
  auto pairs = multiscl::gen_synthetic({6, 3}, multiscl::default_lexicon());
  multiscl::write_jsonl(t.path / "train.jsonl", pairs);
  multiscl::write_jsonl(t.path / "test.jsonl", std::vector(pairs.begin(), pairs.begin() + 5));

  const std::string data = " --train_path " + t.str("train.jsonl") + " --test_path " + t.str("test.jsonl") +
                           " --out_dir " + t.str("run");
  std::ofstream(t.path / "cfg.json") << R"({"tau": 0.3, "epochs": 1})";
  auto tr = run(std::string("train ") + kSmall + "--config " + t.str("cfg.json") + data);
  REQUIRE(tr.code == 0);
  for (const char* f : {"checkpoint.bin", "metrics.jsonl", "config.json"}) CHECK(fs::exists(t.path / "run" / f));

  // flags override the file, the file overrides defaults
  auto cfg = nlohmann::json::parse(slurp(t.path / "run" / "config.json"));
  CHECK(cfg["tau"] == 0.3);
  CHECK(cfg["epochs"] == 2);
  CHECK(cfg["k"] == 8);
  // 18 samples in batches of 32: one batch per epoch
  CHECK(count_lines(slurp(t.path / "run" / "metrics.jsonl")) == 2);

  auto ev = run("eval" + data);
  CHECK(ev.code == 0);
  CHECK(ev.out.find("(5 pairs)") != std::string::npos);

  auto ex = run("export-embeddings --output " + t.str("z.csv") + data);
  REQUIRE(ex.code == 0);
  const auto csv = slurp(t.path / "z.csv");
  CHECK(count_lines(csv) == 6);
  const auto header = csv.substr(0, csv.find('\n'));
  CHECK(header.rfind("label,z0,", 0) == 0);
  CHECK(header.find(",z31") != std::string::npos);
  CHECK(header.find(",z32") == std::string::npos);
}

TEST_CASE("sweep writes a summary CSV and per-point runs") {
  TempDir t;
  auto r = run(std::string("sweep ") + kSmall +
               "--synthetic_train_per_class 3 --synthetic_dev_per_class 2 --synthetic_test_per_class 2 "
               "--axis tau --values 0.1,1 --seeds 3 --out_dir " + t.str("sw"));
  REQUIRE(r.code == 0);
  const auto csv = slurp(t.path / "sw" / "sweep_tau.csv");
  CHECK(csv.rfind("value,mean,sd,n\n", 0) == 0);
  CHECK(count_lines(csv) == 3);
  CHECK(csv.find("\n0.1,") != std::string::npos);
  CHECK(fs::exists(t.path / "sw" / "tau_1" / "seed2" / "checkpoint.bin"));
  CHECK(run("sweep --values 0.1 --out_dir " + t.str("one")).code == 1);
  CHECK(run("sweep --seeds 2 --out_dir " + t.str("two")).code == 1);
}

TEST_CASE("augment-preview and gradcheck") {
  auto pv = run("augment-preview --preview_n 2 --strategies word_deletion,synonym_replacement");
  CHECK(pv.code == 0);
  CHECK(pv.out.find("#2 label=") != std::string::npos);
  CHECK(pv.out.find("#3 label=") == std::string::npos);
  CHECK(pv.out.find("[DEL]") != std::string::npos);

  auto ok = run("gradcheck");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("classifier.b") != std::string::npos);
  auto bad = run("gradcheck --inject_fault layer_norm");
  CHECK(bad.code == 3);
  CHECK(bad.out.find("gradcheck failed") != std::string::npos);
}
