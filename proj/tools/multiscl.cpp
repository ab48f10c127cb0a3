#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "multiscl/batcher.hpp"
#include "multiscl/experiment.hpp"
#include "multiscl/gradcheck.hpp"
#include "multiscl/simd/kernels.hpp"
#include "multiscl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace multiscl;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Keys beyond TrainConfig, with their defaults.
json run_defaults() {
  return json{
      {"train_path", ""},
      {"dev_path", ""},
      {"test_path", ""},
      {"lexicon_path", ""},
      {"synonyms_path", ""},
      {"synthetic_train_per_class", 20},
      {"synthetic_dev_per_class", 20},
      {"synthetic_test_per_class", 100},
      {"data_seed", 0},
      {"out_dir", "runs/default"},
      {"checkpoint", ""},
      {"output", ""},
      {"axis", "tau"},
      {"values", json::array()},
      {"seeds", 5},
      {"preview_n", 3},
      {"gradcheck_tolerance", 1e-4},
      {"inject_fault", ""},
  };
}

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> h{
      {"epochs", "training epochs"},
      {"batch_size", "samples per batch (each contributes two views)"},
      {"lr", "Adam learning rate"},
      {"weight_decay", "decoupled weight decay"},
      {"tau", "contrastive temperature"},
      {"alpha", "weight of the sentence-level contrastive loss"},
      {"beta", "weight of the pair-level contrastive loss"},
      {"eta", "augmentation intensity in [0,1]"},
      {"strategies", "two augmentation strategies, comma separated"},
      {"seed", "model, shuffle and augmentation seed"},
      {"k", "embedding width (even, >= 4)"},
      {"d", "co-attention hidden width"},
      {"max_seq_len", "tokens kept per sentence"},
      {"min_count", "minimum training count for a vocabulary entry"},
      {"back_translate_cmd", "external command used by back-translation"},
      {"train_path", "training JSONL; empty uses the synthetic corpus"},
      {"dev_path", "dev JSONL"},
      {"test_path", "test JSONL"},
      {"lexicon_path", "lexicon JSON for the synthetic corpus"},
      {"synonyms_path", "synonym JSON for synonym replacement"},
      {"synthetic_train_per_class", "synthetic training pairs per class"},
      {"synthetic_dev_per_class", "synthetic dev pairs per class"},
      {"synthetic_test_per_class", "synthetic test pairs per class"},
      {"data_seed", "synthetic corpus seed"},
      {"out_dir", "output directory"},
      {"checkpoint", "checkpoint to load; empty uses out_dir/checkpoint.bin"},
      {"output", "output file for export-embeddings"},
      {"axis", "sweep axis: tau, eta or alpha_beta"},
      {"values", "sweep values, comma separated; empty uses the preset grid"},
      {"seeds", "seeds per sweep point"},
      {"preview_n", "pairs shown by augment-preview"},
      {"gradcheck_tolerance", "maximum relative error per parameter block"},
      {"inject_fault", "op whose backward rule is corrupted (negative control)"},
  };
  return h;
}

json all_defaults() {
  json j = config_to_json(TrainConfig{});
  const json run = run_defaults();
  for (auto& [k, v] : run.items()) j[k] = v;
  return j;
}

struct RunConfig {
  TrainConfig train;
  json run;  // run-level keys, fully populated

  std::string str(const char* key) const { return run.at(key).get<std::string>(); }
  std::size_t count(const char* key) const {
    const auto& v = run.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError(std::string("config key \"") + key + "\" must be a non-negative integer");
    }
    return v.get<std::size_t>();
  }
};

json parse_override(const std::string& key, const std::string& text) {
  if (key == "strategies" || key == "values") {
    json arr = json::array();
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) arr.push_back(part);
    return arr;
  }
  const json defaults = all_defaults();
  if (defaults.at(key).is_string()) return text;
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw ConfigError("cannot parse value \"" + text + "\" for --" + key);
  }
}

RunConfig resolve(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  json merged = all_defaults();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path);
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto& [k, v] : file.items()) {
      if (!merged.contains(k)) throw ConfigError("unknown config key \"" + k + "\" in " + config_path);
      merged[k] = v;
    }
  }
  for (const auto& [k, v] : overrides) merged[k] = parse_override(k, v);

  RunConfig rc;
  json train_part = json::object();
  const json run_keys = run_defaults();
  for (auto& [k, v] : merged.items()) {
    if (run_keys.contains(k)) {
      if (run_keys.at(k).is_string() && !v.is_string()) throw ConfigError("config key \"" + k + "\" must be a string");
      rc.run[k] = v;
    } else {
      train_part[k] = v;
    }
  }
  rc.train = config_from_json(train_part);
  rc.train.validate();
  return rc;
}

SynthLexicon lexicon_of(const RunConfig& rc) {
  const auto path = rc.str("lexicon_path");
  if (path.empty()) return default_lexicon();
  try {
    return load_lexicon(path);
  } catch (const CorpusError& e) {
    throw DataError(e.what());
  }
}

std::vector<SentencePair> load_pairs(const std::string& path, std::size_t max_len) {
  try {
    return load_jsonl(path, max_len);
  } catch (const CorpusError& e) {
    throw DataError(e.what());
  }
}

DataSplits splits_of(const RunConfig& rc, std::size_t run = 0) {
  const auto train_path = rc.str("train_path");
  if (train_path.empty()) {
    const SplitSizes sizes{rc.count("synthetic_train_per_class"), rc.count("synthetic_dev_per_class"),
                           rc.count("synthetic_test_per_class")};
    return synthetic_splits(sizes, rc.count("data_seed") + run, lexicon_of(rc));
  }
  DataSplits s;
  s.train = load_pairs(train_path, rc.train.max_seq_len);
  if (!rc.str("dev_path").empty()) s.dev = load_pairs(rc.str("dev_path"), rc.train.max_seq_len);
  if (!rc.str("test_path").empty()) s.test = load_pairs(rc.str("test_path"), rc.train.max_seq_len);
  return s;
}

std::vector<SentencePair> eval_pairs(const RunConfig& rc) {
  auto s = splits_of(rc);
  if (!s.test.empty()) return s.test;
  if (!s.dev.empty()) return s.dev;
  throw DataError("no evaluation data: set test_path or dev_path (or a synthetic test split)");
}

SynonymLexicon synonyms_of(const RunConfig& rc) {
  const auto path = rc.str("synonyms_path");
  if (path.empty()) return default_synonyms();
  try {
    return load_synonyms(path);
  } catch (const AugmentError& e) {
    throw DataError(e.what());
  }
}

TrainedModel load_model(const RunConfig& rc) {
  auto path = rc.str("checkpoint");
  if (path.empty()) path = (fs::path(rc.str("out_dir")) / "checkpoint.bin").string();
  try {
    return load_checkpoint(fs::path(path));
  } catch (const CheckpointError& e) {
    throw DataError(e.what());
  }
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cannot create directory " + p.string() + ": " + ec.message());
}

int cmd_train(const RunConfig& rc) {
  const auto data = splits_of(rc);
  const auto syn = synonyms_of(rc);
  const fs::path out_dir = rc.str("out_dir");
  ensure_dir(out_dir);
  std::ofstream metrics(out_dir / "metrics.jsonl");
  if (!metrics) throw DataError("cannot write " + (out_dir / "metrics.jsonl").string());
  auto m = train(rc.train, data.train, data.dev, {&metrics, &syn});
  save_checkpoint(m, out_dir / "checkpoint.bin");
  std::ofstream(out_dir / "config.json") << config_to_json(rc.train).dump(2) << '\n';
  if (!data.dev.empty()) {
    std::printf("best dev accuracy: %.4f (epoch %zu)\n", m.best_dev_acc, m.best_epoch + 1);
  }
  if (!data.test.empty()) std::printf("test accuracy: %.4f\n", evaluate(m.model, m.vocab, data.test));
  std::printf("wrote %s\n", (out_dir / "checkpoint.bin").string().c_str());
  return kOk;
}

int cmd_eval(const RunConfig& rc) {
  const auto m = load_model(rc);
  const auto pairs = eval_pairs(rc);
  std::printf("accuracy: %.4f (%zu pairs)\n", evaluate(m.model, m.vocab, pairs), pairs.size());
  return kOk;
}

int cmd_export(const RunConfig& rc) {
  const auto m = load_model(rc);
  const auto pairs = eval_pairs(rc);
  fs::path out = rc.str("output");
  if (out.empty()) out = fs::path(rc.str("out_dir")) / "embeddings.csv";
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  try {
    export_embeddings(m.model, m.vocab, pairs, out);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  std::printf("wrote %zu rows to %s\n", pairs.size(), out.string().c_str());
  return kOk;
}

int cmd_sweep(const RunConfig& rc) {
  const auto axis = parse_axis(rc.str("axis"));
  if (!axis) throw ConfigError("unknown sweep axis \"" + rc.str("axis") + "\" (tau, eta, alpha_beta)");
  std::vector<std::string> values;
  for (const auto& v : rc.run.at("values")) values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  if (values.empty()) values = preset_values(*axis);
  if (values.size() < 2) throw ConfigError("a sweep needs at least 2 values");
  const std::size_t seeds = rc.count("seeds");
  if (seeds < 3) throw ConfigError("a sweep needs at least 3 seeds");
  const auto syn = synonyms_of(rc);
  const fs::path out_dir = rc.str("out_dir");

  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    const TrainConfig cfg = apply_sweep_value(rc.train, *axis, value);
    SweepRow row;
    row.value = value;
    std::string tag = value;
    for (auto& ch : tag)
      if (ch == ':') ch = '_';
    for (std::size_t i = 0; i < seeds; ++i) {
      const fs::path dir = out_dir / (std::string(axis_name(*axis)) + "_" + tag) / ("seed" + std::to_string(cfg.seed + i));
      ensure_dir(dir);
      std::ofstream metrics(dir / "metrics.jsonl");
      auto results = run_seeds(
          [&] {
            TrainConfig c = cfg;
            c.seed = cfg.seed + i;
            return c;
          }(),
          1, [&](std::size_t) { return splits_of(rc, i); }, {&metrics, &syn},
          [&](std::size_t, const TrainedModel& m, const DataSplits&) { save_checkpoint(m, dir / "checkpoint.bin"); });
      row.runs.push_back(results.front());
    }
    summarize(row);
    std::printf("%s=%s  mean %.4f  sd %.4f\n", std::string(axis_name(*axis)).c_str(), value.c_str(), row.mean, row.sd);
    rows.push_back(std::move(row));
  }
  ensure_dir(out_dir);
  const fs::path csv = out_dir / ("sweep_" + std::string(axis_name(*axis)) + ".csv");
  std::ofstream out(csv);
  write_sweep_csv(rows, out);
  std::printf("wrote %s\n", csv.string().c_str());
  return kOk;
}

std::string render(const Tokens& t) { return detokenize(t); }

std::string mask_note(const std::optional<DropoutMask>& m) {
  if (!m) return "";
  return "  [dropout: " + std::to_string(m->zeros()) + " of " + std::to_string(m->rows * m->cols) +
         " embedding entries zeroed]";
}

int cmd_preview(const RunConfig& rc) {
  const auto n = rc.run.at("preview_n").get<long long>();
  if (n <= 0) throw ConfigError("preview_n must be positive");
  const auto data = splits_of(rc);
  const auto syn = synonyms_of(rc);
  AugmentContext ctx;
  ctx.synonyms = &syn;
  ctx.back_translate_cmd = rc.train.back_translate_cmd;
  ctx.embed_dim = rc.train.k;
  const Strategy s1{rc.train.strategies.first, rc.train.eta}, s2{rc.train.strategies.second, rc.train.eta};
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(n), data.train.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = data.train[i];
    const auto a = augment_pair(p, s1, ctx, derive_seed(rc.train.seed, 2 * i));
    const auto b = augment_pair(p, s2, ctx, derive_seed(rc.train.seed, 2 * i + 1));
    std::printf("#%zu label=%s\n", i + 1, std::string(label_name(p.label)).c_str());
    std::printf("  original            : %s || %s\n", render(p.premise).c_str(), render(p.hypothesis).c_str());
    for (const auto* v : {&a, &b}) {
      std::printf("  %-20s: %s || %s  label=%s%s%s\n", std::string(strategy_name(v->strategy)).c_str(),
                  render(v->pair.premise).c_str(), render(v->pair.hypothesis).c_str(),
                  std::string(label_name(v->pair.label)).c_str(), mask_note(v->premise_mask).c_str(),
                  mask_note(v->hypothesis_mask).c_str());
    }
  }
  return kOk;
}

int cmd_gradcheck(const RunConfig& rc) {
  GradcheckOptions o;
  o.seed = rc.train.seed;
  o.tolerance = rc.run.at("gradcheck_tolerance").get<double>();
  const auto fault = rc.str("inject_fault");
  if (!fault.empty()) {
    const auto op = parse_op(fault);
    if (!op) throw ConfigError("unknown op \"" + fault + "\" for inject_fault");
    testing::inject_backward_fault(*op);
    std::printf("injected backward fault into %s\n", op_name(*op));
  }
  const auto report = run_gradcheck(o);
  testing::inject_backward_fault(OpKind::Leaf);
  std::printf("%-22s %9s %14s\n", "block", "elements", "max_rel_err");
  for (const auto& b : report.blocks) {
    std::printf("%-22s %9zu %14.3e %s\n", b.name.c_str(), b.elements, b.max_rel_err, b.passed ? "ok" : "FAIL");
  }
  if (!report.passed()) {
    std::fprintf(stderr, "gradcheck failed: block %s exceeds tolerance %.1e\n", report.offender()->c_str(),
                 report.tolerance);
    return kNumeric;
  }
  std::printf("gradcheck passed (tolerance %.1e, isa %s)\n", report.tolerance,
              std::string(simd::isa_name(simd::active_isa())).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-level supervised contrastive learning for low-resource NLI"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"train", "Train a model; writes checkpoint.bin, metrics.jsonl and config.json to out_dir", cmd_train},
      {"eval", "Evaluate a checkpoint on the test (or dev) data", cmd_eval},
      {"sweep", "Train one model per (value, seed) along an axis and write mean/sd accuracy", cmd_sweep},
      {"augment-preview", "Print original and augmented views of the first preview_n training pairs", cmd_preview},
      {"gradcheck", "Finite-difference check of every parameter block of a tiny model", cmd_gradcheck},
      {"export-embeddings", "Write pair vectors Z of the evaluation data as CSV", cmd_export},
  };

  const json defaults = all_defaults();
  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<std::string, std::string> raw;
  int (*selected)(const RunConfig&) = nullptr;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON config file with flat keys");
    for (auto& [key, value] : defaults.items()) {
      std::string def = value.is_string() ? value.get<std::string>() : value.dump();
      if (value.is_array()) {
        def.clear();
        for (const auto& v : value) def += (def.empty() ? "" : ",") + v.get<std::string>();
      }
      const auto help = key_help().find(key);
      const char* type = value.is_number_integer() ? "INT"
                         : value.is_number()         ? "FLOAT"
                         : value.is_array()          ? "LIST"
                                                     : "TEXT";
      sub->add_option("--" + key, raw[key], help == key_help().end() ? key : help->second)
          ->type_name(type)
          ->default_str(def.empty() ? "\"\"" : def);
    }
    sub->callback([&selected, run = c.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  for (const auto* sub : app.get_subcommands()) {
    for (auto& [key, value] : defaults.items()) {
      if (sub->count("--" + key)) overrides[key] = raw[key];
    }
  }

  try {
    const RunConfig rc = resolve(config_path, overrides);
    return selected(rc);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const CorpusError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const AugmentError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const BatchError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
}
