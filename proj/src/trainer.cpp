#include "multiscl/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "multiscl/log.hpp"

namespace multiscl {

using nlohmann::json;

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive(lr, "lr");
  positive(tau, "tau");
  if (!(eta > 0.0 && eta <= 1.0)) throw ConfigError("eta must be in (0, 1], got " + std::to_string(eta));
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw ConfigError("alpha and beta must be finite and >= 0");
  }
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2, got " + std::to_string(batch_size));
  if (k < 4 || k % 2 != 0) throw ConfigError("k must be even and >= 4, got " + std::to_string(k));
  if (d == 0) throw ConfigError("d must be >= 1");
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be >= 1");
  if (min_count == 0) throw ConfigError("min_count must be >= 1");
}

json config_to_json(const TrainConfig& c) {
  return json{
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"tau", c.tau},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"eta", c.eta},
      {"strategies", json::array({strategy_name(c.strategies.first), strategy_name(c.strategies.second)})},
      {"seed", c.seed},
      {"k", c.k},
      {"d", c.d},
      {"max_seq_len", c.max_seq_len},
      {"min_count", c.min_count},
      {"back_translate_cmd", c.back_translate_cmd},
  };
}

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 && !v.is_number_unsigned())) {
        throw ConfigError("config key \"" + key + "\" must be a non-negative integer");
      }
    }
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("config key \"" + key + "\" must be a number");
    }
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("config key \"" + key + "\" must be a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key \"" + key + "\": " + e.what());
  }
}

}  // namespace

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "epochs") c.epochs = get_as<std::size_t>(v, key);
    else if (key == "batch_size") c.batch_size = get_as<std::size_t>(v, key);
    else if (key == "lr") c.lr = get_as<double>(v, key);
    else if (key == "weight_decay") c.weight_decay = get_as<double>(v, key);
    else if (key == "tau") c.tau = get_as<double>(v, key);
    else if (key == "alpha") c.alpha = get_as<double>(v, key);
    else if (key == "beta") c.beta = get_as<double>(v, key);
    else if (key == "eta") c.eta = get_as<double>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "k") c.k = get_as<std::size_t>(v, key);
    else if (key == "d") c.d = get_as<std::size_t>(v, key);
    else if (key == "max_seq_len") c.max_seq_len = get_as<std::size_t>(v, key);
    else if (key == "min_count") c.min_count = get_as<std::size_t>(v, key);
    else if (key == "back_translate_cmd") c.back_translate_cmd = get_as<std::string>(v, key);
    else if (key == "strategies") {
      if (!v.is_array() || v.size() != 2) throw ConfigError("config key \"strategies\" must be an array of two names");
      StrategyKind kinds[2];
      for (std::size_t i = 0; i < 2; ++i) {
        auto k = v[i].is_string() ? parse_strategy(v[i].get<std::string>()) : std::nullopt;
        if (!k) throw ConfigError("unknown augmentation strategy " + v[i].dump());
        kinds[i] = *k;
      }
      c.strategies = {kinds[0], kinds[1]};
    } else {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }
  return c;
}

void adam_step(const std::vector<NamedTensor>& params, AdamState& state, double lr, double weight_decay) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::logic_error("adam_step: parameter list changed between steps");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw std::logic_error("adam_step: parameter \"" + p.name + "\" has no gradient");
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_data();
    auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw std::logic_error("adam_step: moment shape mismatch for \"" + params[i].name + "\"");
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= lr * weight_decay * w[j];
      m[j] = kAdamBeta1 * m[j] + (1.0 - kAdamBeta1) * g[j];
      v[j] = kAdamBeta2 * v[j] + (1.0 - kAdamBeta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + kAdamEps);
    }
  }
}

std::string metrics_line(const MetricsRecord& r) {
  json j{{"epoch", r.epoch}, {"batch", r.batch}, {"ce", r.ce}, {"scl_sent", r.scl_sent},
         {"scl_pair", r.scl_pair}, {"total", r.total}};
  if (r.dev_acc) j["dev_acc"] = *r.dev_acc;
  return j.dump();
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

namespace {

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const Model& m, const std::vector<std::vector<double>>& snap) {
  auto params = m.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(snap[i].begin(), snap[i].end(), params[i].tensor.mutable_data().begin());
  }
}

void check_finite(const std::vector<NamedTensor>& params) {
  for (const auto& p : params) {
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) throw NumericError("parameter \"" + p.name + "\" became non-finite");
    }
  }
}

void warn_degenerate(std::span<const SentencePair> pairs) {
  int counts[kNumLabels] = {0, 0, 0};
  for (const auto& p : pairs) ++counts[static_cast<int>(p.label)];
  if (std::none_of(std::begin(counts), std::end(counts), [](int c) { return c >= 2; })) {
    logging::warn("no label has two training samples; pair-level contrastive loss is always 0");
  }
}

}  // namespace

TrainedModel train(const TrainConfig& config, std::span<const SentencePair> train_pairs,
                   std::span<const SentencePair> dev_pairs, const TrainOptions& options) {
  config.validate();
  if (train_pairs.size() < 2) {
    throw std::invalid_argument("training needs at least 2 samples, got " + std::to_string(train_pairs.size()));
  }
  warn_degenerate(train_pairs);

  TrainedModel out;
  out.config = config;
  out.vocab = build_vocab({train_pairs.begin(), train_pairs.end()}, config.min_count);
  out.model = init_model(out.vocab.size(), config.k, config.d, config.seed, config.max_seq_len);
  const auto params = out.model.named_parameters();

  AugmentContext ctx;
  ctx.synonyms = options.synonyms;
  ctx.back_translate_cmd = config.back_translate_cmd;
  ctx.embed_dim = config.k;
  const std::pair<Strategy, Strategy> strategies{{config.strategies.first, config.eta},
                                                 {config.strategies.second, config.eta}};

  AdamState adam;
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 201));
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto ranges = batch_ranges(order.size(), config.batch_size);

  std::optional<std::vector<std::vector<double>>> best;
  double best_acc = -1.0;
  std::uint64_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t bi = 0; bi < ranges.size(); ++bi) {
      std::vector<SentencePair> samples;
      for (std::size_t i = ranges[bi].first; i < ranges[bi].second; ++i) samples.push_back(train_pairs[order[i]]);
      auto batch = build_batch(samples, strategies, ctx, derive_seed(config.seed, 1000 + step++),
                               config.max_seq_len);

      for (const auto& p : params) p.tensor.clear_grad();
      auto loss = batch_loss(out.model, out.vocab, batch, config.tau, config.alpha, config.beta);
      MetricsRecord rec{epoch, bi, loss.ce.item(), loss.scl_sent.item(), loss.scl_pair.item(),
                        loss.total.item(), std::nullopt};
      backward(loss.total);
      adam_step(params, adam, config.lr, config.weight_decay);
      check_finite(params);

      if (bi + 1 == ranges.size() && !dev_pairs.empty()) {
        const double acc = evaluate(out.model, out.vocab, dev_pairs);
        rec.dev_acc = acc;
        if (acc > best_acc) {
          best_acc = acc;
          best = snapshot(out.model);
          out.best_epoch = epoch;
        }
      }
      if (options.metrics_out) *options.metrics_out << metrics_line(rec) << '\n';
      out.metrics.push_back(rec);
    }
  }
  for (const auto& p : params) p.tensor.clear_grad();
  if (best) {
    restore(out.model, *best);
    out.best_dev_acc = best_acc;
  } else {
    out.best_epoch = config.epochs - 1;
  }
  return out;
}

double evaluate(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
  NoGradGuard ng;
  std::size_t correct = 0;
  for (const auto& p : pairs) correct += predict(model, vocab, p) == static_cast<int>(p.label);
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

// Layout: u64 little-endian header length, JSON header, float64 little-endian
// payload in header tensor order.
void save_checkpoint(const TrainedModel& m, std::ostream& out) {
  json tensors = json::array();
  for (const auto& p : m.model.named_parameters()) tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const json header{{"format_version", kCheckpointVersion},
                    {"config", config_to_json(m.config)},
                    {"vocab", m.vocab.tokens()},
                    {"best_dev_acc", m.best_dev_acc},
                    {"best_epoch", m.best_epoch},
                    {"tensors", tensors}};
  const std::string text = header.dump();
  auto put_u64 = [&](std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
  };
  put_u64(text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : m.model.named_parameters()) {
    for (double v : p.tensor.data()) put_u64(std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw CheckpointError("checkpoint write failed");
}

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  save_checkpoint(m, out);
}

TrainedModel load_checkpoint(std::istream& in) {
  auto get_u64 = [&](std::uint64_t& v) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
  };
  std::uint64_t header_len = 0;
  if (!get_u64(header_len)) throw CheckpointError("checkpoint truncated: missing header length");
  if (header_len > (1ull << 32)) throw CheckpointError("checkpoint header length is implausible");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw CheckpointError("checkpoint truncated inside header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  TrainedModel m;
  try {
    m.config = config_from_json(header.at("config"));
    m.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
    m.best_dev_acc = header.at("best_dev_acc").get<double>();
    m.best_epoch = header.at("best_epoch").get<std::size_t>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header: ") + e.what());
  }
  m.model = init_model(m.vocab.size(), m.config.k, m.config.d, 0, m.config.max_seq_len);
  const auto params = m.model.named_parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].tensor.shape()) {
      throw CheckpointError("checkpoint tensor " + name + " " + shape_str(shape) + " does not match " +
                            params[i].name + " " + shape_str(params[i].tensor.shape()));
    }
    auto d = params[i].tensor.mutable_data();
    for (auto& x : d) {
      std::uint64_t bits = 0;
      if (!get_u64(bits)) throw CheckpointError("checkpoint truncated in payload of " + name);
      x = std::bit_cast<double>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint has trailing bytes after payload");
  return m;
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

void export_embeddings(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs,
                       std::ostream& out) {
  NoGradGuard ng;
  out << "label";
  for (std::size_t i = 0; i < model.pair_dim(); ++i) out << ",z" << i;
  out << '\n';
  char buf[32];
  for (const auto& p : pairs) {
    Tensor z = pair_vector(model, vocab, p);
    out << label_name(p.label);
    for (double v : z.data()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

void export_embeddings(const Model& model, const Vocab& vocab, std::span<const SentencePair> pairs,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  export_embeddings(model, vocab, pairs, out);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace multiscl
