#include "multiscl/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace multiscl {

DataSplits synthetic_splits(const SplitSizes& sizes, std::uint64_t seed, const SynthLexicon& lex) {
  DataSplits s;
  s.train = gen_synthetic({sizes.train_per_class, derive_seed(seed, 1)}, lex);
  if (sizes.dev_per_class) s.dev = gen_synthetic({sizes.dev_per_class, derive_seed(seed, 2)}, lex);
  if (sizes.test_per_class) s.test = gen_synthetic({sizes.test_per_class, derive_seed(seed, 3)}, lex);
  return s;
}

std::string_view axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::Tau: return "tau";
    case SweepAxis::Eta: return "eta";
    case SweepAxis::AlphaBeta: return "alpha_beta";
  }
  return "?";
}

std::optional<SweepAxis> parse_axis(std::string_view name) {
  for (auto a : {SweepAxis::Tau, SweepAxis::Eta, SweepAxis::AlphaBeta}) {
    if (axis_name(a) == name) return a;
  }
  return std::nullopt;
}

std::vector<std::string> preset_values(SweepAxis a) {
  switch (a) {
    case SweepAxis::Tau: return {"0.02", "0.08", "0.5", "5"};
    case SweepAxis::Eta: return {"0.1", "0.2", "0.4", "0.6", "0.8"};
    case SweepAxis::AlphaBeta: {
      std::vector<std::string> out;
      for (const char* x : {"0.2", "0.5", "1", "2"})
        for (const char* y : {"0.2", "0.5", "1", "2"}) out.push_back(std::string(x) + ":" + y);
      return out;
    }
  }
  return {};
}

namespace {

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("malformed " + what + " value \"" + s + "\"");
  return v;
}

}  // namespace

TrainConfig apply_sweep_value(TrainConfig base, SweepAxis a, const std::string& value) {
  switch (a) {
    case SweepAxis::Tau: base.tau = parse_number(value, "tau"); break;
    case SweepAxis::Eta: base.eta = parse_number(value, "eta"); break;
    case SweepAxis::AlphaBeta: {
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ConfigError("alpha_beta values are written alpha:beta, got \"" + value + "\"");
      base.alpha = parse_number(value.substr(0, colon), "alpha");
      base.beta = parse_number(value.substr(colon + 1), "beta");
      break;
    }
  }
  base.validate();
  return base;
}

void summarize(SweepRow& row) {
  const double n = static_cast<double>(row.runs.size());
  row.mean = 0.0;
  for (const auto& r : row.runs) row.mean += r.test_acc / n;
  double ss = 0.0;
  for (const auto& r : row.runs) ss += (r.test_acc - row.mean) * (r.test_acc - row.mean);
  row.sd = row.runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

std::vector<SeedResult> run_seeds(const TrainConfig& base, std::size_t seeds,
                                  const std::function<DataSplits(std::size_t)>& splits_for,
                                  const TrainOptions& options,
                                  const std::function<void(std::size_t, const TrainedModel&, const DataSplits&)>& on_run) {
  std::vector<SeedResult> out;
  for (std::size_t i = 0; i < seeds; ++i) {
    TrainConfig c = base;
    c.seed = base.seed + i;
    const DataSplits data = splits_for(i);
    auto m = train(c, data.train, data.dev, options);
    SeedResult r{c.seed, 0.0, m.best_dev_acc};
    if (!data.test.empty()) r.test_acc = evaluate(m.model, m.vocab, data.test);
    if (on_run) on_run(i, m, data);
    out.push_back(r);
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "value,mean,sd,n\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu", r.mean, r.sd, r.runs.size());
    out << r.value << ',' << buf << '\n';
  }
}

}  // namespace multiscl
