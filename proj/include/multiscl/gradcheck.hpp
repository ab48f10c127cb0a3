#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "multiscl/tensor.hpp"

namespace multiscl {

struct BlockReport {
  std::string name;
  std::size_t elements = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t k = 4;
  std::size_t d = 4;
  double tolerance = 1e-4;
  double step = 1e-5;
  double floor = 1e-8;  // denominator floor of the relative error
};

struct GradcheckReport {
  std::vector<BlockReport> blocks;
  double tolerance = 0.0;

  bool passed() const;
  // First failing block, if any.
  std::optional<std::string> offender() const;
};

// Central finite differences of the full training loss (ce + scl_sent +
// scl_pair) on a fixed two-sample augmented batch, against backward().
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

std::optional<OpKind> parse_op(std::string_view name);

}  // namespace multiscl
