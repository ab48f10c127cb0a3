#include <doctest.h>

#include <set>

#include "multiscl/gradcheck.hpp"

using namespace multiscl;

TEST_CASE("full-model gradcheck passes and lists every block once") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    GradcheckOptions o;
    o.seed = seed;
    auto r = run_gradcheck(o);
    std::set<std::string> names;
    for (const auto& b : r.blocks) {
      CAPTURE(b.name);
      CAPTURE(b.max_rel_err);
      CHECK(b.passed);
      CHECK(names.insert(b.name).second);
    }
    CHECK(r.passed());
    CHECK_FALSE(r.offender());
    for (const char* must : {"encoder.embedding", "crossattn.w", "crossattn.p", "crossattn.f", "crossattn.b",
                             "classifier.w", "classifier.b"}) {
      CHECK(names.count(must) == 1);
    }
  }
}

TEST_CASE("a corrupted backward rule is caught") {
  for (auto op : {OpKind::Tanh, OpKind::LayerNorm, OpKind::PairwiseMul, OpKind::SoftmaxRows}) {
    CAPTURE(op_name(op));
    testing::inject_backward_fault(op);
    auto r = run_gradcheck();
    testing::inject_backward_fault(OpKind::Leaf);
    CHECK_FALSE(r.passed());
    CHECK(r.offender());
  }
}

TEST_CASE("parse_op") {
  CHECK(parse_op("tanh") == OpKind::Tanh);
  CHECK(parse_op("layer_norm") == OpKind::LayerNorm);
  CHECK_FALSE(parse_op("conv2d"));
}
