#pragma once
#include <functional>
#include <string>
#include <vector>

#include "meshgpt/rng.hpp"
#include "meshgpt/tape.hpp"
#include "meshgpt/tensor.hpp"

namespace meshgpt::ad {

// Central-difference verification of the tape, 64-bit only. `fn` builds a
// scalar loss on the given tape and must leaf() every tensor listed in `wrt`
// (layers leaf their own parameters). Returns
//   max over elements of |analytic - numeric| / max(1, |analytic|, |numeric|).
double max_rel_error(const std::function<Tensor<double>(Tape<double>&)>& fn,
                     const std::vector<Tensor<double>*>& wrt, double step = 1e-4);

// Forward dispatch by op-kind name over default arguments (softmax on the
// last axis, conv1d with same padding). Throws on unknown kind.
Tensor<double> op_forward(Tape<double>& tp, const std::string& kind,
                          const std::vector<Tensor<double>>& inputs);

// Randomized-shape gradient check for one op kind; throws on unknown kind.
double grad_check_op(const std::string& kind, Rng& rng, double step = 1e-4);

struct CheckResult {
  std::string name;
  double max_err = 0;
  double threshold = 0;
  bool pass = false;
};

// Every op kind plus every composite layer (SAGE conv, residual blocks and
// stacks, attention blocks, full transformer loss), randomized shapes.
std::vector<CheckResult> run_grad_check_suite(uint64_t seed);

}  // namespace meshgpt::ad
