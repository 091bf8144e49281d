#pragma once

#include <functional>
#include <vector>

#include "fend/tape.hpp"

namespace fend::num {

// Builds a scalar loss from marked parameters. The builder must be a pure
// function of the given parameter leaves (it may close over constant data).
using LossBuilder = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

// Compares reverse-mode gradients against central finite differences.
// Returns max over all parameter elements of
//   |analytic - central| / max(1, |central|).
double grad_check(const LossBuilder& f, std::vector<Tensor> params, double step);

}  // namespace fend::num
